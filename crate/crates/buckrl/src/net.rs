//! Two-path Q-value network: a state path and an action path joined by a
//! fully connected merge layer, ReLU activations, linear scalar head.
//! Plain f64 arithmetic, hand-rolled backpropagation, SGD updates.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const STATE_INPUTS: usize = 6;
pub const ACTION_INPUTS: usize = 2;

const CHECKPOINT_MAGIC: &str = "BUCKRL-QNET";
const CHECKPOINT_VERSION: u32 = 1;

/// Hidden-layer widths: state path M then N, action path P, merge width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub state_h1: usize,
    pub state_h2: usize,
    pub action_h: usize,
    pub merge: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Topology { state_h1: 4, state_h2: 8, action_h: 8, merge: 8 }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.state_h1 == 0 || self.state_h2 == 0 || self.action_h == 0 || self.merge == 0 {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Dense layer parameters; weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LayerParams {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Glorot-uniform weights, zero biases.
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..out_dim * in_dim).map(|_| rng.gen_range(-limit..=limit)).collect();
        LayerParams { out_dim, in_dim, weights, biases: vec![0.0; out_dim] }
    }

    /// z = W x + b
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (row, o) in out.iter_mut().enumerate() {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.biases[row];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *o = acc;
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

fn relu_inplace(z: &mut [f64]) {
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// The Q(s, a) approximator.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub topology: Topology,
    pub state_hidden1: LayerParams,
    pub state_hidden2: LayerParams,
    pub action_hidden: LayerParams,
    pub merge: LayerParams,
    pub output: LayerParams,
}

/// Parameter gradient with the same shape as the network.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub state_hidden1: LayerParams,
    pub state_hidden2: LayerParams,
    pub action_hidden: LayerParams,
    pub merge: LayerParams,
    pub output: LayerParams,
}

impl Gradient {
    fn zeros(t: &Topology) -> Self {
        Gradient {
            state_hidden1: LayerParams::zeros(t.state_h1, STATE_INPUTS),
            state_hidden2: LayerParams::zeros(t.state_h2, t.state_h1),
            action_hidden: LayerParams::zeros(t.action_h, ACTION_INPUTS),
            merge: LayerParams::zeros(t.merge, t.state_h2 + t.action_h),
            output: LayerParams::zeros(1, t.merge),
        }
    }
}

/// Activations captured during one forward pass, reused by backprop.
struct ForwardTrace {
    h1: Vec<f64>,
    h2: Vec<f64>,
    ha: Vec<f64>,
    cat: Vec<f64>,
    hm: Vec<f64>,
    q: f64,
}

impl QNetwork {
    /// Reproducible Glorot-uniform initialization; biases zero. Layers are
    /// drawn in a fixed order: state path, action path, merge, output.
    pub fn init(seed: u64, topology: Topology) -> Result<QNetwork> {
        topology.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(QNetwork {
            topology,
            state_hidden1: LayerParams::init(topology.state_h1, STATE_INPUTS, &mut rng),
            state_hidden2: LayerParams::init(topology.state_h2, topology.state_h1, &mut rng),
            action_hidden: LayerParams::init(topology.action_h, ACTION_INPUTS, &mut rng),
            merge: LayerParams::init(topology.merge, topology.state_h2 + topology.action_h, &mut rng),
            output: LayerParams::init(1, topology.merge, &mut rng),
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    fn layers(&self) -> [&LayerParams; 5] {
        [
            &self.state_hidden1,
            &self.state_hidden2,
            &self.action_hidden,
            &self.merge,
            &self.output,
        ]
    }

    /// State-path feature (output of the second state hidden layer).
    /// Computing it once lets a caller score many actions cheaply.
    pub fn state_feature(&self, s: &[f64; STATE_INPUTS]) -> Vec<f64> {
        let mut h1 = vec![0.0; self.topology.state_h1];
        self.state_hidden1.affine(s, &mut h1);
        relu_inplace(&mut h1);
        let mut h2 = vec![0.0; self.topology.state_h2];
        self.state_hidden2.affine(&h1, &mut h2);
        relu_inplace(&mut h2);
        h2
    }

    /// Q value given a precomputed state feature.
    pub fn q_from_state_feature(&self, feature: &[f64], a: &[f64; ACTION_INPUTS]) -> f64 {
        let mut ha = vec![0.0; self.topology.action_h];
        self.action_hidden.affine(a, &mut ha);
        relu_inplace(&mut ha);
        let mut cat = Vec::with_capacity(feature.len() + ha.len());
        cat.extend_from_slice(feature);
        cat.extend_from_slice(&ha);
        let mut hm = vec![0.0; self.topology.merge];
        self.merge.affine(&cat, &mut hm);
        relu_inplace(&mut hm);
        let mut q = [0.0];
        self.output.affine(&hm, &mut q);
        q[0]
    }

    /// Scalar action value.
    pub fn forward(&self, s: &[f64; STATE_INPUTS], a: &[f64; ACTION_INPUTS]) -> f64 {
        let feature = self.state_feature(s);
        self.q_from_state_feature(&feature, a)
    }

    fn forward_trace(&self, s: &[f64; STATE_INPUTS], a: &[f64; ACTION_INPUTS]) -> ForwardTrace {
        let mut h1 = vec![0.0; self.topology.state_h1];
        self.state_hidden1.affine(s, &mut h1);
        relu_inplace(&mut h1);
        let mut h2 = vec![0.0; self.topology.state_h2];
        self.state_hidden2.affine(&h1, &mut h2);
        relu_inplace(&mut h2);
        let mut ha = vec![0.0; self.topology.action_h];
        self.action_hidden.affine(a, &mut ha);
        relu_inplace(&mut ha);
        let mut cat = Vec::with_capacity(h2.len() + ha.len());
        cat.extend_from_slice(&h2);
        cat.extend_from_slice(&ha);
        let mut hm = vec![0.0; self.topology.merge];
        self.merge.affine(&cat, &mut hm);
        relu_inplace(&mut hm);
        let mut q = [0.0];
        self.output.affine(&hm, &mut q);
        ForwardTrace { h1, h2, ha, cat, hm, q: q[0] }
    }

    /// Gradient of the mean squared error over a batch of
    /// (state, action, target) triples. Also returns the loss itself.
    pub fn gradient(
        &self,
        batch: &[([f64; STATE_INPUTS], [f64; ACTION_INPUTS], f64)],
    ) -> Result<(Gradient, f64)> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("gradient of an empty batch".into()));
        }
        let t = &self.topology;
        let mut grad = Gradient::zeros(t);
        let mut loss = 0.0;
        let inv_n = 1.0 / batch.len() as f64;

        for (s, a, target) in batch {
            let tr = self.forward_trace(s, a);
            let residual = tr.q - *target;
            loss += residual * residual * inv_n;

            // dL/dq for this sample under the batch mean
            let dq = 2.0 * residual * inv_n;

            // output layer (linear)
            for (j, hm_j) in tr.hm.iter().enumerate() {
                grad.output.weights[j] += dq * hm_j;
            }
            grad.output.biases[0] += dq;

            // merge layer
            let mut d_cat = vec![0.0; tr.cat.len()];
            for j in 0..t.merge {
                if tr.hm[j] <= 0.0 {
                    continue;
                }
                let dz = dq * self.output.weights[j];
                grad.merge.biases[j] += dz;
                let row = &mut grad.merge.weights[j * tr.cat.len()..(j + 1) * tr.cat.len()];
                for (k, cat_k) in tr.cat.iter().enumerate() {
                    row[k] += dz * cat_k;
                    d_cat[k] += dz * self.merge.weights[j * tr.cat.len() + k];
                }
            }
            let (d_h2, d_ha) = d_cat.split_at(t.state_h2);

            // action path
            for j in 0..t.action_h {
                if tr.ha[j] <= 0.0 {
                    continue;
                }
                let dz = d_ha[j];
                grad.action_hidden.biases[j] += dz;
                for (k, a_k) in a.iter().enumerate() {
                    grad.action_hidden.weights[j * ACTION_INPUTS + k] += dz * a_k;
                }
            }

            // state path, second layer
            let mut d_h1 = vec![0.0; t.state_h1];
            for j in 0..t.state_h2 {
                if tr.h2[j] <= 0.0 {
                    continue;
                }
                let dz = d_h2[j];
                grad.state_hidden2.biases[j] += dz;
                for (k, h1_k) in tr.h1.iter().enumerate() {
                    grad.state_hidden2.weights[j * t.state_h1 + k] += dz * h1_k;
                    d_h1[k] += dz * self.state_hidden2.weights[j * t.state_h1 + k];
                }
            }

            // state path, first layer
            for j in 0..t.state_h1 {
                if tr.h1[j] <= 0.0 {
                    continue;
                }
                let dz = d_h1[j];
                grad.state_hidden1.biases[j] += dz;
                for (k, s_k) in s.iter().enumerate() {
                    grad.state_hidden1.weights[j * STATE_INPUTS + k] += dz * s_k;
                }
            }
        }
        Ok((grad, loss))
    }

    /// In-place SGD: theta <- theta - lr * grad.
    pub fn sgd_update(&mut self, grad: &Gradient, lr: f64) -> Result<()> {
        let pairs: [(&mut LayerParams, &LayerParams); 5] = [
            (&mut self.state_hidden1, &grad.state_hidden1),
            (&mut self.state_hidden2, &grad.state_hidden2),
            (&mut self.action_hidden, &grad.action_hidden),
            (&mut self.merge, &grad.merge),
            (&mut self.output, &grad.output),
        ];
        for (layer, g) in pairs {
            if layer.out_dim != g.out_dim || layer.in_dim != g.in_dim {
                return Err(Error::DimensionMismatch(format!(
                    "layer {}x{} vs gradient {}x{}",
                    layer.out_dim, layer.in_dim, g.out_dim, g.in_dim
                )));
            }
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= lr * gb;
            }
        }
        Ok(())
    }

    /// Text checkpoint: versioned header, then each layer's weights
    /// row-major and biases, one full-precision decimal per line.
    pub fn serialize<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "version {CHECKPOINT_VERSION}")?;
        let t = &self.topology;
        writeln!(w, "topology {} {} {} {}", t.state_h1, t.state_h2, t.action_h, t.merge)?;
        for layer in self.layers() {
            writeln!(w, "layer {} {}", layer.out_dim, layer.in_dim)?;
            for v in &layer.weights {
                writeln!(w, "{v}")?;
            }
            for v in &layer.biases {
                writeln!(w, "{v}")?;
            }
        }
        Ok(())
    }

    pub fn deserialize<R: BufRead>(r: R) -> Result<QNetwork> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::MalformedCheckpoint("unexpected end of checkpoint".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != CHECKPOINT_MAGIC {
            return Err(Error::MalformedCheckpoint("bad magic string".into()));
        }
        let version_line = next()?;
        let version: u32 = version_line
            .strip_prefix("version ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::MalformedCheckpoint("bad version line".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::MalformedCheckpoint(format!("unsupported version {version}")));
        }
        let topo_line = next()?;
        let widths: Vec<usize> = topo_line
            .strip_prefix("topology ")
            .map(|rest| rest.split_whitespace().filter_map(|x| x.parse().ok()).collect())
            .unwrap_or_default();
        if widths.len() != 4 {
            return Err(Error::MalformedCheckpoint("bad topology line".into()));
        }
        let topology = Topology {
            state_h1: widths[0],
            state_h2: widths[1],
            action_h: widths[2],
            merge: widths[3],
        };
        topology.validate().map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;

        let expected_dims = [
            (topology.state_h1, STATE_INPUTS),
            (topology.state_h2, topology.state_h1),
            (topology.action_h, ACTION_INPUTS),
            (topology.merge, topology.state_h2 + topology.action_h),
            (1, topology.merge),
        ];
        let mut parsed: Vec<LayerParams> = Vec::with_capacity(5);
        for (out_dim, in_dim) in expected_dims {
            let header = next()?;
            let dims: Vec<usize> = header
                .strip_prefix("layer ")
                .map(|rest| rest.split_whitespace().filter_map(|x| x.parse().ok()).collect())
                .unwrap_or_default();
            if dims != [out_dim, in_dim] {
                return Err(Error::MalformedCheckpoint(format!(
                    "layer header {header:?} does not match topology ({out_dim}x{in_dim})"
                )));
            }
            let mut layer = LayerParams::zeros(out_dim, in_dim);
            for w in layer.weights.iter_mut() {
                *w = parse_value(&next()?)?;
            }
            for b in layer.biases.iter_mut() {
                *b = parse_value(&next()?)?;
            }
            parsed.push(layer);
        }
        let output = parsed.pop().unwrap();
        let merge = parsed.pop().unwrap();
        let action_hidden = parsed.pop().unwrap();
        let state_hidden2 = parsed.pop().unwrap();
        let state_hidden1 = parsed.pop().unwrap();
        Ok(QNetwork { topology, state_hidden1, state_hidden2, action_hidden, merge, output })
    }

    pub fn save_checkpoint<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.serialize(std::io::BufWriter::new(file))
    }

    pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<QNetwork> {
        let file = std::fs::File::open(path)?;
        QNetwork::deserialize(std::io::BufReader::new(file))
    }
}

fn parse_value(line: &str) -> Result<f64> {
    line.trim()
        .parse()
        .map_err(|_| Error::MalformedCheckpoint(format!("bad value line {line:?}")))
}

/// Copy all parameters of `net` into `target` (target-network sync).
pub fn sync_target(net: &QNetwork, target: &mut QNetwork) -> Result<()> {
    if net.topology != target.topology {
        return Err(Error::DimensionMismatch(format!(
            "cannot sync {:?} into {:?}",
            net.topology, target.topology
        )));
    }
    *target = net.clone();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_input() -> ([f64; 6], [f64; 2]) {
        ([0.4, -0.2, 0.1, 0.9, -0.5, 0.3], [1.0, -1.0])
    }

    #[test]
    fn zero_weights_propagate_output_bias() {
        let mut net = QNetwork::init(0, Topology::default()).unwrap();
        for layer in [
            &mut net.state_hidden1,
            &mut net.state_hidden2,
            &mut net.action_hidden,
            &mut net.merge,
            &mut net.output,
        ] {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        net.output.biases[0] = 2.5;
        let (s, a) = tiny_input();
        assert_eq!(net.forward(&s, &a), 2.5);
        assert_eq!(net.forward(&[0.0; 6], &[0.0; 2]), 2.5);
    }

    #[test]
    fn init_is_reproducible_and_biases_zero() {
        let a = QNetwork::init(7, Topology::default()).unwrap();
        let b = QNetwork::init(7, Topology::default()).unwrap();
        assert_eq!(a, b);
        for layer in a.layers() {
            assert!(layer.biases.iter().all(|&x| x == 0.0));
        }
        let c = QNetwork::init(8, Topology::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_weights_within_glorot_bounds() {
        let t = Topology::default();
        let mut seen_beyond_half = false;
        for seed in 0..40u64 {
            let net = QNetwork::init(seed, t).unwrap();
            for layer in net.layers() {
                let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
                for &w in &layer.weights {
                    assert!(w.abs() <= limit, "weight {w} beyond limit {limit}");
                    if w.abs() > 0.5 * limit {
                        seen_beyond_half = true;
                    }
                }
            }
        }
        // the draw actually spans the declared range
        assert!(seen_beyond_half);
    }

    #[test]
    fn hand_sized_network_composition() {
        // M = N = P = merge = 1 with hand-set weights; compare against the
        // explicit composition computed by hand below.
        let t = Topology { state_h1: 1, state_h2: 1, action_h: 1, merge: 1 };
        let mut net = QNetwork::init(0, t).unwrap();
        net.state_hidden1.weights = vec![0.5, -0.25, 0.0, 1.0, 0.0, 0.0];
        net.state_hidden1.biases = vec![0.1];
        net.state_hidden2.weights = vec![2.0];
        net.state_hidden2.biases = vec![-0.2];
        net.action_hidden.weights = vec![1.5, -0.5];
        net.action_hidden.biases = vec![0.05];
        net.merge.weights = vec![1.0, -2.0];
        net.merge.biases = vec![0.3];
        net.output.weights = vec![4.0];
        net.output.biases = vec![-1.0];

        let s = [0.2, 0.4, 0.0, 0.3, 0.0, 0.0];
        let a = [0.1, 0.2];
        // h1 = relu(0.5*0.2 - 0.25*0.4 + 1.0*0.3 + 0.1) = 0.4
        // h2 = relu(2.0*0.4 - 0.2) = 0.6
        // ha = relu(1.5*0.1 - 0.5*0.2 + 0.05) = 0.1
        // hm = relu(1.0*0.6 - 2.0*0.1 + 0.3) = 0.7
        // q  = 4.0*0.7 - 1.0 = 1.8
        let q = net.forward(&s, &a);
        assert!((q - 1.8).abs() < 1e-12, "q = {q}");
    }

    #[test]
    fn forward_is_deterministic() {
        let net = QNetwork::init(3, Topology::default()).unwrap();
        let (s, a) = tiny_input();
        assert_eq!(net.forward(&s, &a).to_bits(), net.forward(&s, &a).to_bits());
    }

    #[test]
    fn state_feature_factoring_matches_forward() {
        let net = QNetwork::init(11, Topology::default()).unwrap();
        let (s, a) = tiny_input();
        let feat = net.state_feature(&s);
        assert_eq!(net.q_from_state_feature(&feat, &a), net.forward(&s, &a));
    }

    #[test]
    fn perfect_fit_gives_zero_gradient() {
        let net = QNetwork::init(5, Topology::default()).unwrap();
        let (s, a) = tiny_input();
        let target = net.forward(&s, &a);
        let (grad, loss) = net.gradient(&[(s, a, target)]).unwrap();
        assert_eq!(loss, 0.0);
        for layer in [
            &grad.state_hidden1,
            &grad.state_hidden2,
            &grad.action_hidden,
            &grad.merge,
            &grad.output,
        ] {
            assert!(layer.weights.iter().all(|&g| g == 0.0));
            assert!(layer.biases.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let net = QNetwork::init(9, Topology::default()).unwrap();
        let s1 = [0.3, 0.1, -0.4, 0.2, 0.8, -0.1];
        let s2 = [-0.2, 0.5, 0.3, -0.7, 0.1, 0.6];
        let a1 = [1.0, 0.0];
        let a2 = [0.0, -1.0];
        let (g1, _) = net.gradient(&[(s1, a1, 0.7)]).unwrap();
        let (g2, _) = net.gradient(&[(s2, a2, -0.3)]).unwrap();
        let (gb, _) = net.gradient(&[(s1, a1, 0.7), (s2, a2, -0.3)]).unwrap();
        for ((a, b), c) in g1
            .output
            .weights
            .iter()
            .zip(&g2.output.weights)
            .zip(&gb.output.weights)
        {
            assert!((0.5 * (a + b) - c).abs() < 1e-14);
        }
        for ((a, b), c) in g1
            .state_hidden1
            .weights
            .iter()
            .zip(&g2.state_hidden1.weights)
            .zip(&gb.state_hidden1.weights)
        {
            assert!((0.5 * (a + b) - c).abs() < 1e-14);
        }
    }

    /// Central finite differences over every parameter of a small net.
    #[test]
    fn gradient_matches_finite_differences() {
        let t = Topology { state_h1: 3, state_h2: 4, action_h: 3, merge: 4 };
        let net = QNetwork::init(13, t).unwrap();
        let batch = [
            ([0.3, 0.1, -0.4, 0.2, 0.8, -0.1], [1.0, 0.3], 0.9),
            ([-0.2, 0.5, 0.3, -0.7, 0.1, 0.6], [-0.5, 0.8], -0.4),
            ([0.6, -0.3, 0.2, 0.4, -0.6, 0.2], [0.2, -1.0], 0.1),
        ];
        let (grad, _) = net.gradient(&batch).unwrap();

        let loss_of = |net: &QNetwork| -> f64 {
            batch
                .iter()
                .map(|(s, a, y)| {
                    let r = net.forward(s, a) - y;
                    r * r
                })
                .sum::<f64>()
                / batch.len() as f64
        };

        let h = 1e-5;
        // mutate one parameter at a time through an index scheme
        let n_layers = 5;
        for layer_idx in 0..n_layers {
            let (n_w, n_b) = {
                let l = layer_of(&net, layer_idx);
                (l.weights.len(), l.biases.len())
            };
            for wi in 0..n_w + n_b {
                let mut plus = net.clone();
                let mut minus = net.clone();
                {
                    let lp = layer_of_mut(&mut plus, layer_idx);
                    if wi < n_w {
                        lp.weights[wi] += h;
                    } else {
                        lp.biases[wi - n_w] += h;
                    }
                    let lm = layer_of_mut(&mut minus, layer_idx);
                    if wi < n_w {
                        lm.weights[wi] -= h;
                    } else {
                        lm.biases[wi - n_w] -= h;
                    }
                }
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let analytic = {
                    let g = layer_of_grad(&grad, layer_idx);
                    if wi < n_w {
                        g.weights[wi]
                    } else {
                        g.biases[wi - n_w]
                    }
                };
                // Skip parameters whose perturbation crosses a ReLU kink:
                // detectable as a large mismatch between one-sided slopes.
                let plus_slope = (loss_of(&plus) - loss_of(&net)) / h;
                let minus_slope = (loss_of(&net) - loss_of(&minus)) / h;
                if (plus_slope - minus_slope).abs() > 1e-3 * (1.0 + numeric.abs()) {
                    continue;
                }
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                let rel = (numeric - analytic).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "layer {layer_idx} param {wi}: numeric {numeric} analytic {analytic} rel {rel}"
                );
            }
        }
    }

    fn layer_of(net: &QNetwork, idx: usize) -> &LayerParams {
        match idx {
            0 => &net.state_hidden1,
            1 => &net.state_hidden2,
            2 => &net.action_hidden,
            3 => &net.merge,
            _ => &net.output,
        }
    }

    fn layer_of_mut(net: &mut QNetwork, idx: usize) -> &mut LayerParams {
        match idx {
            0 => &mut net.state_hidden1,
            1 => &mut net.state_hidden2,
            2 => &mut net.action_hidden,
            3 => &mut net.merge,
            _ => &mut net.output,
        }
    }

    fn layer_of_grad(grad: &Gradient, idx: usize) -> &LayerParams {
        match idx {
            0 => &grad.state_hidden1,
            1 => &grad.state_hidden2,
            2 => &grad.action_hidden,
            3 => &grad.merge,
            _ => &grad.output,
        }
    }

    #[test]
    fn sgd_update_zero_gradient_and_zero_lr_are_identity() {
        let net0 = QNetwork::init(21, Topology::default()).unwrap();
        let mut net = net0.clone();
        let grad = Gradient::zeros(&net.topology);
        net.sgd_update(&grad, 0.001).unwrap();
        assert_eq!(net, net0);

        let (s, a) = tiny_input();
        let (grad, _) = net.gradient(&[(s, a, 1.0)]).unwrap();
        net.sgd_update(&grad, 0.0).unwrap();
        assert_eq!(net, net0);
    }

    #[test]
    fn sgd_descends_on_a_fixed_batch() {
        let mut net = QNetwork::init(17, Topology::default()).unwrap();
        let batch = [([0.5, -0.1, 0.2, 0.3, 0.7, -0.2], [1.0, 1.0], 2.0)];
        let (grad, loss0) = net.gradient(&batch).unwrap();
        net.sgd_update(&grad, 1e-3).unwrap();
        let (_, loss1) = net.gradient(&batch).unwrap();
        assert!(loss1 < loss0, "{loss1} !< {loss0}");
    }

    #[test]
    fn sgd_dimension_mismatch_is_rejected() {
        let mut net = QNetwork::init(2, Topology::default()).unwrap();
        let other = Topology { state_h1: 8, state_h2: 16, action_h: 16, merge: 8 };
        let grad = Gradient::zeros(&other);
        assert!(matches!(net.sgd_update(&grad, 0.1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn positive_homogeneity_of_state_path_with_zero_biases() {
        let mut net = QNetwork::init(31, Topology::default()).unwrap();
        net.state_hidden1.biases.iter_mut().for_each(|b| *b = 0.0);
        net.state_hidden2.biases.iter_mut().for_each(|b| *b = 0.0);
        let s = [0.3, -0.2, 0.5, 0.1, -0.4, 0.2];
        let c = 3.7;
        let scaled = s.map(|x| c * x);
        let f = net.state_feature(&s);
        let fs = net.state_feature(&scaled);
        for (a, b) in f.iter().zip(&fs) {
            assert!((c * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn default_topology_parameter_count() {
        let net = QNetwork::init(0, Topology::default()).unwrap();
        // 6*4+4 + 4*8+8 + 2*8+8 + 16*8+8 + 8+1 = 68 + 24 + 136 + 9
        assert_eq!(net.param_count(), 237);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise_identical() {
        let net = QNetwork::init(99, Topology::default()).unwrap();
        let mut buf = Vec::new();
        net.serialize(&mut buf).unwrap();
        let back = QNetwork::deserialize(buf.as_slice()).unwrap();
        assert_eq!(net, back);

        let mut buf2 = Vec::new();
        back.serialize(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn clone_is_independent() {
        let mut net = QNetwork::init(5, Topology::default()).unwrap();
        let copy = net.clone();
        net.output.biases[0] += 1.0;
        assert_ne!(net, copy);
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        let net = QNetwork::init(1, Topology::default()).unwrap();
        let mut buf = Vec::new();
        net.serialize(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let bad_magic = text.replacen("BUCKRL-QNET", "SOMETHING", 1);
        assert!(matches!(
            QNetwork::deserialize(bad_magic.as_bytes()),
            Err(Error::MalformedCheckpoint(_))
        ));

        let bad_version = text.replacen("version 1", "version 9", 1);
        assert!(matches!(
            QNetwork::deserialize(bad_version.as_bytes()),
            Err(Error::MalformedCheckpoint(_))
        ));

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            QNetwork::deserialize(truncated.as_bytes()),
            Err(Error::MalformedCheckpoint(_)) | Err(Error::Io(_))
        ));

        // a checkpoint whose topology disagrees with its layer dims
        let wrong_dims = text.replacen("topology 4 8 8 8", "topology 4 8 8 16", 1);
        assert!(matches!(
            QNetwork::deserialize(wrong_dims.as_bytes()),
            Err(Error::MalformedCheckpoint(_))
        ));
    }

    #[test]
    fn sync_target_copies_parameters() {
        let net = QNetwork::init(41, Topology::default()).unwrap();
        let mut target = QNetwork::init(42, Topology::default()).unwrap();
        assert_ne!(net, target);
        sync_target(&net, &mut target).unwrap();
        assert_eq!(net, target);

        let mut other = QNetwork::init(1, Topology { state_h1: 8, state_h2: 16, action_h: 16, merge: 8 }).unwrap();
        assert!(sync_target(&net, &mut other).is_err());
    }
}
