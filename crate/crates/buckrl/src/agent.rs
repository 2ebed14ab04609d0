//! Deep Q-learning: epsilon-greedy selection, experience replay, target
//! network bootstrapping, the training loop, and a tabular reference
//! learner used by the tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::ActionSpace;
use crate::error::{Error, Result};
use crate::net::{sync_target, QNetwork, Topology};

/// One interaction step stored for replay. Observations are kept raw;
/// scaling happens at the network boundary.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub s: [f64; 6],
    pub a: usize,
    pub r: f64,
    pub s_next: [f64; 6],
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer { capacity, storage: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// Uniform sample of `b` transitions, with replacement.
    pub fn sample(&self, b: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Transition>> {
        if self.storage.len() < b {
            return Err(Error::InsufficientSamples { have: self.storage.len(), need: b });
        }
        Ok((0..b)
            .map(|_| self.storage[rng.gen_range(0..self.storage.len())])
            .collect())
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, pred: impl Fn(&Transition) -> bool) -> bool {
        self.storage.iter().any(pred)
    }
}

/// Fixed diagonal scaling applied to observations and action encodings
/// before they reach the network.
#[derive(Debug, Clone, Copy)]
pub struct FeatureScaling {
    pub obs: [f64; 6],
    pub action: [f64; 2],
}

/// Observation scale for the converter: volts ~1e2, volt rates ~1e4,
/// errors ~1e1, mapped into O(1) inputs.
pub const BUCK_OBS_SCALE: [f64; 6] = [1e-2, 1e-2, 1e-4, 1e-1, 1e-1, 1e-4];

impl FeatureScaling {
    pub fn for_buck(space: &ActionSpace) -> FeatureScaling {
        FeatureScaling { obs: BUCK_OBS_SCALE, action: space.encoding_scale() }
    }

    pub fn identity() -> FeatureScaling {
        FeatureScaling { obs: [1.0; 6], action: [1.0, 1.0] }
    }

    pub fn scale_obs(&self, raw: &[f64; 6]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = raw[i] * self.obs[i];
        }
        out
    }

    pub fn scale_encoding(&self, enc: [f64; 2]) -> [f64; 2] {
        [enc[0] * self.action[0], enc[1] * self.action[1]]
    }
}

/// Training hyperparameters. `epsilon` is the exploration floor reached
/// after annealing from `epsilon_start` over the first
/// `epsilon_anneal_frac` of the episodes.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    pub lr: f64,
    /// Final learning rate of the linear anneal across all episodes.
    pub lr_final: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub epsilon: f64,
    pub epsilon_start: f64,
    pub epsilon_anneal_frac: f64,
    pub target_sync_period: usize,
    pub warmup_steps: usize,
    pub train_steps_per_env_step: usize,
    pub replay_capacity: usize,
    pub episodes: usize,
    pub topology: Topology,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.001,
            lr_final: 0.0001,
            gamma: 0.979,
            batch_size: 256,
            epsilon: 0.1,
            epsilon_start: 1.0,
            epsilon_anneal_frac: 0.4,
            target_sync_period: 500,
            warmup_steps: 1280,
            train_steps_per_env_step: 1,
            replay_capacity: 1_000_000,
            episodes: 150,
            topology: Topology::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.lr_final > 0.0) {
            return Err(Error::InvalidParameter("lr and lr_final must be > 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter("gamma must be in (0,1)".into()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("target_sync_period", self.target_sync_period),
            ("train_steps_per_env_step", self.train_steps_per_env_step),
            ("replay_capacity", self.replay_capacity),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("epsilon", self.epsilon), ("epsilon_start", self.epsilon_start)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must be in [0,1]")));
            }
        }
        Ok(())
    }

    fn epsilon_at(&self, episode: usize) -> f64 {
        let anneal = (self.episodes as f64 * self.epsilon_anneal_frac).max(1.0);
        let frac = (episode as f64 / anneal).min(1.0);
        self.epsilon_start + (self.epsilon - self.epsilon_start) * frac
    }

    fn lr_at(&self, episode: usize) -> f64 {
        let frac = episode as f64 / (self.episodes.max(1) as f64);
        self.lr + (self.lr_final - self.lr) * frac
    }
}

/// Highest-Q action index; ties resolve to the lowest index.
pub fn greedy_action(
    net: &QNetwork,
    obs: &[f64; 6],
    space: &ActionSpace,
    scaling: &FeatureScaling,
) -> usize {
    let s = scaling.scale_obs(obs);
    let feature = net.state_feature(&s);
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for i in 0..space.len() {
        let enc = scaling.scale_encoding(space.encoding(i).expect("index in range"));
        let q = net.q_from_state_feature(&feature, &enc);
        if q > best_q {
            best_q = q;
            best = i;
        }
    }
    best
}

/// Largest Q over the action menu for a given observation.
pub fn max_q(
    net: &QNetwork,
    obs: &[f64; 6],
    space: &ActionSpace,
    scaling: &FeatureScaling,
) -> f64 {
    let s = scaling.scale_obs(obs);
    let feature = net.state_feature(&s);
    (0..space.len())
        .map(|i| {
            let enc = scaling.scale_encoding(space.encoding(i).expect("index in range"));
            net.q_from_state_feature(&feature, &enc)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Epsilon-greedy selection: explore uniformly with probability epsilon,
/// otherwise exploit the greedy action.
pub fn select_action(
    net: &QNetwork,
    obs: &[f64; 6],
    space: &ActionSpace,
    scaling: &FeatureScaling,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    let p: f64 = rng.gen();
    if p < epsilon {
        rng.gen_range(0..space.len())
    } else {
        greedy_action(net, obs, space, scaling)
    }
}

/// Bootstrapped regression target: the terminal branch never consults the
/// target network.
pub fn compute_target(
    t: &Transition,
    target_net: &QNetwork,
    space: &ActionSpace,
    scaling: &FeatureScaling,
    gamma: f64,
) -> f64 {
    if t.done {
        t.r
    } else {
        t.r + gamma * max_q(target_net, &t.s_next, space, scaling)
    }
}

/// One batched regression step toward the bootstrapped targets.
/// Returns the pre-update loss.
pub fn train_step(
    net: &mut QNetwork,
    target_net: &QNetwork,
    buffer: &ReplayBuffer,
    hp: &Hyperparams,
    space: &ActionSpace,
    scaling: &FeatureScaling,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let need = hp.batch_size.max(hp.warmup_steps);
    if buffer.len() < need {
        return Err(Error::InsufficientSamples { have: buffer.len(), need });
    }
    let batch = buffer.sample(hp.batch_size, rng)?;
    let samples: Vec<([f64; 6], [f64; 2], f64)> = batch
        .iter()
        .map(|t| {
            let y = compute_target(t, target_net, space, scaling, hp.gamma);
            let s = scaling.scale_obs(&t.s);
            let a = scaling.scale_encoding(space.encoding(t.a).expect("stored index valid"));
            (s, a, y)
        })
        .collect();
    let (grad, loss) = net.gradient(&samples)?;
    net.sgd_update(&grad, hp.lr)?;
    Ok(loss)
}

/// Outcome of one environment control step, as consumed by the trainer.
#[derive(Debug, Clone, Copy)]
pub struct EnvStep {
    pub obs: [f64; 6],
    pub reward: f64,
    pub done: bool,
    pub aborted: bool,
    pub abs_error: f64,
}

/// Episodic environment interface for the trainer. Implementations must be
/// deterministic given the RNG stream.
pub trait DqnEnvironment {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> [f64; 6];
    fn step(&mut self, action_index: usize) -> Result<EnvStep>;
}

/// Per-episode learning-curve entry.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeStats {
    pub episode: usize,
    pub steps: usize,
    pub mean_reward: f64,
    /// Mean |e| over the final 20% of the episode's steps.
    pub mean_abs_error: f64,
    pub epsilon: f64,
    pub loss_mean: f64,
    pub aborted: bool,
}

pub struct TrainResult {
    pub net: QNetwork,
    pub curve: Vec<EpisodeStats>,
}

/// SplitMix64 finalizer; derives independent sub-seeds from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full interaction loop: select, step, store, regress, sync. Reproducible
/// from the seed. Fails with `AbortedTooOften` when more than 90% of the
/// late-training episodes abort.
pub fn train<E: DqnEnvironment>(
    env: &mut E,
    space: &ActionSpace,
    scaling: &FeatureScaling,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainResult> {
    train_with_progress(env, space, scaling, hp, seed, |_| {})
}

/// [`train`] with a per-episode observer (progress reporting).
pub fn train_with_progress<E: DqnEnvironment>(
    env: &mut E,
    space: &ActionSpace,
    scaling: &FeatureScaling,
    hp: &Hyperparams,
    seed: u64,
    progress: impl FnMut(&EpisodeStats),
) -> Result<TrainResult> {
    hp.validate()?;
    let net = QNetwork::init(derive_seed(seed, 0), hp.topology)?;
    train_from(env, space, scaling, hp, seed, net, progress)
}

/// Same as [`train`], starting from a caller-provided network.
pub fn train_from<E: DqnEnvironment>(
    env: &mut E,
    space: &ActionSpace,
    scaling: &FeatureScaling,
    hp: &Hyperparams,
    seed: u64,
    mut net: QNetwork,
    mut progress: impl FnMut(&EpisodeStats),
) -> Result<TrainResult> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut target = net.clone();
    let mut buffer = ReplayBuffer::new(hp.replay_capacity);
    let mut curve = Vec::with_capacity(hp.episodes);
    let mut env_steps: usize = 0;

    for episode in 0..hp.episodes {
        let epsilon = hp.epsilon_at(episode);
        let hp_now = Hyperparams { lr: hp.lr_at(episode), ..hp.clone() };
        let mut obs = env.reset(&mut rng);
        let mut total_reward = 0.0;
        let mut abs_errors = Vec::new();
        let mut losses = 0.0;
        let mut n_losses = 0usize;
        let aborted;
        let mut steps = 0usize;

        loop {
            let action = select_action(&net, &obs, space, scaling, epsilon, &mut rng);
            let step = env.step(action)?;
            buffer.push(Transition {
                s: obs,
                a: action,
                r: step.reward,
                s_next: step.obs,
                done: step.done,
            });
            total_reward += step.reward;
            abs_errors.push(step.abs_error);
            steps += 1;
            env_steps += 1;

            if buffer.len() >= hp.batch_size.max(hp.warmup_steps) {
                for _ in 0..hp.train_steps_per_env_step {
                    losses +=
                        train_step(&mut net, &target, &buffer, &hp_now, space, scaling, &mut rng)?;
                    n_losses += 1;
                }
            }
            if env_steps % hp.target_sync_period == 0 {
                sync_target(&net, &mut target)?;
            }
            obs = step.obs;
            if step.done {
                aborted = step.aborted;
                break;
            }
        }

        let tail = (abs_errors.len() as f64 * 0.2).ceil().max(1.0) as usize;
        let tail_slice = &abs_errors[abs_errors.len() - tail..];
        let stats = EpisodeStats {
            episode,
            steps,
            mean_reward: total_reward / steps.max(1) as f64,
            mean_abs_error: tail_slice.iter().sum::<f64>() / tail as f64,
            epsilon,
            loss_mean: if n_losses > 0 { losses / n_losses as f64 } else { 0.0 },
            aborted,
        };
        progress(&stats);
        curve.push(stats);
    }

    // divergence check over the late-training window
    if hp.episodes >= 10 {
        let late = (hp.episodes as f64 * 0.2).ceil() as usize;
        let late_slice = &curve[curve.len() - late..];
        let aborted = late_slice.iter().filter(|s| s.aborted).count();
        if (aborted as f64) > 0.9 * late as f64 {
            return Err(Error::AbortedTooOften { aborted, total: late });
        }
    }

    Ok(TrainResult { net, curve })
}

/// Dense tabular action-value store for small discrete problems.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> QTable {
        QTable { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn max_value(&self, s: usize) -> f64 {
        (0..self.n_actions).map(|a| self.get(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, s: usize) -> usize {
        let mut best = 0;
        let mut best_q = f64::NEG_INFINITY;
        for a in 0..self.n_actions {
            let q = self.get(s, a);
            if q > best_q {
                best_q = q;
                best = a;
            }
        }
        best
    }
}

/// One-step tabular update:
/// Q(s,a) += lr * (r + gamma * max_a' Q(s',a') - Q(s,a)).
pub fn tabular_q_update(
    table: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    lr: f64,
    gamma: f64,
) {
    let current = table.get(s, a);
    let target = r + gamma * table.max_value(s_next);
    table.set(s, a, current + lr * (target - current));
}
