//! Orchestration: training runs, policy evaluation, the PI baseline, and
//! parameter sweeps, with all artifacts written under an output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{self, derive_seed, EpisodeStats, FeatureScaling, Hyperparams, TrainResult};
use crate::env::BuckEnv;
use crate::error::{Error, Result};
use crate::harness::config::Config;
use crate::harness::metrics::{compute_metrics, MetricsReport, DEFAULT_SETTLING_BAND};
use crate::harness::scenario::Scenario;
use crate::harness::trace::{save_trace, TraceRow};
use crate::net::{QNetwork, Topology};
use crate::pi::{run_pi_closed_loop, PiGains};
use crate::sim::ConverterState;

pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub curve_path: PathBuf,
    pub result: TrainResult,
}

/// Train a policy from the config and write checkpoint, learning curve,
/// and a manifest that reproduces the run.
pub fn run_train(cfg: &Config, seed: u64, out_dir: &Path) -> Result<TrainArtifacts> {
    run_train_with_progress(cfg, seed, out_dir, |_| {})
}

/// [`run_train`] with a per-episode observer.
pub fn run_train_with_progress(
    cfg: &Config,
    seed: u64,
    out_dir: &Path,
    progress: impl FnMut(&EpisodeStats),
) -> Result<TrainArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let result = train_policy_with_progress(cfg, seed, progress)?;

    let checkpoint_path = out_dir.join("checkpoint.qnet");
    result.net.save_checkpoint(&checkpoint_path)?;

    let curve_path = out_dir.join("curve.csv");
    write_curve(&curve_path, &result.curve)?;

    write_manifest(cfg, seed, out_dir)?;
    Ok(TrainArtifacts { checkpoint_path, curve_path, result })
}

/// The bare training loop on the configured environment.
pub fn train_policy(cfg: &Config, seed: u64) -> Result<TrainResult> {
    train_policy_with_progress(cfg, seed, |_| {})
}

/// Training loop with a per-episode observer.
pub fn train_policy_with_progress(
    cfg: &Config,
    seed: u64,
    progress: impl FnMut(&EpisodeStats),
) -> Result<TrainResult> {
    let space = cfg.action_space()?;
    let scaling = FeatureScaling::for_buck(&space);
    let hp = cfg.hyperparams()?;
    let mut env = BuckEnv::new(
        cfg.converter_params()?,
        cfg.reward_params()?,
        cfg.training_episode()?,
        space.clone(),
    )?;
    agent::train_with_progress(&mut env, &space, &scaling, &hp, seed, progress)
}

fn write_curve(path: &Path, curve: &[EpisodeStats]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "episode,steps,mean_reward,mean_abs_error,epsilon,loss_mean")?;
    for s in curve {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.episode, s.steps, s.mean_reward, s.mean_abs_error, s.epsilon, s.loss_mean
        )?;
    }
    Ok(())
}

fn write_manifest(cfg: &Config, seed: u64, out_dir: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("manifest.txt"))?);
    writeln!(w, "tool {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "seed {seed}")?;
    writeln!(w, "config <<EOF")?;
    write!(w, "{}", cfg.to_toml())?;
    writeln!(w, "EOF")?;
    Ok(())
}

/// Deterministic greedy rollout of a trained policy over a scenario.
/// Returns the control-period trace and the per-edge metrics.
pub fn eval_policy(
    net: &QNetwork,
    scenario: &Scenario,
    cfg: &Config,
) -> Result<(Vec<TraceRow>, MetricsReport)> {
    scenario.validate()?;
    let space = cfg.action_space()?;
    let scaling = FeatureScaling::for_buck(&space);
    let episode = cfg.eval_episode(scenario.cpl_schedule.clone(), scenario.duration)?;
    let mut env = BuckEnv::new(
        scenario.circuit,
        cfg.reward_params()?,
        episode,
        space.clone(),
    )?;
    // a fixed initial state consumes no randomness; the stream only seeds
    // the API
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let mut obs = BuckEnv::reset(&mut env, &mut rng);
    let mut rows = Vec::with_capacity(env.config().steps_per_episode());
    loop {
        let action = agent::greedy_action(net, &obs.to_vector(), &space, &scaling);
        let (next, reward, done, info) = env.step(action)?;
        rows.push(TraceRow {
            t: info.t,
            v_o: next.v_o,
            i_l: info.i_l,
            duty: info.duty,
            p_cpl: info.p_cpl,
            e: next.e,
            reward: Some(reward),
            action_index: Some(action),
        });
        obs = next;
        if done {
            break;
        }
    }
    let metrics = compute_metrics(
        &rows,
        scenario.circuit.v_ref,
        &scenario.disturbance_edges(),
        DEFAULT_SETTLING_BAND,
    )?;
    Ok((rows, metrics))
}

/// Load a checkpoint, evaluate it on a scenario, write trace and metrics.
pub fn run_eval(
    checkpoint: &Path,
    scenario: &Scenario,
    cfg: &Config,
    out_dir: &Path,
) -> Result<(Vec<TraceRow>, MetricsReport)> {
    let net = QNetwork::load_checkpoint(checkpoint)?;
    let expected = cfg.hyperparams()?.topology;
    if net.topology != expected {
        return Err(Error::MalformedCheckpoint(format!(
            "checkpoint topology {:?} does not match configured {:?}",
            net.topology, expected
        )));
    }
    let (rows, metrics) = eval_policy(&net, scenario, cfg)?;
    write_outputs(out_dir, &rows, &metrics)?;
    Ok((rows, metrics))
}

/// Deterministic PI closed loop over a scenario, trace sampled every
/// simulator step.
pub fn run_baseline(
    scenario: &Scenario,
    gains: &PiGains,
    cfg: &Config,
    out_dir: Option<&Path>,
) -> Result<(Vec<TraceRow>, MetricsReport)> {
    scenario.validate()?;
    let episode = cfg.eval_episode(scenario.cpl_schedule.clone(), scenario.duration)?;
    let init = ConverterState {
        i_l: 0.0,
        v_o: cfg.episode.eval_init_v_frac * scenario.circuit.v_ref,
        t: 0.0,
    };
    let samples = run_pi_closed_loop(
        &scenario.circuit,
        gains,
        &scenario.cpl_schedule,
        scenario.duration,
        episode.sim_dt,
        init,
    )?;
    let rows: Vec<TraceRow> = samples
        .iter()
        .map(|s| TraceRow {
            t: s.t,
            v_o: s.v_o,
            i_l: s.i_l,
            duty: s.duty,
            p_cpl: s.p_cpl,
            e: s.v_o - scenario.circuit.v_ref,
            reward: None,
            action_index: None,
        })
        .collect();
    let metrics = compute_metrics(
        &rows,
        scenario.circuit.v_ref,
        &scenario.disturbance_edges(),
        DEFAULT_SETTLING_BAND,
    )?;
    if let Some(dir) = out_dir {
        write_outputs(dir, &rows, &metrics)?;
    }
    Ok((rows, metrics))
}

fn write_outputs(dir: &Path, rows: &[TraceRow], metrics: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_trace(dir.join("trace.csv"), rows)?;
    let file = std::fs::File::create(dir.join("metrics.csv"))?;
    metrics.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

pub const SUMMARY_HEADER: &str =
    "cell_id,seed,M,N,P,alpha,beta,final_ss_error_v,overshoot_v,settling_ms,aborted";

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub cell_id: String,
    pub seed: u64,
    pub topology: [usize; 3],
    pub alpha: f64,
    pub beta: f64,
    /// Metrics on scenario-A; absent when the cell failed.
    pub final_ss_error: Option<f64>,
    pub overshoot: Option<f64>,
    pub settling_ms: Option<f64>,
    pub aborted: bool,
}

impl SweepRow {
    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.cell_id,
            self.seed,
            self.topology[0],
            self.topology[1],
            self.topology[2],
            self.alpha,
            self.beta,
            opt(self.final_ss_error),
            opt(self.overshoot),
            opt(self.settling_ms),
            self.aborted
        )
    }
}

/// Train and evaluate every (topology x reward) cell over its seeds, in
/// parallel, and write one summary row per (cell, seed). Failed cells are
/// marked rather than aborting the sweep.
pub fn run_sweep(cfg: &Config, master_seed: u64, out_dir: &Path) -> Result<Vec<SweepRow>> {
    let sweep = cfg.sweep()?.clone();
    if sweep.seeds_per_cell == 0 {
        return Err(Error::Config("seeds_per_cell must be positive".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut jobs = Vec::new();
    let mut cell_index = 0u64;
    for topo in &sweep.topologies {
        for rw in &sweep.rewards {
            for seed_idx in 0..sweep.seeds_per_cell {
                jobs.push((cell_index, *topo, *rw, seed_idx as u64));
            }
            cell_index += 1;
        }
    }

    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(cell, topo, rw, seed_idx)| {
            let mut cell_cfg = cfg.clone();
            cell_cfg.network.state_h1 = topo[0];
            cell_cfg.network.state_h2 = topo[1];
            cell_cfg.network.action_h = topo[2];
            cell_cfg.reward.alpha = rw[0];
            cell_cfg.reward.beta = rw[1];
            if let Some(episodes) = sweep.episodes {
                cell_cfg.agent.episodes = episodes;
            }
            let seed = derive_seed(master_seed, cell * 1000 + seed_idx);
            let cell_id = format!("t{}-{}-{}_a{}_b{}", topo[0], topo[1], topo[2], rw[0], rw[1]);
            let base = SweepRow {
                cell_id,
                seed,
                topology: topo,
                alpha: rw[0],
                beta: rw[1],
                final_ss_error: None,
                overshoot: None,
                settling_ms: None,
                aborted: true,
            };
            match sweep_cell(&cell_cfg, seed) {
                Ok((ss, ov, settle)) => SweepRow {
                    final_ss_error: Some(ss),
                    overshoot: Some(ov),
                    settling_ms: settle.map(|s| s * 1e3),
                    aborted: false,
                    ..base
                },
                Err(_) => base,
            }
        })
        .collect();

    let mut sorted = rows;
    sorted.sort_by(|a, b| (a.cell_id.clone(), a.seed).cmp(&(b.cell_id.clone(), b.seed)));

    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("summary.csv"))?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for row in &sorted {
        writeln!(w, "{}", row.csv_line())?;
    }
    drop(w);
    write_manifest(cfg, master_seed, out_dir)?;
    Ok(sorted)
}

/// Train one sweep cell and measure it on scenario-A: steady-state error of
/// the final segment, max edge overshoot, worst settling.
fn sweep_cell(cfg: &Config, seed: u64) -> Result<(f64, f64, Option<f64>)> {
    let result = train_policy(cfg, seed)?;
    let scenario = Scenario::builtin_a();
    let (_, metrics) = eval_policy(&result.net, &scenario, cfg)?;
    let last = metrics.edges.last().expect("scenario has edges");
    if !last.steady_state_error.is_finite() {
        return Err(Error::AbortedTooOften { aborted: 1, total: 1 });
    }
    Ok((last.steady_state_error, metrics.max_overshoot(), metrics.worst_settling()))
}

/// Convenience wrapper mirroring the CLI `train` + `eval` flow for tests.
pub fn hyperparams_with_topology(cfg: &Config, topology: Topology) -> Result<Hyperparams> {
    let mut hp = cfg.hyperparams()?;
    hp.topology = topology;
    Ok(hp)
}
