//! Workbench configuration: flat key = value sections in TOML. Unknown
//! keys are rejected so typos surface as errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::Hyperparams;
use crate::env::{ActionSpace, CplSpec, EpisodeConfig, InitSpec, RewardParams};
use crate::error::{Error, Result};
use crate::net::Topology;
use crate::pi::PiGains;
use crate::sim::ConverterParams;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub circuit: CircuitSection,
    pub reward: RewardSection,
    pub episode: EpisodeSection,
    pub agent: AgentSection,
    pub network: NetworkSection,
    pub pi: PiSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Config {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Config> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn converter_params(&self) -> Result<ConverterParams> {
        let c = &self.circuit;
        let params = ConverterParams {
            v_in: c.v_in,
            l_henry: c.l,
            c_farad: c.c,
            r_ohm: c.r,
            p_cpl: c.p_cpl,
            f_sw: c.f_sw,
            v_ref: c.v_ref,
            v_min: c.v_min,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn reward_params(&self) -> Result<RewardParams> {
        let r = &self.reward;
        let params = RewardParams {
            alpha: r.alpha,
            beta: r.beta,
            omega: r.omega,
            r_cap: r.r_cap,
            eps_floor: r.eps_floor,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn action_space(&self) -> Result<ActionSpace> {
        let e = &self.episode;
        match e.action_mode.as_str() {
            "offset" => Ok(ActionSpace::offset_grid(&e.level_offsets, &e.amp_offsets)),
            "increment" => Ok(ActionSpace::increment_grid(e.level_step, e.amp_step)),
            other => Err(Error::Config(format!(
                "action_mode must be \"offset\" or \"increment\", got {other:?}"
            ))),
        }
    }

    /// Episode configuration for training runs (random loads and inits).
    pub fn training_episode(&self) -> Result<EpisodeConfig> {
        let e = &self.episode;
        let cfg = EpisodeConfig {
            duration: e.duration,
            control_period: e.control_period,
            sim_dt: e.sim_dt,
            abort_band: e.abort_band,
            abort_penalty: e.abort_penalty,
            f_tri: e.f_tri,
            duty_min: e.duty_min,
            duty_max: e.duty_max,
            amp_max: e.amp_max,
            init_amplitude: e.init_amplitude,
            init: InitSpec::NearEquilibrium {
                v_frac_lo: e.init_v_frac[0],
                v_frac_hi: e.init_v_frac[1],
                hard_start_prob: e.hard_start_prob,
            },
            cpl: CplSpec::RandomPiecewise {
                levels: e.train_cpl_levels.clone(),
                switches: e.train_cpl_switches,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Episode configuration for a deterministic evaluation of `schedule`.
    pub fn eval_episode(&self, schedule: Vec<(f64, f64)>, duration: f64) -> Result<EpisodeConfig> {
        let e = &self.episode;
        let cfg = EpisodeConfig {
            duration,
            control_period: e.control_period,
            sim_dt: e.sim_dt,
            abort_band: e.abort_band,
            abort_penalty: e.abort_penalty,
            f_tri: e.f_tri,
            duty_min: e.duty_min,
            duty_max: e.duty_max,
            amp_max: e.amp_max,
            init_amplitude: e.init_amplitude,
            init: InitSpec::Fixed { v_o: e.eval_init_v_frac * self.circuit.v_ref, i_l: 0.0 },
            cpl: CplSpec::Schedule(schedule),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let a = &self.agent;
        let n = &self.network;
        let hp = Hyperparams {
            lr: a.lr,
            lr_final: a.lr_final,
            gamma: a.gamma,
            batch_size: a.batch_size,
            epsilon: a.epsilon,
            epsilon_start: a.epsilon_start,
            epsilon_anneal_frac: a.epsilon_anneal_frac,
            target_sync_period: a.target_sync_period,
            warmup_steps: a.warmup_steps,
            train_steps_per_env_step: a.train_steps_per_env_step,
            replay_capacity: a.replay_capacity,
            episodes: a.episodes,
            topology: Topology {
                state_h1: n.state_h1,
                state_h2: n.state_h2,
                action_h: n.action_h,
                merge: n.merge,
            },
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn pi_gains(&self) -> PiGains {
        PiGains { kvp: self.pi.kvp, kvi: self.pi.kvi, kcp: self.pi.kcp, kci: self.pi.kci }
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep
            .as_ref()
            .ok_or_else(|| Error::Config("missing [sweep] section".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub v_in: f64,
    pub v_ref: f64,
    pub l: f64,
    pub c: f64,
    pub r: Option<f64>,
    pub p_cpl: f64,
    pub f_sw: f64,
    pub v_min: f64,
}

impl Default for CircuitSection {
    fn default() -> Self {
        let p = ConverterParams::nominal();
        CircuitSection {
            v_in: p.v_in,
            v_ref: p.v_ref,
            l: p.l_henry,
            c: p.c_farad,
            r: p.r_ohm,
            p_cpl: p.p_cpl,
            f_sw: p.f_sw,
            v_min: p.v_min,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub r_cap: f64,
    pub eps_floor: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardParams::default();
        RewardSection {
            alpha: r.alpha,
            beta: r.beta,
            omega: r.omega,
            r_cap: r.r_cap,
            eps_floor: r.eps_floor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub duration: f64,
    pub control_period: f64,
    pub sim_dt: f64,
    pub abort_band: f64,
    pub abort_penalty: f64,
    pub f_tri: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    pub amp_max: f64,
    pub init_amplitude: f64,
    /// Training initial voltage range as fractions of v_ref.
    pub init_v_frac: [f64; 2],
    /// Fraction of training episodes that start from i_l = 0.
    pub hard_start_prob: f64,
    pub train_cpl_levels: Vec<f64>,
    pub train_cpl_switches: usize,
    /// Evaluation initial voltage as a fraction of v_ref.
    pub eval_init_v_frac: f64,
    /// "offset" (actions set the carrier relative to its reset value) or
    /// "increment" (actions accumulate on the current carrier).
    pub action_mode: String,
    pub level_offsets: Vec<f64>,
    pub amp_offsets: Vec<f64>,
    /// Grid steps for increment mode.
    pub level_step: f64,
    pub amp_step: f64,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        EpisodeSection {
            duration: 0.05,
            control_period: 2e-5,
            sim_dt: 1e-6,
            abort_band: 50.0,
            abort_penalty: -5.0,
            f_tri: 5000.0,
            duty_min: 0.01,
            duty_max: 0.99,
            amp_max: 0.2,
            init_amplitude: 0.05,
            init_v_frac: [0.95, 1.0],
            hard_start_prob: 0.2,
            train_cpl_levels: vec![300.0, 500.0, 900.0],
            train_cpl_switches: 2,
            eval_init_v_frac: 0.8,
            action_mode: "offset".into(),
            level_offsets: vec![
                -0.18, -0.06, -0.02, -0.006, -0.002, 0.002, 0.006, 0.02, 0.06, 0.18,
            ],
            amp_offsets: vec![-0.05, 0.0, 0.05],
            level_step: 0.005,
            amp_step: 0.005,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub lr: f64,
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
}

impl Default for AgentSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        AgentSection {
            lr: h.lr,
            lr_final: h.lr_final,
            gamma: h.gamma,
            batch_size: h.batch_size,
            epsilon: h.epsilon,
            epsilon_start: h.epsilon_start,
            epsilon_anneal_frac: h.epsilon_anneal_frac,
            target_sync_period: h.target_sync_period,
            warmup_steps: h.warmup_steps,
            train_steps_per_env_step: h.train_steps_per_env_step,
            replay_capacity: h.replay_capacity,
            episodes: h.episodes,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub state_h1: usize,
    pub state_h2: usize,
    pub action_h: usize,
    pub merge: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let t = Topology::default();
        NetworkSection {
            state_h1: t.state_h1,
            state_h2: t.state_h2,
            action_h: t.action_h,
            merge: t.merge,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiSection {
    pub kvp: f64,
    pub kvi: f64,
    pub kcp: f64,
    pub kci: f64,
}

impl Default for PiSection {
    fn default() -> Self {
        let g = PiGains::default();
        PiSection { kvp: g.kvp, kvi: g.kvi, kcp: g.kcp, kci: g.kci }
    }
}

/// Sweep axes; every cell is (topology x reward) trained over
/// `seeds_per_cell` seeds. These fields are required.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// [M, N, P] triples; the merge width follows the network section.
    pub topologies: Vec<[usize; 3]>,
    /// [alpha, beta] pairs.
    pub rewards: Vec<[f64; 2]>,
    pub seeds_per_cell: usize,
    /// Episode-count override for sweep training runs.
    pub episodes: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ActionMode;

    #[test]
    fn default_config_builds_all_domain_types() {
        let cfg = Config::default();
        let params = cfg.converter_params().unwrap();
        assert_eq!(params.v_in, 200.0);
        assert_eq!(params.r_ohm, None);
        let r = cfg.reward_params().unwrap();
        assert_eq!(r.alpha, 1e-2);
        let hp = cfg.hyperparams().unwrap();
        assert_eq!(hp.batch_size, 256);
        assert_eq!(hp.topology, Topology::default());
        let space = cfg.action_space().unwrap();
        assert_eq!(space.len(), 31);
        cfg.training_episode().unwrap();
        cfg.eval_episode(vec![(0.0, 300.0)], 0.2).unwrap();
        let g = cfg.pi_gains();
        assert_eq!(g.kvp, 0.33);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = Config::parse("[agent]\nlearning_rate = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rate"), "{msg}");

        let err = Config::parse("[bogus_section]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_section"), "{}", err);
    }

    #[test]
    fn partial_sections_keep_remaining_defaults() {
        let cfg = Config::parse("[agent]\nepisodes = 7\n[reward]\nalpha = 0.001\n").unwrap();
        assert_eq!(cfg.agent.episodes, 7);
        assert_eq!(cfg.agent.batch_size, 256);
        assert_eq!(cfg.reward.alpha, 0.001);
        assert_eq!(cfg.reward.beta, 1e-3);
    }

    #[test]
    fn sweep_section_requires_its_fields() {
        let err = Config::parse("[sweep]\nseeds_per_cell = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("topologies") || msg.contains("missing field"), "{msg}");

        let cfg = Config::parse(
            "[sweep]\ntopologies = [[4,8,8]]\nrewards = [[1e-2, 1e-3]]\nseeds_per_cell = 2\n",
        )
        .unwrap();
        let sweep = cfg.sweep().unwrap();
        assert_eq!(sweep.seeds_per_cell, 2);
        assert_eq!(sweep.episodes, None);

        assert!(Config::default().sweep().is_err());
    }

    #[test]
    fn config_echo_round_trips() {
        let cfg = Config::parse("[agent]\nepisodes = 9\n").unwrap();
        let echoed = cfg.to_toml();
        let back = Config::parse(&echoed).unwrap();
        assert_eq!(back.agent.episodes, 9);
        assert_eq!(back.episode.control_period, cfg.episode.control_period);
    }

    #[test]
    fn increment_mode_uses_grid_steps() {
        let cfg = Config::parse("[episode]\naction_mode = \"increment\"\nlevel_step = 0.01\n").unwrap();
        let space = cfg.action_space().unwrap();
        assert_eq!(space.len(), 9);
        assert_eq!(space.mode(), ActionMode::Increment);
        assert!(Config::parse("[episode]\naction_mode = \"bogus\"\n")
            .unwrap()
            .action_space()
            .is_err());
    }
}
