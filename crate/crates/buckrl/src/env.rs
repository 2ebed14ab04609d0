//! MDP wrapper around the converter simulation: observation construction,
//! triangular-carrier actions, shaped reward, episode management.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{DqnEnvironment, EnvStep};
use crate::error::{Error, Result};
use crate::sim::{step_rk4, ConverterParams, ConverterState};

/// Six-component state of the voltage-tracking MDP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub v_o: f64,
    pub v_o_delay: f64,
    pub dv_o_dt: f64,
    pub e: f64,
    pub e_delay: f64,
    pub de_dt: f64,
}

impl Observation {
    pub fn to_vector(&self) -> [f64; 6] {
        [self.v_o, self.v_o_delay, self.dv_o_dt, self.e, self.e_delay, self.de_dt]
    }
}

/// Level and amplitude of the repeating triangular duty sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierCommand {
    pub level: f64,
    pub amplitude: f64,
}

/// How the entries of an [`ActionSpace`] act on the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Each entry sets the carrier to the reset carrier plus the entry.
    Offset,
    /// Each entry is added to the current carrier (literal increments).
    Increment,
}

/// Finite menu of (dlevel, damplitude) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    entries: Vec<(f64, f64)>,
    mode: ActionMode,
}

impl ActionSpace {
    pub fn new(entries: Vec<(f64, f64)>, mode: ActionMode) -> Result<ActionSpace> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("action space must be non-empty".into()));
        }
        if !entries.iter().any(|&(dl, da)| dl == 0.0 && da == 0.0) {
            return Err(Error::InvalidParameter("action space must contain the null action".into()));
        }
        if entries.iter().any(|&(dl, da)| !dl.is_finite() || !da.is_finite()) {
            return Err(Error::InvalidParameter("action entries must be finite".into()));
        }
        Ok(ActionSpace { entries, mode })
    }

    /// Default menu: carrier offsets spanning fine regulation to full
    /// transient authority, null action first.
    pub fn offset_default() -> ActionSpace {
        Self::offset_grid(
            &[-0.18, -0.06, -0.02, -0.006, -0.002, 0.002, 0.006, 0.02, 0.06, 0.18],
            &[-0.05, 0.0, 0.05],
        )
    }

    /// Offset menu from explicit level and amplitude offset lists. The null
    /// action is placed at index 0; greedy ties resolve to it.
    pub fn offset_grid(level_offsets: &[f64], amp_offsets: &[f64]) -> ActionSpace {
        let mut entries = vec![(0.0, 0.0)];
        for &dl in level_offsets {
            for &da in amp_offsets {
                if dl == 0.0 && da == 0.0 {
                    continue;
                }
                entries.push((dl, da));
            }
        }
        ActionSpace { entries, mode: ActionMode::Offset }
    }

    /// Symmetric increment grid {-dl, 0, +dl} x {-da, 0, +da}, null first.
    pub fn increment_grid(dl: f64, da: f64) -> ActionSpace {
        let mut entries = vec![(0.0, 0.0)];
        for &l in &[-dl, 0.0, dl] {
            for &a in &[-da, 0.0, da] {
                if l == 0.0 && a == 0.0 {
                    continue;
                }
                entries.push((l, a));
            }
        }
        ActionSpace { entries, mode: ActionMode::Increment }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    pub fn entry(&self, index: usize) -> Result<(f64, f64)> {
        self.entries
            .get(index)
            .copied()
            .ok_or(Error::ActionIndexOutOfRange { index, len: self.entries.len() })
    }

    /// Raw numeric encoding of an action for the Q网络 action path.
    pub fn encoding(&self, index: usize) -> Result<[f64; 2]> {
        let (dl, da) = self.entry(index)?;
        Ok([dl, da])
    }

    /// Per-column scale that maps encodings into roughly [-1, 1].
    pub fn encoding_scale(&self) -> [f64; 2] {
        let max_l = self.entries.iter().map(|e| e.0.abs()).fold(0.0, f64::max);
        let max_a = self.entries.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        [
            if max_l > 0.0 { 1.0 / max_l } else { 1.0 },
            if max_a > 0.0 { 1.0 / max_a } else { 1.0 },
        ]
    }
}

/// Apply an increment entry to the carrier and clamp to valid ranges.
pub fn apply_action(
    carrier: CarrierCommand,
    action_index: usize,
    space: &ActionSpace,
    amp_max: f64,
) -> Result<CarrierCommand> {
    let (dl, da) = space.entry(action_index)?;
    Ok(CarrierCommand {
        level: (carrier.level + dl).clamp(0.0, 1.0),
        amplitude: (carrier.amplitude + da).clamp(0.0, amp_max),
    })
}

/// Set the carrier to `base` plus an offset entry, clamped.
pub fn set_action(
    base: CarrierCommand,
    action_index: usize,
    space: &ActionSpace,
    amp_max: f64,
) -> Result<CarrierCommand> {
    let (dl, da) = space.entry(action_index)?;
    Ok(CarrierCommand {
        level: (base.level + dl).clamp(0.0, 1.0),
        amplitude: (base.amplitude + da).clamp(0.0, amp_max),
    })
}

/// Unit triangle wave with period 1: -1 at phase 0, +1 at phase 0.5.
fn tri(phase: f64) -> f64 {
    let p = phase - phase.floor();
    if p <= 0.5 {
        -1.0 + 4.0 * p
    } else {
        3.0 - 4.0 * p
    }
}

/// Instantaneous duty ratio of the triangular carrier.
pub fn duty_of(carrier: &CarrierCommand, t: f64, f_tri: f64, d_min: f64, d_max: f64) -> f64 {
    (carrier.level + carrier.amplitude * tri(t * f_tri)).clamp(d_min, d_max)
}

/// Shaped tracking reward: bounded 1/|e| inside the mainline band,
/// -alpha*|e| outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub r_cap: f64,
    pub eps_floor: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { alpha: 1e-2, beta: 1e-3, omega: 0.5, r_cap: 1.0, eps_floor: 1e-4 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("omega", self.omega),
            ("r_cap", self.r_cap),
            ("eps_floor", self.eps_floor),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn reward(e: f64, params: &RewardParams) -> f64 {
    let ae = e.abs();
    if ae < params.omega {
        (params.beta / ae.max(params.eps_floor)).min(params.r_cap)
    } else {
        -params.alpha * ae
    }
}

/// Initial plant state distribution for an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Fixed { v_o: f64, i_l: f64 },
    /// v_o uniform in [v_frac_lo, v_frac_hi] * v_ref; inductor current
    /// matched to the load except for a `hard_start_prob` fraction of
    /// episodes that begin with i_l = 0.
    NearEquilibrium { v_frac_lo: f64, v_frac_hi: f64, hard_start_prob: f64 },
}

/// Load profile for an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum CplSpec {
    /// Fixed (time, watts) schedule; times strictly increasing from 0.
    Schedule(Vec<(f64, f64)>),
    /// Piecewise-constant schedule drawn at reset: an initial level plus
    /// `switches` random step changes, all drawn from `levels`.
    RandomPiecewise { levels: Vec<f64>, switches: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
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
    pub init: InitSpec,
    pub cpl: CplSpec,
}

impl EpisodeConfig {
    /// Training defaults: short episodes near the operating point with
    /// random load steps drawn from the test range.
    pub fn training_default() -> Self {
        EpisodeConfig {
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
            init: InitSpec::NearEquilibrium { v_frac_lo: 0.95, v_frac_hi: 1.0, hard_start_prob: 0.2 },
            cpl: CplSpec::RandomPiecewise { levels: vec![300.0, 500.0, 900.0], switches: 2 },
        }
    }

    /// Deterministic evaluation episode over a fixed schedule.
    pub fn eval(schedule: Vec<(f64, f64)>, duration: f64) -> Self {
        EpisodeConfig {
            duration,
            init: InitSpec::Fixed { v_o: 80.0, i_l: 0.0 },
            cpl: CplSpec::Schedule(schedule),
            ..Self::training_default()
        }
    }

    pub fn steps_per_episode(&self) -> usize {
        (self.duration / self.control_period).round() as usize
    }

    pub fn substeps(&self) -> usize {
        (self.control_period / self.sim_dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("duration must be > 0".into()));
        }
        if !(self.sim_dt > 0.0) || self.control_period < self.sim_dt {
            return Err(Error::InvalidParameter(
                "control_period must be >= sim_dt > 0".into(),
            ));
        }
        let ratio = self.control_period / self.sim_dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "control_period must be an integer multiple of sim_dt".into(),
            ));
        }
        if self.duty_min >= self.duty_max || self.duty_min < 0.0 || self.duty_max > 1.0 {
            return Err(Error::InvalidParameter("bad duty clamp range".into()));
        }
        if let CplSpec::Schedule(sched) = &self.cpl {
            let mut prev = -1.0;
            for &(t, p) in sched {
                if t <= prev || t >= self.duration && prev >= 0.0 && t != 0.0 && t >= self.duration
                {
                    return Err(Error::Scenario(format!(
                        "schedule times must be strictly increasing within [0, duration), got {t}"
                    )));
                }
                if p < 0.0 {
                    return Err(Error::Scenario(format!("negative load power {p}")));
                }
                prev = t;
            }
        }
        Ok(())
    }
}

/// Per-step bookkeeping beyond the observation and reward.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub aborted: bool,
    /// Simulation clock at the end of the control period.
    pub t: f64,
    pub i_l: f64,
    /// Duty at the first sub-step of the period.
    pub duty: f64,
    /// Load power at the first sub-step of the period.
    pub p_cpl: f64,
}

/// The converter wrapped as an episodic environment.
pub struct BuckEnv {
    params: ConverterParams,
    reward_params: RewardParams,
    cfg: EpisodeConfig,
    space: ActionSpace,
    base_carrier: CarrierCommand,
    carrier: CarrierCommand,
    state: ConverterState,
    schedule: Vec<(f64, f64)>,
    prev_v_o: f64,
    prev_e: f64,
    steps_taken: usize,
    done: bool,
}

impl BuckEnv {
    pub fn new(
        params: ConverterParams,
        reward_params: RewardParams,
        cfg: EpisodeConfig,
        space: ActionSpace,
    ) -> Result<BuckEnv> {
        params.validate()?;
        reward_params.validate()?;
        cfg.validate()?;
        let base = CarrierCommand {
            level: params.v_ref / params.v_in,
            amplitude: cfg.init_amplitude,
        };
        Ok(BuckEnv {
            params,
            reward_params,
            cfg,
            space,
            base_carrier: base,
            carrier: base,
            state: ConverterState { i_l: 0.0, v_o: params.v_ref, t: 0.0 },
            schedule: vec![(0.0, params.p_cpl)],
            prev_v_o: params.v_ref,
            prev_e: 0.0,
            steps_taken: 0,
            done: true,
        })
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ConverterState {
        &self.state
    }

    pub fn carrier(&self) -> &CarrierCommand {
        &self.carrier
    }

    fn load_at(&self, t: f64) -> f64 {
        let mut p = self.schedule.first().map_or(self.params.p_cpl, |e| e.1);
        for &(ts, ps) in &self.schedule {
            if t >= ts {
                p = ps;
            } else {
                break;
            }
        }
        p
    }

    fn observe(&self, dv: f64, de: f64) -> Observation {
        let e = self.state.v_o - self.params.v_ref;
        Observation {
            v_o: self.state.v_o,
            v_o_delay: self.prev_v_o,
            dv_o_dt: dv,
            e,
            e_delay: self.prev_e,
            de_dt: de,
        }
    }

    /// Start a new episode. Random draws happen in a fixed order (load
    /// profile, then initial voltage, then the hard-start coin) so a seed
    /// fully determines the episode.
    pub fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation {
        self.schedule = match &self.cfg.cpl {
            CplSpec::Schedule(s) => {
                let mut s = s.clone();
                if s.is_empty() || s[0].0 != 0.0 {
                    s.insert(0, (0.0, self.params.p_cpl));
                }
                s
            }
            CplSpec::RandomPiecewise { levels, switches } => {
                let pick = |rng: &mut ChaCha8Rng| levels[rng.gen_range(0..levels.len())];
                let mut sched = vec![(0.0, pick(rng))];
                let mut times: Vec<f64> = (0..*switches)
                    .map(|_| rng.gen_range(0.05..0.95) * self.cfg.duration)
                    .collect();
                times.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for t in times {
                    sched.push((t, pick(rng)));
                }
                sched
            }
        };
        let p0 = self.schedule[0].1;
        let (v_o, i_l) = match &self.cfg.init {
            InitSpec::Fixed { v_o, i_l } => (*v_o, *i_l),
            InitSpec::NearEquilibrium { v_frac_lo, v_frac_hi, hard_start_prob } => {
                let v = rng.gen_range(*v_frac_lo..=*v_frac_hi) * self.params.v_ref;
                let i = if rng.gen_bool(*hard_start_prob) { 0.0 } else { p0 / v };
                (v, i)
            }
        };
        self.state = ConverterState { i_l, v_o, t: 0.0 };
        self.carrier = self.base_carrier;
        self.prev_v_o = v_o;
        self.prev_e = v_o - self.params.v_ref;
        self.steps_taken = 0;
        self.done = false;
        self.observe(0.0, 0.0)
    }

    /// Advance one control period.
    pub fn step(&mut self, action_index: usize) -> Result<(Observation, f64, bool, StepInfo)> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.carrier = match self.space.mode() {
            ActionMode::Increment => {
                apply_action(self.carrier, action_index, &self.space, self.cfg.amp_max)?
            }
            ActionMode::Offset => {
                set_action(self.base_carrier, action_index, &self.space, self.cfg.amp_max)?
            }
        };

        let n_sub = self.cfg.substeps();
        let mut aborted = false;
        let mut first_duty = 0.0;
        let first_p = self.load_at(self.state.t);
        for k in 0..n_sub {
            let p = self.load_at(self.state.t);
            let duty = duty_of(
                &self.carrier,
                self.state.t,
                self.cfg.f_tri,
                self.cfg.duty_min,
                self.cfg.duty_max,
            );
            if k == 0 {
                first_duty = duty;
            }
            let params = self.params.with_p_cpl(p);
            match step_rk4(&self.state, &params, duty, self.cfg.sim_dt) {
                Ok(next) => self.state = next,
                Err(Error::SingularVoltage { .. }) => {
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        let dv = (self.state.v_o - self.prev_v_o) / self.cfg.control_period;
        let e = self.state.v_o - self.params.v_ref;
        let de = (e - self.prev_e) / self.cfg.control_period;
        let obs = self.observe(dv, de);
        if e.abs() > self.cfg.abort_band {
            aborted = true;
        }
        let r = if aborted { self.cfg.abort_penalty } else { reward(e, &self.reward_params) };
        self.prev_v_o = self.state.v_o;
        self.prev_e = e;
        self.steps_taken += 1;
        self.done = aborted || self.steps_taken >= self.cfg.steps_per_episode();
        let info = StepInfo {
            aborted,
            t: self.state.t,
            i_l: self.state.i_l,
            duty: first_duty,
            p_cpl: first_p,
        };
        Ok((obs, r, self.done, info))
    }
}

impl DqnEnvironment for BuckEnv {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> [f64; 6] {
        BuckEnv::reset(self, rng).to_vector()
    }

    fn step(&mut self, action_index: usize) -> Result<EnvStep> {
        let (obs, r, done, info) = BuckEnv::step(self, action_index)?;
        Ok(EnvStep {
            obs: obs.to_vector(),
            reward: r,
            done,
            aborted: info.aborted,
            abs_error: obs.e.abs(),
        })
    }
}
