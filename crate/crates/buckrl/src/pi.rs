//! Double-loop PI baseline: an outer voltage loop commands inductor
//! current, an inner current loop commands duty, with clamping anti-windup.

use crate::error::{Error, Result};
use crate::sim::{step_rk4, ConverterParams, ConverterState};

/// Outer (voltage) and inner (current) loop gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub kvp: f64,
    pub kvi: f64,
    pub kcp: f64,
    pub kci: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        PiGains { kvp: 0.33, kvi: 40.0, kcp: 0.09, kci: 35.0 }
    }
}

/// Integrator memory of both loops.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub integ_v: f64,
    pub integ_c: f64,
}

pub const PI_DUTY_MIN: f64 = 0.01;
pub const PI_DUTY_MAX: f64 = 0.99;

/// One controller update. Integrators are conditionally frozen when the
/// duty output saturates and the respective error would push further into
/// the rail (clamping anti-windup).
pub fn pi_controller_step(
    state: PiState,
    v_o: f64,
    i_l: f64,
    v_ref: f64,
    gains: &PiGains,
    dt: f64,
) -> (f64, PiState) {
    let e_v = v_ref - v_o;
    let integ_v_new = state.integ_v + e_v * dt;
    let i_ref = gains.kvp * e_v + gains.kvi * integ_v_new;
    let e_c = i_ref - i_l;
    let integ_c_new = state.integ_c + e_c * dt;
    let u = gains.kcp * e_c + gains.kci * integ_c_new;
    let duty = u.clamp(PI_DUTY_MIN, PI_DUTY_MAX);

    let sat_hi = u > PI_DUTY_MAX;
    let sat_lo = u < PI_DUTY_MIN;
    let keep_c = !((sat_hi && e_c > 0.0) || (sat_lo && e_c < 0.0));
    let keep_v = !((sat_hi && e_v > 0.0) || (sat_lo && e_v < 0.0));
    let next = PiState {
        integ_v: if keep_v { integ_v_new } else { state.integ_v },
        integ_c: if keep_c { integ_c_new } else { state.integ_c },
    };
    (duty, next)
}

/// One sample of a closed-loop run.
#[derive(Debug, Clone, Copy)]
pub struct PiSample {
    pub t: f64,
    pub v_o: f64,
    pub i_l: f64,
    pub duty: f64,
    pub p_cpl: f64,
}

/// Closed-loop simulation with the controller updated every `dt`. The
/// schedule is piecewise constant (time, watts) starting at t = 0.
pub fn run_pi_closed_loop(
    params: &ConverterParams,
    gains: &PiGains,
    schedule: &[(f64, f64)],
    duration: f64,
    dt: f64,
    initial: ConverterState,
) -> Result<Vec<PiSample>> {
    params.validate()?;
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidParameter("dt and duration must be > 0".into()));
    }
    let n = (duration / dt).round() as usize;
    let mut rows = Vec::with_capacity(n);
    let mut plant = initial;
    let mut pi = PiState::default();
    for _ in 0..n {
        let p = load_at(schedule, plant.t, params.p_cpl);
        let (duty, next_pi) = pi_controller_step(pi, plant.v_o, plant.i_l, params.v_ref, gains, dt);
        pi = next_pi;
        rows.push(PiSample { t: plant.t, v_o: plant.v_o, i_l: plant.i_l, duty, p_cpl: p });
        let step_params = params.with_p_cpl(p);
        plant = step_rk4(&plant, &step_params, duty, dt)?;
    }
    Ok(rows)
}

fn load_at(schedule: &[(f64, f64)], t: f64, fallback: f64) -> f64 {
    let mut p = schedule.first().map_or(fallback, |e| e.1);
    for &(ts, ps) in schedule {
        if t >= ts {
            p = ps;
        } else {
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_memory_clamps_to_floor() {
        let gains = PiGains::default();
        let (duty, next) = pi_controller_step(PiState::default(), 100.0, 0.0, 100.0, &gains, 1e-6);
        assert_eq!(duty, PI_DUTY_MIN);
        assert_eq!(next.integ_v, 0.0);
        assert_eq!(next.integ_c, 0.0);
    }

    #[test]
    fn two_identical_calls_differ_by_integrator_increments() {
        // constant inputs v_o = 90, i_l = 1: hand evaluation of two updates
        let gains = PiGains::default();
        let dt = 1e-3;
        let (d1, s1) = pi_controller_step(PiState::default(), 90.0, 1.0, 100.0, &gains, dt);
        // e_v = 10, integ_v = 0.01, i_ref = 3.3 + 0.4 = 3.7
        // e_c = 2.7, integ_c = 0.0027, u = 0.243 + 0.0945 = 0.3375
        assert!((s1.integ_v - 0.01).abs() < 1e-15);
        assert!((s1.integ_c - 0.0027).abs() < 1e-15);
        assert!((d1 - 0.3375).abs() < 1e-12);

        let (d2, s2) = pi_controller_step(s1, 90.0, 1.0, 100.0, &gains, dt);
        // integ_v = 0.02 -> i_ref = 3.3 + 0.8 = 4.1
        // e_c = 3.1, integ_c = 0.0058, u = 0.279 + 0.203 = 0.482
        assert!((s2.integ_v - 0.02).abs() < 1e-15);
        assert!((s2.integ_c - 0.0058).abs() < 1e-15);
        assert!((d2 - 0.482).abs() < 1e-12);
    }

    #[test]
    fn anti_windup_freezes_integrators_at_saturation() {
        let gains = PiGains::default();
        let dt = 1e-3;
        // drive hard into the upper rail
        let mut s = PiState { integ_v: 1.0, integ_c: 1.0 };
        let (duty, s1) = pi_controller_step(s, 50.0, 0.0, 100.0, &gains, dt);
        assert_eq!(duty, PI_DUTY_MAX);
        // sustained positive errors with a saturated duty: both frozen
        assert_eq!(s1.integ_v, s.integ_v);
        assert_eq!(s1.integ_c, s.integ_c);
        s = s1;
        let (_, s2) = pi_controller_step(s, 50.0, 0.0, 100.0, &gains, dt);
        assert_eq!(s2, s);
    }

    #[test]
    fn closed_loop_settles_at_constant_load() {
        // P = 300 W constant: |v_o - 100| < 0.5 V after 30 ms
        let params = ConverterParams::nominal().with_p_cpl(300.0);
        let rows = run_pi_closed_loop(
            &params,
            &PiGains::default(),
            &[(0.0, 300.0)],
            0.05,
            1e-6,
            ConverterState { i_l: 0.0, v_o: 80.0, t: 0.0 },
        )
        .unwrap();
        let late: Vec<&PiSample> = rows.iter().filter(|r| r.t >= 0.030).collect();
        assert!(!late.is_empty());
        let max_err = late.iter().map(|r| (r.v_o - 100.0).abs()).fold(0.0, f64::max);
        assert!(max_err < 0.5, "max |e| after 30 ms: {max_err}");

        // steady-state property at 50 ms with default gains
        let final_err = (rows.last().unwrap().v_o - 100.0).abs();
        assert!(final_err < 0.1, "final error {final_err}");
    }

    #[test]
    fn zero_gains_pin_duty_at_floor_and_voltage_collapses() {
        let params = ConverterParams::nominal().with_p_cpl(300.0);
        let gains = PiGains { kvp: 0.0, kvi: 0.0, kcp: 0.0, kci: 0.0 };
        let result = run_pi_closed_loop(
            &params,
            &gains,
            &[(0.0, 300.0)],
            0.05,
            1e-6,
            ConverterState { i_l: 0.0, v_o: 80.0, t: 0.0 },
        );
        match result {
            Err(Error::SingularVoltage { .. }) => {}
            Ok(rows) => panic!("expected collapse, got {} rows", rows.len()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn duty_always_within_clamp_range() {
        let params = ConverterParams::nominal().with_p_cpl(300.0);
        let rows = run_pi_closed_loop(
            &params,
            &PiGains::default(),
            &[(0.0, 300.0), (0.01, 900.0), (0.02, 300.0)],
            0.03,
            1e-6,
            ConverterState { i_l: 0.0, v_o: 80.0, t: 0.0 },
        )
        .unwrap();
        assert!(rows.iter().all(|r| (PI_DUTY_MIN..=PI_DUTY_MAX).contains(&r.duty)));
    }

    #[test]
    fn closed_loop_is_bitwise_deterministic() {
        let params = ConverterParams::nominal().with_p_cpl(300.0);
        let run = || {
            run_pi_closed_loop(
                &params,
                &PiGains::default(),
                &[(0.0, 300.0), (0.005, 900.0)],
                0.01,
                1e-6,
                ConverterState { i_l: 0.0, v_o: 80.0, t: 0.0 },
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.v_o.to_bits(), y.v_o.to_bits());
            assert_eq!(x.duty.to_bits(), y.duty.to_bits());
        }
    }
}
