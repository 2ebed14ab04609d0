//! Averaged buck converter model with resistive and constant power loads,
//! integrated with fixed-step classical Runge-Kutta.

use crate::error::{Error, Result};

/// Circuit parameters of the averaged buck converter.
///
/// `r_ohm = None` means no resistive load is connected; only the CPL draws
/// current. `v_min` guards the CPL division, which is singular at v_o = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    pub v_in: f64,
    pub l_henry: f64,
    pub c_farad: f64,
    pub r_ohm: Option<f64>,
    pub p_cpl: f64,
    pub f_sw: f64,
    pub v_ref: f64,
    pub v_min: f64,
}

impl ConverterParams {
    /// Nominal circuit: 200 V input, 100 V bus, 2 mH, 150 uF, 20 kHz.
    pub fn nominal() -> Self {
        ConverterParams {
            v_in: 200.0,
            l_henry: 2e-3,
            c_farad: 150e-6,
            r_ohm: None,
            p_cpl: 300.0,
            f_sw: 20e3,
            v_ref: 100.0,
            v_min: 1.0,
        }
    }

    pub fn with_p_cpl(mut self, p_cpl: f64) -> Self {
        self.p_cpl = p_cpl;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("v_in", self.v_in),
            ("l_henry", self.l_henry),
            ("c_farad", self.c_farad),
            ("f_sw", self.f_sw),
            ("v_ref", self.v_ref),
            ("v_min", self.v_min),
        ];
        for (name, value) in pos {
            if !(value > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {value}")));
            }
        }
        if self.p_cpl < 0.0 {
            return Err(Error::InvalidParameter(format!("p_cpl must be >= 0, got {}", self.p_cpl)));
        }
        if let Some(r) = self.r_ohm {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!("r_ohm must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Instantaneous plant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterState {
    pub i_l: f64,
    pub v_o: f64,
    pub t: f64,
}

/// Lumped mismatch between actual and nominal dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub d1: f64,
    pub d2: f64,
}

/// Current drawn by a constant power load at bus voltage `v_o`.
pub fn cpl_current(p_cpl: f64, v_o: f64, v_min: f64) -> Result<f64> {
    if v_o < v_min {
        return Err(Error::SingularVoltage { v_o, v_min });
    }
    Ok(p_cpl / v_o)
}

/// State derivatives of the averaged model for a given duty ratio.
///
/// di_l = (duty*v_in - v_o)/L, dv_o = i_l/C - v_o/(R*C) - P/(C*v_o);
/// the R term is omitted when no resistive load is present.
pub fn derivatives(state: &ConverterState, params: &ConverterParams, duty: f64) -> Result<(f64, f64)> {
    if state.v_o < params.v_min {
        return Err(Error::SingularVoltage { v_o: state.v_o, v_min: params.v_min });
    }
    let di_l = (duty * params.v_in - state.v_o) / params.l_henry;
    // net capacitor current over C; factoring out 1/C keeps the equilibrium
    // residual exactly zero
    let mut i_c = state.i_l - params.p_cpl / state.v_o;
    if let Some(r) = params.r_ohm {
        i_c -= state.v_o / r;
    }
    Ok((di_l, i_c / params.c_farad))
}

/// One classical fourth-order Runge-Kutta step with duty held constant.
pub fn step_rk4(
    state: &ConverterState,
    params: &ConverterParams,
    duty: f64,
    dt: f64,
) -> Result<ConverterState> {
    let eval = |i_l: f64, v_o: f64| -> Result<(f64, f64)> {
        derivatives(&ConverterState { i_l, v_o, t: state.t }, params, duty)
    };
    let (k1i, k1v) = eval(state.i_l, state.v_o)?;
    let h = 0.5 * dt;
    let (k2i, k2v) = eval(state.i_l + h * k1i, state.v_o + h * k1v)?;
    let (k3i, k3v) = eval(state.i_l + h * k2i, state.v_o + h * k2v)?;
    let (k4i, k4v) = eval(state.i_l + dt * k3i, state.v_o + dt * k3v)?;
    let next = ConverterState {
        i_l: state.i_l + dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i),
        v_o: state.v_o + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        t: state.t + dt,
    };
    if next.v_o < params.v_min {
        return Err(Error::SingularVoltage { v_o: next.v_o, v_min: params.v_min });
    }
    Ok(next)
}

/// Lumped uncertainties (d1, d2) such that the nominal dynamics plus the
/// disturbance reproduce the actual dynamics exactly:
/// derivatives(actual) == derivatives(nominal) + (d1, d2).
pub fn lumped_disturbance(
    nominal: &ConverterParams,
    actual: &ConverterParams,
    state: &ConverterState,
    duty: f64,
) -> Result<Disturbance> {
    let v_min = nominal.v_min.max(actual.v_min);
    if state.v_o < v_min {
        return Err(Error::SingularVoltage { v_o: state.v_o, v_min });
    }
    let d1 = (actual.v_in / actual.l_henry - nominal.v_in / nominal.l_henry) * duty
        + (1.0 / nominal.l_henry - 1.0 / actual.l_henry) * state.v_o;
    let inv_rc = |p: &ConverterParams| p.r_ohm.map_or(0.0, |r| 1.0 / (r * p.c_farad));
    let d2 = (1.0 / actual.c_farad - 1.0 / nominal.c_farad) * state.i_l
        + (inv_rc(nominal) - inv_rc(actual)) * state.v_o
        - actual.p_cpl / (actual.c_farad * state.v_o)
        + nominal.p_cpl / (nominal.c_farad * state.v_o);
    Ok(Disturbance { d1, d2 })
}
