//! Disturbance-response metrics: per-edge overshoot, settling time, and
//! steady-state error.

use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::trace::TraceRow;

/// Duration of the averaging window for the steady-state error, measured
/// back from the end of each edge window.
const STEADY_STATE_WINDOW: f64 = 0.010;

/// Default settling band: 1% of the 100 V nominal bus.
pub const DEFAULT_SETTLING_BAND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMetrics {
    pub edge_t: f64,
    /// max |v_o - v_ref| after the edge, within the window to the next edge.
    pub overshoot: f64,
    /// Time from the edge until |e| enters and remains within the band;
    /// `None` when the trace never settles in the window.
    pub settling: Option<f64>,
    /// Mean |e| over the final 10 ms of the window.
    pub steady_state_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub v_ref: f64,
    pub band: f64,
    pub edges: Vec<EdgeMetrics>,
}

impl MetricsReport {
    pub fn max_overshoot(&self) -> f64 {
        self.edges.iter().map(|e| e.overshoot).fold(0.0, f64::max)
    }

    /// Worst settling time across edges; `None` if any edge never settles.
    pub fn worst_settling(&self) -> Option<f64> {
        let mut worst = 0.0f64;
        for e in &self.edges {
            worst = worst.max(e.settling?);
        }
        Some(worst)
    }

    pub fn max_steady_state_error(&self) -> f64 {
        self.edges.iter().map(|e| e.steady_state_error).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "edge_t,overshoot_v,settling_ms,steady_state_error_v")?;
        for e in &self.edges {
            let settling = e
                .settling
                .map(|s| (s * 1e3).to_string())
                .unwrap_or_else(|| "not_settled".into());
            writeln!(w, "{},{},{},{}", e.edge_t, e.overshoot, settling, e.steady_state_error)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.edges {
            let settling = e
                .settling
                .map(|s| format!("{:.3} ms", s * 1e3))
                .unwrap_or_else(|| "not settled".into());
            writeln!(
                f,
                "edge {:>7.4} s: overshoot {:.4} V, settling {}, ss error {:.4} V",
                e.edge_t, e.overshoot, settling, e.steady_state_error
            )?;
        }
        Ok(())
    }
}

/// Per-edge metrics over a time-sorted trace. `edges` are the disturbance
/// instants; each window runs from its edge to the next edge (or the end).
pub fn compute_metrics(
    trace: &[TraceRow],
    v_ref: f64,
    edges: &[f64],
    band: f64,
) -> Result<MetricsReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if trace.windows(2).any(|w| w[0].t > w[1].t) {
        return Err(Error::InvalidParameter("trace must be time-sorted".into()));
    }
    let t_end = trace.last().unwrap().t;
    let edges = if edges.is_empty() { vec![trace[0].t] } else { edges.to_vec() };

    let mut out = Vec::with_capacity(edges.len());
    for (i, &edge) in edges.iter().enumerate() {
        let window_end = edges.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let rows: Vec<&TraceRow> = trace
            .iter()
            .filter(|r| (r.t >= edge && i == 0 || r.t > edge) && r.t <= window_end)
            .collect();
        if rows.is_empty() {
            // the trace ended before this window (e.g. an aborted run)
            out.push(EdgeMetrics {
                edge_t: edge,
                overshoot: f64::INFINITY,
                settling: None,
                steady_state_error: f64::INFINITY,
            });
            continue;
        }
        let err = |r: &TraceRow| (r.v_o - v_ref).abs();
        let overshoot = rows.iter().map(|r| err(r)).fold(0.0, f64::max);

        // last time the error is outside the band; settled from the sample after
        let last_out = rows.iter().rposition(|r| err(r) > band);
        let settling = match last_out {
            None => Some(rows[0].t - edge),
            Some(idx) if idx + 1 < rows.len() => Some(rows[idx + 1].t - edge),
            Some(_) => None,
        };

        let tail_start = rows.last().unwrap().t.min(window_end.min(t_end)) - STEADY_STATE_WINDOW;
        let tail: Vec<&&TraceRow> = rows.iter().filter(|r| r.t >= tail_start).collect();
        let steady_state_error = if tail.is_empty() {
            rows.iter().map(|r| err(r)).sum::<f64>() / rows.len() as f64
        } else {
            tail.iter().map(|r| err(r)).sum::<f64>() / tail.len() as f64
        };

        out.push(EdgeMetrics { edge_t: edge, overshoot, settling, steady_state_error });
    }
    Ok(MetricsReport { v_ref, band, edges: out })
}
