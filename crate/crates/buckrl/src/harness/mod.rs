//! Experiment front end: configuration, scenarios, metrics, traces, plots,
//! and run orchestration.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;
pub mod scenario;
pub mod trace;
