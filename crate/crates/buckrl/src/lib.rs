//! Training and evaluation workbench for a deep-Q-network voltage
//! controller on a buck DC-DC converter feeding constant power loads,
//! benchmarked against a double-loop PI baseline.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod net;
pub mod pi;
pub mod sim;

pub use error::{Error, Result};
