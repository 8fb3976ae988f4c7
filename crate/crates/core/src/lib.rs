//! Change-point based intrusion detection for software-defined wireless
//! sensor networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`cpd`]: the sequential CUSUM detector with Monte Carlo calibrated
//!   critical values.
//! * [`sim`]: a deterministic discrete-event model of an SDN-managed sensor
//!   grid under flooding (FDFF) and neighbor-report tampering (FNI) attacks.
//! * [`detection`]: centralized and per-node detection pipelines plus
//!   performance scoring and parameter sweeps.
//! * [`attacker`]: attacker identification from distributed alarms.
//! * [`experiment`]: scenario configuration, seeded batches and exports.

pub mod attacker;
pub mod cpd;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod sim;

pub use error::{Error, Result};
