//! Sequential CUSUM change-point detection for the mean of a univariate
//! series.
//!
//! A detector first learns `m` samples of stable behaviour (baseline mean
//! and long-run variance), then compares the running monitoring mean with
//! the baseline. The statistic `l * E(m, l) / sqrt(lrv)` is checked against
//! `cv * g(m, l)` after every sample, where `g` is the weight function and
//! `cv` a Monte Carlo calibrated quantile of `sup |W(t)| / t^gamma`.

mod critical;
mod detector;
mod params;
mod variance;

pub use critical::{
    critical_value, critical_values, empirical_quantile, simulate_sup_functional,
    CriticalValue, CriticalValueCache, McSettings, Sidedness,
};
pub use detector::{cusum_statistic, Detection, DetectorState, Outcome, Phase};
pub use params::{weight, DetectorParams};
pub use variance::{default_bandwidth, long_run_variance};
