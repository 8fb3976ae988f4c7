use serde::{Deserialize, Serialize};

use crate::cpd::critical::CriticalValue;
use crate::cpd::params::{weight, DetectorParams};
use crate::cpd::variance::long_run_variance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Learning,
    Monitoring,
    Stopped,
    /// The learning window had zero long-run variance.
    Degenerate,
}

/// A change point declared by the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Stopping time within the current monitoring period (1-based).
    pub stop_l: usize,
    /// Estimated change point, `m + stop_l`.
    pub cp_estimate: usize,
    /// `|TS|` at the stopping sample.
    pub statistic: f64,
    /// Threshold `cv * g(m, stop_l)`.
    pub threshold: f64,
    /// Monitoring mean minus baseline mean at the stop.
    pub shift_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Learning,
    NoChange(usize),
    ChangeAt(Detection),
    HorizonExpired,
}

/// Running state of one sequential CUSUM test.
#[derive(Debug, Clone)]
pub struct DetectorState {
    params: DetectorParams,
    critical: CriticalValue,
    phase: Phase,
    learning: Vec<f64>,
    baseline_mean: f64,
    lrv: f64,
    monitor: Vec<f64>,
    monitor_sum: f64,
    periods_expired: usize,
}

impl DetectorState {
    pub fn new(params: DetectorParams, critical: CriticalValue) -> Result<Self> {
        params.validate()?;
        if critical.gamma != params.gamma || critical.confidence != params.confidence {
            return Err(Error::param(
                "critical",
                format!(
                    "calibrated for gamma={} confidence={}, detector uses gamma={} confidence={}",
                    critical.gamma, critical.confidence, params.gamma, params.confidence
                ),
            ));
        }
        if !(critical.value > 0.0) {
            return Err(Error::param("critical", "value must be positive"));
        }
        Ok(Self {
            params,
            critical,
            phase: Phase::Learning,
            learning: Vec::with_capacity(params.m),
            baseline_mean: 0.0,
            lrv: 0.0,
            monitor: Vec::with_capacity(params.horizon),
            monitor_sum: 0.0,
            periods_expired: 0,
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn critical(&self) -> &CriticalValue {
        &self.critical
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn learned_count(&self) -> usize {
        self.learning.len()
    }

    pub fn baseline_mean(&self) -> f64 {
        self.baseline_mean
    }

    pub fn lrv(&self) -> f64 {
        self.lrv
    }

    /// Current `l`: samples seen in the running monitoring period.
    pub fn monitor_count(&self) -> usize {
        self.monitor.len()
    }

    pub fn monitor_sum(&self) -> f64 {
        self.monitor_sum
    }

    /// Monitoring periods that ended without a detection.
    pub fn periods_expired(&self) -> usize {
        self.periods_expired
    }

    /// Threshold `F(m, l) = cv * g(m, l)`.
    pub fn threshold(&self, l: usize) -> Result<f64> {
        Ok(self.critical.value * weight(self.params.m, l, self.params.gamma)?)
    }

    /// Feeds one sample through the stopping rule.
    pub fn ingest(&mut self, x: f64) -> Result<Outcome> {
        match self.phase {
            Phase::Stopped => return Err(Error::DetectorStopped),
            Phase::Degenerate => return Err(Error::DegenerateVariance),
            Phase::Learning => {
                self.learning.push(x);
                if self.learning.len() == self.params.m {
                    self.baseline_mean =
                        self.learning.iter().sum::<f64>() / self.params.m as f64;
                    self.lrv = long_run_variance(&self.learning, self.params.lrv_bandwidth)?;
                    if self.lrv <= 0.0 {
                        self.phase = Phase::Degenerate;
                        return Err(Error::DegenerateVariance);
                    }
                    self.phase = Phase::Monitoring;
                }
                return Ok(Outcome::Learning);
            }
            Phase::Monitoring => {}
        }

        self.monitor.push(x);
        self.monitor_sum += x;
        let l = self.monitor.len();
        let (shift, ts) = cusum_statistic(self, l)?;
        let threshold = self.threshold(l)?;
        if ts.abs() >= threshold {
            self.phase = Phase::Stopped;
            return Ok(Outcome::ChangeAt(Detection {
                stop_l: l,
                cp_estimate: self.params.m + l,
                statistic: ts.abs(),
                threshold,
                shift_estimate: shift,
            }));
        }
        if l >= self.params.horizon {
            self.monitor.clear();
            self.monitor_sum = 0.0;
            self.periods_expired += 1;
            return Ok(Outcome::HorizonExpired);
        }
        Ok(Outcome::NoChange(l))
    }
}

/// CUSUM quantities for the first `l` monitoring samples of `state`:
/// `E(m, l)` (monitoring mean minus baseline mean) and
/// `TS = l * E / sqrt(lrv)`. The stopping rule compares `|TS|`.
pub fn cusum_statistic(state: &DetectorState, l: usize) -> Result<(f64, f64)> {
    match state.phase {
        Phase::Monitoring | Phase::Stopped => {}
        Phase::Degenerate => return Err(Error::DegenerateVariance),
        Phase::Learning => {
            return Err(Error::param("state", "detector is still learning"));
        }
    }
    if l == 0 || l > state.monitor.len() {
        return Err(Error::param(
            "l",
            format!("must lie in 1..={}, got {l}", state.monitor.len()),
        ));
    }
    if state.lrv <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let sum = if l == state.monitor.len() {
        state.monitor_sum
    } else {
        state.monitor[..l].iter().sum()
    };
    let shift = sum / l as f64 - state.baseline_mean;
    Ok((shift, l as f64 * shift / state.lrv.sqrt()))
}

#[cfg(test)]
impl DetectorState {
    /// Monitoring state with a fixed baseline, for statistic checks.
    pub(crate) fn with_baseline(
        params: DetectorParams,
        critical: CriticalValue,
        baseline_mean: f64,
        lrv: f64,
        monitoring: &[f64],
    ) -> Self {
        let mut s = Self::new(params, critical).unwrap();
        s.learning = vec![baseline_mean; params.m];
        s.baseline_mean = baseline_mean;
        s.lrv = lrv;
        s.phase = Phase::Monitoring;
        s.monitor = monitoring.to_vec();
        s.monitor_sum = monitoring.iter().sum();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cv(gamma: f64, confidence: f64, value: f64) -> CriticalValue {
        CriticalValue {
            gamma,
            confidence,
            value,
            n_paths: 0,
            n_grid: 0,
            seed: 0,
        }
    }

    fn detector(m: usize, horizon: usize) -> DetectorState {
        let params = DetectorParams::new(m, 0.0, 0.95, horizon).unwrap();
        DetectorState::new(params, cv(0.0, 0.95, 2.2414)).unwrap()
    }

    #[test]
    fn statistic_examples() {
        let params = DetectorParams::new(10, 0.0, 0.95, 50).unwrap();
        let c = cv(0.0, 0.95, 2.0);

        let s = DetectorState::with_baseline(params, c, 0.0, 1.0, &[0.0; 4]);
        assert_eq!(cusum_statistic(&s, 4).unwrap(), (0.0, 0.0));

        let s = DetectorState::with_baseline(params, c, 0.0, 1.0, &[2.0; 5]);
        assert_eq!(cusum_statistic(&s, 5).unwrap(), (2.0, 10.0));

        // 3 * 1.5 / sqrt(4) = 2.25
        let s = DetectorState::with_baseline(params, c, 1.5, 4.0, &[2.0, 3.0, 4.0]);
        let (e, ts) = cusum_statistic(&s, 3).unwrap();
        assert!((e - 1.5).abs() < 1e-12 && (ts - 2.25).abs() < 1e-12);

        // prefix of the monitoring window
        let (e, ts) = cusum_statistic(&s, 1).unwrap();
        assert!((e - 0.5).abs() < 1e-12 && (ts - 0.25).abs() < 1e-12);
        assert!(cusum_statistic(&s, 4).is_err());
        assert!(cusum_statistic(&s, 0).is_err());

        let s = DetectorState::with_baseline(params, c, 1.0, 0.0, &[1.0]);
        assert!(matches!(
            cusum_statistic(&s, 1),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn rejects_mismatched_critical_value() {
        let params = DetectorParams::new(10, 0.25, 0.95, 5).unwrap();
        assert!(DetectorState::new(params, cv(0.0, 0.95, 2.0)).is_err());
        assert!(DetectorState::new(params, cv(0.25, 0.99, 2.0)).is_err());
        assert!(DetectorState::new(params, cv(0.25, 0.95, 0.0)).is_err());
    }

    #[test]
    fn zero_statistic_runs_to_horizon() {
        let (m, horizon) = (20, 15);
        let mut d = detector(m, horizon);
        // learning window with mean zero, then exactly the baseline
        for i in 0..m {
            let x = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(d.ingest(x).unwrap(), Outcome::Learning);
        }
        assert_eq!(d.phase(), Phase::Monitoring);
        for l in 1..horizon {
            assert_eq!(d.ingest(0.0).unwrap(), Outcome::NoChange(l));
        }
        assert_eq!(d.ingest(0.0).unwrap(), Outcome::HorizonExpired);
        // new monitoring period, baseline retained
        assert_eq!(d.phase(), Phase::Monitoring);
        assert_eq!(d.monitor_count(), 0);
        assert_eq!(d.learned_count(), m);
        assert_eq!(d.ingest(0.0).unwrap(), Outcome::NoChange(1));
        assert_eq!(d.periods_expired(), 1);
    }

    #[test]
    fn constant_learning_window_is_degenerate() {
        let mut d = detector(5, 10);
        for _ in 0..4 {
            d.ingest(3.0).unwrap();
        }
        assert!(matches!(d.ingest(3.0), Err(Error::DegenerateVariance)));
        assert_eq!(d.phase(), Phase::Degenerate);
        assert!(matches!(d.ingest(9.0), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn stopped_detector_rejects_samples() {
        let mut d = detector(10, 50);
        for i in 0..10 {
            d.ingest(i as f64 % 3.0).unwrap();
        }
        let mut out = d.ingest(1e6).unwrap();
        while !matches!(out, Outcome::ChangeAt(_)) {
            out = d.ingest(1e6).unwrap();
        }
        assert_eq!(d.phase(), Phase::Stopped);
        assert!(matches!(d.ingest(0.0), Err(Error::DetectorStopped)));
    }

    #[test]
    fn detects_large_shift() {
        // regression value recorded from this seed
        let m = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut d = detector(m, 100);
        let mut detection = None;
        for i in 0.. {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = if i < m { z } else { z + 5.0 };
            if let Outcome::ChangeAt(det) = d.ingest(x).unwrap() {
                detection = Some(det);
                break;
            }
            assert!(i < m + 100, "no detection");
        }
        let det = detection.unwrap();
        assert_eq!(det.cp_estimate, m + det.stop_l);
        assert!(det.statistic >= det.threshold);
        // gamma = 0 needs l * 5 >= 2.24 * sqrt(200) * (1 + l/200), i.e. l >= 7
        assert_eq!(det.stop_l, 9);
    }
}
