use serde::{Deserialize, Serialize};

use crate::cpd::{Detection, DetectorState, Outcome, Phase};
use crate::error::{Error, Result};
use crate::sim::{MetricSeries, MetricWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralMetric {
    CtrlOverhead,
    DeliveryRate,
}

impl CentralMetric {
    pub fn name(self) -> &'static str {
        match self {
            CentralMetric::CtrlOverhead => "ctrl_overhead",
            CentralMetric::DeliveryRate => "delivery_rate",
        }
    }

    pub fn sample(self, w: &MetricWindow) -> f64 {
        match self {
            CentralMetric::CtrlOverhead => w.network_ctrl_overhead as f64,
            CentralMetric::DeliveryRate => w.network_delivery_rate,
        }
    }

    pub fn series(self, s: &MetricSeries) -> Vec<f64> {
        s.windows.iter().map(|w| self.sample(w)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "FDFF")]
    Fdff,
    #[serde(rename = "FNI")]
    Fni,
    NoAttack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackLabel {
    pub label: Label,
    pub trigger_window: Option<usize>,
    pub triggered_metric: Option<CentralMetric>,
}

impl AttackLabel {
    pub fn none() -> Self {
        Self {
            label: Label::NoAttack,
            trigger_window: None,
            triggered_metric: None,
        }
    }

    fn from_trigger(metric: CentralMetric, window: usize) -> Self {
        let label = match metric {
            CentralMetric::CtrlOverhead => Label::Fdff,
            CentralMetric::DeliveryRate => Label::Fni,
        };
        Self {
            label,
            trigger_window: Some(window),
            triggered_metric: Some(metric),
        }
    }
}

/// Two detectors over network-wide metrics; the first to fire names the attack.
#[derive(Debug, Clone)]
pub struct CentralizedDetector {
    pub overhead: DetectorState,
    pub delivery: DetectorState,
    label: Option<AttackLabel>,
    starts: (usize, usize),
    overhead_hit: Option<Detection>,
    delivery_hit: Option<Detection>,
}

impl CentralizedDetector {
    pub fn new(overhead: DetectorState, delivery: DetectorState) -> Self {
        Self {
            overhead,
            delivery,
            label: None,
            starts: (0, 0),
            overhead_hit: None,
            delivery_hit: None,
        }
    }

    /// Align both detectors so monitoring begins at window `onset`: each one
    /// ignores windows before `onset - m` for its own `m`.
    pub fn monitoring_from(mut self, onset: usize) -> Result<Self> {
        let (mo, md) = (self.overhead.params().m, self.delivery.params().m);
        if mo > onset || md > onset {
            return Err(Error::param(
                "onset",
                format!("learning windows ({mo}, {md}) must fit before window {onset}"),
            ));
        }
        self.starts = (onset - mo, onset - md);
        Ok(self)
    }

    pub fn label(&self) -> Option<AttackLabel> {
        self.label
    }

    /// The detection that produced the label, per metric.
    pub fn hits(&self) -> (Option<Detection>, Option<Detection>) {
        (self.overhead_hit, self.delivery_hit)
    }
}

/// Feed one window to both detectors. Returns the label on the first trigger
/// and nothing afterwards. Same-window triggers classify as FDFF.
pub fn centralized_step(
    det: &mut CentralizedDetector,
    window: &MetricWindow,
) -> Result<Option<AttackLabel>> {
    if det.label.is_some() {
        return Ok(None);
    }
    let o = if window.index >= det.starts.0 {
        det.overhead.ingest(CentralMetric::CtrlOverhead.sample(window))?
    } else {
        Outcome::Learning
    };
    let d = if window.index >= det.starts.1 {
        det.delivery.ingest(CentralMetric::DeliveryRate.sample(window))?
    } else {
        Outcome::Learning
    };
    if let Outcome::ChangeAt(hit) = o {
        det.overhead_hit = Some(hit);
    }
    if let Outcome::ChangeAt(hit) = d {
        det.delivery_hit = Some(hit);
    }
    let metric = match (o, d) {
        (Outcome::ChangeAt(_), _) => CentralMetric::CtrlOverhead,
        (_, Outcome::ChangeAt(_)) => CentralMetric::DeliveryRate,
        _ => return Ok(None),
    };
    let label = AttackLabel::from_trigger(metric, window.index);
    det.label = Some(label);
    Ok(Some(label))
}

/// Drive a centralized detector over `series[start..]`.
pub fn classify_series(
    det: &mut CentralizedDetector,
    series: &MetricSeries,
    start: usize,
) -> Result<AttackLabel> {
    for w in series.windows.iter().skip(start) {
        if let Some(label) = centralized_step(det, w)? {
            return Ok(label);
        }
    }
    Ok(AttackLabel::none())
}

/// Outcome of one detector run over a single series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleRun {
    pub detection: Option<Detection>,
    /// Series index of the stopping sample.
    pub window: Option<usize>,
    pub degenerate: bool,
}

impl SingleRun {
    pub fn detected(&self) -> bool {
        self.detection.is_some()
    }

    pub fn stop_l(&self) -> Option<usize> {
        self.detection.map(|d| d.stop_l)
    }
}

/// Run one detector over `samples[start..]` until it fires or the data end.
/// A zero-variance learning window counts as "no detection".
pub fn run_detector(mut det: DetectorState, samples: &[f64], start: usize) -> Result<SingleRun> {
    for (i, &x) in samples.iter().enumerate().skip(start) {
        match det.ingest(x) {
            Ok(Outcome::ChangeAt(hit)) => {
                return Ok(SingleRun {
                    detection: Some(hit),
                    window: Some(i),
                    degenerate: false,
                })
            }
            Ok(_) => {}
            Err(crate::Error::DegenerateVariance) => {
                return Ok(SingleRun {
                    detection: None,
                    window: None,
                    degenerate: true,
                })
            }
            Err(e) => return Err(e),
        }
    }
    debug_assert!(det.phase() != Phase::Stopped);
    Ok(SingleRun {
        detection: None,
        window: None,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpd::{CriticalValue, DetectorParams};
    use crate::sim::NodeMetrics;

    fn state(m: usize, horizon: usize) -> DetectorState {
        let p = DetectorParams::new(m, 0.0, 0.95, horizon).unwrap();
        let cv = CriticalValue {
            gamma: 0.0,
            confidence: 0.95,
            value: 2.2414,
            n_paths: 1,
            n_grid: 1,
            seed: 0,
        };
        DetectorState::new(p, cv).unwrap()
    }

    fn window(index: usize, overhead: u64, rate: f64) -> MetricWindow {
        MetricWindow {
            index,
            network_delivery_rate: rate,
            network_ctrl_overhead: overhead,
            data_sent: 0,
            data_delivered: 0,
            per_node: vec![NodeMetrics::default()],
        }
    }

    fn noisy(i: usize) -> (u64, f64) {
        // deterministic wiggle so the learning variance is positive
        let k = (i * 7919) % 5;
        (10 + k as u64, 0.95 + 0.002 * k as f64)
    }

    #[test]
    fn overhead_jump_is_fdff() {
        let mut det = CentralizedDetector::new(state(20, 30), state(20, 30));
        let mut label = None;
        for i in 0..50 {
            let (o, r) = noisy(i);
            let o = if i >= 20 { o + 40 } else { o };
            if let Some(l) = centralized_step(&mut det, &window(i, o, r)).unwrap() {
                label = Some(l);
                break;
            }
        }
        let l = label.unwrap();
        assert_eq!(l.label, Label::Fdff);
        assert_eq!(l.triggered_metric, Some(CentralMetric::CtrlOverhead));
        assert!(det.hits().0.is_some());
        // nothing after the label
        assert_eq!(centralized_step(&mut det, &window(60, 0, 0.0)).unwrap(), None);
    }

    #[test]
    fn delivery_drop_is_fni() {
        let mut det = CentralizedDetector::new(state(20, 30), state(20, 30));
        let series = MetricSeries {
            window_s: 120.0,
            windows: (0..50)
                .map(|i| {
                    let (o, r) = noisy(i);
                    window(i, o, if i >= 20 { r - 0.3 } else { r })
                })
                .collect(),
        };
        let l = classify_series(&mut det, &series, 0).unwrap();
        assert_eq!(l.label, Label::Fni);
        assert!(l.trigger_window.unwrap() >= 20);
    }

    #[test]
    fn simultaneous_trigger_prefers_fdff() {
        let mut det = CentralizedDetector::new(state(20, 30), state(20, 30));
        let mut last = None;
        for i in 0..21 {
            let (o, r) = noisy(i);
            let (o, r) = if i == 20 { (o + 10_000, r - 50.0) } else { (o, r) };
            last = centralized_step(&mut det, &window(i, o, r)).unwrap();
        }
        let (a, b) = det.hits();
        assert!(a.is_some() && b.is_some());
        assert_eq!(last.unwrap().label, Label::Fdff);
    }

    #[test]
    fn constant_metrics_never_label() {
        let mut det = CentralizedDetector::new(state(20, 30), state(20, 30));
        let series = MetricSeries {
            window_s: 120.0,
            windows: (0..80).map(|i| {
                let (o, r) = noisy(i % 20);
                window(i, o, r)
            }).collect(),
        };
        assert_eq!(classify_series(&mut det, &series, 0).unwrap(), AttackLabel::none());
    }

    #[test]
    fn degenerate_learning_is_reported() {
        let det = state(10, 10);
        let run = run_detector(det, &[1.0; 40], 0).unwrap();
        assert!(run.degenerate && !run.detected());
    }

    #[test]
    fn different_learning_windows_share_onset() {
        let det = CentralizedDetector::new(state(10, 30), state(20, 30))
            .monitoring_from(25)
            .unwrap();
        let series = MetricSeries {
            window_s: 120.0,
            windows: (0..60)
                .map(|i| {
                    let (o, r) = noisy(i);
                    window(i, o, r)
                })
                .collect(),
        };
        let mut det = det;
        classify_series(&mut det, &series, 0).unwrap();
        // overhead learned on 15..25, delivery on 5..25
        assert_eq!(det.overhead.learned_count(), 10);
        assert_eq!(det.delivery.learned_count(), 20);
        assert_eq!(det.overhead.periods_expired() + det.delivery.periods_expired(), 2);

        let too_long = CentralizedDetector::new(state(30, 30), state(10, 30));
        assert!(too_long.monitoring_from(25).is_err());
    }
}
