use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cpd::{CriticalValue, DetectorParams, DetectorState};
use crate::detection::centralized::run_detector;
use crate::error::{Error, Result};
use crate::sim::NodeId;

/// Speed/rate weighting `(A, B)` of the detection score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub a: f64,
    pub b: f64,
}

impl Weights {
    pub const PAPER_SET: [Weights; 5] = [
        Weights { a: 1.0, b: 0.0 },
        Weights { a: 0.8, b: 0.2 },
        Weights { a: 0.5, b: 0.5 },
        Weights { a: 0.2, b: 0.8 },
        Weights { a: 0.0, b: 1.0 },
    ];

    pub fn new(a: f64, b: f64) -> Result<Self> {
        let w = Self { a, b };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.a)
            && (0.0..=1.0).contains(&self.b)
            && (self.a + self.b - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::param("weights", format!("need A + B = 1 in [0, 1], got ({}, {})", self.a, self.b)))
        }
    }

    pub fn p_ds(&self, s: f64, dr: f64) -> f64 {
        self.a * (1.0 - s) + self.b * dr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScore {
    pub a: f64,
    pub b: f64,
    pub p_ds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub runs: usize,
    pub detected: usize,
    pub dr: f64,
    /// Median stopping time over detected runs, in samples.
    pub dtm: Option<f64>,
    pub s: f64,
    pub one_minus_s: f64,
    /// No run detected; `s` was set to 1.
    pub s_undefined: bool,
    pub p_ds: Vec<WeightScore>,
    pub per_node_dp: BTreeMap<NodeId, f64>,
    pub classification_prob: Option<f64>,
}

impl PerformanceReport {
    pub fn p_ds_for(&self, w: Weights) -> Option<f64> {
        self.p_ds
            .iter()
            .find(|s| s.a == w.a && s.b == w.b)
            .map(|s| s.p_ds)
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Detection rate, median delay and weighted scores over a batch of runs.
pub fn score(runs: &[(bool, Option<usize>)], horizon: usize, weights: &[Weights]) -> Result<PerformanceReport> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    for w in weights {
        w.validate()?;
    }
    let detected: Vec<f64> = runs
        .iter()
        .filter(|(d, _)| *d)
        .map(|(_, l)| l.unwrap_or(0) as f64)
        .collect();
    let dr = if runs.is_empty() {
        0.0
    } else {
        detected.len() as f64 / runs.len() as f64
    };
    let mut delays = detected.clone();
    let dtm = median(&mut delays);
    let s = dtm.map_or(1.0, |d| (d / horizon as f64).min(1.0));
    Ok(PerformanceReport {
        runs: runs.len(),
        detected: detected.len(),
        dr,
        dtm,
        s,
        one_minus_s: 1.0 - s,
        s_undefined: dtm.is_none(),
        p_ds: weights
            .iter()
            .map(|w| WeightScore {
                a: w.a,
                b: w.b,
                p_ds: w.p_ds(s, dr),
            })
            .collect(),
        ..PerformanceReport::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub m: Vec<usize>,
    pub gamma: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            m: vec![100, 150, 200],
            gamma: vec![0.0, 0.15, 0.25, 0.35, 0.45, 0.49],
            confidence: vec![0.90, 0.95, 0.99],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: usize,
    pub gamma: f64,
    pub confidence: f64,
    pub degenerate_runs: usize,
    pub report: PerformanceReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub a: f64,
    pub b: f64,
    pub confidence: f64,
    pub m: usize,
    pub gamma: f64,
    pub p_ds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub skipped: Vec<String>,
    pub best: Vec<BestCell>,
}

impl SweepResult {
    pub fn best_for(&self, w: Weights, confidence: f64) -> Option<BestCell> {
        self.best
            .iter()
            .copied()
            .find(|c| c.a == w.a && c.b == w.b && c.confidence == confidence)
    }
}

/// Exhaustive grid search of `(m, gamma)` per confidence and weight pair.
///
/// Each series is one run of a single metric with the change at `onset`;
/// the detector learns on `[onset - m, onset)` and monitors for `horizon`
/// samples. Ties go to the smaller gamma, then the smaller m.
pub fn sweep_parameters(
    dataset: &[Vec<f64>],
    onset: usize,
    horizon: usize,
    grid: &SweepGrid,
    weights: &[Weights],
    mut critical: impl FnMut(f64, f64) -> Result<CriticalValue>,
) -> Result<SweepResult> {
    let mut out = SweepResult::default();
    for &confidence in &grid.confidence {
        for &gamma in &grid.gamma {
            let cv = critical(gamma, confidence)?;
            for &m in &grid.m {
                if m > onset {
                    out.skipped.push(format!("m={m}: longer than the {onset}-sample pre-change stretch"));
                    continue;
                }
                if let Some(short) = dataset.iter().position(|s| s.len() < onset + horizon) {
                    out.skipped.push(format!("m={m}: series {short} shorter than onset + horizon"));
                    continue;
                }
                let params = DetectorParams::new(m, gamma, confidence, horizon)?;
                let mut runs = Vec::with_capacity(dataset.len());
                let mut degenerate_runs = 0;
                for s in dataset {
                    let det = DetectorState::new(params, cv)?;
                    let r = run_detector(det, &s[..onset + horizon], onset - m)?;
                    degenerate_runs += usize::from(r.degenerate);
                    runs.push((r.detected(), r.stop_l()));
                }
                out.cells.push(SweepCell {
                    m,
                    gamma,
                    confidence,
                    degenerate_runs,
                    report: score(&runs, horizon, weights)?,
                });
            }
        }
    }
    out.skipped.dedup();
    for w in weights {
        for &confidence in &grid.confidence {
            let mut best: Option<BestCell> = None;
            for c in out.cells.iter().filter(|c| c.confidence == confidence) {
                let p = c.report.p_ds_for(*w).unwrap_or(0.0);
                let better = match best {
                    None => true,
                    Some(b) => {
                        p > b.p_ds
                            || (p == b.p_ds && (c.gamma, c.m) < (b.gamma, b.m))
                    }
                };
                if better {
                    best = Some(BestCell {
                        a: w.a,
                        b: w.b,
                        confidence,
                        m: c.m,
                        gamma: c.gamma,
                        p_ds: p,
                    });
                }
            }
            out.best.extend(best);
        }
    }
    Ok(out)
}
