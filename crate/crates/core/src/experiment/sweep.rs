use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpd::CriticalValueCache;
use crate::detection::{sweep_parameters, CentralMetric, SweepResult, Weights};
use crate::error::{Error, Result};
use crate::experiment::config::{DetectorSpec, ScenarioConfig};
use crate::experiment::run::{with_jobs, CriticalTable};
use crate::sim::{run, MetricSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSweep {
    pub metric: CentralMetric,
    pub result: SweepResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub scenario: String,
    pub digest: String,
    pub training_seeds: Vec<u64>,
    pub metrics: Vec<MetricSweep>,
}

/// Simulates the training seeds of `cfg`.
pub fn training_series(cfg: &ScenarioConfig, jobs: usize) -> Result<Vec<MetricSeries>> {
    let topo = cfg.sim.build_topology()?;
    with_jobs(jobs, || {
        cfg.sweep
            .training_seeds
            .par_iter()
            .map(|&s| run(&cfg.sim_for(&topo, s)?, s).map(|o| o.series))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Grid search of `(m, gamma)` for both network metrics of the scenario.
pub fn sweep(cfg: &ScenarioConfig, cache: &mut CriticalValueCache, jobs: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.sweep.training_seeds.is_empty() {
        return Err(Error::config("sweep.training_seeds", "need at least one training seed"));
    }
    let table = CriticalTable::prepare(cache, &cfg.critical_pairs(true), &cfg.calibration)?;
    let series = training_series(cfg, jobs)?;
    sweep_series(cfg, &table, &series)
}

pub fn sweep_series(cfg: &ScenarioConfig, table: &CriticalTable, series: &[MetricSeries]) -> Result<SweepOutput> {
    let d = &cfg.detection;
    let grid = cfg.sweep.grid();
    let mut metrics = Vec::new();
    for metric in [CentralMetric::CtrlOverhead, CentralMetric::DeliveryRate] {
        let data: Vec<Vec<f64>> = series.iter().map(|s| metric.series(s)).collect();
        let result = sweep_parameters(
            &data,
            d.attack_start_sample,
            d.horizon,
            &grid,
            &cfg.weights,
            |g, c| table.get(g, c),
        )?;
        metrics.push(MetricSweep { metric, result });
    }
    Ok(SweepOutput {
        scenario: cfg.name.clone(),
        digest: cfg.digest(),
        training_seeds: cfg.sweep.training_seeds.clone(),
        metrics,
    })
}

impl SweepOutput {
    pub fn metric(&self, metric: CentralMetric) -> &SweepResult {
        &self
            .metrics
            .iter()
            .find(|m| m.metric == metric)
            .expect("both metrics are swept")
            .result
    }

    /// Best detector for `metric` under weights `w` at `confidence`.
    pub fn best_spec(&self, metric: CentralMetric, w: Weights, confidence: f64) -> Option<DetectorSpec> {
        self.metric(metric).best_for(w, confidence).map(|b| DetectorSpec {
            m: b.m,
            gamma: b.gamma,
            confidence,
        })
    }

    /// Every evaluated cell: one row per metric, grid point and weight pair.
    pub fn cells_csv(&self) -> String {
        let mut s = String::from("metric,m,gamma,confidence,a,b,dr,one_minus_s,p_ds,degenerate_runs\n");
        for ms in &self.metrics {
            for c in &ms.result.cells {
                for w in &c.report.p_ds {
                    writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{}",
                        ms.metric.name(),
                        c.m,
                        c.gamma,
                        c.confidence,
                        w.a,
                        w.b,
                        c.report.dr,
                        c.report.one_minus_s,
                        w.p_ds,
                        c.degenerate_runs
                    )
                    .unwrap();
                }
            }
        }
        s
    }

    /// Best-gamma table: rows are weight pairs, columns confidences; each
    /// cell is `gamma` (with the winning m in a parallel table).
    pub fn best_csv(&self) -> String {
        let mut s = String::from("metric,a,b");
        let confs: Vec<f64> = self
            .metrics
            .first()
            .map(|m| {
                let mut c: Vec<f64> = m.result.best.iter().map(|b| b.confidence).collect();
                c.sort_by(f64::total_cmp);
                c.dedup();
                c
            })
            .unwrap_or_default();
        for c in &confs {
            write!(s, ",gamma@{c},m@{c}").unwrap();
        }
        s.push('\n');
        for ms in &self.metrics {
            let mut pairs: Vec<(f64, f64)> = ms.result.best.iter().map(|b| (b.a, b.b)).collect();
            pairs.dedup();
            for (a, b) in pairs {
                write!(s, "{},{a},{b}", ms.metric.name()).unwrap();
                for &c in &confs {
                    match ms.result.best_for(Weights { a, b }, c) {
                        Some(best) => write!(s, ",{},{}", best.gamma, best.m).unwrap(),
                        None => s.push_str(",,"),
                    }
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("sweep.json", serde_json::to_string_pretty(self)?),
            ("cells.csv", self.cells_csv()),
            ("best.csv", self.best_csv()),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
