use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacker::{
    declarations_csv, identify_v1, identify_v2, region_localize, AlarmSet, ExchangeView,
    RegionRanking,
};
use crate::cpd::{CriticalValue, CriticalValueCache, DetectorState, McSettings};
use crate::detection::{
    aggregate_groups, alarms_csv, classify_series, run_detector, run_distributed, AlarmEvent,
    AttackLabel, CentralizedDetector, DistributedDeployment, SingleRun,
};
use crate::error::{Error, Result};
use crate::experiment::config::{DetectorSpec, ScenarioConfig};
use crate::sim::{exchange_log, run, AttackKind, MetricSeries, NodeId, SimOutput, Topology};

/// Critical values resolved for one scenario, keyed by `(gamma, confidence)`.
#[derive(Debug, Clone, Default)]
pub struct CriticalTable {
    values: BTreeMap<(u64, u64), CriticalValue>,
}

impl CriticalTable {
    /// Pulls every pair from `cache`, simulating (and persisting) what is missing.
    pub fn prepare(
        cache: &mut CriticalValueCache,
        pairs: &[(f64, f64)],
        settings: &McSettings,
    ) -> Result<Self> {
        let mut by_gamma: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
        for &(g, c) in pairs {
            by_gamma.entry(g.to_bits()).or_insert((g, Vec::new())).1.push(c);
        }
        let mut values = BTreeMap::new();
        for (g, cs) in by_gamma.values() {
            cache.ensure(&[*g], cs, settings)?;
            for &c in cs {
                let cv = cache.get(*g, c, settings).expect("ensured");
                values.insert((g.to_bits(), c.to_bits()), cv);
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, gamma: f64, confidence: f64) -> Result<CriticalValue> {
        self.values
            .get(&(gamma.to_bits(), confidence.to_bits()))
            .copied()
            .ok_or_else(|| {
                Error::param(
                    "critical",
                    format!("no critical value prepared for gamma={gamma} confidence={confidence}"),
                )
            })
    }

    pub fn detector(&self, spec: &DetectorSpec, horizon: usize) -> Result<DetectorState> {
        DetectorState::new(spec.params(horizon)?, self.get(spec.gamma, spec.confidence)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPaths {
    pub metrics: PathBuf,
    pub alarms: PathBuf,
    pub declarations: PathBuf,
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedOutcome {
    pub label: AttackLabel,
    /// Each detector run on its own, ignoring the other.
    pub overhead: SingleRun,
    pub delivery: SingleRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub group: usize,
    pub members: Vec<NodeId>,
    pub detected: bool,
    pub stop_l: Option<usize>,
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedOutcome {
    pub alarms: Vec<AlarmEvent>,
    /// Nodes whose learning window had zero variance.
    pub excluded: Vec<NodeId>,
    pub groups: Vec<GroupOutcome>,
    pub region: RegionRanking,
    pub v1_declared: Vec<NodeId>,
    pub v2_declared: Vec<NodeId>,
    pub v2_abstained: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub digest: String,
    pub seed: u64,
    pub attack: AttackKind,
    pub attackers: Vec<NodeId>,
    pub node_count: usize,
    pub side: usize,
    pub accounting_reconciles: bool,
    pub paths: RunPaths,
    pub centralized: Option<CentralizedOutcome>,
    pub distributed: Option<DistributedOutcome>,
}

/// A scenario ready to run: validated config, topology and critical values.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub digest: String,
    pub topology: Topology,
    pub critical: CriticalTable,
}

impl Prepared {
    pub fn new(config: ScenarioConfig, cache: &mut CriticalValueCache) -> Result<Self> {
        config.validate()?;
        let critical = CriticalTable::prepare(
            cache,
            &config.critical_pairs(false),
            &config.calibration,
        )?;
        Ok(Self {
            digest: config.digest(),
            topology: config.sim.build_topology()?,
            config,
            critical,
        })
    }

    /// Directory holding every artifact of this scenario under `out`.
    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(&self.digest)
    }

    pub fn simulate(&self, seed: u64) -> Result<SimOutput> {
        run(&self.config.sim_for(&self.topology, seed)?, seed)
    }

    /// Simulate, detect and identify for one seed, without touching disk.
    pub fn evaluate(&self, seed: u64) -> Result<(SimOutput, Evaluation)> {
        let out = self.simulate(seed)?;
        let eval = self.evaluate_output(&out)?;
        Ok((out, eval))
    }

    pub fn evaluate_output(&self, out: &SimOutput) -> Result<Evaluation> {
        let d = &self.config.detection;
        let onset = d.attack_start_sample;
        let centralized = if d.centralized.enabled {
            Some(self.centralized(&out.series)?)
        } else {
            None
        };
        let distributed = if d.distributed.enabled {
            let spec = d.distributed.detector;
            let start = onset - spec.m;
            let make = |_| self.critical.detector(&spec, d.horizon);
            let groups = self
                .topology
                .block_groups(d.distributed.groups_per_axis(self.topology.side))?;
            let mut dep = DistributedDeployment::new(d.distributed.metric, 0..self.topology.len() as NodeId, make)?
                .with_groups(groups.clone())?;
            let alarms = run_distributed(&mut dep, &out.series, start)?;
            let gr = aggregate_groups(&dep, &out.series, start, |_| make(0))?;
            let group_outcomes: Vec<GroupOutcome> = gr
                .runs
                .iter()
                .enumerate()
                .map(|(i, r)| GroupOutcome {
                    group: i,
                    members: groups[i].clone(),
                    detected: r.detected(),
                    stop_l: r.stop_l(),
                    window: r.window,
                })
                .collect();
            let stops: Vec<(usize, usize)> = group_outcomes
                .iter()
                .filter_map(|g| g.stop_l.map(|l| (g.group, l)))
                .collect();
            let region = region_localize(&stops, d.horizon, self.topology.len());

            let set = AlarmSet::from_events(&alarms);
            let graph = self.topology.neighbor_sets();
            let v1 = identify_v1(&set, graph);
            let log = if d.distributed.control_only {
                exchange_log(&out.trace, self.config.sim.window_s, true)?
            } else {
                out.exchanges.clone()
            };
            let infra: BTreeSet<NodeId> = [
                self.topology.controller,
                self.topology.data_sink,
                self.topology.mgmt_sink,
            ]
            .into();
            let view = ExchangeView::from_log(&log, &set, d.distributed.exchange_depth, graph, &infra);
            let v2 = identify_v2(&set, &view, graph);
            Some((
                DistributedOutcome {
                    alarms,
                    excluded: dep.excluded().iter().copied().collect(),
                    groups: group_outcomes,
                    region,
                    v1_declared: v1.declared.iter().copied().collect(),
                    v2_declared: v2.declared.iter().copied().collect(),
                    v2_abstained: v2.abstained.clone(),
                },
                v2,
            ))
        } else {
            None
        };
        Ok(Evaluation {
            centralized,
            distributed,
        })
    }

    fn centralized(&self, series: &MetricSeries) -> Result<CentralizedOutcome> {
        let d = &self.config.detection;
        let c = &d.centralized;
        let onset = d.attack_start_sample;
        let mut det = CentralizedDetector::new(
            self.critical.detector(&c.overhead, d.horizon)?,
            self.critical.detector(&c.delivery, d.horizon)?,
        )
        .monitoring_from(onset)?;
        let label = classify_series(&mut det, series, 0)?;
        let end = (onset + d.horizon).min(series.len());
        let overhead = run_detector(
            self.critical.detector(&c.overhead, d.horizon)?,
            &series.overhead()[..end],
            onset - c.overhead.m,
        )?;
        let delivery = run_detector(
            self.critical.detector(&c.delivery, d.horizon)?,
            &series.delivery_rate()[..end],
            onset - c.delivery.m,
        )?;
        Ok(CentralizedOutcome {
            label,
            overhead,
            delivery,
        })
    }

    /// Full pipeline for one seed, writing artifacts under `out/<digest>/<seed>/`.
    pub fn run_seed(&self, seed: u64, out: &Path) -> Result<RunRecord> {
        let (sim, eval) = self.evaluate(seed)?;
        let dir = self.dir(out).join(seed.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let paths = RunPaths {
            metrics: dir.join("metrics.csv"),
            alarms: dir.join("alarms.csv"),
            declarations: dir.join("declarations.csv"),
            report: dir.join("report.json"),
        };
        let attackers: BTreeSet<NodeId> = self.config.attackers_for(&self.topology, seed)?;
        write(&paths.metrics, &sim.series.to_csv())?;
        let (alarms, declarations) = match &eval.distributed {
            Some((d, v2)) => (
                alarms_csv(&d.alarms),
                declarations_csv(self.topology.len(), v2, &attackers, self.topology.neighbor_sets()),
            ),
            None => (alarms_csv(&[]), String::from("node,declared,true_attacker,tally,degree\n")),
        };
        write(&paths.alarms, &alarms)?;
        write(&paths.declarations, &declarations)?;
        let record = RunRecord {
            scenario: self.config.name.clone(),
            digest: self.digest.clone(),
            seed,
            attack: self.config.sim.attack.kind,
            attackers: attackers.into_iter().collect(),
            node_count: self.topology.len(),
            side: self.topology.side,
            accounting_reconciles: sim.trace.accounting().reconciles(),
            paths,
            centralized: eval.centralized,
            distributed: eval.distributed.map(|(d, _)| d),
        };
        let json = serde_json::to_string_pretty(&record)?;
        write(&record.paths.report, &json)?;
        Ok(record)
    }
}

/// Detection and identification results for one simulated run.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub centralized: Option<CentralizedOutcome>,
    pub distributed: Option<(DistributedOutcome, crate::attacker::Identification)>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One failed seed of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub scenario: String,
    pub digest: String,
    pub records: Vec<RunRecord>,
    pub failures: Vec<SeedFailure>,
}

/// Runs `seeds` (or the config's own seeds when empty) on up to `jobs`
/// threads. A failing seed is recorded and does not stop the others.
pub fn run_experiment(prepared: &Prepared, seeds: &[u64], out: &Path, jobs: usize) -> Result<Batch> {
    let seeds = if seeds.is_empty() {
        prepared.config.seeds.clone()
    } else {
        seeds.to_vec()
    };
    let dir = prepared.dir(out);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("scenario.toml"), &prepared.config.to_toml())?;
    let results: Vec<(u64, Result<RunRecord>)> = with_jobs(jobs, || {
        seeds
            .par_iter()
            .map(|&s| (s, prepared.run_seed(s, out)))
            .collect()
    })?;
    let mut batch = Batch {
        scenario: prepared.config.name.clone(),
        digest: prepared.digest.clone(),
        ..Batch::default()
    };
    for (seed, r) in results {
        match r {
            Ok(rec) => batch.records.push(rec),
            Err(e) => batch.failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(batch)
}

/// Run `f` on a pool of `jobs` threads (0 = rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    Ok(pool.install(f))
}

/// Loads every `report.json` under `out/<digest>/`, ordered by seed.
pub fn load_batch(out: &Path, digest: &str) -> Result<Batch> {
    let dir = out.join(digest);
    let mut batch = Batch {
        digest: digest.to_string(),
        ..Batch::default()
    };
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(batch),
        Err(e) => return Err(Error::io(&dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let report = entry.path().join("report.json");
        if !report.is_file() {
            continue;
        }
        let text = fs::read_to_string(&report).map_err(|e| Error::io(&report, e))?;
        let rec: RunRecord = serde_json::from_str(&text)?;
        batch.scenario = rec.scenario.clone();
        batch.records.push(rec);
    }
    batch.records.sort_by_key(|r| r.seed);
    Ok(batch)
}
