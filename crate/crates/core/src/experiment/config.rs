use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cpd::{DetectorParams, McSettings};
use crate::detection::Weights;
use crate::error::{Error, Result};
use crate::sim::{
    place_attackers_spaced, AttackKind, NodeId, NodeMetric, SimConfig, Topology,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub m: usize,
    pub gamma: f64,
    pub confidence: f64,
}

impl DetectorSpec {
    pub fn params(&self, horizon: usize) -> Result<DetectorParams> {
        DetectorParams::new(self.m, self.gamma, self.confidence, horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralizedSpec {
    pub enabled: bool,
    pub overhead: DetectorSpec,
    pub delivery: DetectorSpec,
}

impl Default for CentralizedSpec {
    fn default() -> Self {
        let d = DetectorSpec {
            m: 200,
            gamma: 0.0,
            confidence: 0.95,
        };
        Self {
            enabled: true,
            overhead: d,
            delivery: d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistributedSpec {
    pub enabled: bool,
    pub metric: NodeMetric,
    pub detector: DetectorSpec,
    /// Groups per grid axis; 0 picks 2 for grids up to 6x6 and 3 otherwise.
    pub groups_per_axis: usize,
    pub exchange_depth: usize,
    pub control_only: bool,
}

impl Default for DistributedSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            metric: NodeMetric::CtrlRx,
            detector: DetectorSpec {
                m: 200,
                gamma: 0.0,
                confidence: 0.99,
            },
            groups_per_axis: 0,
            exchange_depth: crate::attacker::DEFAULT_EXCHANGE_DEPTH,
            control_only: false,
        }
    }
}

impl DistributedSpec {
    pub fn groups_per_axis(&self, side: usize) -> usize {
        match self.groups_per_axis {
            0 if side <= 6 => 2,
            0 => 3,
            k => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub horizon: usize,
    /// Ground-truth change window `k*`.
    pub attack_start_sample: usize,
    pub centralized: CentralizedSpec,
    pub distributed: DistributedSpec,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            horizon: 60,
            attack_start_sample: 240,
            centralized: CentralizedSpec::default(),
            distributed: DistributedSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Seed for attacker placement. Unset means the run seed is used, so the
    /// attackers move between runs.
    pub seed: Option<u64>,
    /// Minimum hop distance between attackers (2 = never adjacent).
    pub min_hops: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            seed: Some(0),
            min_hops: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub m: Vec<usize>,
    pub gamma: Vec<f64>,
    pub confidence: Vec<f64>,
    pub training_seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = crate::detection::SweepGrid::default();
        Self {
            m: g.m,
            gamma: g.gamma,
            confidence: g.confidence,
            training_seeds: (0..20).map(|i| 10_000 + i).collect(),
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> crate::detection::SweepGrid {
        crate::detection::SweepGrid {
            m: self.m.clone(),
            gamma: self.gamma.clone(),
            confidence: self.confidence.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub sim: SimConfig,
    pub placement: PlacementConfig,
    pub detection: DetectionConfig,
    pub weights: Vec<Weights>,
    pub sweep: SweepConfig,
    pub calibration: McSettings,
    /// Run seeds. Not part of the digest.
    pub seeds: Vec<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            sim: SimConfig::default(),
            placement: PlacementConfig::default(),
            detection: DetectionConfig::default(),
            weights: Weights::PAPER_SET.to_vec(),
            sweep: SweepConfig::default(),
            calibration: McSettings::default(),
            seeds: (0..20).collect(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("toml {}..{}", s.start, s.end))
                .unwrap_or_else(|| "toml".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let topo = self.sim.build_topology()?;
        let d = &self.detection;
        if d.horizon == 0 {
            return Err(Error::config("detection.horizon", "must be >= 1"));
        }
        let k = d.attack_start_sample;
        let specs = [
            ("detection.centralized.overhead", d.centralized.overhead),
            ("detection.centralized.delivery", d.centralized.delivery),
            ("detection.distributed.detector", d.distributed.detector),
        ];
        for (field, spec) in specs {
            spec.params(d.horizon)
                .map_err(|e| Error::config(field, e.to_string()))?;
            if spec.m >= k {
                return Err(Error::config(
                    format!("{field}.m"),
                    format!("learning window {} must be shorter than attack_start_sample {k}", spec.m),
                ));
            }
        }
        let windows = (self.sim.duration_s / self.sim.window_s).floor() as usize;
        if k + d.horizon > windows {
            return Err(Error::config(
                "detection.attack_start_sample",
                format!("{k} + horizon {} exceeds the {windows} windows simulated", d.horizon),
            ));
        }
        if self.sim.attack.kind != AttackKind::None {
            let expected = k as f64 * self.sim.window_s;
            if (self.sim.attack.start_time_s - expected).abs() > 1e-6 {
                return Err(Error::config(
                    "sim.attack.start_time_s",
                    format!(
                        "must equal attack_start_sample * window_s = {expected}, got {}",
                        self.sim.attack.start_time_s
                    ),
                ));
            }
            if self.sim.attack.attackers.is_empty() && self.sim.attack.attacker_fraction <= 0.0 {
                return Err(Error::config(
                    "sim.attack.attacker_fraction",
                    "attack enabled with no attackers and a zero fraction",
                ));
            }
        }
        if self.placement.min_hops < 2 {
            return Err(Error::config("placement.min_hops", "must be >= 2"));
        }
        if self.weights.is_empty() {
            return Err(Error::config("weights", "need at least one pair"));
        }
        for w in &self.weights {
            w.validate().map_err(|e| Error::config("weights", e.to_string()))?;
        }
        if d.distributed.exchange_depth == 0 {
            return Err(Error::config("detection.distributed.exchange_depth", "must be >= 1"));
        }
        if d.distributed.enabled {
            let k = d.distributed.groups_per_axis(self.sim.topology.side);
            topo.block_groups(k)
                .map_err(|e| Error::config("detection.distributed.groups_per_axis", e.to_string()))?;
        }
        let s = &self.sweep;
        if s.m.is_empty() || s.gamma.is_empty() || s.confidence.is_empty() {
            return Err(Error::config("sweep", "grid axes must be non-empty"));
        }
        if self.calibration.n_paths == 0 || self.calibration.n_grid == 0 {
            return Err(Error::config("calibration", "n_paths and n_grid must be positive"));
        }
        let mut probe = self.sim.clone();
        probe.attack.attackers = self.attackers_for(&topo, 0)?;
        probe
            .validate(&topo)
            .map_err(|e| match e {
                Error::Config { field, reason } => Error::config(format!("sim.{field}"), reason),
                other => other,
            })
    }

    /// Content digest over every field except the run seeds.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let hash = Sha256::digest(&bytes);
        hex::encode(&hash[..8])
    }

    /// Attackers for one run: the explicit list if given, otherwise a spaced
    /// placement from the placement seed (or the run seed).
    pub fn attackers_for(&self, topo: &Topology, run_seed: u64) -> Result<BTreeSet<NodeId>> {
        let a = &self.sim.attack;
        if a.kind == AttackKind::None {
            return Ok(BTreeSet::new());
        }
        if !a.attackers.is_empty() {
            return Ok(a.attackers.clone());
        }
        let seed = self.placement.seed.unwrap_or(run_seed);
        place_attackers_spaced(topo, a.attacker_fraction, seed, self.placement.min_hops)
    }

    /// The simulator config for one run seed.
    pub fn sim_for(&self, topo: &Topology, run_seed: u64) -> Result<SimConfig> {
        let mut sim = self.sim.clone();
        sim.attack.attackers = self.attackers_for(topo, run_seed)?;
        Ok(sim)
    }

    /// Every `(gamma, confidence)` pair a run or sweep of this scenario needs.
    pub fn critical_pairs(&self, include_sweep: bool) -> Vec<(f64, f64)> {
        let d = &self.detection;
        let mut pairs = vec![
            (d.centralized.overhead.gamma, d.centralized.overhead.confidence),
            (d.centralized.delivery.gamma, d.centralized.delivery.confidence),
            (d.distributed.detector.gamma, d.distributed.detector.confidence),
        ];
        if include_sweep {
            for &g in &self.sweep.gamma {
                for &c in &self.sweep.confidence {
                    pairs.push((g, c));
                }
            }
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pairs.dedup();
        pairs
    }
}
