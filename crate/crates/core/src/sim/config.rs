use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub side: usize,
    pub spacing: f64,
    /// Unit-disk radius in multiples of `spacing`.
    pub radio_radius: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            side: 6,
            spacing: 10.0,
            radio_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub data_period_s: f64,
    pub mgmt_period_s: f64,
    pub payload_bytes: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            data_period_s: 30.0,
            mgmt_period_s: 120.0,
            payload_bytes: 10,
        }
    }
}

/// Stand-in for hardware energy accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub processing_ms_per_packet: f64,
    pub transmit_ms_per_16_bytes: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            processing_ms_per_packet: 1.0,
            transmit_ms_per_16_bytes: 0.5,
        }
    }
}

impl CostModel {
    pub fn transmit_ms(&self, bytes: usize) -> f64 {
        self.transmit_ms_per_16_bytes * bytes as f64 / 16.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlPlaneConfig {
    pub flow_table_capacity: usize,
    pub ttl: u8,
    /// Relative metric change that triggers a neighbor report.
    pub report_threshold: f64,
    pub controller_delay_ms: f64,
    pub beacon_period_s: f64,
    /// Number of recent beacons behind each link-quality estimate.
    pub link_window: usize,
    /// Reported links below this metric are ignored by the controller.
    pub usable_metric: f64,
    /// Period of unconditional neighbor reports; zero disables the refresh.
    pub report_refresh_s: f64,
    /// Flow-id registrations are spread over this many seconds after boot.
    pub register_within_s: f64,
    pub hop_latency_ms: f64,
    pub byte_time_us: f64,
}

impl Default for ControlPlaneConfig {
    fn default() -> Self {
        Self {
            flow_table_capacity: 32,
            ttl: 64,
            report_threshold: 0.2,
            controller_delay_ms: 5.0,
            beacon_period_s: 60.0,
            link_window: 10,
            usable_metric: 0.5,
            report_refresh_s: 600.0,
            register_within_s: 60.0,
            hop_latency_ms: 2.0,
            byte_time_us: 32.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    #[default]
    None,
    Fdff,
    Fni,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperMode {
    Metric,
    #[default]
    NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub attacker_fraction: f64,
    /// Filled by placement when left empty.
    pub attackers: BTreeSet<NodeId>,
    pub start_time_s: f64,
    pub bogus_flow_period_s: f64,
    pub tamper_mode: TamperMode,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            attacker_fraction: 0.0,
            attackers: BTreeSet::new(),
            start_time_s: 8.0 * 3600.0,
            bogus_flow_period_s: 30.0,
            tamper_mode: TamperMode::NodeId,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        if !(0.0..=1.0).contains(&self.attacker_fraction) {
            return Err(Error::config("attack.attacker_fraction", "must lie in [0, 1]"));
        }
        if self.kind == AttackKind::None && !self.attackers.is_empty() {
            return Err(Error::config("attack.attackers", "attackers listed but kind is none"));
        }
        if self.kind != AttackKind::None && self.attackers.is_empty() {
            return Err(Error::config("attack.attackers", "attack enabled without attackers"));
        }
        if !(self.bogus_flow_period_s > 0.0) {
            return Err(Error::config("attack.bogus_flow_period_s", "must be positive"));
        }
        if !(self.start_time_s >= 0.0) {
            return Err(Error::config("attack.start_time_s", "must be non-negative"));
        }
        for &a in &self.attackers {
            if a as usize >= topology.len() {
                return Err(Error::config("attack.attackers", format!("node {a} out of range")));
            }
            if topology.is_infrastructure(a) {
                return Err(Error::config(
                    "attack.attackers",
                    format!("node {a} is the controller or a sink"),
                ));
            }
            if let Some(b) = topology.neighbors(a).iter().find(|b| self.attackers.contains(b)) {
                return Err(Error::config(
                    "attack.attackers",
                    format!("attackers {a} and {b} are neighbors"),
                ));
            }
        }
        Ok(())
    }
}

/// Everything one simulation run needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub topology: TopologyConfig,
    pub traffic: TrafficConfig,
    pub duration_s: f64,
    pub window_s: f64,
    pub loss_probability: f64,
    pub control: ControlPlaneConfig,
    pub costs: CostModel,
    pub attack: AttackConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig::default(),
            traffic: TrafficConfig::default(),
            duration_s: 36_000.0,
            window_s: 120.0,
            loss_probability: 0.02,
            control: ControlPlaneConfig::default(),
            costs: CostModel::default(),
            attack: AttackConfig::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

impl SimConfig {
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        positive("traffic.data_period_s", self.traffic.data_period_s)?;
        positive("traffic.mgmt_period_s", self.traffic.mgmt_period_s)?;
        positive("duration_s", self.duration_s)?;
        positive("window_s", self.window_s)?;
        positive("control.beacon_period_s", self.control.beacon_period_s)?;
        if !(self.control.report_refresh_s >= 0.0) {
            return Err(Error::config("control.report_refresh_s", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(Error::config("loss_probability", "must lie in [0, 1)"));
        }
        if self.control.ttl == 0 {
            return Err(Error::config("control.ttl", "must be >= 1"));
        }
        if self.control.link_window == 0 || self.control.link_window > 64 {
            return Err(Error::config("control.link_window", "must lie in 1..=64"));
        }
        if self.control.flow_table_capacity < 3 {
            return Err(Error::config(
                "control.flow_table_capacity",
                "must hold at least the three address routes",
            ));
        }
        self.attack.validate(topology)
    }

    pub fn build_topology(&self) -> Result<Topology> {
        crate::sim::topology::build_grid(
            self.topology.side,
            self.topology.spacing,
            self.topology.radio_radius,
        )
    }
}
