//! Discrete-event model of an SDN-managed sensor grid.
//!
//! Nodes forward by flow table; a controller co-located with the center node
//! answers flow requests, digests neighbor reports and pushes route updates
//! along source routes. Time is kept in integer microseconds and every random
//! draw comes from one seeded stream, so a run is a pure function of its
//! configuration and seed.

pub mod attack;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod packet;
pub mod routing;
pub mod topology;
pub mod trace;

pub use attack::{
    attacker_count, fdff_attacker_step, fni_tamper, place_attackers, place_attackers_spaced,
};
pub use config::{
    AttackConfig, AttackKind, ControlPlaneConfig, CostModel, SimConfig, TamperMode,
    TopologyConfig, TrafficConfig,
};
pub use engine::{run, NodeState, Role, SimOutput, WindowCounters, EXCHANGE_DEPTH};
pub use metrics::{
    exchange_log, window_metrics, ExchangeLog, MetricSeries, MetricWindow, NodeMetric,
    NodeMetrics,
};
pub use packet::{Body, Dest, Packet, PacketKind, PayloadMeta};
pub use routing::{compute_routes, Action, FlowTable, FlowTableEntry, Match, Routes};
pub use topology::{build_grid, NodeId, Position, Topology};
pub use trace::{Accounting, EventTrace, Infrastructure, TraceEvent, TraceRecord};
