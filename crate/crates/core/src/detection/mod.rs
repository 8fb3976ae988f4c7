//! Detection layers on top of the simulator's metric series.
//!
//! The centralized layer watches network totals and names the attack by which
//! metric moves first. The distributed layer runs one detector per node (or
//! per spatial group) on a local metric.

pub mod centralized;
pub mod distributed;
pub mod score;

pub use centralized::{
    centralized_step, classify_series, run_detector, AttackLabel, CentralMetric,
    CentralizedDetector, Label, SingleRun,
};
pub use distributed::{
    aggregate_groups, alarms_csv, distributed_step, run_distributed, AlarmEvent,
    DistributedDeployment, GroupResult,
};
pub use score::{
    median, score, sweep_parameters, BestCell, PerformanceReport, SweepCell, SweepGrid,
    SweepResult, WeightScore, Weights,
};
