//! Scenario files, seeded batches, parameter sweeps and report exports.
//!
//! Artifacts of a scenario land under `out/<digest>/`, where the digest
//! covers every config field except the run seeds. Each seed writes
//! `metrics.csv`, `alarms.csv`, `declarations.csv` and `report.json` into
//! its own subdirectory.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{
    CentralizedSpec, DetectionConfig, DetectorSpec, DistributedSpec, PlacementConfig,
    ScenarioConfig, SweepConfig,
};
pub use report::{summarize, BatchReport, Classification, GroupRow, Identification, NodeRow};
pub use run::{
    load_batch, run_experiment, with_jobs, Batch, CentralizedOutcome, CriticalTable,
    DistributedOutcome, Evaluation, GroupOutcome, Prepared, RunPaths, RunRecord, SeedFailure,
};
pub use sweep::{sweep, sweep_series, training_series, MetricSweep, SweepOutput};
