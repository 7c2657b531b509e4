//! Deterministic simulation harness: scenarios, the event engine, metrics
//! and parameter sweeps.

mod engine;
mod metrics;
mod scenario;
mod sweep;

pub use engine::{planned_tasks, run_scenario, SimError, Simulation, CLIENT_ID, DISPATCHER_SUBSCRIBER, PURGE_INTERVAL_S};
pub use metrics::{
    overall_error_rate, overall_mean_ratio, summarize_sizes, MetricsReport, Outcome, SizeSummary, TaskMetrics,
    TASK_CSV_HEADER,
};
pub use scenario::{
    CrashSpec, FaultSpec, LatencySpec, NodeSpec, ResolvedNode, Scenario, ScenarioError, Workload, DEFAULT_SIZES,
};
pub use sweep::{sweep, write_sweep_csv, SweepAxis, SweepPoint, SWEEP_CSV_HEADER};
