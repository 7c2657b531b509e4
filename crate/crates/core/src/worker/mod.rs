//! Duty-cycled worker model: wake schedule, synthetic kernels, fault
//! injection and the event-driven runtime that ties them to the bus.

mod fault;
mod kernel;
mod runtime;
mod schedule;

pub use fault::{apply_faults, FaultOutcome, FaultProfile, InvalidProbability};
pub use kernel::{
    canonical_form, digest_values, execute_kernel, Calibration, Kernel, KernelError, ResultDigest, SpeedClass,
    TaskId, TaskResult, TaskSpec, DEFAULT_DIGEST_PRECISION, DEFAULT_REFERENCE_SPEEDUP, ESP32_COST_PER_OP_S,
};
pub use runtime::{TaskTimer, WorkerConfig, WorkerRuntime, WorkerStats, LEADER_GROUP};
pub use schedule::{DutyCycleSchedule, Window};
