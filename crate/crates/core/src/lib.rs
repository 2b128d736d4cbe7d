//! Online admission and scheduling of parameter-server training jobs.
//!
//! [`engine::Engine`] decides each arriving job once: it prices the cluster,
//! searches the payoff-maximizing schedule with [`search::best_schedule`], and
//! admits the job when the payoff is positive. [`baselines`] holds FIFO, DRF
//! and a risk-reward heuristic for comparison, [`oracle`] an exact offline
//! solver for small instances, [`sim`] trace generation and simulation, and [`verify`] the self-check
//! suites.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod model;
pub mod num;
pub mod oracle;
pub mod pricing;
pub mod search;
pub mod sim;
pub mod verify;

pub use baselines::{run_policy, BaselineConfig, Drf, Fifo, JobOutcome, Policy, PolicyRun, Rrh};
pub use engine::{Decision, Engine};
pub use error::{Error, Result};
pub use model::{
    validate_schedule, workers_needed, ClusterSpec, Job, JobClass, JobId, ResourceVector,
    Schedule, SlotAssignment, Usage, UtilityFunction, Violation,
};
pub use oracle::{exhaustive_best_schedule, solve_offline, OracleLimits, OracleResult};
pub use pricing::{PriceConstants, PricingState};
pub use search::{best_schedule, cost_t, dp_cost, SlotPlacement};
pub use sim::{generate_trace, run_simulation, MetricsReport, SchedulerKind, SimOptions, Trace, TraceSpec};
