use thiserror::Error;

use crate::model::JobId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid job {id}: {reason}")]
    InvalidJob { id: JobId, reason: String },

    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    #[error("job {0} has non-positive utility at the end of the horizon")]
    InvalidUtility(JobId),

    #[error("empty job population")]
    EmptyPopulation,

    #[error("capacity overflow committing job {job} at slot {slot}: {detail}")]
    CapacityOverflow { job: JobId, slot: u32, detail: String },

    #[error("arrival of job {job} at slot {arrival} precedes previous arrival at slot {previous}")]
    OutOfOrder { job: JobId, arrival: u32, previous: u32 },

    #[error("instance exceeds oracle limits: {0}")]
    SizeLimit(String),

    #[error("invalid trace spec: {0}")]
    Spec(String),

    #[error("scheduler {scheduler} violated constraints at slot {slot}: {detail}")]
    SchedulerViolation {
        scheduler: String,
        slot: u32,
        detail: String,
    },

    #[error("malformed trace at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
