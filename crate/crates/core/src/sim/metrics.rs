use serde::{Deserialize, Serialize};

use super::SchedulerKind;
use crate::model::{JobClass, JobId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: JobId,
    pub class: JobClass,
    pub arrival: u32,
    pub admitted: bool,
    pub completion: Option<u32>,
    pub utility: f64,
    /// `(completion - arrival) - gamma3`, for completed jobs.
    pub timeliness: Option<f64>,
    pub latency_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub opt: f64,
    /// `OPT / utility`; absent when the scheduler earned nothing.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheduler: SchedulerKind,
    pub total_utility: f64,
    pub admitted: usize,
    pub completed: usize,
    pub acceptance_rate: f64,
    pub latency_mean_us: f64,
    pub latency_p95_us: f64,
    pub oracle: Option<OracleSummary>,
    pub jobs: Vec<JobRecord>,
}

impl MetricsReport {
    pub fn new(scheduler: SchedulerKind, jobs: Vec<JobRecord>) -> Self {
        let total_utility = jobs.iter().map(|j| j.utility).sum();
        let admitted = jobs.iter().filter(|j| j.admitted).count();
        let completed = jobs.iter().filter(|j| j.completion.is_some()).count();
        let mut latencies: Vec<f64> = jobs.iter().map(|j| j.latency_us).collect();
        latencies.sort_by(f64::total_cmp);
        let n = jobs.len();
        MetricsReport {
            scheduler,
            total_utility,
            admitted,
            completed,
            acceptance_rate: if n == 0 { 0.0 } else { admitted as f64 / n as f64 },
            latency_mean_us: if n == 0 { 0.0 } else { latencies.iter().sum::<f64>() / n as f64 },
            latency_p95_us: percentile(&latencies, 0.95),
            oracle: None,
            jobs,
        }
    }

    pub fn timeliness(&self, class: Option<JobClass>) -> impl Iterator<Item = f64> + '_ {
        self.jobs
            .iter()
            .filter(move |j| class.is_none_or(|c| j.class == c))
            .filter_map(|j| j.timeliness)
    }

    /// Mean of `|timeliness|` over completed jobs of `class` (all classes when `None`).
    pub fn mean_abs_timeliness(&self, class: Option<JobClass>) -> Option<f64> {
        let (sum, n) = self.timeliness(class).fold((0.0, 0usize), |(s, n), x| (s + x.abs(), n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// The same report with decision latencies zeroed, for comparing runs.
    pub fn without_timing(mut self) -> Self {
        for j in &mut self.jobs {
            j.latency_us = 0.0;
        }
        self.latency_mean_us = 0.0;
        self.latency_p95_us = 0.0;
        self
    }
}

/// Nearest-rank percentile of sorted values; 0 when empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
