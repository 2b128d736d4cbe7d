//! Trace generation, replay against any scheduler, and metrics.

mod instances;
mod io;
mod metrics;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use instances::{tiny_instance, TinySpec};
pub use io::{
    plot_timeliness_histogram, plot_utility_vs_load, read_trace, read_trace_file, write_job_rows,
    write_plot_points, write_result_rows, write_trace, write_trace_file, JobRow, PlotPoint, ResultRow,
};
pub use metrics::{percentile, JobRecord, MetricsReport, OracleSummary};
pub use trace::{
    generate_trace, ArrivalProfile, ClusterTemplate, DemandSpec, JobSpec, Trace, TraceSpec, BANDWIDTH, RESOURCES,
};

use crate::baselines::{run_policy, Allocation, BaselineConfig, Drf, Fifo, JobOutcome, Rrh, SlotRecord};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{ClusterSpec, Job};
use crate::num::le_tol;
use crate::oracle::{solve_offline, OracleLimits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Oasis,
    Fifo,
    Drf,
    Rrh,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::Oasis,
        SchedulerKind::Fifo,
        SchedulerKind::Drf,
        SchedulerKind::Rrh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchedulerKind::Oasis => "oasis",
            SchedulerKind::Fifo => "fifo",
            SchedulerKind::Drf => "drf",
            SchedulerKind::Rrh => "rrh",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Spec(format!("unknown scheduler `{s}` (expected oasis, fifo, drf or rrh)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub baseline: BaselineConfig,
    /// Multiplier on the price ratios `U / L` used by OASiS.
    pub estimate_scale: f64,
    /// Also solve the trace exactly and report `OPT / utility`.
    pub oracle: Option<OracleLimits>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            baseline: BaselineConfig::default(),
            estimate_scale: 1.0,
            oracle: None,
        }
    }
}

/// A report together with the per-slot allocations it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub report: MetricsReport,
    pub records: Vec<SlotRecord>,
    pub outcomes: Vec<JobOutcome>,
}

fn run_oasis(trace: &Trace, scale: f64) -> Result<(Vec<JobOutcome>, Vec<SlotRecord>)> {
    let mut outcomes = Vec::with_capacity(trace.jobs.len());
    let mut records = Vec::new();
    if trace.jobs.is_empty() {
        return Ok((outcomes, records));
    }
    let mut engine = Engine::for_population(trace.cluster.clone(), &trace.jobs, scale)?;
    for (j, job) in trace.jobs.iter().enumerate() {
        let d = engine.on_arrival(job)?;
        if let Some(s) = &d.schedule {
            for slot in s.slots.iter().filter(|a| !a.is_empty()) {
                records.push(SlotRecord {
                    slot: slot.slot,
                    job: j,
                    allocation: Allocation {
                        workers: slot.workers.clone(),
                        ps: slot.ps.clone(),
                    },
                });
            }
        }
        outcomes.push(JobOutcome {
            job_id: job.id,
            admitted: d.admitted,
            completion: d.completion,
            utility: d.utility,
            latency: d.latency,
        });
    }
    records.sort_by_key(|r| (r.slot, r.job));
    Ok((outcomes, records))
}

/// Replays the trace against one scheduler and audits every allocation.
pub fn simulate(trace: &Trace, kind: SchedulerKind, opts: &SimOptions) -> Result<SimRun> {
    opts.baseline.validate()?;
    if !(opts.estimate_scale.is_finite() && opts.estimate_scale > 0.0) {
        return Err(Error::Spec("estimate_scale must be positive".into()));
    }
    let (outcomes, records) = match kind {
        SchedulerKind::Oasis => run_oasis(trace, opts.estimate_scale)?,
        SchedulerKind::Fifo => split(run_policy(&mut Fifo::new(opts.baseline.clone()), &trace.jobs, &trace.cluster)?),
        SchedulerKind::Drf => split(run_policy(&mut Drf::new(), &trace.jobs, &trace.cluster)?),
        SchedulerKind::Rrh => split(run_policy(&mut Rrh::new(opts.baseline.clone()), &trace.jobs, &trace.cluster)?),
    };
    audit(kind.as_str(), &trace.cluster, &trace.jobs, &records, &outcomes)?;
    let jobs = trace
        .jobs
        .iter()
        .zip(&outcomes)
        .map(|(job, o)| JobRecord {
            job_id: job.id,
            class: job.class(),
            arrival: job.arrival,
            admitted: o.admitted,
            completion: o.completion,
            utility: o.utility,
            timeliness: o
                .completion
                .map(|c| (c as f64 - job.arrival as f64) - job.utility.gamma3),
            latency_us: o.latency.as_secs_f64() * 1e6,
        })
        .collect();
    let mut report = MetricsReport::new(kind, jobs);
    if let Some(limits) = &opts.oracle {
        let opt = solve_offline(&trace.jobs, &trace.cluster, limits)?.opt;
        let ratio = if report.total_utility > 0.0 {
            Some(opt / report.total_utility)
        } else if opt == 0.0 {
            Some(1.0)
        } else {
            None
        };
        report.oracle = Some(OracleSummary { opt, ratio });
    }
    Ok(SimRun {
        report,
        records,
        outcomes,
    })
}

fn split(run: crate::baselines::PolicyRun) -> (Vec<JobOutcome>, Vec<SlotRecord>) {
    (run.outcomes, run.records)
}

pub fn run_simulation(trace: &Trace, kind: SchedulerKind, opts: &SimOptions) -> Result<MetricsReport> {
    simulate(trace, kind, opts).map(|run| run.report)
}

/// Rebuilds per-slot usage from `records` alone and checks capacities, worker
/// and parameter-server coupling, training progress and the reported utilities.
pub fn audit(
    scheduler: &str,
    cluster: &ClusterSpec,
    jobs: &[Job],
    records: &[SlotRecord],
    outcomes: &[JobOutcome],
) -> Result<()> {
    let fail = |slot: u32, detail: String| {
        Err(Error::SchedulerViolation {
            scheduler: scheduler.to_string(),
            slot,
            detail,
        })
    };
    if outcomes.len() != jobs.len() {
        return fail(0, format!("{} outcomes for {} jobs", outcomes.len(), jobs.len()));
    }
    let (h, k, r, slots) = (
        cluster.worker_count(),
        cluster.ps_count(),
        cluster.resource_count(),
        cluster.slots as usize,
    );
    let mut worker_use = vec![0.0; slots * h * r];
    let mut ps_use = vec![0.0; slots * k * r];
    let mut trained = vec![0u64; jobs.len()];
    let mut last = vec![0u32; jobs.len()];
    let mut seen = std::collections::HashSet::new();
    for rec in records {
        let t = rec.slot;
        let Some(job) = jobs.get(rec.job) else {
            return fail(t, format!("record for unknown job index {}", rec.job));
        };
        if !seen.insert((t, rec.job)) {
            return fail(t, format!("job {} placed twice", job.id));
        }
        if t < job.arrival || t == 0 || t > cluster.slots {
            return fail(t, format!("job {} runs outside [arrival, T]", job.id));
        }
        let a = &rec.allocation;
        if a.workers.len() != h || a.ps.len() != k {
            return fail(t, format!("job {} allocation has the wrong number of servers", job.id));
        }
        let y: u32 = a.workers.iter().sum();
        let z: u32 = a.ps.iter().sum();
        if y == 0 || y > job.chunks || z > y || !le_tol(y as f64 * job.worker_bw, z as f64 * job.ps_bw) {
            return fail(t, format!("job {} runs {y} workers with {z} parameter servers", job.id));
        }
        let base = (t as usize - 1) * h * r;
        for (s, &n) in a.workers.iter().enumerate() {
            for q in 0..r {
                worker_use[base + s * r + q] += job.worker_demand.get(q) * n as f64;
            }
        }
        let base = (t as usize - 1) * k * r;
        for (s, &n) in a.ps.iter().enumerate() {
            for q in 0..r {
                ps_use[base + s * r + q] += job.ps_demand.get(q) * n as f64;
            }
        }
        trained[rec.job] += y as u64;
        last[rec.job] = last[rec.job].max(t);
    }
    for t in 0..slots {
        for s in 0..h {
            for q in 0..r {
                if !le_tol(worker_use[(t * h + s) * r + q], cluster.worker_servers[s].get(q)) {
                    return fail(t as u32 + 1, format!("worker server {s} resource {q} over capacity"));
                }
            }
        }
        for s in 0..k {
            for q in 0..r {
                if !le_tol(ps_use[(t * k + s) * r + q], cluster.ps_servers[s].get(q)) {
                    return fail(t as u32 + 1, format!("ps server {s} resource {q} over capacity"));
                }
            }
        }
    }
    for (j, (job, o)) in jobs.iter().zip(outcomes).enumerate() {
        match o.completion {
            Some(c) => {
                if !le_tol(job.total_work(), trained[j] as f64) {
                    return fail(c, format!("job {} reported complete after {} of {:.3} worker-slots", job.id, trained[j], job.total_work()));
                }
                if last[j] != c {
                    return fail(c, format!("job {} last ran at slot {} but completed at {c}", job.id, last[j]));
                }
                if o.utility != job.utility_at(c) {
                    return fail(c, format!("job {} utility does not match its completion", job.id));
                }
            }
            None if o.utility != 0.0 => return fail(0, format!("unfinished job {} earned utility", job.id)),
            None => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::best_schedule;
    use crate::pricing::{PriceConstants, PricingState};

    fn small() -> Trace {
        let mut spec = TraceSpec::desk();
        spec.job_count = 30;
        spec.slots = 30;
        generate_trace(&spec).unwrap()
    }

    #[test]
    fn empty_trace_reports_zero() {
        let mut spec = TraceSpec::desk();
        spec.job_count = 0;
        let trace = generate_trace(&spec).unwrap();
        for kind in SchedulerKind::ALL {
            let m = run_simulation(&trace, kind, &SimOptions::default()).unwrap();
            assert_eq!(m.total_utility, 0.0);
            assert!(m.jobs.is_empty());
        }
    }

    #[test]
    fn every_scheduler_passes_the_audit_and_replays_identically() {
        let trace = small();
        for kind in SchedulerKind::ALL {
            let a = run_simulation(&trace, kind, &SimOptions::default()).unwrap();
            let b = run_simulation(&trace, kind, &SimOptions::default()).unwrap();
            assert_eq!(a.clone().without_timing(), b.without_timing());
            let sum: f64 = a.jobs.iter().map(|j| j.utility).sum();
            assert_eq!(a.total_utility, sum);
        }
    }

    #[test]
    fn single_job_earns_its_best_schedule_utility() {
        let mut trace = small();
        trace.jobs.truncate(1);
        let m = run_simulation(&trace, SchedulerKind::Oasis, &SimOptions::default()).unwrap();
        let constants = PriceConstants::compute(&trace.jobs, &trace.cluster).unwrap();
        let state = PricingState::new(trace.cluster.clone(), constants).unwrap();
        let (schedule, payoff) = best_schedule(&trace.jobs[0], &state);
        let s = schedule.expect("a lone job fits an empty cluster");
        assert!(payoff > 0.0);
        assert_eq!(m.total_utility, trace.jobs[0].utility_at(s.deadline));
        assert_eq!(m.jobs[0].completion, Some(s.deadline));
    }

    #[test]
    fn audit_catches_overflow() {
        let trace = small();
        let run = simulate(&trace, SchedulerKind::Fifo, &SimOptions::default()).unwrap();
        let mut shrunk = trace.cluster.clone();
        for s in &mut shrunk.worker_servers {
            s.0[1] = 0.5;
        }
        let err = audit("fifo", &shrunk, &trace.jobs, &run.records, &run.outcomes).unwrap_err();
        assert!(matches!(err, Error::SchedulerViolation { ref detail, .. } if detail.contains("over capacity")));
    }

    #[test]
    fn scheduler_names_parse() {
        for kind in SchedulerKind::ALL {
            assert_eq!(kind.as_str().parse::<SchedulerKind>().unwrap(), kind);
        }
        assert!("lifo".parse::<SchedulerKind>().is_err());
    }
}
