//! Comparison schedulers driven slot by slot.
//!
//! A [`Policy`] sees events (completions, arrivals, then one tick per slot)
//! and answers with start/stop/reject actions. [`run_policy`] applies them,
//! checks capacities, and advances training: every worker placed in a slot
//! contributes one worker-slot, and a job finishes in the slot its progress
//! reaches `E N M (tau + 2e/b)`.

mod drf;
mod fifo;
mod rrh;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use drf::{cluster_totals, dominant_share, drf_runnable, progressive_fill, Drf};
pub use fifo::Fifo;
pub use rrh::Rrh;

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, Job, JobId, ResourceVector};
use crate::num::le_tol;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Workers per running job for FIFO and RRH.
    pub fixed_workers: u32,
    /// Parameter servers per running job for FIFO and RRH, raised when bandwidth demands more.
    pub fixed_ps: u32,
    /// RRH admits and runs jobs whose discounted utility exceeds this.
    pub rrh_threshold: f64,
    /// Weight of the delay cost in the RRH admission test.
    pub rrh_delay_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            fixed_workers: 4,
            fixed_ps: 2,
            rrh_threshold: 0.0,
            rrh_delay_weight: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=30).contains(&self.fixed_workers) || !(1..=30).contains(&self.fixed_ps) {
            return Err(Error::Spec("fixed worker and ps counts must lie in [1, 30]".into()));
        }
        if !self.rrh_threshold.is_finite() || !(self.rrh_delay_weight.is_finite() && self.rrh_delay_weight >= 0.0) {
            return Err(Error::Spec("rrh threshold and delay weight must be finite".into()));
        }
        Ok(())
    }

    /// Worker and ps counts a fixed-size policy uses for `job`, or `None` when
    /// the bandwidth coupling cannot be met.
    pub(crate) fn fixed_shape(&self, job: &Job) -> Option<(u32, u32)> {
        let y = self.fixed_workers.min(job.chunks);
        let z = self.fixed_ps.max(job.ps_needed(y)).min(y);
        le_tol(y as f64 * job.worker_bw, z as f64 * job.ps_bw).then_some((y, z))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Arrival(usize),
    Completion(usize),
    Tick,
}

/// Per-server counts of one job.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub workers: Vec<u32>,
    pub ps: Vec<u32>,
}

impl Allocation {
    pub fn worker_total(&self) -> u32 {
        self.workers.iter().sum()
    }

    pub fn ps_total(&self) -> u32 {
        self.ps.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    /// Run `job` with this allocation from now on, replacing any previous one.
    Start { job: usize, allocation: Allocation },
    /// Release the job's resources; it may be started again later.
    Stop { job: usize },
    Reject { job: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pending,
    Queued,
    Running,
    Paused,
    Completed,
    Rejected,
}

impl Status {
    pub fn is_active(&self) -> bool {
        matches!(self, Status::Queued | Status::Running | Status::Paused)
    }
}

/// Read-only state handed to a policy.
pub struct SimView<'a> {
    pub slot: u32,
    pub cluster: &'a ClusterSpec,
    pub jobs: &'a [Job],
    pub status: &'a [Status],
    /// Worker-slots trained so far.
    pub progress: &'a [f64],
    pub allocations: &'a [Option<Allocation>],
}

impl SimView<'_> {
    pub fn remaining_work(&self, j: usize) -> f64 {
        (self.jobs[j].total_work() - self.progress[j]).max(0.0)
    }

    /// Residual capacities given the current allocations.
    pub fn free(&self) -> FreeCapacity {
        let mut free = FreeCapacity::empty(self.cluster);
        for (j, alloc) in self.allocations.iter().enumerate() {
            if let Some(a) = alloc {
                free.take(&self.jobs[j], a);
            }
        }
        free
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeCapacity {
    pub worker: Vec<Vec<f64>>,
    pub ps: Vec<Vec<f64>>,
}

fn fits_one(residual: &[f64], demand: &ResourceVector) -> bool {
    demand.iter().zip(residual).all(|(d, &r)| d == 0.0 || le_tol(d, r))
}

impl FreeCapacity {
    pub fn empty(cluster: &ClusterSpec) -> Self {
        FreeCapacity {
            worker: cluster.worker_servers.iter().map(|c| c.0.clone()).collect(),
            ps: cluster.ps_servers.iter().map(|c| c.0.clone()).collect(),
        }
    }

    pub fn take(&mut self, job: &Job, a: &Allocation) {
        adjust(&mut self.worker, &job.worker_demand, &a.workers, -1.0);
        adjust(&mut self.ps, &job.ps_demand, &a.ps, -1.0);
    }

    pub fn give(&mut self, job: &Job, a: &Allocation) {
        adjust(&mut self.worker, &job.worker_demand, &a.workers, 1.0);
        adjust(&mut self.ps, &job.ps_demand, &a.ps, 1.0);
    }

    pub fn is_within_capacity(&self) -> bool {
        self.worker.iter().chain(&self.ps).flatten().all(|&r| r >= -1e-9)
    }
}

fn adjust(residual: &mut [Vec<f64>], demand: &ResourceVector, counts: &[u32], sign: f64) {
    for (server, &n) in counts.iter().enumerate() {
        if n > 0 {
            for (r, d) in demand.iter().enumerate() {
                residual[server][r] += sign * d * n as f64;
            }
        }
    }
}

/// Round-robin placement: each instance goes to the next server, starting
/// after the previous placement, that still has room.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cursor {
    worker: usize,
    ps: usize,
}

fn round_robin(
    residual: &mut [Vec<f64>],
    demand: &ResourceVector,
    count: u32,
    cursor: &mut usize,
) -> Option<Vec<u32>> {
    let servers = residual.len();
    let mut out = vec![0u32; servers];
    let mut pos = *cursor % servers.max(1);
    for _ in 0..count {
        let found = (0..servers).map(|i| (pos + i) % servers).find(|&s| fits_one(&residual[s], demand))?;
        for (r, d) in demand.iter().enumerate() {
            residual[found][r] -= d;
        }
        out[found] += 1;
        pos = (found + 1) % servers;
    }
    *cursor = pos;
    Some(out)
}

impl Cursor {
    /// Places `workers` and `ps` instances, updating `free` and the cursor
    /// only on success.
    pub fn place(&mut self, job: &Job, workers: u32, ps: u32, free: &mut FreeCapacity) -> Option<Allocation> {
        let mut trial = free.clone();
        let mut cursor = self.clone();
        let w = round_robin(&mut trial.worker, &job.worker_demand, workers, &mut cursor.worker)?;
        let p = round_robin(&mut trial.ps, &job.ps_demand, ps, &mut cursor.ps)?;
        *free = trial;
        *self = cursor;
        Some(Allocation { workers: w, ps: p })
    }
}

pub trait Policy {
    fn name(&self) -> &'static str;
    fn step(&mut self, event: Event, view: &SimView) -> Vec<Action>;
}

/// Allocation held by a job during one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u32,
    pub job: usize,
    pub allocation: Allocation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobOutcome {
    pub job_id: JobId,
    /// Whether the job ever received resources (OASiS: was admitted).
    pub admitted: bool,
    pub completion: Option<u32>,
    pub utility: f64,
    /// Time spent by the scheduler handling the job's arrival.
    pub latency: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRun {
    pub outcomes: Vec<JobOutcome>,
    pub records: Vec<SlotRecord>,
}

struct Driver<'a> {
    name: &'static str,
    cluster: &'a ClusterSpec,
    jobs: &'a [Job],
    status: Vec<Status>,
    progress: Vec<f64>,
    allocations: Vec<Option<Allocation>>,
}

impl Driver<'_> {
    fn violation(&self, slot: u32, detail: String) -> Error {
        Error::SchedulerViolation {
            scheduler: self.name.to_string(),
            slot,
            detail,
        }
    }

    fn dispatch<P: Policy + ?Sized>(&mut self, policy: &mut P, slot: u32, event: Event) -> Result<()> {
        let actions = {
            let view = SimView {
                slot,
                cluster: self.cluster,
                jobs: self.jobs,
                status: &self.status,
                progress: &self.progress,
                allocations: &self.allocations,
            };
            policy.step(event, &view)
        };
        for action in actions {
            match action {
                Action::Start { job, allocation } => {
                    if job >= self.jobs.len() || !self.status[job].is_active() {
                        return Err(self.violation(slot, format!("start of inactive job {job}")));
                    }
                    if allocation.workers.len() != self.cluster.worker_count()
                        || allocation.ps.len() != self.cluster.ps_count()
                    {
                        return Err(self.violation(slot, format!("malformed allocation for job {job}")));
                    }
                    self.status[job] = Status::Running;
                    self.allocations[job] = Some(allocation);
                }
                Action::Stop { job } => {
                    if job >= self.jobs.len() || !self.status[job].is_active() {
                        return Err(self.violation(slot, format!("stop of inactive job {job}")));
                    }
                    self.status[job] = Status::Paused;
                    self.allocations[job] = None;
                }
                Action::Reject { job } => {
                    if job >= self.jobs.len() || !self.status[job].is_active() {
                        return Err(self.violation(slot, format!("reject of inactive job {job}")));
                    }
                    self.status[job] = Status::Rejected;
                    self.allocations[job] = None;
                }
            }
        }
        Ok(())
    }

    fn check(&self, slot: u32) -> Result<()> {
        let mut free = FreeCapacity::empty(self.cluster);
        for (j, alloc) in self.allocations.iter().enumerate() {
            let Some(a) = alloc else { continue };
            let job = &self.jobs[j];
            let (y, z) = (a.worker_total(), a.ps_total());
            if y == 0 || y > job.chunks || z > y || !le_tol(y as f64 * job.worker_bw, z as f64 * job.ps_bw) {
                return Err(self.violation(slot, format!("job {} runs {y} workers with {z} ps", job.id)));
            }
            free.take(job, a);
        }
        for (kind, side, caps) in [
            ("worker", &free.worker, &self.cluster.worker_servers),
            ("ps", &free.ps, &self.cluster.ps_servers),
        ] {
            for (s, residual) in side.iter().enumerate() {
                for (r, &left) in residual.iter().enumerate() {
                    let cap = caps[s].get(r);
                    if !le_tol(cap - left, cap) {
                        return Err(self.violation(slot, format!("{kind} server {s} resource {r} over capacity")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Replays `jobs` (sorted by arrival) against `policy` over the cluster's horizon.
pub fn run_policy<P: Policy + ?Sized>(policy: &mut P, jobs: &[Job], cluster: &ClusterSpec) -> Result<PolicyRun> {
    cluster.validate()?;
    for pair in jobs.windows(2) {
        if pair[1].arrival < pair[0].arrival {
            return Err(Error::OutOfOrder {
                job: pair[1].id,
                arrival: pair[1].arrival,
                previous: pair[0].arrival,
            });
        }
    }
    for job in jobs {
        job.validate(cluster)?;
    }
    let n = jobs.len();
    let mut driver = Driver {
        name: policy.name(),
        cluster,
        jobs,
        status: vec![Status::Pending; n],
        progress: vec![0.0; n],
        allocations: vec![None; n],
    };
    let mut ran = vec![false; n];
    let mut completion = vec![None; n];
    let mut latency = vec![Duration::ZERO; n];
    let mut records = Vec::new();
    let mut finished: Vec<usize> = Vec::new();
    let mut next = 0;
    for t in 1..=cluster.slots {
        for j in std::mem::take(&mut finished) {
            driver.dispatch(policy, t, Event::Completion(j))?;
        }
        while next < n && jobs[next].arrival == t {
            driver.status[next] = Status::Queued;
            let started = Instant::now();
            driver.dispatch(policy, t, Event::Arrival(next))?;
            latency[next] = started.elapsed();
            next += 1;
        }
        driver.dispatch(policy, t, Event::Tick)?;
        driver.check(t)?;
        for j in 0..n {
            let Some(a) = driver.allocations[j].clone() else { continue };
            ran[j] = true;
            driver.progress[j] += a.worker_total() as f64;
            records.push(SlotRecord {
                slot: t,
                job: j,
                allocation: a,
            });
            if le_tol(jobs[j].total_work(), driver.progress[j]) {
                completion[j] = Some(t);
                driver.status[j] = Status::Completed;
                driver.allocations[j] = None;
                finished.push(j);
            }
        }
    }
    let outcomes = jobs
        .iter()
        .enumerate()
        .map(|(j, job)| JobOutcome {
            job_id: job.id,
            admitted: ran[j],
            completion: completion[j],
            utility: completion[j].map_or(0.0, |c| job.utility_at(c)),
            latency: latency[j],
        })
        .collect();
    Ok(PolicyRun { outcomes, records })
}
