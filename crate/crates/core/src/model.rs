//! Cluster, job and schedule types shared by every scheduler.
//!
//! Slots are numbered `1..=T`. A job arriving at `a` and whose last slot with
//! workers is `t` completes after `t - a` elapsed slots; that difference is the
//! argument of its utility function.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{ceil_tol, le_tol};

/// Per-resource amounts (GPUs, vCPUs, memory GB, storage GB, bandwidth Gbps, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(pub Vec<f64>);

impl ResourceVector {
    pub fn new(amounts: Vec<f64>) -> Self {
        ResourceVector(amounts)
    }

    pub fn zeros(r: usize) -> Self {
        ResourceVector(vec![0.0; r])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, r: usize) -> f64 {
        self.0[r]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_non_negative(&self) -> bool {
        self.0.iter().all(|x| x.is_finite() && *x >= 0.0)
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|x| x.is_finite() && *x > 0.0)
    }
}

/// Sigmoid utility `gamma1 / (1 + exp(gamma2 * (elapsed - gamma3)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityFunction {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl UtilityFunction {
    pub fn new(gamma1: f64, gamma2: f64, gamma3: f64) -> Self {
        UtilityFunction {
            gamma1,
            gamma2,
            gamma3,
        }
    }

    /// Flat sigmoid (`gamma2 = 0`), worth `value / 2` at every completion time.
    pub fn constant(value: f64) -> Self {
        UtilityFunction::new(value, 0.0, 1.0)
    }

    pub fn eval(&self, elapsed: i64) -> f64 {
        self.gamma1 / (1.0 + (self.gamma2 * (elapsed as f64 - self.gamma3)).exp())
    }

    pub fn is_valid(&self) -> bool {
        self.gamma1.is_finite()
            && self.gamma1 > 0.0
            && self.gamma2.is_finite()
            && self.gamma2 >= 0.0
            && self.gamma3.is_finite()
            && self.gamma3 >= 1.0
    }
}

/// Sensitivity class derived from the decay factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobClass {
    Insensitive,
    Sensitive,
    Critical,
}

impl JobClass {
    /// Decay factors at or above this value mark a job as time-critical.
    pub const CRITICAL_DECAY: f64 = 2.0;

    pub fn of(utility: &UtilityFunction) -> Self {
        if utility.gamma2 == 0.0 {
            JobClass::Insensitive
        } else if utility.gamma2 < Self::CRITICAL_DECAY {
            JobClass::Sensitive
        } else {
            JobClass::Critical
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            JobClass::Insensitive => "insensitive",
            JobClass::Sensitive => "sensitive",
            JobClass::Critical => "critical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A parameter-server training job.
///
/// `tau` and `exchange_time` are already expressed in fractions of one slot:
/// one mini-batch costs `tau + 2 * exchange_time` worker-slots, where
/// `exchange_time` is the gradient size divided by the worker bandwidth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub arrival: u32,
    pub epochs: u32,
    pub chunks: u32,
    pub minibatches: u32,
    pub tau: f64,
    pub exchange_time: f64,
    pub worker_bw: f64,
    pub ps_bw: f64,
    pub worker_demand: ResourceVector,
    pub ps_demand: ResourceVector,
    pub utility: UtilityFunction,
}

impl Job {
    /// Worker-slots needed per mini-batch, `tau + 2e/b`.
    pub fn step_time(&self) -> f64 {
        self.tau + 2.0 * self.exchange_time
    }

    /// Worker-slots needed per chunk-epoch.
    pub fn chunk_work(&self) -> f64 {
        self.minibatches as f64 * self.step_time()
    }

    /// Total training workload in chunk-epochs, `E * N`.
    pub fn workload(&self) -> u32 {
        self.epochs * self.chunks
    }

    /// Total worker-slots required, `E * N * M * (tau + 2e/b)`.
    pub fn total_work(&self) -> f64 {
        self.workload() as f64 * self.chunk_work()
    }

    /// Bandwidth ratio `b / B`; parameter servers needed per worker.
    pub fn ps_ratio(&self) -> f64 {
        self.worker_bw / self.ps_bw
    }

    /// Minimum parameter servers for `workers` concurrent workers.
    pub fn ps_needed(&self, workers: u32) -> u32 {
        ceil_tol(workers as f64 * self.ps_ratio()) as u32
    }

    pub fn class(&self) -> JobClass {
        JobClass::of(&self.utility)
    }

    /// Utility when the last slot with workers is `completion`.
    pub fn utility_at(&self, completion: u32) -> f64 {
        self.utility
            .eval(completion as i64 - self.arrival as i64)
    }

    pub fn validate(&self, cluster: &ClusterSpec) -> Result<()> {
        let fail = |reason: String| Error::InvalidJob { id: self.id, reason };
        let r = cluster.resource_count();
        if self.worker_demand.len() != r || self.ps_demand.len() != r {
            return Err(Error::Dimension(format!(
                "job {} has demand vectors of length {}/{} but the cluster has {} resources",
                self.id,
                self.worker_demand.len(),
                self.ps_demand.len(),
                r
            )));
        }
        if self.arrival == 0 {
            return Err(fail("arrival slot must be >= 1".into()));
        }
        if self.epochs == 0 || self.chunks == 0 || self.minibatches == 0 {
            return Err(fail("epochs, chunks and mini-batches must be positive".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0)
            || !(self.exchange_time.is_finite() && self.exchange_time >= 0.0)
        {
            return Err(fail("tau and exchange time must be finite and non-negative".into()));
        }
        let work = self.total_work();
        if !(work.is_finite() && work > 0.0) {
            return Err(fail("per-chunk work must be finite and positive".into()));
        }
        if !(self.worker_bw.is_finite() && self.worker_bw > 0.0)
            || !(self.ps_bw.is_finite() && self.ps_bw > 0.0)
        {
            return Err(fail("bandwidths must be positive".into()));
        }
        if !self.worker_demand.is_non_negative() || !self.ps_demand.is_non_negative() {
            return Err(fail("resource demands must be non-negative".into()));
        }
        if self.worker_demand.sum() <= 0.0 || self.ps_demand.sum() <= 0.0 {
            return Err(fail("worker and ps demands must each use some resource".into()));
        }
        if let Some(bw) = cluster.bandwidth {
            if !le_tol((self.worker_demand.get(bw) - self.worker_bw).abs(), 0.0)
                || !le_tol((self.ps_demand.get(bw) - self.ps_bw).abs(), 0.0)
            {
                return Err(fail(
                    "bandwidth fields must equal the bandwidth components of the demands".into(),
                ));
            }
        }
        if !self.utility.is_valid() {
            return Err(fail("utility parameters out of range".into()));
        }
        if self.utility.eval(0) <= 0.0 {
            return Err(Error::InvalidUtility(self.id));
        }
        Ok(())
    }
}

/// Worker servers, parameter-server servers and the time horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub slots: u32,
    pub worker_servers: Vec<ResourceVector>,
    pub ps_servers: Vec<ResourceVector>,
    pub resources: Vec<String>,
    /// Index of the bandwidth resource, when the cluster models one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
}

impl ClusterSpec {
    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn worker_count(&self) -> usize {
        self.worker_servers.len()
    }

    pub fn ps_count(&self) -> usize {
        self.ps_servers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::InvalidCluster("T must be >= 1".into()));
        }
        if self.worker_servers.is_empty() || self.ps_servers.is_empty() {
            return Err(Error::InvalidCluster("H and K must be >= 1".into()));
        }
        let r = self.resource_count();
        if r == 0 {
            return Err(Error::InvalidCluster("at least one resource type".into()));
        }
        if let Some(bw) = self.bandwidth {
            if bw >= r {
                return Err(Error::InvalidCluster(format!("bandwidth index {bw} out of range")));
            }
        }
        for (kind, servers) in [("worker", &self.worker_servers), ("ps", &self.ps_servers)] {
            for (i, c) in servers.iter().enumerate() {
                if c.len() != r {
                    return Err(Error::Dimension(format!(
                        "{kind} server {i} has {} capacities, expected {r}",
                        c.len()
                    )));
                }
                if !c.is_positive() {
                    return Err(Error::InvalidCluster(format!(
                        "{kind} server {i} has a non-positive capacity"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `T * sum_h sum_r c_h^r`.
    pub fn worker_capacity_volume(&self) -> f64 {
        self.slots as f64 * self.worker_servers.iter().map(|c| c.sum()).sum::<f64>()
    }

    /// `T * sum_k sum_r c_k^r`.
    pub fn ps_capacity_volume(&self) -> f64 {
        self.slots as f64 * self.ps_servers.iter().map(|c| c.sum()).sum::<f64>()
    }
}

/// Workers needed in one slot to train `d` chunk-epochs: `ceil(d * M * (tau + 2e/b))`.
pub fn workers_needed(d: u32, job: &Job) -> u32 {
    if d == 0 {
        return 0;
    }
    ceil_tol(d as f64 * job.chunk_work()) as u32
}

/// Placement of one job in one slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub slot: u32,
    /// Workers per worker server (length H).
    pub workers: Vec<u32>,
    /// Parameter servers per PS server (length K).
    pub ps: Vec<u32>,
}

impl SlotAssignment {
    pub fn worker_total(&self) -> u32 {
        self.workers.iter().sum()
    }

    pub fn ps_total(&self) -> u32 {
        self.ps.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.worker_total() == 0 && self.ps_total() == 0
    }
}

/// A job's per-slot deployment together with its price-time cost and payoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub job_id: JobId,
    /// Non-empty slots in increasing slot order.
    pub slots: Vec<SlotAssignment>,
    pub deadline: u32,
    pub cost: f64,
    pub payoff: f64,
}

impl Schedule {
    /// Last slot with at least one worker.
    pub fn completion(&self) -> Option<u32> {
        self.slots
            .iter()
            .filter(|s| s.worker_total() > 0)
            .map(|s| s.slot)
            .max()
    }

    pub fn total_workers(&self) -> u64 {
        self.slots.iter().map(|s| s.worker_total() as u64).sum()
    }
}

/// Allocated amounts per (server, resource, slot) on both server pools.
#[derive(Clone, Debug, PartialEq)]
pub struct Usage {
    slots: u32,
    resources: usize,
    worker_servers: usize,
    ps_servers: usize,
    worker: Vec<f64>,
    ps: Vec<f64>,
}

impl Usage {
    pub fn empty(cluster: &ClusterSpec) -> Self {
        let t = cluster.slots as usize;
        let r = cluster.resource_count();
        Usage {
            slots: cluster.slots,
            resources: r,
            worker_servers: cluster.worker_count(),
            ps_servers: cluster.ps_count(),
            worker: vec![0.0; t * cluster.worker_count() * r],
            ps: vec![0.0; t * cluster.ps_count() * r],
        }
    }

    pub fn slots(&self) -> u32 {
        self.slots
    }

    pub fn matches(&self, cluster: &ClusterSpec) -> bool {
        self.slots == cluster.slots
            && self.resources == cluster.resource_count()
            && self.worker_servers == cluster.worker_count()
            && self.ps_servers == cluster.ps_count()
    }

    fn worker_idx(&self, h: usize, r: usize, t: u32) -> usize {
        ((t as usize - 1) * self.worker_servers + h) * self.resources + r
    }

    fn ps_idx(&self, k: usize, r: usize, t: u32) -> usize {
        ((t as usize - 1) * self.ps_servers + k) * self.resources + r
    }

    pub fn worker(&self, h: usize, r: usize, t: u32) -> f64 {
        self.worker[self.worker_idx(h, r, t)]
    }

    pub fn ps(&self, k: usize, r: usize, t: u32) -> f64 {
        self.ps[self.ps_idx(k, r, t)]
    }

    pub fn add_worker(&mut self, h: usize, r: usize, t: u32, amount: f64) {
        let i = self.worker_idx(h, r, t);
        self.worker[i] += amount;
    }

    pub fn add_ps(&mut self, k: usize, r: usize, t: u32, amount: f64) {
        let i = self.ps_idx(k, r, t);
        self.ps[i] += amount;
    }

    /// Adds every assignment of `schedule` with the job's per-unit demands.
    pub fn apply(&mut self, schedule: &Schedule, job: &Job) {
        for slot in &schedule.slots {
            for (h, &y) in slot.workers.iter().enumerate() {
                if y > 0 {
                    for (r, w) in job.worker_demand.iter().enumerate() {
                        self.add_worker(h, r, slot.slot, w * y as f64);
                    }
                }
            }
            for (k, &z) in slot.ps.iter().enumerate() {
                if z > 0 {
                    for (r, s) in job.ps_demand.iter().enumerate() {
                        self.add_ps(k, r, slot.slot, s * z as f64);
                    }
                }
            }
        }
    }
}

/// A constraint a schedule fails to meet.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Total worker-slots below `E N M (tau + 2e/b)`.
    Workload { provided: u64, required: f64 },
    /// More concurrent workers than data chunks.
    ChunkLimit { slot: u32, workers: u32, chunks: u32 },
    WorkerCapacity { slot: u32, server: usize, resource: usize },
    PsCapacity { slot: u32, server: usize, resource: usize },
    /// Parameter-server bandwidth below worker bandwidth.
    PsBandwidth { slot: u32 },
    /// More parameter servers than workers.
    PsCount { slot: u32 },
    /// Deadline differs from the last slot with workers.
    Completion { deadline: u32, completion: Option<u32> },
    BeforeArrival { slot: u32 },
    SlotRange { slot: u32 },
    DuplicateSlot { slot: u32 },
}

impl Violation {
    /// Short identifier of the violated constraint.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::Workload { .. } => "workload",
            Violation::ChunkLimit { .. } => "chunk-limit",
            Violation::WorkerCapacity { .. } => "worker-capacity",
            Violation::PsCapacity { .. } => "ps-capacity",
            Violation::PsBandwidth { .. } => "ps-bandwidth",
            Violation::PsCount { .. } => "ps-count",
            Violation::Completion { .. } => "completion",
            Violation::BeforeArrival { .. } => "before-arrival",
            Violation::SlotRange { .. } => "slot-range",
            Violation::DuplicateSlot { .. } => "duplicate-slot",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Workload { provided, required } => {
                write!(f, "workload: {provided} worker-slots < {required}")
            }
            Violation::ChunkLimit {
                slot,
                workers,
                chunks,
            } => write!(f, "chunk-limit: {workers} workers > {chunks} chunks at slot {slot}"),
            Violation::WorkerCapacity {
                slot,
                server,
                resource,
            } => write!(f, "worker-capacity: server {server} resource {resource} slot {slot}"),
            Violation::PsCapacity {
                slot,
                server,
                resource,
            } => write!(f, "ps-capacity: server {server} resource {resource} slot {slot}"),
            Violation::PsBandwidth { slot } => write!(f, "ps-bandwidth at slot {slot}"),
            Violation::PsCount { slot } => write!(f, "ps-count at slot {slot}"),
            Violation::Completion {
                deadline,
                completion,
            } => write!(f, "completion: deadline {deadline} vs last worker slot {completion:?}"),
            Violation::BeforeArrival { slot } => write!(f, "before-arrival at slot {slot}"),
            Violation::SlotRange { slot } => write!(f, "slot-range: slot {slot}"),
            Violation::DuplicateSlot { slot } => write!(f, "duplicate-slot: slot {slot}"),
        }
    }
}

fn check_shapes(job: &Job, cluster: &ClusterSpec) -> Result<()> {
    let r = cluster.resource_count();
    if job.worker_demand.len() != r || job.ps_demand.len() != r {
        return Err(Error::Dimension(format!(
            "job {} demand vectors do not have {r} resources",
            job.id
        )));
    }
    Ok(())
}

/// Per-job constraints that do not depend on other jobs.
pub(crate) fn job_violations(
    schedule: &Schedule,
    job: &Job,
    cluster: &ClusterSpec,
    require_workload: bool,
) -> Result<Vec<Violation>> {
    check_shapes(job, cluster)?;
    let (h, k) = (cluster.worker_count(), cluster.ps_count());
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for slot in &schedule.slots {
        if slot.workers.len() != h || slot.ps.len() != k {
            return Err(Error::Dimension(format!(
                "slot {} of job {} has {}/{} server entries, expected {h}/{k}",
                slot.slot,
                job.id,
                slot.workers.len(),
                slot.ps.len()
            )));
        }
        if slot.slot == 0 || slot.slot > cluster.slots {
            out.push(Violation::SlotRange { slot: slot.slot });
        }
        if !seen.insert(slot.slot) {
            out.push(Violation::DuplicateSlot { slot: slot.slot });
        }
        let workers = slot.worker_total();
        let ps = slot.ps_total();
        if slot.slot < job.arrival && (workers > 0 || ps > 0) {
            out.push(Violation::BeforeArrival { slot: slot.slot });
        }
        if workers > job.chunks {
            out.push(Violation::ChunkLimit {
                slot: slot.slot,
                workers,
                chunks: job.chunks,
            });
        }
        if !le_tol(workers as f64 * job.worker_bw, ps as f64 * job.ps_bw) {
            out.push(Violation::PsBandwidth { slot: slot.slot });
        }
        if ps > workers {
            out.push(Violation::PsCount { slot: slot.slot });
        }
    }
    if require_workload {
        let provided = schedule.total_workers();
        let required = job.total_work();
        if !le_tol(required, provided as f64) {
            out.push(Violation::Workload { provided, required });
        }
    }
    Ok(out)
}

/// Checks every schedule invariant and the capacity constraints with the
/// schedule added on top of `usage`. An empty list means the schedule is valid.
pub fn validate_schedule(
    schedule: &Schedule,
    job: &Job,
    cluster: &ClusterSpec,
    usage: &Usage,
) -> Result<Vec<Violation>> {
    if schedule.job_id != job.id {
        return Err(Error::Dimension(format!(
            "schedule for job {} checked against job {}",
            schedule.job_id, job.id
        )));
    }
    if !usage.matches(cluster) {
        return Err(Error::Dimension("usage snapshot does not match the cluster".into()));
    }
    let mut out = job_violations(schedule, job, cluster, true)?;
    let completion = schedule.completion();
    if completion != Some(schedule.deadline) {
        out.push(Violation::Completion {
            deadline: schedule.deadline,
            completion,
        });
    }
    for slot in &schedule.slots {
        if slot.slot == 0 || slot.slot > cluster.slots {
            continue;
        }
        for (h, &y) in slot.workers.iter().enumerate() {
            if y == 0 {
                continue;
            }
            for r in 0..cluster.resource_count() {
                let total = usage.worker(h, r, slot.slot) + job.worker_demand.get(r) * y as f64;
                if !le_tol(total, cluster.worker_servers[h].get(r)) {
                    out.push(Violation::WorkerCapacity {
                        slot: slot.slot,
                        server: h,
                        resource: r,
                    });
                }
            }
        }
        for (k, &z) in slot.ps.iter().enumerate() {
            if z == 0 {
                continue;
            }
            for r in 0..cluster.resource_count() {
                let total = usage.ps(k, r, slot.slot) + job.ps_demand.get(r) * z as f64;
                if !le_tol(total, cluster.ps_servers[k].get(r)) {
                    out.push(Violation::PsCapacity {
                        slot: slot.slot,
                        server: k,
                        resource: r,
                    });
                }
            }
        }
    }
    Ok(out)
}
