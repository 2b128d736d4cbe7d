//! Self-check suites run by `oasis verify` and the acceptance tests.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Allocation, JobOutcome, SlotRecord};
use crate::engine::Engine;
use crate::error::Result;
use crate::model::{validate_schedule, Job, JobId, ResourceVector, Schedule, SlotAssignment, Usage};
use crate::oracle::{exhaustive_best_schedule, solve_offline, OracleLimits};
use crate::pricing::{shortest_elapsed, PriceConstants, PricingState};
use crate::search::best_schedule;
use crate::sim::{audit, generate_trace, simulate, tiny_instance, SchedulerKind, SimOptions, TinySpec, Trace, TraceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Tiny instances for the best-schedule versus brute-force comparison.
    pub oracle_instances: usize,
    /// Tiny instances for the competitive-ratio bound.
    pub competitive_instances: usize,
    /// Jobs in the simulated feasibility run.
    pub feasibility_jobs: usize,
    /// Desk traces replayed for the per-decision duality checks.
    pub duality_traces: usize,
    pub tiny: TinySpec,
    pub limits: OracleLimits,
    /// Adds a placement beyond capacity to the feasibility run; the suite must fail.
    pub inject_overflow: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 1,
            oracle_instances: 200,
            competitive_instances: 50,
            feasibility_jobs: 1000,
            duality_traces: 5,
            tiny: TinySpec::default(),
            limits: OracleLimits::default(),
            inject_overflow: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub notes: Vec<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            checked: 0,
            failures: 0,
            notes: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn check(&mut self, ok: bool, note: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.notes.len() < 10 {
                self.notes.push(note());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn tiny_instances(cfg: &VerifyConfig, salt: u64, count: usize) -> Vec<Trace> {
    let mut rng = rng(cfg.seed, salt);
    (0..count).map(|_| tiny_instance(&mut rng, &cfg.tiny)).collect()
}

/// The best-schedule search agrees with brute-force enumeration, at every
/// arrival of random tiny instances replayed through the engine.
pub fn oracle_equivalence(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut report = SuiteReport::new("oracle-equivalence");
    for (i, trace) in tiny_instances(cfg, 1, cfg.oracle_instances).iter().enumerate() {
        let mut engine = Engine::for_population(trace.cluster.clone(), &trace.jobs, 1.0)?;
        for job in &trace.jobs {
            let (_, fast) = best_schedule(job, engine.state());
            let slow = exhaustive_best_schedule(job, engine.state(), &cfg.limits)?;
            report.check((fast - slow).abs() <= 1e-9, || {
                format!("instance {i} job {}: search {fast} vs exhaustive {slow}", job.id)
            });
            engine.on_arrival(job)?;
        }
    }
    report.notes.insert(0, format!("{} instances", cfg.oracle_instances));
    report.elapsed = started.elapsed();
    Ok(report)
}

fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// A state whose every server is full in every slot.
pub fn exhausted_state(cluster: &crate::model::ClusterSpec, constants: PriceConstants) -> Result<PricingState> {
    let mut state = PricingState::new(cluster.clone(), constants)?;
    let (h, k, r) = (cluster.worker_count(), cluster.ps_count(), cluster.resource_count());
    let filler = |worker: ResourceVector, ps: ResourceVector| Job {
        id: JobId(u64::MAX),
        arrival: 1,
        epochs: 1,
        chunks: 1,
        minibatches: 1,
        tau: 1.0,
        exchange_time: 0.0,
        worker_bw: 1.0,
        ps_bw: 1.0,
        worker_demand: worker,
        ps_demand: ps,
        utility: crate::model::UtilityFunction::constant(1.0),
    };
    let every_slot = |workers: Vec<u32>, ps: Vec<u32>| Schedule {
        job_id: JobId(u64::MAX),
        slots: (1..=cluster.slots)
            .map(|t| SlotAssignment {
                slot: t,
                workers: workers.clone(),
                ps: ps.clone(),
            })
            .collect(),
        deadline: cluster.slots,
        cost: 0.0,
        payoff: 0.0,
    };
    for (s, cap) in cluster.worker_servers.iter().enumerate() {
        let mut workers = vec![0; h];
        workers[s] = 1;
        state.commit_unchecked(&every_slot(workers, vec![0; k]), &filler(cap.clone(), ResourceVector::zeros(r)));
    }
    for (s, cap) in cluster.ps_servers.iter().enumerate() {
        let mut ps = vec![0; k];
        ps[s] = 1;
        state.commit_unchecked(&every_slot(vec![0; h], ps), &filler(ResourceVector::zeros(r), cap.clone()));
    }
    Ok(state)
}

/// Whether `job` alone can finish by `T`: exactly on instances the oracle
/// accepts, otherwise from its shortest possible run.
fn finishable(job: &Job, cluster: &crate::model::ClusterSpec, limits: &OracleLimits) -> Result<bool> {
    match solve_offline(std::slice::from_ref(job), cluster, limits) {
        Ok(result) => Ok(result.opt > 0.0),
        Err(crate::error::Error::SizeLimit(_)) => Ok(job.arrival as i64 + shortest_elapsed(job) <= cluster.slots as i64),
        Err(e) => Err(e),
    }
}

/// Prices start at `L` and reach `U` at capacity; every job that can finish
/// in time is admitted on an empty cluster and refused on a full one.
pub fn price_boundaries(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut report = SuiteReport::new("price-boundaries");
    let mut spec = TraceSpec::desk();
    spec.seed = cfg.seed;
    let mut traces = vec![generate_trace(&spec)?];
    traces.extend(tiny_instances(cfg, 2, 20));
    let mut skipped = 0;
    for trace in &traces {
        let constants = PriceConstants::compute(&trace.jobs, &trace.cluster)?;
        let c = &trace.cluster;
        let empty = PricingState::new(c.clone(), constants.clone())?;
        let full = exhausted_state(c, constants.clone())?;
        for t in 1..=c.slots {
            for h in 0..c.worker_count() {
                for r in 0..c.resource_count() {
                    let (lo, hi) = (empty.price_worker(h, r, t), full.price_worker(h, r, t));
                    report.check(rel_eq(lo, constants.l1, 1e-12), || format!("worker {h} r {r}: p(0) = {lo}"));
                    report.check(rel_eq(hi, constants.worker_upper(r), 1e-12), || format!("worker {h} r {r}: p(c) = {hi}"));
                }
            }
            for k in 0..c.ps_count() {
                for r in 0..c.resource_count() {
                    let (lo, hi) = (empty.price_ps(k, r, t), full.price_ps(k, r, t));
                    report.check(rel_eq(lo, constants.l2, 1e-12), || format!("ps {k} r {r}: q(0) = {lo}"));
                    report.check(rel_eq(hi, constants.ps_upper(r), 1e-12), || format!("ps {k} r {r}: q(c) = {hi}"));
                }
            }
        }
        for job in &trace.jobs {
            let (rejected, _) = best_schedule(job, &full);
            report.check(rejected.is_none(), || format!("job {} admitted on a full cluster", job.id));
            if !finishable(job, c, &cfg.limits)? {
                skipped += 1;
                continue;
            }
            let (admitted, payoff) = best_schedule(job, &empty);
            report.check(admitted.is_some() && payoff > 0.0, || {
                format!("job {} not admitted on an empty cluster (payoff {payoff})", job.id)
            });
        }
    }
    report.notes.insert(0, format!("{skipped} jobs cannot finish by T alone and were not tested for admission"));
    report.elapsed = started.elapsed();
    Ok(report)
}

/// Adds a job placed on a worker server that is already busy, demanding that
/// server's whole capacity.
pub fn inject_overflow(trace: &Trace, records: &mut Vec<SlotRecord>, outcomes: &mut Vec<JobOutcome>) -> Vec<Job> {
    let mut jobs = trace.jobs.clone();
    let Some(busy) = records.first().cloned() else {
        return jobs;
    };
    let h = busy.allocation.workers.iter().position(|&y| y > 0).unwrap_or(0);
    let mut ghost = trace.jobs[busy.job].clone();
    ghost.id = JobId(u64::MAX);
    ghost.arrival = 1;
    ghost.chunks = 1;
    ghost.worker_demand = trace.cluster.worker_servers[h].clone();
    ghost.ps_bw = ghost.worker_bw;
    let mut workers = vec![0; trace.cluster.worker_count()];
    workers[h] = 1;
    let mut ps = vec![0; trace.cluster.ps_count()];
    ps[0] = 1;
    records.push(SlotRecord {
        slot: busy.slot,
        job: jobs.len(),
        allocation: Allocation { workers, ps },
    });
    outcomes.push(JobOutcome {
        job_id: ghost.id,
        admitted: true,
        completion: None,
        utility: 0.0,
        latency: Duration::ZERO,
    });
    jobs.push(ghost);
    jobs
}

/// Replays a large trace under OASiS and re-checks every schedule and every
/// slot from the placement records alone.
pub fn feasibility(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut report = SuiteReport::new("feasibility");
    let mut spec = TraceSpec::desk();
    spec.seed = cfg.seed;
    spec.job_count = cfg.feasibility_jobs;
    let trace = generate_trace(&spec)?;
    let mut run = simulate(&trace, SchedulerKind::Oasis, &SimOptions::default())?;
    let mut usage = Usage::empty(&trace.cluster);
    let mut engine = Engine::for_population(trace.cluster.clone(), &trace.jobs, 1.0)?;
    for job in &trace.jobs {
        if let Some(s) = engine.on_arrival(job)?.schedule {
            let violations = validate_schedule(&s, job, &trace.cluster, &usage)?;
            report.check(violations.is_empty(), || format!("job {}: {violations:?}", job.id));
            usage.apply(&s, job);
        }
    }
    let jobs = if cfg.inject_overflow {
        inject_overflow(&trace, &mut run.records, &mut run.outcomes)
    } else {
        trace.jobs.clone()
    };
    let audited = audit("oasis", &trace.cluster, &jobs, &run.records, &run.outcomes);
    report.check(audited.is_ok(), || format!("{}", audited.as_ref().unwrap_err()));
    report.notes.insert(
        0,
        format!("{} jobs, {} admitted, {} slot records", trace.jobs.len(), run.report.admitted, run.records.len()),
    );
    report.elapsed = started.elapsed();
    Ok(report)
}

/// Per-admission tally of `alpha * dP >= dD`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityTally {
    pub admissions: usize,
    pub violations: usize,
    /// Smallest `alpha * dP / dD` seen.
    pub tightest: f64,
}

impl Default for DualityTally {
    fn default() -> Self {
        DualityTally {
            admissions: 0,
            violations: 0,
            tightest: f64::INFINITY,
        }
    }
}

impl DualityTally {
    fn record(&mut self, alpha: f64, dp: f64, dd: f64) {
        self.admissions += 1;
        self.tightest = self.tightest.min(alpha * dp / dd);
        if dp < dd / alpha - 1e-9 * dd.abs().max(1.0) {
            self.violations += 1;
        }
    }

    pub fn merge(&mut self, other: &DualityTally) {
        self.admissions += other.admissions;
        self.violations += other.violations;
        self.tightest = self.tightest.min(other.tightest);
    }
}

/// Objective bookkeeping of one engine replay.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualityReplay {
    pub alpha: f64,
    /// With the actual change of the dual objective.
    pub exact: DualityTally,
    /// With the capacity part of the dual change taken as the price
    /// derivative at the pre-admission usage times the allocated amount.
    pub linearized: DualityTally,
    pub arrivals: usize,
    pub dual_below_primal: usize,
    pub recompute_mismatches: usize,
}

/// Dual change if each price moved along its tangent at the current usage.
fn linearized_capacity_delta(state: &PricingState, schedule: &Schedule, job: &Job) -> f64 {
    let k = state.constants();
    let mut delta = 0.0;
    for slot in &schedule.slots {
        for (h, &y) in slot.workers.iter().enumerate() {
            for (r, w) in job.worker_demand.iter().enumerate() {
                if y > 0 && w > 0.0 {
                    delta += k.worker_ratio(r).ln() * state.price_worker(h, r, slot.slot) * w * y as f64;
                }
            }
        }
        for (q, &z) in slot.ps.iter().enumerate() {
            for (r, d) in job.ps_demand.iter().enumerate() {
                if z > 0 && d > 0.0 {
                    delta += k.ps_ratio(r).ln() * state.price_ps(q, r, slot.slot) * d * z as f64;
                }
            }
        }
    }
    delta
}

/// Replays `trace` through the engine and checks the objectives after every arrival.
pub fn replay_duality(trace: &Trace, estimate_scale: f64) -> Result<DualityReplay> {
    let mut out = DualityReplay::default();
    if trace.jobs.is_empty() {
        return Ok(out);
    }
    let mut engine = Engine::for_population(trace.cluster.clone(), &trace.jobs, estimate_scale)?;
    out.alpha = engine.alpha();
    let (p0, d0) = engine.objective_values();
    if d0 < p0 {
        out.dual_below_primal += 1;
    }
    for job in &trace.jobs {
        let (p_before, d_before) = engine.objective_values();
        let before = engine.state().clone();
        let decision = engine.on_arrival(job)?;
        let (p, d) = engine.objective_values();
        out.arrivals += 1;
        if let Some(schedule) = &decision.schedule {
            let dp = p - p_before;
            out.exact.record(out.alpha, dp, d - d_before);
            let tangent = decision.payoff + linearized_capacity_delta(&before, schedule, job);
            out.linearized.record(out.alpha, dp, tangent);
        }
        if d < p {
            out.dual_below_primal += 1;
        }
        let scratch = engine.dual_from_scratch();
        if !(rel_eq(d, scratch, 1e-9) || (d - scratch).abs() < 1e-12) {
            out.recompute_mismatches += 1;
        }
    }
    Ok(out)
}

/// The dual never below the primal, the incremental dual equal to a
/// recomputation, and `alpha * dP` at least the dual change with prices moved
/// along their tangents, on simulated desk traces and tiny instances. The
/// per-admission tally against the actual dual change is noted.
pub fn duality(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut report = SuiteReport::new("duality");
    let mut traces = Vec::new();
    for i in 0..cfg.duality_traces {
        let mut spec = TraceSpec::desk();
        spec.seed = cfg.seed.wrapping_add(i as u64);
        traces.push(("desk", generate_trace(&spec)?));
    }
    traces.extend(tiny_instances(cfg, 3, cfg.oracle_instances).into_iter().map(|t| ("tiny", t)));
    let mut exact = [DualityTally::default(), DualityTally::default()];
    for (i, (kind, trace)) in traces.iter().enumerate() {
        let replay = replay_duality(trace, 1.0)?;
        exact[(*kind == "tiny") as usize].merge(&replay.exact);
        report.check(replay.dual_below_primal == 0, || format!("{kind} trace {i}: D < P"));
        report.check(replay.recompute_mismatches == 0, || format!("{kind} trace {i}: incremental D differs from recomputation"));
        report.check(replay.linearized.violations == 0, || {
            format!("{kind} trace {i}: {} admissions with alpha dP below the tangent dual change", replay.linearized.violations)
        });
    }
    for (name, t) in ["desk", "tiny"].iter().zip(&exact) {
        report.notes.push(format!(
            "{name}: alpha dP < dD in {} of {} admissions (smallest ratio {:.3e})",
            t.violations, t.admissions, t.tightest
        ));
    }
    report.elapsed = started.elapsed();
    Ok(report)
}

/// Ratio of the offline optimum to OASiS's utility on tiny instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub opt: f64,
    pub online: f64,
    pub alpha: f64,
}

impl RatioSample {
    pub fn ratio(&self) -> f64 {
        if self.online > 0.0 {
            self.opt / self.online
        } else if self.opt > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

pub fn ratio_samples(cfg: &VerifyConfig) -> Result<Vec<RatioSample>> {
    tiny_instances(cfg, 4, cfg.competitive_instances)
        .iter()
        .map(|trace| {
            let mut engine = Engine::for_population(trace.cluster.clone(), &trace.jobs, 1.0)?;
            let mut online = 0.0;
            for job in &trace.jobs {
                online += engine.on_arrival(job)?.utility;
            }
            let opt = solve_offline(&trace.jobs, &trace.cluster, &cfg.limits)?.opt;
            Ok(RatioSample {
                opt,
                online,
                alpha: engine.alpha(),
            })
        })
        .collect()
}

/// `OPT / P <= 2 alpha` on every tiny instance; the median ratio is reported.
pub fn competitive(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut report = SuiteReport::new("competitive");
    let samples = ratio_samples(cfg)?;
    for (i, s) in samples.iter().enumerate() {
        report.check(s.ratio() <= 2.0 * s.alpha * (1.0 + 1e-9), || {
            format!("instance {i}: OPT {} / P {} > 2 alpha = {}", s.opt, s.online, 2.0 * s.alpha)
        });
    }
    let mut ratios: Vec<f64> = samples.iter().map(RatioSample::ratio).collect();
    ratios.sort_by(f64::total_cmp);
    if let Some(&median) = ratios.get(ratios.len() / 2) {
        let flag = if median > 1.5 { " (above 1.5)" } else { "" };
        report.notes.insert(0, format!("median ratio {median:.4}{flag}, max {:.4}", ratios[ratios.len() - 1]));
    }
    report.elapsed = started.elapsed();
    Ok(report)
}

pub fn run_all(cfg: &VerifyConfig) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        oracle_equivalence(cfg)?,
        price_boundaries(cfg)?,
        feasibility(cfg)?,
        duality(cfg)?,
        competitive(cfg)?,
    ])
}
