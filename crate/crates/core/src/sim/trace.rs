//! Synthetic traces: a cluster and a job list drawn from configurable ranges.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, Job, JobClass, JobId, ResourceVector, UtilityFunction};

/// Resource order used by generated clusters.
pub const RESOURCES: [&str; 5] = ["gpu", "vcpu", "memory_gb", "storage_gb", "bandwidth_gbps"];
pub const BANDWIDTH: usize = 4;

/// Inclusive bounds, written `[lo, hi]`.
pub type Span = [f64; 2];
pub type IntSpan = [u32; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    /// Whole GPUs.
    pub gpu: IntSpan,
    /// Whole vCPUs.
    pub vcpu: IntSpan,
    pub memory_gb: Span,
    pub storage_gb: Span,
    pub bandwidth_gbps: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub epochs: IntSpan,
    pub chunks: IntSpan,
    pub minibatches: IntSpan,
    /// Mini-batch training time in slots.
    pub tau: Span,
    pub grad_size_mb: Span,
    /// Shares of insensitive, sensitive and critical jobs.
    pub class_mix: [f64; 3],
    pub sensitive_decay: Span,
    pub critical_decay: Span,
    pub priority: Span,
    /// Target completion time in slots after arrival.
    pub target: Span,
    pub worker: DemandSpec,
    pub ps: DemandSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterTemplate {
    pub worker_servers: usize,
    pub ps_servers: usize,
    /// Candidate `[gpu, vcpu, memory_gb, storage_gb]` capacities for worker servers.
    pub worker_types: Vec<[f64; 4]>,
    pub ps_types: Vec<[f64; 4]>,
    pub bandwidth_gbps: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "weights")]
pub enum ArrivalProfile {
    /// Every slot of the arrival window equally likely.
    #[default]
    Uniform,
    /// Relative arrival intensity per slot, starting at slot 1.
    Weights(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub seed: u64,
    pub slots: u32,
    pub job_count: usize,
    /// Jobs arrive in `1..=arrival_window`; defaults to every slot.
    #[serde(default)]
    pub arrival_window: Option<u32>,
    #[serde(default)]
    pub arrival: ArrivalProfile,
    /// Seconds per slot, for converting gradient transfer times.
    pub slot_seconds: f64,
    pub jobs: JobSpec,
    pub cluster: ClusterTemplate,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec::desk()
    }
}

fn desk_demands() -> (DemandSpec, DemandSpec) {
    (
        DemandSpec {
            gpu: [0, 4],
            vcpu: [1, 10],
            memory_gb: [2.0, 32.0],
            storage_gb: [5.0, 10.0],
            bandwidth_gbps: [0.1, 5.0],
        },
        DemandSpec {
            gpu: [0, 0],
            vcpu: [1, 10],
            memory_gb: [2.0, 32.0],
            storage_gb: [5.0, 10.0],
            bandwidth_gbps: [5.0, 20.0],
        },
    )
}

fn gpu_and_cpu_servers() -> (Vec<[f64; 4]>, Vec<[f64; 4]>) {
    (
        vec![[16.0, 64.0, 732.0, 2000.0], [4.0, 64.0, 488.0, 2000.0]],
        vec![[1.0, 36.0, 60.0, 1000.0]],
    )
}

impl TraceSpec {
    /// Sizes chosen so one decision takes milliseconds and jobs can finish
    /// near their targets: at most 200 chunk-epochs per job, and the fastest
    /// run of a typical job spans a handful of slots.
    pub fn desk() -> Self {
        let (worker, ps) = desk_demands();
        let (worker_types, ps_types) = gpu_and_cpu_servers();
        TraceSpec {
            seed: 1,
            slots: 60,
            job_count: 120,
            arrival_window: None,
            arrival: ArrivalProfile::Uniform,
            slot_seconds: 1200.0,
            jobs: JobSpec {
                epochs: [2, 10],
                chunks: [2, 20],
                minibatches: [10, 50],
                tau: [0.001, 0.05],
                grad_size_mb: [30.0, 575.0],
                class_mix: [0.10, 0.55, 0.35],
                sensitive_decay: [0.01, 1.0],
                critical_decay: [4.0, 6.0],
                priority: [1.0, 100.0],
                target: [1.0, 15.0],
                worker,
                ps,
            },
            cluster: ClusterTemplate {
                worker_servers: 10,
                ps_servers: 6,
                worker_types,
                ps_types,
                bandwidth_gbps: [20.0, 50.0],
            },
        }
    }

    /// The full-size ranges: 50 worker and 50 ps servers, `E` in
    /// `[50, 200]`, `N` in `[5, 100]`, `M` in `[10, 100]`.
    pub fn full_scale() -> Self {
        let mut spec = TraceSpec::desk();
        spec.slots = 300;
        spec.job_count = 1000;
        spec.jobs.epochs = [50, 200];
        spec.jobs.chunks = [5, 100];
        spec.jobs.minibatches = [10, 100];
        spec.jobs.tau = [0.001, 0.1];
        spec.cluster.worker_servers = 50;
        spec.cluster.ps_servers = 50;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Spec(what.to_string()));
        if self.slots == 0 {
            return bad("slots must be >= 1");
        }
        if let Some(w) = self.arrival_window {
            if w == 0 || w > self.slots {
                return bad("arrival_window must lie in [1, slots]");
            }
        }
        if !(self.slot_seconds.is_finite() && self.slot_seconds > 0.0) {
            return bad("slot_seconds must be positive");
        }
        if let ArrivalProfile::Weights(w) = &self.arrival {
            if w.is_empty() || w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return bad("arrival weights must be non-negative with a positive sum");
            }
        }
        let j = &self.jobs;
        for (name, span) in [("epochs", j.epochs), ("chunks", j.chunks), ("minibatches", j.minibatches)] {
            if span[0] == 0 || span[0] > span[1] {
                return Err(Error::Spec(format!("{name} range must be positive and ordered")));
            }
        }
        let positive = [
            ("grad_size_mb", j.grad_size_mb),
            ("priority", j.priority),
            ("sensitive_decay", j.sensitive_decay),
            ("critical_decay", j.critical_decay),
        ];
        for (name, span) in positive {
            if !(span[0] > 0.0 && span[0] <= span[1] && span[1].is_finite()) {
                return Err(Error::Spec(format!("{name} range must be positive and ordered")));
            }
        }
        if !(j.tau[0] >= 0.0 && j.tau[0] <= j.tau[1] && j.tau[1].is_finite()) {
            return bad("tau range must be non-negative and ordered");
        }
        if !(j.target[0] >= 1.0 && j.target[0] <= j.target[1] && j.target[1].is_finite()) {
            return bad("target range must start at >= 1 and be ordered");
        }
        if j.class_mix.iter().any(|x| !x.is_finite() || *x < 0.0) || (j.class_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("class_mix must be non-negative and sum to 1");
        }
        for (name, d) in [("worker", &j.worker), ("ps", &j.ps)] {
            let ordered = d.gpu[0] <= d.gpu[1]
                && d.vcpu[0] <= d.vcpu[1]
                && d.memory_gb[0] >= 0.0
                && d.memory_gb[0] <= d.memory_gb[1]
                && d.storage_gb[0] >= 0.0
                && d.storage_gb[0] <= d.storage_gb[1]
                && d.bandwidth_gbps[0] > 0.0
                && d.bandwidth_gbps[0] <= d.bandwidth_gbps[1];
            if !ordered {
                return Err(Error::Spec(format!("{name} demand ranges must be ordered, bandwidth positive")));
            }
        }
        if j.worker.bandwidth_gbps[1] > j.ps.bandwidth_gbps[0] * j.chunks[0] as f64 {
            return bad("worker bandwidth can exceed what the parameter servers of a job can carry");
        }
        let c = &self.cluster;
        if c.worker_servers == 0 || c.ps_servers == 0 {
            return bad("cluster needs at least one worker server and one ps server");
        }
        if c.worker_types.is_empty() || c.ps_types.is_empty() {
            return bad("cluster needs at least one server type per pool");
        }
        if c.worker_types.iter().chain(&c.ps_types).flatten().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad("server capacities must be positive");
        }
        if !(c.bandwidth_gbps[0] > 0.0 && c.bandwidth_gbps[0] <= c.bandwidth_gbps[1]) {
            return bad("server bandwidth range must be positive and ordered");
        }
        let biggest = |types: &Vec<[f64; 4]>, r: usize| types.iter().map(|t| t[r]).fold(0.0, f64::max);
        let worker_fits = (j.worker.gpu[1] as f64) <= biggest(&c.worker_types, 0)
            && (j.worker.vcpu[1] as f64) <= biggest(&c.worker_types, 1)
            && j.worker.memory_gb[1] <= biggest(&c.worker_types, 2)
            && j.worker.storage_gb[1] <= biggest(&c.worker_types, 3)
            && j.worker.bandwidth_gbps[1] <= c.bandwidth_gbps[0];
        let ps_fits = (j.ps.gpu[1] as f64) <= biggest(&c.ps_types, 0)
            && (j.ps.vcpu[1] as f64) <= biggest(&c.ps_types, 1)
            && j.ps.memory_gb[1] <= biggest(&c.ps_types, 2)
            && j.ps.storage_gb[1] <= biggest(&c.ps_types, 3)
            && j.ps.bandwidth_gbps[1] <= c.bandwidth_gbps[0];
        if !worker_fits || !ps_fits {
            return bad("largest worker or ps demand does not fit on any server");
        }
        Ok(())
    }
}

/// A cluster together with jobs sorted by arrival.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub cluster: ClusterSpec,
    pub jobs: Vec<Job>,
}

fn uniform(rng: &mut ChaCha8Rng, span: Span) -> f64 {
    if span[0] == span[1] {
        span[0]
    } else {
        rng.gen_range(span[0]..=span[1])
    }
}

fn uniform_int(rng: &mut ChaCha8Rng, span: IntSpan) -> u32 {
    rng.gen_range(span[0]..=span[1])
}

fn demand(rng: &mut ChaCha8Rng, d: &DemandSpec) -> ResourceVector {
    ResourceVector(vec![
        uniform_int(rng, d.gpu) as f64,
        uniform_int(rng, d.vcpu) as f64,
        uniform(rng, d.memory_gb),
        uniform(rng, d.storage_gb),
        uniform(rng, d.bandwidth_gbps),
    ])
}

fn server(rng: &mut ChaCha8Rng, types: &[[f64; 4]], bandwidth: Span) -> ResourceVector {
    let t = types[rng.gen_range(0..types.len())];
    ResourceVector(vec![t[0], t[1], t[2], t[3], uniform(rng, bandwidth)])
}

/// Class per job: counts follow the mix by largest remainder, order is shuffled.
fn class_assignment(rng: &mut ChaCha8Rng, mix: [f64; 3], n: usize) -> Vec<JobClass> {
    let exact: Vec<f64> = mix.iter().map(|m| m * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    let classes = [JobClass::Insensitive, JobClass::Sensitive, JobClass::Critical];
    let mut out: Vec<JobClass> = counts
        .iter()
        .zip(classes)
        .flat_map(|(&c, class)| std::iter::repeat_n(class, c))
        .collect();
    out.shuffle(rng);
    out
}

/// Draws a trace; the same spec always yields the same trace.
pub fn generate_trace(spec: &TraceSpec) -> Result<Trace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = &spec.cluster;
    let cluster = ClusterSpec {
        slots: spec.slots,
        worker_servers: (0..c.worker_servers)
            .map(|_| server(&mut rng, &c.worker_types, c.bandwidth_gbps))
            .collect(),
        ps_servers: (0..c.ps_servers)
            .map(|_| server(&mut rng, &c.ps_types, c.bandwidth_gbps))
            .collect(),
        resources: RESOURCES.iter().map(|s| s.to_string()).collect(),
        bandwidth: Some(BANDWIDTH),
    };
    let window = spec.arrival_window.unwrap_or(spec.slots);
    let arrivals = match &spec.arrival {
        ArrivalProfile::Uniform => WeightedIndex::new(vec![1.0; window as usize]),
        ArrivalProfile::Weights(w) => {
            let mut w: Vec<f64> = w.iter().take(window as usize).copied().collect();
            w.resize(window as usize, 0.0);
            WeightedIndex::new(w)
        }
    }
    .map_err(|e| Error::Spec(format!("arrival profile: {e}")))?;
    let j = &spec.jobs;
    let classes = class_assignment(&mut rng, j.class_mix, spec.job_count);
    let mut jobs: Vec<Job> = classes
        .into_iter()
        .map(|class| {
            let arrival = arrivals.sample(&mut rng) as u32 + 1;
            let worker_demand = demand(&mut rng, &j.worker);
            let ps_demand = demand(&mut rng, &j.ps);
            let worker_bw = worker_demand.get(BANDWIDTH);
            let ps_bw = ps_demand.get(BANDWIDTH);
            let grad_mb = uniform(&mut rng, j.grad_size_mb);
            let gamma2 = match class {
                JobClass::Insensitive => 0.0,
                JobClass::Sensitive => uniform(&mut rng, j.sensitive_decay),
                JobClass::Critical => uniform(&mut rng, j.critical_decay),
            };
            Job {
                id: JobId(0),
                arrival,
                epochs: uniform_int(&mut rng, j.epochs),
                chunks: uniform_int(&mut rng, j.chunks),
                minibatches: uniform_int(&mut rng, j.minibatches),
                tau: uniform(&mut rng, j.tau),
                exchange_time: grad_mb * 8.0 / 1000.0 / worker_bw / spec.slot_seconds,
                worker_bw,
                ps_bw,
                worker_demand,
                ps_demand,
                utility: UtilityFunction::new(
                    uniform(&mut rng, j.priority),
                    gamma2,
                    uniform(&mut rng, j.target),
                ),
            }
        })
        .collect();
    jobs.sort_by_key(|job| job.arrival);
    for (i, job) in jobs.iter_mut().enumerate() {
        job.id = JobId(i as u64);
    }
    for job in &jobs {
        job.validate(&cluster)?;
    }
    Ok(Trace { cluster, jobs })
}

impl Trace {
    /// Largest ratio, over resources, of total requested worker resource-slots
    /// to worker capacity over the horizon.
    pub fn load_factor(&self) -> f64 {
        let c = &self.cluster;
        (0..c.resource_count())
            .map(|r| {
                let demand: f64 = self
                    .jobs
                    .iter()
                    .map(|j| j.total_work() * j.worker_demand.get(r))
                    .sum();
                let cap: f64 = c.worker_servers.iter().map(|s| s.get(r)).sum::<f64>() * c.slots as f64;
                demand / cap
            })
            .fold(0.0, f64::max)
    }
}
