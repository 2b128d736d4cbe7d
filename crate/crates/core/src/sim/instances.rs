//! Small random instances that exact solvers can handle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Trace;
use crate::model::{ClusterSpec, Job, JobId, ResourceVector, UtilityFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinySpec {
    pub max_jobs: usize,
    pub max_slots: u32,
    pub max_worker_servers: usize,
    pub max_ps_servers: usize,
    /// Bound on `E * N` per job.
    pub max_workload: u32,
}

impl Default for TinySpec {
    fn default() -> Self {
        TinySpec {
            max_jobs: 5,
            max_slots: 5,
            max_worker_servers: 3,
            max_ps_servers: 3,
            max_workload: 6,
        }
    }
}

fn int_vector<R: Rng>(rng: &mut R, bounds: &[(u32, u32)]) -> ResourceVector {
    ResourceVector(bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi) as f64).collect())
}

/// A cluster with two resources and up to `max_jobs` jobs sorted by arrival.
///
/// Capacities and demands are small integers so servers hold only a few
/// workers, and per-chunk work is drawn around one worker-slot so the number
/// of workers per chunk-epoch varies.
pub fn tiny_instance<R: Rng>(rng: &mut R, spec: &TinySpec) -> Trace {
    let slots = rng.gen_range(1..=spec.max_slots);
    let h = rng.gen_range(1..=spec.max_worker_servers);
    let k = rng.gen_range(1..=spec.max_ps_servers);
    let cluster = ClusterSpec {
        slots,
        worker_servers: (0..h).map(|_| int_vector(rng, &[(1, 4), (2, 8)])).collect(),
        ps_servers: (0..k).map(|_| int_vector(rng, &[(1, 3), (2, 8)])).collect(),
        resources: vec!["gpu".into(), "cpu".into()],
        bandwidth: None,
    };
    let n = rng.gen_range(1..=spec.max_jobs);
    let mut jobs: Vec<Job> = (0..n)
        .map(|_| {
            let chunks = rng.gen_range(1..=spec.max_workload.min(3));
            let epochs = rng.gen_range(1..=(spec.max_workload / chunks).max(1));
            let gamma2 = [0.0, rng.gen_range(0.01..1.0), rng.gen_range(4.0..6.0)][rng.gen_range(0..3)];
            Job {
                id: JobId(0),
                arrival: rng.gen_range(1..=slots),
                epochs,
                chunks,
                minibatches: rng.gen_range(1..=3),
                tau: rng.gen_range(0.1..0.6),
                exchange_time: rng.gen_range(0.0..0.1),
                worker_bw: [1.0, 2.0][rng.gen_range(0..2)],
                ps_bw: [2.0, 4.0][rng.gen_range(0..2)],
                worker_demand: int_vector(rng, &[(1, 2), (1, 3)]),
                ps_demand: int_vector(rng, &[(0, 1), (1, 3)]),
                utility: UtilityFunction::new(rng.gen_range(1.0..100.0), gamma2, rng.gen_range(1.0..5.0)),
            }
        })
        .collect();
    jobs.sort_by_key(|j| j.arrival);
    for (i, job) in jobs.iter_mut().enumerate() {
        job.id = JobId(i as u64);
    }
    Trace { cluster, jobs }
}
