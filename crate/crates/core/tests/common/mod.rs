//! Helpers shared by the integration tests: random instances and
//! brute-force references written independently of the library's search.
#![allow(dead_code)]

use oasis_core::baselines::SlotRecord;
use oasis_core::{
    ClusterSpec, Job, JobId, PriceConstants, PricingState, ResourceVector, Schedule, SlotAssignment,
    UtilityFunction,
};
use rand::Rng;

pub const EPS: f64 = 1e-9;

pub fn fits(used: f64, cap: f64) -> bool {
    used <= cap + EPS * cap.abs().max(1.0)
}

/// Calls `visit` with every vector `v` where `v[i] <= caps[i]`.
pub fn each_vector(caps: &[u32], visit: &mut dyn FnMut(&[u32])) {
    fn go(caps: &[u32], cur: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
        if cur.len() == caps.len() {
            visit(cur);
            return;
        }
        for v in 0..=caps[cur.len()] {
            cur.push(v);
            go(caps, cur, visit);
            cur.pop();
        }
    }
    go(caps, &mut Vec::new(), visit);
}

/// Every way to write `total` as an ordered sum of `parts` non-negative integers.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Cheapest placement of `d` chunk-epochs in slot `t`, trying every integer
/// number of workers and parameter servers on every server.
pub fn brute_force_slot_cost(job: &Job, state: &PricingState, t: u32, d: u32) -> Option<f64> {
    if d == 0 {
        return Some(0.0);
    }
    let c = state.cluster();
    let usage = state.usage();
    let need = oasis_core::workers_needed(d, job);
    if need > job.chunks {
        return None;
    }
    let r = c.resource_count();
    let worker_cost: Vec<f64> = (0..c.worker_count())
        .map(|h| (0..r).map(|q| state.price_worker(h, q, t) * job.worker_demand.get(q)).sum())
        .collect();
    let ps_cost: Vec<f64> = (0..c.ps_count())
        .map(|k| (0..r).map(|q| state.price_ps(k, q, t) * job.ps_demand.get(q)).sum())
        .collect();
    let worker_caps = vec![job.chunks; c.worker_count()];
    let ps_caps = vec![job.chunks; c.ps_count()];
    let mut ps_options: Vec<(u32, f64)> = Vec::new();
    each_vector(&ps_caps, &mut |z| {
        let ok = z.iter().enumerate().all(|(k, &n)| {
            (0..r).all(|q| fits(usage.ps(k, q, t) + job.ps_demand.get(q) * n as f64, c.ps_servers[k].get(q)))
        });
        if ok {
            let cost = z.iter().zip(&ps_cost).map(|(&n, p)| n as f64 * p).sum();
            ps_options.push((z.iter().sum(), cost));
        }
    });
    let mut best: Option<f64> = None;
    each_vector(&worker_caps, &mut |y| {
        let total: u32 = y.iter().sum();
        if total < need || total > job.chunks {
            return;
        }
        let ok = y.iter().enumerate().all(|(h, &n)| {
            (0..r).all(|q| fits(usage.worker(h, q, t) + job.worker_demand.get(q) * n as f64, c.worker_servers[h].get(q)))
        });
        if !ok {
            return;
        }
        let wc: f64 = y.iter().zip(&worker_cost).map(|(&n, p)| n as f64 * p).sum();
        for &(z, pc) in &ps_options {
            let coupled = z <= total && total as f64 * job.worker_bw <= z as f64 * job.ps_bw * (1.0 + EPS);
            if coupled && best.is_none_or(|b| wc + pc < b) {
                best = Some(wc + pc);
            }
        }
    });
    best
}

pub fn random_cluster<R: Rng>(rng: &mut R, slots: u32, h: usize, k: usize) -> ClusterSpec {
    ClusterSpec {
        slots,
        worker_servers: (0..h)
            .map(|_| ResourceVector::new(vec![rng.gen_range(1..=6) as f64, rng.gen_range(2..=10) as f64]))
            .collect(),
        ps_servers: (0..k)
            .map(|_| ResourceVector::new(vec![rng.gen_range(1..=4) as f64, rng.gen_range(2..=10) as f64]))
            .collect(),
        resources: vec!["gpu".into(), "cpu".into()],
        bandwidth: None,
    }
}

pub fn random_job<R: Rng>(rng: &mut R, id: u64, arrival: u32, max_workload: u32) -> Job {
    let chunks = rng.gen_range(1..=max_workload.min(4));
    let epochs = rng.gen_range(1..=(max_workload / chunks).max(1));
    Job {
        id: JobId(id),
        arrival,
        epochs,
        chunks,
        minibatches: rng.gen_range(1..=4),
        tau: rng.gen_range(0.05..0.5),
        exchange_time: rng.gen_range(0.0..0.1),
        worker_bw: rng.gen_range(0.5..2.0),
        ps_bw: rng.gen_range(2.0..4.0),
        worker_demand: ResourceVector::new(vec![rng.gen_range(0..=2) as f64, rng.gen_range(1..=3) as f64]),
        ps_demand: ResourceVector::new(vec![rng.gen_range(0..=1) as f64, rng.gen_range(1..=3) as f64]),
        utility: UtilityFunction::new(
            rng.gen_range(1.0..100.0),
            [0.0, rng.gen_range(0.01..1.0), rng.gen_range(4.0..6.0)][rng.gen_range(0..3)],
            rng.gen_range(1.0..5.0),
        ),
    }
}

/// A state with prices set from `jobs` and random load committed in every slot.
pub fn loaded_state<R: Rng>(rng: &mut R, cluster: &ClusterSpec, jobs: &[Job]) -> PricingState {
    let constants = PriceConstants::compute(jobs, cluster).unwrap();
    let mut state = PricingState::new(cluster.clone(), constants).unwrap();
    for i in 0..rng.gen_range(0..6) {
        let filler = random_job(rng, 1000 + i, 1, 4);
        let t = rng.gen_range(1..=cluster.slots);
        let slot = SlotAssignment {
            slot: t,
            workers: (0..cluster.worker_count()).map(|_| rng.gen_range(0..=1)).collect(),
            ps: (0..cluster.ps_count()).map(|_| rng.gen_range(0..=1)).collect(),
        };
        let schedule = Schedule {
            job_id: filler.id,
            slots: vec![slot],
            deadline: t,
            cost: 0.0,
            payoff: 0.0,
        };
        let _ = state.commit(&schedule, &filler);
    }
    state
}

/// Constraint violations in per-slot records, recomputed from scratch.
pub fn record_violations(cluster: &ClusterSpec, jobs: &[Job], records: &[SlotRecord]) -> Vec<String> {
    let mut out = Vec::new();
    let r = cluster.resource_count();
    let mut worker = std::collections::HashMap::<(u32, usize, usize), f64>::new();
    let mut ps = std::collections::HashMap::<(u32, usize, usize), f64>::new();
    for rec in records {
        let job = &jobs[rec.job];
        let y: u32 = rec.allocation.workers.iter().sum();
        let z: u32 = rec.allocation.ps.iter().sum();
        if y == 0 || y > job.chunks {
            out.push(format!("slot {} job {}: {y} workers", rec.slot, job.id));
        }
        if z > y || (y as f64) * job.worker_bw > (z as f64) * job.ps_bw * (1.0 + EPS) {
            out.push(format!("slot {} job {}: {z} ps for {y} workers", rec.slot, job.id));
        }
        if rec.slot < job.arrival || rec.slot > cluster.slots {
            out.push(format!("slot {} job {}: outside its window", rec.slot, job.id));
        }
        for (h, &n) in rec.allocation.workers.iter().enumerate() {
            for q in 0..r {
                *worker.entry((rec.slot, h, q)).or_default() += job.worker_demand.get(q) * n as f64;
            }
        }
        for (k, &n) in rec.allocation.ps.iter().enumerate() {
            for q in 0..r {
                *ps.entry((rec.slot, k, q)).or_default() += job.ps_demand.get(q) * n as f64;
            }
        }
    }
    for (&(t, h, q), &used) in &worker {
        if !fits(used, cluster.worker_servers[h].get(q)) {
            out.push(format!("slot {t}: worker server {h} resource {q} holds {used}"));
        }
    }
    for (&(t, k, q), &used) in &ps {
        if !fits(used, cluster.ps_servers[k].get(q)) {
            out.push(format!("slot {t}: ps server {k} resource {q} holds {used}"));
        }
    }
    out
}
