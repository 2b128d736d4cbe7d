mod common;

use common::{random_cluster, random_job};
use oasis_core::{
    ClusterSpec, Job, JobId, PriceConstants, PricingState, ResourceVector, Schedule, SlotAssignment, UtilityFunction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn one_resource(slots: u32, cap: f64) -> ClusterSpec {
    ClusterSpec {
        slots,
        worker_servers: vec![ResourceVector::new(vec![cap])],
        ps_servers: vec![ResourceVector::new(vec![cap])],
        resources: vec!["gpu".into()],
        bandwidth: None,
    }
}

fn flat_job(id: u64, value: f64) -> Job {
    Job {
        id: JobId(id),
        arrival: 1,
        epochs: 5,
        chunks: 1,
        minibatches: 1,
        tau: 1.0,
        exchange_time: 0.0,
        worker_bw: 1.0,
        ps_bw: 1.0,
        worker_demand: ResourceVector::new(vec![2.0]),
        ps_demand: ResourceVector::new(vec![2.0]),
        utility: UtilityFunction::new(2.0 * value, 0.0, 1.0),
    }
}

#[test]
fn single_flat_job() {
    let k = PriceConstants::compute(&[flat_job(0, 10.0)], &one_resource(1, 2.0)).unwrap();
    assert_eq!(k.eta1, 1.0);
    assert!(rel_close(k.u1[0], 5.0, 1e-12));
    assert!(rel_close(k.l1, 0.25, 1e-12));
}

#[test]
fn bounds_come_from_the_extreme_jobs() {
    let jobs = [flat_job(0, 10.0), flat_job(1, 40.0)];
    let k = PriceConstants::compute(&jobs, &one_resource(1, 2.0)).unwrap();
    assert!(rel_close(k.u1[0], 20.0, 1e-12));
    assert!(rel_close(k.l1, 0.25, 1e-12));
}

struct Reference {
    u1: Vec<f64>,
    u2: Vec<f64>,
    l1: f64,
    l2: f64,
    eta1: f64,
    eta2: f64,
}

/// Straight evaluation of the bound definitions, one job at a time.
/// Elapsed slots of the fastest run: every chunk trains in parallel.
fn fastest(j: &Job) -> f64 {
    let per_batch = j.tau + 2.0 * j.exchange_time;
    (j.epochs as f64 * j.minibatches as f64 * per_batch - 1e-9).ceil().max(1.0) - 1.0
}

fn reference(jobs: &[Job], cluster: &ClusterSpec) -> Reference {
    let t = cluster.slots;
    let r = cluster.resource_count();
    let cap1: f64 = cluster.worker_servers.iter().flat_map(|c| c.iter()).sum::<f64>() * t as f64;
    let cap2: f64 = cluster.ps_servers.iter().flat_map(|c| c.iter()).sum::<f64>() * t as f64;
    let f = |j: &Job, elapsed: f64| j.utility.gamma1 / (1.0 + (j.utility.gamma2 * (elapsed - j.utility.gamma3)).exp());
    let work = |j: &Job| {
        let per_batch = j.tau + 2.0 * j.exchange_time;
        (j.epochs as f64 * j.chunks as f64 * j.minibatches as f64 * per_batch - 1e-9).ceil().max(1.0)
    };
    let mut out = Reference { u1: vec![0.0; r], u2: vec![0.0; r], l1: f64::INFINITY, l2: f64::INFINITY, eta1: 1.0, eta2: 1.0 };
    for j in jobs {
        let w: f64 = j.worker_demand.iter().sum();
        let s: f64 = j.ps_demand.iter().sum();
        out.eta1 = out.eta1.max(cap1 / (work(j) * w));
        out.eta2 = out.eta2.max(cap2 / (work(j) * s));
        for q in 0..r {
            if j.worker_demand.get(q) > 0.0 {
                out.u1[q] = out.u1[q].max(f(j, fastest(j)) / j.worker_demand.get(q));
            }
            if j.ps_demand.get(q) > 0.0 {
                out.u2[q] = out.u2[q].max(f(j, fastest(j)) / j.ps_demand.get(q));
            }
        }
    }
    for j in jobs {
        let end = f(j, (t - j.arrival) as f64);
        out.l1 = out.l1.min(end / (4.0 * out.eta1 * work(j) * j.worker_demand.iter().sum::<f64>()));
        out.l2 = out.l2.min(end / (4.0 * out.eta2 * work(j) * j.ps_demand.iter().sum::<f64>()));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn constants_match_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = rng.gen_range(1..=6);
        let (h, k) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let cluster = random_cluster(&mut rng, slots, h, k);
        let jobs: Vec<Job> = (0..5)
            .map(|i| {
                let arrival = rng.gen_range(1..=slots);
                random_job(&mut rng, i, arrival, 6)
            })
            .collect();
        let k = PriceConstants::compute(&jobs, &cluster).unwrap();
        let want = reference(&jobs, &cluster);
        prop_assert!(rel_close(k.eta1, want.eta1, 1e-12));
        prop_assert!(rel_close(k.eta2, want.eta2, 1e-12));
        prop_assert!(rel_close(k.l1, want.l1, 1e-12));
        prop_assert!(rel_close(k.l2, want.l2, 1e-12));
        // A job that cannot finish by T has f(fastest) < f(T - a), so U may fall below L.
        let finishable = jobs.iter().all(|j| fastest(j) <= (slots - j.arrival) as f64);
        for q in 0..2 {
            if want.u1[q] > 0.0 {
                prop_assert!(rel_close(k.u1[q], want.u1[q], 1e-12));
            }
            if want.u2[q] > 0.0 {
                prop_assert!(rel_close(k.u2[q], want.u2[q], 1e-12));
            }
            prop_assert!(!finishable || (k.u1[q] > k.l1 && k.u2[q] > k.l2));
        }
        // The scaling factors are the smallest at least 1 that satisfy every job.
        let binding = jobs.iter().any(|j| {
            let work = (j.total_work() - 1e-9).ceil().max(1.0);
            rel_close(k.eta1, cluster.worker_capacity_volume() / (work * j.worker_demand.sum()), 1e-12)
        });
        prop_assert!(k.eta1 == 1.0 || binding);
    }

    #[test]
    fn price_rises_from_lower_to_upper(seed in any::<u64>(), steps in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cluster = random_cluster(&mut rng, 1, 1, 1);
        let jobs: Vec<Job> = (0..3).map(|i| random_job(&mut rng, i, 1, 4)).collect();
        let k = PriceConstants::compute(&jobs, &cluster).unwrap();
        let mut state = PricingState::new(cluster.clone(), k.clone()).unwrap();
        prop_assert!(rel_close(state.price_worker(0, 1, 1), k.l1, 1e-12));
        let unit = Job {
            worker_demand: ResourceVector::new(vec![0.0, cluster.worker_servers[0].get(1) / steps as f64]),
            ps_demand: ResourceVector::new(vec![0.0, 0.0]),
            ..jobs[0].clone()
        };
        let one = Schedule {
            job_id: JobId(99),
            slots: vec![SlotAssignment { slot: 1, workers: vec![1], ps: vec![0] }],
            deadline: 1,
            cost: 0.0,
            payoff: 0.0,
        };
        let mut last = state.price_worker(0, 1, 1);
        for _ in 0..steps {
            state.commit(&one, &unit).unwrap();
            let now = state.price_worker(0, 1, 1);
            prop_assert!(now > last);
            last = now;
        }
        prop_assert!(rel_close(last, k.u1[1], 1e-12));
        prop_assert!(state.commit(&one, &unit).is_err());
        prop_assert!(rel_close(state.price_worker(0, 1, 1), last, 0.0));
    }

    #[test]
    fn usage_is_the_sum_of_committed_demands(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = rng.gen_range(1..=4);
        let cluster = random_cluster(&mut rng, slots, 2, 2);
        let jobs: Vec<Job> = (0..3).map(|i| random_job(&mut rng, i, 1, 4)).collect();
        let k = PriceConstants::compute(&jobs, &cluster).unwrap();
        let mut state = PricingState::new(cluster.clone(), k).unwrap();
        let mut expected = vec![0.0; (slots as usize + 1) * 2 * 2];
        for j in &jobs {
            let t = rng.gen_range(1..=slots);
            let workers = vec![rng.gen_range(0..=2), rng.gen_range(0..=2)];
            let s = Schedule {
                job_id: j.id,
                slots: vec![SlotAssignment { slot: t, workers: workers.clone(), ps: vec![0, 0] }],
                deadline: t,
                cost: 0.0,
                payoff: 0.0,
            };
            if state.commit(&s, j).is_ok() {
                for (h, &y) in workers.iter().enumerate() {
                    for q in 0..2 {
                        expected[(t as usize * 2 + h) * 2 + q] += j.worker_demand.get(q) * y as f64;
                    }
                }
            }
        }
        for t in 1..=slots {
            for h in 0..2 {
                for q in 0..2 {
                    let used = state.usage().worker(h, q, t);
                    prop_assert_eq!(used, expected[(t as usize * 2 + h) * 2 + q]);
                    prop_assert!(used <= cluster.worker_servers[h].get(q) + 1e-9);
                }
            }
        }
    }
}

