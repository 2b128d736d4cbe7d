mod common;

use common::{brute_force_slot_cost, compositions, loaded_state, random_cluster, random_job};
use oasis_core::{
    best_schedule, cost_t, dp_cost, ClusterSpec, Job, JobId, PriceConstants, PricingState, ResourceVector,
    Schedule, SlotAssignment, UtilityFunction,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn same_cost(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

fn two_server_state() -> (PricingState, Job) {
    let cluster = ClusterSpec {
        slots: 1,
        worker_servers: vec![ResourceVector::new(vec![1.0]), ResourceVector::new(vec![2.0])],
        ps_servers: vec![ResourceVector::new(vec![1.0])],
        resources: vec!["gpu".into()],
        bandwidth: None,
    };
    let constants = PriceConstants {
        u1: vec![4.0],
        u2: vec![4.0],
        l1: 1.0,
        l2: 0.5,
        eta1: 1.0,
        eta2: 1.0,
        estimate_scale: 1.0,
    };
    let mut state = PricingState::new(cluster, constants).unwrap();
    let job = Job {
        id: JobId(0),
        arrival: 1,
        epochs: 1,
        chunks: 2,
        minibatches: 1,
        tau: 1.0,
        exchange_time: 0.0,
        worker_bw: 1.0,
        ps_bw: 2.0,
        worker_demand: ResourceVector::new(vec![1.0]),
        ps_demand: ResourceVector::new(vec![1.0]),
        utility: UtilityFunction::new(100.0, 0.0, 1.0),
    };
    let filler = Schedule {
        job_id: JobId(9),
        slots: vec![SlotAssignment { slot: 1, workers: vec![0, 1], ps: vec![0] }],
        deadline: 1,
        cost: 0.0,
        payoff: 0.0,
    };
    state.commit(&filler, &job).unwrap();
    (state, job)
}

#[test]
fn two_servers_and_one_ps_cost_three_and_a_half() {
    let (state, job) = two_server_state();
    assert!(close(state.price_worker(0, 0, 1), 1.0));
    assert!(close(state.price_worker(1, 0, 1), 2.0));
    assert!(close(state.price_ps(0, 0, 1), 0.5));
    let p = cost_t(&job, &state, 1, 2);
    assert_eq!(p.workers, vec![1, 1]);
    assert_eq!(p.ps, vec![1]);
    assert!(close(p.cost.unwrap(), 3.5));
    assert!(close(brute_force_slot_cost(&job, &state, 1, 2).unwrap(), 3.5));
    assert_eq!(cost_t(&job, &state, 1, 3).cost, None);
}

#[test]
fn two_slot_split_picks_one_and_one() {
    let rows: [[f64; 3]; 2] = [[0.0, 1.0, 3.0], [0.0, 2.0, 5.0]];
    let splits = compositions(2, 2);
    assert_eq!(splits.len(), 3);
    let (best, split) = splits
        .iter()
        .map(|s| (rows[0][s[0] as usize] + rows[1][s[1] as usize], s.clone()))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    assert_eq!(best, 3.0);
    assert!(split == vec![1, 1] || split == vec![2, 0]);
}

fn instance(seed: u64) -> (PricingState, Job) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rand::Rng::gen_range(&mut rng, 1..=4);
    let h = rand::Rng::gen_range(&mut rng, 1..=3);
    let k = rand::Rng::gen_range(&mut rng, 1..=3);
    let cluster = random_cluster(&mut rng, slots, h, k);
    let arrival = rand::Rng::gen_range(&mut rng, 1..=slots);
    let jobs: Vec<Job> = (0..3).map(|i| random_job(&mut rng, i, arrival, 4)).collect();
    let state = loaded_state(&mut rng, &cluster, &jobs);
    (state, jobs[0].clone())
}

/// Cheapest split of `workload` over `arrival..=deadline`, trying every composition.
fn brute_force_dp(job: &Job, state: &PricingState, deadline: u32, workload: u32) -> Option<f64> {
    let parts = (deadline - job.arrival + 1) as usize;
    let per_slot: Vec<Vec<Option<f64>>> = (job.arrival..=deadline)
        .map(|t| (0..=workload).map(|d| brute_force_slot_cost(job, state, t, d)).collect())
        .collect();
    compositions(workload, parts)
        .into_iter()
        .filter_map(|split| {
            split
                .iter()
                .enumerate()
                .map(|(i, &d)| per_slot[i][d as usize])
                .sum::<Option<f64>>()
        })
        .min_by(f64::total_cmp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn greedy_slot_cost_matches_brute_force(seed in any::<u64>(), d in 0u32..=4) {
        let (state, job) = instance(seed);
        let d = d.min(job.workload());
        for t in job.arrival..=state.cluster().slots {
            let greedy = cost_t(&job, &state, t, d);
            let brute = brute_force_slot_cost(&job, &state, t, d);
            prop_assert!(same_cost(greedy.cost, brute), "slot {t} d {d}: {:?} vs {:?}", greedy.cost, brute);
            if let Some(c) = greedy.cost {
                let priced: f64 = greedy.workers.iter().enumerate()
                    .map(|(h, &y)| y as f64 * (0..2).map(|r| state.price_worker(h, r, t) * job.worker_demand.get(r)).sum::<f64>())
                    .sum::<f64>()
                    + greedy.ps.iter().enumerate()
                    .map(|(k, &z)| z as f64 * (0..2).map(|r| state.price_ps(k, r, t) * job.ps_demand.get(r)).sum::<f64>())
                    .sum::<f64>();
                prop_assert!(close(priced, c));
            }
        }
    }

    #[test]
    fn dp_matches_every_composition(seed in any::<u64>()) {
        let (state, job) = instance(seed);
        let workload = job.workload();
        for deadline in job.arrival..=state.cluster().slots.min(job.arrival + 3) {
            let (dp, placements) = dp_cost(&job, &state, deadline, workload);
            let brute = brute_force_dp(&job, &state, deadline, workload);
            prop_assert!(same_cost(dp, brute), "deadline {deadline}: {dp:?} vs {brute:?}");
            if dp.is_some() {
                let sum: f64 = placements.iter().map(|p| p.cost.unwrap()).sum();
                prop_assert!(close(sum, dp.unwrap()));
            }
        }
    }

    #[test]
    fn best_schedule_matches_deadline_enumeration(seed in any::<u64>()) {
        let (state, job) = instance(seed);
        let workload = job.workload();
        let expected = (job.arrival..=state.cluster().slots)
            .filter_map(|t| brute_force_dp(&job, &state, t, workload).map(|c| job.utility_at(t) - c))
            .fold(0.0, f64::max);
        let (schedule, payoff) = best_schedule(&job, &state);
        prop_assert!((payoff - expected).abs() <= 1e-9, "{payoff} vs {expected}");
        prop_assert_eq!(schedule.is_some(), payoff > 0.0);
    }
}
