//! Best schedule for one job under frozen prices.
//!
//! For every candidate deadline the job's `E * N` chunk-epochs are split over
//! the slots from arrival to deadline by dynamic programming. The cost of
//! training `d` chunk-epochs in one slot comes from a greedy placement that
//! fills the cheapest servers first. The deadline maximizing utility minus
//! cost wins.

use crate::model::{workers_needed, Job, Schedule, SlotAssignment};
use crate::num::{floor_tol, le_tol};
use crate::pricing::PricingState;

/// Placement of `d` chunk-epochs in one slot. `cost` is `None` when they do not fit.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotPlacement {
    pub slot: u32,
    pub workers: Vec<u32>,
    pub ps: Vec<u32>,
    pub cost: Option<f64>,
}

impl SlotPlacement {
    pub fn feasible(&self) -> bool {
        self.cost.is_some()
    }
}

#[derive(Clone, Copy, Debug)]
struct Offer {
    server: usize,
    unit: f64,
    cap: u32,
}

/// Per-slot server offers sorted by price per instance, ties by index.
#[derive(Clone, Debug)]
pub(crate) struct SlotMenu {
    slot: u32,
    workers: Vec<Offer>,
    ps: Vec<Offer>,
    worker_servers: usize,
    ps_servers: usize,
}

fn sort_offers(offers: &mut [Offer]) {
    offers.sort_by(|a, b| a.unit.total_cmp(&b.unit).then(a.server.cmp(&b.server)));
}

/// Instances that still fit, `min_r floor((c - used) / demand)` over demanded resources.
fn instances_fit(limit: u32, demand: impl Iterator<Item = (f64, f64)>) -> u32 {
    let mut cap = limit as u64;
    for (need, residual) in demand {
        if need > 0.0 {
            cap = cap.min(floor_tol(residual / need));
        }
    }
    cap as u32
}

impl SlotMenu {
    pub(crate) fn new(job: &Job, state: &PricingState, t: u32) -> Self {
        let cluster = state.cluster();
        let usage = state.usage();
        let r_count = cluster.resource_count();
        let mut workers: Vec<Offer> = cluster
            .worker_servers
            .iter()
            .enumerate()
            .map(|(h, cap)| {
                let unit = (0..r_count)
                    .map(|r| state.price_worker(h, r, t) * job.worker_demand.get(r))
                    .sum();
                let fit = instances_fit(
                    job.chunks,
                    (0..r_count).map(|r| (job.worker_demand.get(r), cap.get(r) - usage.worker(h, r, t))),
                );
                Offer {
                    server: h,
                    unit,
                    cap: fit,
                }
            })
            .collect();
        let mut ps: Vec<Offer> = cluster
            .ps_servers
            .iter()
            .enumerate()
            .map(|(k, cap)| {
                let unit = (0..r_count)
                    .map(|r| state.price_ps(k, r, t) * job.ps_demand.get(r))
                    .sum();
                let fit = instances_fit(
                    job.chunks,
                    (0..r_count).map(|r| (job.ps_demand.get(r), cap.get(r) - usage.ps(k, r, t))),
                );
                Offer {
                    server: k,
                    unit,
                    cap: fit,
                }
            })
            .collect();
        sort_offers(&mut workers);
        sort_offers(&mut ps);
        SlotMenu {
            slot: t,
            workers,
            ps,
            worker_servers: cluster.worker_count(),
            ps_servers: cluster.ps_count(),
        }
    }

    /// Greedy fill; writes counts into `out` when given.
    fn fill(&self, job: &Job, d: u32, mut out: Option<(&mut [u32], &mut [u32])>) -> Option<f64> {
        let need = workers_needed(d, job);
        if need == 0 {
            return Some(0.0);
        }
        let mut cost = 0.0;
        let mut placed = 0u32;
        for offer in &self.workers {
            if placed == need {
                break;
            }
            let y = offer.cap.min(job.chunks - placed).min(need - placed);
            if y == 0 {
                continue;
            }
            placed += y;
            cost += offer.unit * y as f64;
            if let Some((ys, _)) = out.as_mut() {
                ys[offer.server] = y;
            }
        }
        if placed < need {
            return None;
        }
        let target = job.ps_needed(placed);
        let mut ps_placed = 0u32;
        for offer in &self.ps {
            let z = offer
                .cap
                .min(target.saturating_sub(ps_placed))
                .min(placed - ps_placed);
            if z == 0 {
                continue;
            }
            ps_placed += z;
            cost += offer.unit * z as f64;
            if let Some((_, zs)) = out.as_mut() {
                zs[offer.server] = z;
            }
        }
        if !le_tol(placed as f64 * job.worker_bw, ps_placed as f64 * job.ps_bw) {
            return None;
        }
        Some(cost)
    }

    pub(crate) fn cost(&self, job: &Job, d: u32) -> Option<f64> {
        self.fill(job, d, None)
    }

    pub(crate) fn place(&self, job: &Job, d: u32) -> SlotPlacement {
        let mut workers = vec![0; self.worker_servers];
        let mut ps = vec![0; self.ps_servers];
        let cost = self.fill(job, d, Some((&mut workers, &mut ps)));
        if cost.is_none() {
            workers.iter_mut().for_each(|y| *y = 0);
            ps.iter_mut().for_each(|z| *z = 0);
        }
        SlotPlacement {
            slot: self.slot,
            workers,
            ps,
            cost,
        }
    }
}

/// Cheapest placement of `d` chunk-epochs of `job` in slot `t`.
pub fn cost_t(job: &Job, state: &PricingState, t: u32, d: u32) -> SlotPlacement {
    SlotMenu::new(job, state, t).place(job, d)
}

/// Minimum cost of spreading workload over the slots `first..=last`.
///
/// Entry `(t, w)` holds the best cost of `w` chunk-epochs over `first..=t`
/// and the amount placed at `t`. Equal-cost splits put the most work at `t`.
#[derive(Clone, Debug)]
pub struct DpTable {
    first: u32,
    workload: usize,
    rows: Vec<Vec<Option<f64>>>,
    best: Vec<Vec<Option<(f64, u32)>>>,
}

impl DpTable {
    /// Builds the table from per-slot cost rows; `rows[i][d]` is the cost of
    /// `d` chunk-epochs in slot `first + i`, `None` when infeasible.
    pub fn from_costs(first: u32, rows: Vec<Vec<Option<f64>>>, workload: usize) -> Self {
        let mut best: Vec<Vec<Option<(f64, u32)>>> = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut cur = vec![None; workload + 1];
            if i == 0 {
                for (w, slot) in cur.iter_mut().enumerate() {
                    *slot = row.get(w).copied().flatten().map(|c| (c, w as u32));
                }
            } else {
                let prev = &best[i - 1];
                for (w, slot) in cur.iter_mut().enumerate() {
                    let mut pick: Option<(f64, u32)> = None;
                    for d in 0..=w {
                        let Some(here) = row.get(d).copied().flatten() else {
                            // Infeasibility is monotone in d.
                            break;
                        };
                        if let Some((before, _)) = prev[w - d] {
                            let total = here + before;
                            if pick.is_none_or(|(c, _)| total <= c) {
                                pick = Some((total, d as u32));
                            }
                        }
                    }
                    *slot = pick;
                }
            }
            best.push(cur);
        }
        DpTable {
            first,
            workload,
            rows,
            best,
        }
    }

    fn build(job: &Job, state: &PricingState) -> (Self, Vec<SlotMenu>) {
        let workload = job.workload() as usize;
        let last = state.cluster().slots;
        let mut menus = Vec::new();
        let mut rows = Vec::new();
        for t in job.arrival..=last {
            let menu = SlotMenu::new(job, state, t);
            let mut row = Vec::with_capacity(workload + 1);
            for d in 0..=workload {
                let c = menu.cost(job, d as u32);
                let stop = c.is_none();
                row.push(c);
                if stop {
                    break;
                }
            }
            rows.push(row);
            menus.push(menu);
        }
        (DpTable::from_costs(job.arrival, rows, workload), menus)
    }

    pub fn first_slot(&self) -> u32 {
        self.first
    }

    pub fn last_slot(&self) -> u32 {
        self.first + self.rows.len() as u32 - 1
    }

    /// Best cost of `w` chunk-epochs finishing by `t`.
    pub fn cost(&self, t: u32, w: usize) -> Option<f64> {
        if t < self.first || w > self.workload {
            return None;
        }
        self.best
            .get((t - self.first) as usize)?
            .get(w)
            .copied()
            .flatten()
            .map(|(c, _)| c)
    }

    /// Chunk-epochs per slot `first..=t` of the arg-min split.
    pub fn split(&self, t: u32, w: usize) -> Option<Vec<u32>> {
        self.cost(t, w)?;
        let mut out = vec![0; (t - self.first + 1) as usize];
        let mut remaining = w;
        for i in (0..out.len()).rev() {
            let (_, d) = self.best[i][remaining]?;
            out[i] = d;
            remaining -= d as usize;
        }
        Some(out)
    }
}

/// Minimum-cost split of `workload` over `arrival..=deadline` with its placements.
pub fn dp_cost(
    job: &Job,
    state: &PricingState,
    deadline: u32,
    workload: u32,
) -> (Option<f64>, Vec<SlotPlacement>) {
    if deadline < job.arrival || deadline > state.cluster().slots {
        return (None, Vec::new());
    }
    let workload = workload as usize;
    let menus: Vec<SlotMenu> = (job.arrival..=deadline)
        .map(|t| SlotMenu::new(job, state, t))
        .collect();
    let rows = menus
        .iter()
        .map(|m| (0..=workload).map(|d| m.cost(job, d as u32)).collect())
        .collect();
    let table = DpTable::from_costs(job.arrival, rows, workload);
    let cost = table.cost(deadline, workload);
    let placements = match table.split(deadline, workload) {
        Some(split) => menus
            .iter()
            .zip(split)
            .filter(|(_, d)| *d > 0)
            .map(|(m, d)| m.place(job, d))
            .collect(),
        None => Vec::new(),
    };
    (cost, placements)
}

/// Plain recursion over the same recurrence with no caching at all.
pub fn dp_cost_unmemoized(job: &Job, state: &PricingState, deadline: u32, workload: u32) -> Option<f64> {
    if deadline < job.arrival || deadline > state.cluster().slots {
        return None;
    }
    fn go(job: &Job, state: &PricingState, t: u32, w: u32) -> Option<f64> {
        if t == job.arrival {
            return cost_t(job, state, t, w).cost;
        }
        let mut pick: Option<f64> = None;
        for d in 0..=w {
            let Some(here) = cost_t(job, state, t, d).cost else {
                break;
            };
            if let Some(before) = go(job, state, t - 1, w - d) {
                let total = here + before;
                if pick.is_none_or(|c| total <= c) {
                    pick = Some(total);
                }
            }
        }
        pick
    }
    go(job, state, deadline, workload)
}

/// Payoff-maximizing schedule, or `None` with payoff 0 when no deadline pays.
pub fn best_schedule(job: &Job, state: &PricingState) -> (Option<Schedule>, f64) {
    if job.arrival == 0 || job.arrival > state.cluster().slots {
        return (None, 0.0);
    }
    let workload = job.workload() as usize;
    let (table, menus) = DpTable::build(job, state);
    let mut best: Option<(u32, f64, f64)> = None;
    let mut best_payoff = 0.0;
    for t in job.arrival..=state.cluster().slots {
        let Some(cost) = table.cost(t, workload) else {
            continue;
        };
        let payoff = job.utility_at(t) - cost;
        if payoff > best_payoff {
            best_payoff = payoff;
            best = Some((t, cost, payoff));
        }
    }
    let Some((deadline, cost, payoff)) = best else {
        return (None, 0.0);
    };
    let split = table
        .split(deadline, workload)
        .expect("split exists when cost exists");
    let slots = menus
        .iter()
        .zip(split)
        .filter(|(_, d)| *d > 0)
        .map(|(m, d)| {
            let p = m.place(job, d);
            SlotAssignment {
                slot: p.slot,
                workers: p.workers,
                ps: p.ps,
            }
        })
        .collect();
    let schedule = Schedule {
        job_id: job.id,
        slots,
        deadline,
        cost,
        payoff,
    };
    (Some(schedule), payoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{cluster, job};
    use crate::model::{validate_schedule, ClusterSpec, JobId, ResourceVector, UtilityFunction};
    use crate::pricing::PriceConstants;
    use proptest::prelude::*;

    fn state_for(c: ClusterSpec, jobs: &[Job]) -> PricingState {
        let k = PriceConstants::compute(jobs, &c).unwrap();
        PricingState::new(c, k).unwrap()
    }

    #[test]
    fn zero_workload_is_free() {
        let j = job(1, 1);
        let st = state_for(cluster(3, 2, 1), std::slice::from_ref(&j));
        let p = cost_t(&j, &st, 1, 0);
        assert_eq!(p.cost, Some(0.0));
        assert!(p.workers.iter().chain(&p.ps).all(|&x| x == 0));
        let (c, placements) = dp_cost(&j, &st, 2, 0);
        assert_eq!(c, Some(0.0));
        assert!(placements.is_empty());
    }

    #[test]
    fn too_much_workload_is_infeasible() {
        let mut j = job(1, 1);
        j.chunks = 100;
        j.minibatches = 1;
        j.tau = 1.0;
        j.exchange_time = 0.0;
        let st = state_for(cluster(3, 2, 1), std::slice::from_ref(&j));
        // Two servers with 8 GPUs each hold 16 workers.
        assert!(cost_t(&j, &st, 1, 16).feasible());
        assert!(!cost_t(&j, &st, 1, 17).feasible());
    }

    #[test]
    fn dp_over_fixed_costs() {
        let rows = vec![
            vec![Some(0.0), Some(1.0), Some(3.0)],
            vec![Some(0.0), Some(2.0), Some(5.0)],
        ];
        let t = DpTable::from_costs(1, rows, 2);
        assert_eq!(t.cost(2, 2), Some(3.0));
        assert_eq!(t.split(2, 2), Some(vec![1, 1]));
        assert_eq!(t.cost(1, 2), Some(3.0));
        assert_eq!(t.split(1, 2), Some(vec![2]));
    }

    #[test]
    fn dp_skips_infeasible_entries() {
        let rows = vec![vec![Some(0.0), Some(1.0), None], vec![Some(0.0), None, None]];
        let t = DpTable::from_costs(3, rows, 2);
        assert_eq!(t.cost(4, 2), None);
        assert_eq!(t.cost(4, 1), Some(1.0));
        assert_eq!(t.split(4, 1), Some(vec![1, 0]));
        assert_eq!(t.last_slot(), 4);
    }

    fn flat_cluster() -> ClusterSpec {
        ClusterSpec {
            slots: 4,
            worker_servers: vec![ResourceVector(vec![4.0]); 2],
            ps_servers: vec![ResourceVector(vec![4.0])],
            resources: vec!["gpu".into()],
            bandwidth: None,
        }
    }

    fn flat_job(gamma2: f64) -> Job {
        Job {
            id: JobId(7),
            arrival: 1,
            epochs: 1,
            chunks: 4,
            minibatches: 1,
            tau: 1.0,
            exchange_time: 0.0,
            worker_bw: 1.0,
            ps_bw: 4.0,
            worker_demand: ResourceVector(vec![1.0]),
            ps_demand: ResourceVector(vec![1.0]),
            utility: UtilityFunction::new(100.0, gamma2, 1.0),
        }
    }

    #[test]
    fn empty_cluster_schedule_is_valid_and_positive() {
        let j = flat_job(1.0);
        let st = state_for(flat_cluster(), std::slice::from_ref(&j));
        let (s, mu) = best_schedule(&j, &st);
        let s = s.unwrap();
        assert!(mu > 0.0);
        assert_eq!(s.payoff, mu);
        assert!(validate_schedule(&s, &j, st.cluster(), st.usage()).unwrap().is_empty());
        assert_eq!(s.completion(), Some(s.deadline));
        // Decaying utility and free capacity: finish in the arrival slot.
        assert_eq!(s.deadline, 1);
    }

    #[test]
    fn constant_utility_prefers_earliest_deadline() {
        let j = flat_job(0.0);
        let st = state_for(flat_cluster(), std::slice::from_ref(&j));
        let (s, _) = best_schedule(&j, &st);
        assert_eq!(s.unwrap().deadline, 1);
    }

    #[test]
    fn expensive_job_is_rejected() {
        let j = flat_job(1.0);
        let st = state_for(flat_cluster(), std::slice::from_ref(&j));
        let mut poor = j.clone();
        poor.utility = UtilityFunction::new(1e-6, 1.0, 1.0);
        assert_eq!(best_schedule(&poor, &st), (None, 0.0));
        let mut late = j;
        late.arrival = 5;
        assert_eq!(best_schedule(&late, &st), (None, 0.0));
    }

    #[test]
    fn memo_and_plain_recursion_agree() {
        let j = job(1, 2);
        let st = state_for(cluster(4, 2, 2), std::slice::from_ref(&j));
        for deadline in 2..=4 {
            for w in 0..=j.workload() {
                let (memo, _) = dp_cost(&j, &st, deadline, w);
                let plain = dp_cost_unmemoized(&j, &st, deadline, w);
                assert_eq!(memo.map(f64::to_bits), plain.map(f64::to_bits));
            }
        }
    }

    proptest! {
        #[test]
        fn placements_sum_to_workers_needed(d in 0u32..6, used in 0.0f64..6.0) {
            let j = job(1, 1);
            let mut st = state_for(cluster(2, 2, 1), std::slice::from_ref(&j));
            let pre = Schedule {
                job_id: j.id,
                slots: vec![SlotAssignment { slot: 1, workers: vec![used as u32, 0], ps: vec![0] }],
                deadline: 1,
                cost: 0.0,
                payoff: 0.0,
            };
            st.commit(&pre, &j).unwrap();
            let p = cost_t(&j, &st, 1, d);
            if p.feasible() {
                let y: u32 = p.workers.iter().sum();
                let z: u32 = p.ps.iter().sum();
                prop_assert_eq!(y, workers_needed(d, &j));
                prop_assert!(z >= j.ps_needed(y) && z <= y);
            }
        }
    }
}
