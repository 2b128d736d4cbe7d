//! Exact solvers for small instances.
//!
//! Both solvers count workers per slot rather than chunk-epochs: `n` workers in
//! one slot train at most `chunks_supported(n)` chunk-epochs, the largest `d`
//! with `workers_needed(d) <= n`, and a job is done once those add up to `E * N`.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{workers_needed, ClusterSpec, Job, ResourceVector, Schedule, SlotAssignment};
use crate::num::{floor_tol, le_tol};
use crate::pricing::PricingState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_jobs: usize,
    pub max_slots: u32,
    /// Bound on `H + K`.
    pub max_servers: usize,
    /// Bound on `E * N` per job.
    pub max_workload: u32,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_jobs: 6,
            max_slots: 6,
            max_servers: 6,
            max_workload: 6,
        }
    }
}

impl OracleLimits {
    fn check(&self, jobs: &[Job], cluster: &ClusterSpec) -> Result<()> {
        if jobs.len() > self.max_jobs {
            return Err(Error::SizeLimit(format!("{} jobs > {}", jobs.len(), self.max_jobs)));
        }
        self.check_cluster(cluster)?;
        for job in jobs {
            self.check_job(job)?;
        }
        Ok(())
    }

    fn check_cluster(&self, cluster: &ClusterSpec) -> Result<()> {
        if cluster.slots > self.max_slots {
            return Err(Error::SizeLimit(format!("T = {} > {}", cluster.slots, self.max_slots)));
        }
        let servers = cluster.worker_count() + cluster.ps_count();
        if servers > self.max_servers {
            return Err(Error::SizeLimit(format!("H + K = {servers} > {}", self.max_servers)));
        }
        Ok(())
    }

    fn check_job(&self, job: &Job) -> Result<()> {
        if job.workload() > self.max_workload {
            return Err(Error::SizeLimit(format!(
                "job {} workload {} > {}",
                job.id,
                job.workload(),
                self.max_workload
            )));
        }
        Ok(())
    }
}

/// Largest `d <= E * N` with `workers_needed(d) <= n`.
pub fn chunks_supported(n: u32, job: &Job) -> u32 {
    let mut d = 0;
    while d < job.workload() && workers_needed(d + 1, job) <= n {
        d += 1;
    }
    d
}

/// Calls `visit` with every vector in `0..=caps[i]` per position.
fn for_each_vector(caps: &[u32], visit: &mut impl FnMut(&[u32])) {
    fn go(caps: &[u32], cur: &mut Vec<u32>, visit: &mut impl FnMut(&[u32])) {
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
    go(caps, &mut Vec::with_capacity(caps.len()), visit);
}

fn fits(limit: u32, demand: &ResourceVector, residual: impl Fn(usize) -> f64) -> u32 {
    let mut cap = limit as u64;
    for (r, need) in demand.iter().enumerate() {
        if need > 0.0 {
            cap = cap.min(floor_tol(residual(r) / need));
        }
    }
    cap as u32
}

/// Maximum payoff over every feasible placement, by brute force; 0 when none pays.
pub fn exhaustive_best_schedule(job: &Job, state: &PricingState, limits: &OracleLimits) -> Result<f64> {
    let cluster = state.cluster();
    limits.check_cluster(cluster)?;
    limits.check_job(job)?;
    if job.arrival == 0 || job.arrival > cluster.slots {
        return Ok(0.0);
    }
    let usage = state.usage();
    let n_max = job.chunks;
    let mut per_slot: Vec<Vec<Option<f64>>> = Vec::new();
    for t in job.arrival..=cluster.slots {
        let worker_caps: Vec<u32> = cluster
            .worker_servers
            .iter()
            .enumerate()
            .map(|(h, c)| fits(n_max, &job.worker_demand, |r| c.get(r) - usage.worker(h, r, t)))
            .collect();
        let ps_caps: Vec<u32> = cluster
            .ps_servers
            .iter()
            .enumerate()
            .map(|(k, c)| fits(n_max, &job.ps_demand, |r| c.get(r) - usage.ps(k, r, t)))
            .collect();
        let worker_unit: Vec<f64> = (0..cluster.worker_count())
            .map(|h| job.worker_demand.iter().enumerate().map(|(r, w)| state.price_worker(h, r, t) * w).sum())
            .collect();
        let ps_unit: Vec<f64> = (0..cluster.ps_count())
            .map(|k| job.ps_demand.iter().enumerate().map(|(r, s)| state.price_ps(k, r, t) * s).sum())
            .collect();
        let mut ps_options: Vec<(u32, f64)> = Vec::new();
        for_each_vector(&ps_caps, &mut |z| {
            let cost = z.iter().zip(&ps_unit).map(|(&z, u)| z as f64 * u).sum();
            ps_options.push((z.iter().sum(), cost));
        });
        let mut best = vec![None::<f64>; n_max as usize + 1];
        for_each_vector(&worker_caps, &mut |y| {
            let n: u32 = y.iter().sum();
            if n > n_max {
                return;
            }
            let worker_cost: f64 = y.iter().zip(&worker_unit).map(|(&y, u)| y as f64 * u).sum();
            for &(zs, ps_cost) in &ps_options {
                let ok = if n == 0 {
                    zs == 0
                } else {
                    zs <= n && le_tol(n as f64 * job.worker_bw, zs as f64 * job.ps_bw)
                };
                if ok {
                    let cost = worker_cost + ps_cost;
                    let slot = &mut best[n as usize];
                    if slot.is_none_or(|c| cost < c) {
                        *slot = Some(cost);
                    }
                }
            }
        });
        per_slot.push(best);
    }
    let supported: Vec<u32> = (0..=n_max).map(|n| chunks_supported(n, job)).collect();
    let need = job.workload();
    let mut best_payoff = 0.0f64;
    let caps = vec![n_max; per_slot.len()];
    for_each_vector(&caps, &mut |n| {
        let mut cost = 0.0;
        let mut done = 0;
        let mut last = None;
        for (i, &count) in n.iter().enumerate() {
            let Some(c) = per_slot[i][count as usize] else {
                return;
            };
            cost += c;
            done += supported[count as usize];
            if count > 0 {
                last = Some(i as u32);
            }
        }
        if done < need {
            return;
        }
        let Some(last) = last else {
            return;
        };
        let payoff = job.utility.eval(last as i64) - cost;
        best_payoff = best_payoff.max(payoff);
    });
    Ok(best_payoff)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub opt: f64,
    pub schedules: Vec<Option<Schedule>>,
    pub nodes: u64,
    pub elapsed: Duration,
}

impl OracleResult {
    pub fn admitted(&self) -> Vec<bool> {
        self.schedules.iter().map(Option::is_some).collect()
    }
}

/// Per-slot worker counts a job could use on an otherwise empty cluster.
#[derive(Clone, Debug)]
struct Candidate {
    counts: Vec<u32>,
    utility: f64,
}

fn candidates(job: &Job, cluster: &ClusterSpec) -> Vec<Candidate> {
    let first = job.arrival;
    if first == 0 || first > cluster.slots {
        return Vec::new();
    }
    let alone = |n: u32| -> bool {
        let z = job.ps_needed(n);
        n == 0
            || (z <= n
                && pack(&[(&job.worker_demand, n)], &cluster.worker_servers).is_some()
                && pack(&[(&job.ps_demand, z)], &cluster.ps_servers).is_some())
    };
    let mut n_max = 0;
    while n_max < job.chunks && alone(n_max + 1) {
        n_max += 1;
    }
    let supported: Vec<u32> = (0..=n_max).map(|n| chunks_supported(n, job)).collect();
    let need = job.workload();
    let span = (cluster.slots - first + 1) as usize;
    let mut out = Vec::new();
    for_each_vector(&vec![n_max; span], &mut |n| {
        let total: u32 = n.iter().map(|&c| supported[c as usize]).sum();
        if total < need {
            return;
        }
        let minimal = n
            .iter()
            .all(|&c| c == 0 || total - supported[c as usize] + supported[c as usize - 1] < need);
        if !minimal {
            return;
        }
        let last = n.iter().rposition(|&c| c > 0).expect("positive workload") as i64;
        out.push(Candidate {
            counts: n.to_vec(),
            utility: job.utility.eval(last),
        });
    });
    out.sort_by(|a, b| b.utility.total_cmp(&a.utility));
    out
}

/// Splits `count` instances of each item over servers; `None` when they do not fit.
fn pack(items: &[(&ResourceVector, u32)], caps: &[ResourceVector]) -> Option<Vec<Vec<u32>>> {
    let r_count = caps.first()?.len();
    for r in 0..r_count {
        let need: f64 = items.iter().map(|(d, n)| d.get(r) * *n as f64).sum();
        let have: f64 = caps.iter().map(|c| c.get(r)).sum();
        if !le_tol(need, have) {
            return None;
        }
    }
    let mut residual: Vec<Vec<f64>> = caps.iter().map(|c| c.0.clone()).collect();
    let mut out = vec![vec![0u32; caps.len()]; items.len()];

    fn place(
        items: &[(&ResourceVector, u32)],
        item: usize,
        server: usize,
        left: u32,
        residual: &mut [Vec<f64>],
        out: &mut [Vec<u32>],
    ) -> bool {
        if item == items.len() {
            return true;
        }
        if left == 0 {
            let next = items.get(item + 1).map_or(0, |(_, n)| *n);
            return place(items, item + 1, 0, next, residual, out);
        }
        if server == residual.len() {
            return false;
        }
        let demand = items[item].0;
        let fit = fits(left, demand, |r| residual[server][r]);
        for y in (0..=fit).rev() {
            for (r, need) in demand.iter().enumerate() {
                residual[server][r] -= need * y as f64;
            }
            out[item][server] = y;
            if place(items, item, server + 1, left - y, residual, out) {
                return true;
            }
            for (r, need) in demand.iter().enumerate() {
                residual[server][r] += need * y as f64;
            }
        }
        out[item][server] = 0;
        false
    }

    let first = items.first().map_or(0, |(_, n)| *n);
    if place(items, 0, 0, first, &mut residual, &mut out) {
        Some(out)
    } else {
        None
    }
}

struct Search<'a> {
    jobs: &'a [Job],
    cluster: &'a ClusterSpec,
    candidates: Vec<Vec<Candidate>>,
    /// `suffix_bound[i]` is the sum of the best candidate utilities of jobs `i..`.
    suffix_bound: Vec<f64>,
    chosen: Vec<Option<usize>>,
    best: f64,
    best_choice: Vec<Option<usize>>,
    nodes: u64,
    memo: HashMap<(bool, Vec<(usize, u32)>), bool>,
}

impl Search<'_> {
    /// Items running in slot index `t` (0-based) together with job `extra`.
    fn slot_fits(&mut self, t: usize, extra: (usize, usize)) -> bool {
        let mut workers: Vec<(usize, u32)> = Vec::new();
        for (j, pick) in self.chosen.iter().enumerate() {
            let pick = if j == extra.0 { Some(extra.1) } else { *pick };
            if let Some(c) = pick {
                if let Some(n) = self.count_at(j, c, t) {
                    workers.push((j, n));
                }
            }
        }
        let ps: Vec<(usize, u32)> = workers
            .iter()
            .map(|&(j, n)| (j, self.jobs[j].ps_needed(n)))
            .collect();
        self.side_fits(false, workers) && self.side_fits(true, ps)
    }

    fn count_at(&self, j: usize, c: usize, t: usize) -> Option<u32> {
        let offset = (self.jobs[j].arrival - 1) as usize;
        if t < offset {
            return None;
        }
        let n = self.candidates[j][c].counts[t - offset];
        (n > 0).then_some(n)
    }

    fn side_fits(&mut self, ps_side: bool, key: Vec<(usize, u32)>) -> bool {
        let memo_key = (ps_side, key);
        if let Some(&ok) = self.memo.get(&memo_key) {
            return ok;
        }
        let (caps, items): (&[ResourceVector], Vec<(&ResourceVector, u32)>) = if ps_side {
            (
                &self.cluster.ps_servers,
                memo_key.1.iter().map(|&(j, n)| (&self.jobs[j].ps_demand, n)).collect(),
            )
        } else {
            (
                &self.cluster.worker_servers,
                memo_key.1.iter().map(|&(j, n)| (&self.jobs[j].worker_demand, n)).collect(),
            )
        };
        let ok = pack(&items, caps).is_some();
        self.memo.insert(memo_key, ok);
        ok
    }

    fn run(&mut self, i: usize, value: f64) {
        self.nodes += 1;
        if i == self.jobs.len() {
            if value > self.best {
                self.best = value;
                self.best_choice = self.chosen.clone();
            }
            return;
        }
        if value + self.suffix_bound[i] <= self.best {
            return;
        }
        for c in 0..self.candidates[i].len() {
            let offset = (self.jobs[i].arrival - 1) as usize;
            let span = self.candidates[i][c].counts.len();
            let ok = (0..span).all(|s| {
                self.candidates[i][c].counts[s] == 0 || self.slot_fits(offset + s, (i, c))
            });
            if ok {
                self.chosen[i] = Some(c);
                let u = self.candidates[i][c].utility;
                self.run(i + 1, value + u);
                self.chosen[i] = None;
                if value + self.suffix_bound[i] <= self.best {
                    return;
                }
            }
        }
        self.run(i + 1, value);
    }
}

/// Maximum total utility over all jointly feasible schedules of `jobs`.
pub fn solve_offline(jobs: &[Job], cluster: &ClusterSpec, limits: &OracleLimits) -> Result<OracleResult> {
    let started = Instant::now();
    cluster.validate()?;
    limits.check(jobs, cluster)?;
    for job in jobs {
        job.validate(cluster)?;
    }
    let candidates: Vec<Vec<Candidate>> = jobs.iter().map(|j| candidates(j, cluster)).collect();
    let mut suffix_bound = vec![0.0; jobs.len() + 1];
    for i in (0..jobs.len()).rev() {
        suffix_bound[i] = suffix_bound[i + 1] + candidates[i].first().map_or(0.0, |c| c.utility);
    }
    let mut search = Search {
        jobs,
        cluster,
        candidates,
        suffix_bound,
        chosen: vec![None; jobs.len()],
        best: 0.0,
        best_choice: vec![None; jobs.len()],
        nodes: 0,
        memo: HashMap::new(),
    };
    search.run(0, 0.0);

    let mut schedules: Vec<Option<Schedule>> = vec![None; jobs.len()];
    let mut slots: Vec<Vec<SlotAssignment>> = vec![Vec::new(); jobs.len()];
    for t in 0..cluster.slots as usize {
        let running: Vec<(usize, u32)> = (0..jobs.len())
            .filter_map(|j| {
                let c = search.best_choice[j]?;
                search.count_at(j, c, t).map(|n| (j, n))
            })
            .collect();
        if running.is_empty() {
            continue;
        }
        let worker_items: Vec<(&ResourceVector, u32)> =
            running.iter().map(|&(j, n)| (&jobs[j].worker_demand, n)).collect();
        let ps_items: Vec<(&ResourceVector, u32)> = running
            .iter()
            .map(|&(j, n)| (&jobs[j].ps_demand, jobs[j].ps_needed(n)))
            .collect();
        let y = pack(&worker_items, &cluster.worker_servers).expect("checked during search");
        let z = pack(&ps_items, &cluster.ps_servers).expect("checked during search");
        for (idx, &(j, _)) in running.iter().enumerate() {
            slots[j].push(SlotAssignment {
                slot: t as u32 + 1,
                workers: y[idx].clone(),
                ps: z[idx].clone(),
            });
        }
    }
    for (j, job) in jobs.iter().enumerate() {
        if let Some(c) = search.best_choice[j] {
            let assignments = std::mem::take(&mut slots[j]);
            let deadline = assignments.last().map_or(job.arrival, |s| s.slot);
            let utility = search.candidates[j][c].utility;
            schedules[j] = Some(Schedule {
                job_id: job.id,
                slots: assignments,
                deadline,
                cost: 0.0,
                payoff: utility,
            });
        }
    }
    Ok(OracleResult {
        opt: search.best,
        schedules,
        nodes: search.nodes,
        elapsed: started.elapsed(),
    })
}
