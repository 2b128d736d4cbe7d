//! Resource prices and the allocation state they are derived from.
//!
//! A worker-server resource that is `g` out of `c` allocated in a slot costs
//! `L1 * (U1/L1)^(g/c)` per unit; parameter-server resources use `L2`, `U2`.
//! `L` is a deflated lower bound on the utility a job earns per unit of
//! resource, `U` an upper bound, so the price starts below anything worth
//! rejecting and ends above anything worth admitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, Job, Schedule, Usage};
use crate::num::{ceil_tol, le_tol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceConstants {
    /// Per-resource upper bound for worker servers, before `estimate_scale`.
    pub u1: Vec<f64>,
    /// Per-resource upper bound for parameter-server servers, before `estimate_scale`.
    pub u2: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Multiplier on the `U/L` ratios; 1.0 uses the computed values.
    pub estimate_scale: f64,
}

/// Elapsed slots of the fastest possible run: `ceil(E M (tau + 2e/b)) - 1`.
pub fn shortest_elapsed(job: &Job) -> i64 {
    let slots = ceil_tol(job.epochs as f64 * job.chunk_work()).max(1);
    slots as i64 - 1
}

impl PriceConstants {
    /// Builds the constants from a job population.
    ///
    /// Jobs that arrive after the horizon never run and are ignored. A resource
    /// no job demands gets `U = L * e`, so its price never gates admission.
    pub fn compute(jobs: &[Job], cluster: &ClusterSpec) -> Result<Self> {
        cluster.validate()?;
        let r_count = cluster.resource_count();
        let horizon = cluster.slots;
        let population: Vec<&Job> = jobs.iter().filter(|j| j.arrival <= horizon).collect();
        if population.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        for job in &population {
            job.validate(cluster)?;
            if job.utility_at(horizon) <= 0.0 {
                return Err(Error::InvalidUtility(job.id));
            }
        }

        let worker_volume = cluster.worker_capacity_volume();
        let ps_volume = cluster.ps_capacity_volume();
        let mut eta1: f64 = 1.0;
        let mut eta2: f64 = 1.0;
        let mut min1 = f64::INFINITY;
        let mut min2 = f64::INFINITY;
        let mut u1 = vec![0.0f64; r_count];
        let mut u2 = vec![0.0f64; r_count];
        for job in &population {
            let work = ceil_tol(job.total_work()).max(1) as f64;
            let w_sum = job.worker_demand.sum();
            let s_sum = job.ps_demand.sum();
            eta1 = eta1.max(worker_volume / (work * w_sum));
            eta2 = eta2.max(ps_volume / (work * s_sum));
            let low = job.utility_at(horizon);
            min1 = min1.min(low / (work * w_sum));
            min2 = min2.min(low / (work * s_sum));
            let high = job.utility.eval(shortest_elapsed(job));
            for r in 0..r_count {
                let w = job.worker_demand.get(r);
                if w > 0.0 {
                    u1[r] = u1[r].max(high / w);
                }
                let s = job.ps_demand.get(r);
                if s > 0.0 {
                    u2[r] = u2[r].max(high / s);
                }
            }
        }
        let l1 = min1 / (4.0 * eta1);
        let l2 = min2 / (4.0 * eta2);
        for u in u1.iter_mut() {
            if *u == 0.0 {
                *u = l1 * std::f64::consts::E;
            }
        }
        for u in u2.iter_mut() {
            if *u == 0.0 {
                *u = l2 * std::f64::consts::E;
            }
        }
        Ok(PriceConstants {
            u1,
            u2,
            l1,
            l2,
            eta1,
            eta2,
            estimate_scale: 1.0,
        })
    }

    pub fn with_estimate_scale(mut self, scale: f64) -> Self {
        self.estimate_scale = scale;
        self
    }

    fn scaled_ratio(&self, u: f64, l: f64) -> f64 {
        (self.estimate_scale * u / l).max(1.0)
    }

    /// `U1^r / L1` after scaling, clamped at 1.
    pub fn worker_ratio(&self, r: usize) -> f64 {
        self.scaled_ratio(self.u1[r], self.l1)
    }

    /// `U2^r / L2` after scaling, clamped at 1.
    pub fn ps_ratio(&self, r: usize) -> f64 {
        self.scaled_ratio(self.u2[r], self.l2)
    }

    /// Price of a fully allocated worker-server resource.
    pub fn worker_upper(&self, r: usize) -> f64 {
        self.l1 * self.worker_ratio(r)
    }

    pub fn ps_upper(&self, r: usize) -> f64 {
        self.l2 * self.ps_ratio(r)
    }

    /// `max_r(1, ln(U1^r/L1), ln(U2^r/L2))`; the competitive ratio is `2 * alpha`.
    pub fn alpha(&self) -> f64 {
        (0..self.u1.len())
            .map(|r| self.worker_ratio(r).ln().max(self.ps_ratio(r).ln()))
            .fold(1.0, f64::max)
    }
}

/// `L * ratio^(used/cap)`, with the exponent clamped to `[0, 1]`.
pub fn price(l: f64, ratio: f64, used: f64, cap: f64) -> f64 {
    let x = (used / cap).clamp(0.0, 1.0);
    if x == 0.0 {
        l
    } else if x == 1.0 {
        l * ratio
    } else {
        l * ratio.powf(x)
    }
}

/// Allocated amounts and the prices they imply.
#[derive(Clone, Debug)]
pub struct PricingState {
    cluster: ClusterSpec,
    constants: PriceConstants,
    usage: Usage,
}

impl PricingState {
    pub fn new(cluster: ClusterSpec, constants: PriceConstants) -> Result<Self> {
        cluster.validate()?;
        let r = cluster.resource_count();
        if constants.u1.len() != r || constants.u2.len() != r {
            return Err(Error::Dimension(format!(
                "price constants cover {}/{} resources, cluster has {r}",
                constants.u1.len(),
                constants.u2.len()
            )));
        }
        if !(constants.l1 > 0.0 && constants.l2 > 0.0 && constants.estimate_scale > 0.0) {
            return Err(Error::InvalidCluster(
                "price constants must be positive".into(),
            ));
        }
        let usage = Usage::empty(&cluster);
        Ok(PricingState {
            cluster,
            constants,
            usage,
        })
    }

    pub fn cluster(&self) -> &ClusterSpec {
        &self.cluster
    }

    pub fn constants(&self) -> &PriceConstants {
        &self.constants
    }

    pub fn usage(&self) -> &Usage {
        &self.usage
    }

    pub fn price_worker(&self, h: usize, r: usize, t: u32) -> f64 {
        price(
            self.constants.l1,
            self.constants.worker_ratio(r),
            self.usage.worker(h, r, t),
            self.cluster.worker_servers[h].get(r),
        )
    }

    pub fn price_ps(&self, k: usize, r: usize, t: u32) -> f64 {
        price(
            self.constants.l2,
            self.constants.ps_ratio(r),
            self.usage.ps(k, r, t),
            self.cluster.ps_servers[k].get(r),
        )
    }

    /// `sum_{t,h,r} p c + sum_{t,k,r} q c`, the price part of the dual objective.
    pub fn dual_capacity_value(&self) -> f64 {
        let mut total = 0.0;
        for t in 1..=self.cluster.slots {
            for (h, cap) in self.cluster.worker_servers.iter().enumerate() {
                for (r, c) in cap.iter().enumerate() {
                    total += self.price_worker(h, r, t) * c;
                }
            }
            for (k, cap) in self.cluster.ps_servers.iter().enumerate() {
                for (r, c) in cap.iter().enumerate() {
                    total += self.price_ps(k, r, t) * c;
                }
            }
        }
        total
    }

    /// Change of [`Self::dual_capacity_value`] that committing `schedule` would cause.
    pub fn dual_capacity_delta(&self, schedule: &Schedule, job: &Job) -> f64 {
        let mut delta = 0.0;
        for slot in &schedule.slots {
            let t = slot.slot;
            for (h, &y) in slot.workers.iter().enumerate() {
                if y == 0 {
                    continue;
                }
                let cap = &self.cluster.worker_servers[h];
                for (r, w) in job.worker_demand.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let ratio = self.constants.worker_ratio(r);
                    let g = self.usage.worker(h, r, t);
                    let c = cap.get(r);
                    delta += (price(self.constants.l1, ratio, g + w * y as f64, c)
                        - price(self.constants.l1, ratio, g, c))
                        * c;
                }
            }
            for (k, &z) in slot.ps.iter().enumerate() {
                if z == 0 {
                    continue;
                }
                let cap = &self.cluster.ps_servers[k];
                for (r, s) in job.ps_demand.iter().enumerate() {
                    if s == 0.0 {
                        continue;
                    }
                    let ratio = self.constants.ps_ratio(r);
                    let v = self.usage.ps(k, r, t);
                    let c = cap.get(r);
                    delta += (price(self.constants.l2, ratio, v + s * z as f64, c)
                        - price(self.constants.l2, ratio, v, c))
                        * c;
                }
            }
        }
        delta
    }

    /// Adds the schedule's demands. On any capacity breach the state is left untouched.
    pub fn commit(&mut self, schedule: &Schedule, job: &Job) -> Result<()> {
        let (h_count, k_count) = (self.cluster.worker_count(), self.cluster.ps_count());
        let r_count = self.cluster.resource_count();
        if job.worker_demand.len() != r_count || job.ps_demand.len() != r_count {
            return Err(Error::Dimension(format!(
                "job {} demand vectors do not have {r_count} resources",
                job.id
            )));
        }
        for slot in &schedule.slots {
            if slot.workers.len() != h_count || slot.ps.len() != k_count {
                return Err(Error::Dimension(format!(
                    "slot {} of job {} does not cover {h_count}/{k_count} servers",
                    slot.slot, job.id
                )));
            }
            if slot.is_empty() {
                continue;
            }
            if slot.slot == 0 || slot.slot > self.cluster.slots {
                return Err(Error::CapacityOverflow {
                    job: job.id,
                    slot: slot.slot,
                    detail: "slot outside the horizon".into(),
                });
            }
            for (h, &y) in slot.workers.iter().enumerate() {
                for r in 0..r_count {
                    let need = self.usage.worker(h, r, slot.slot) + job.worker_demand.get(r) * y as f64;
                    if y > 0 && !le_tol(need, self.cluster.worker_servers[h].get(r)) {
                        return Err(Error::CapacityOverflow {
                            job: job.id,
                            slot: slot.slot,
                            detail: format!("worker server {h} resource {r}"),
                        });
                    }
                }
            }
            for (k, &z) in slot.ps.iter().enumerate() {
                for r in 0..r_count {
                    let need = self.usage.ps(k, r, slot.slot) + job.ps_demand.get(r) * z as f64;
                    if z > 0 && !le_tol(need, self.cluster.ps_servers[k].get(r)) {
                        return Err(Error::CapacityOverflow {
                            job: job.id,
                            slot: slot.slot,
                            detail: format!("ps server {k} resource {r}"),
                        });
                    }
                }
            }
        }
        self.usage.apply(schedule, job);
        Ok(())
    }

    /// Adds demands without any capacity check. Only for negative controls.
    pub fn commit_unchecked(&mut self, schedule: &Schedule, job: &Job) {
        self.usage.apply(schedule, job);
    }
}
