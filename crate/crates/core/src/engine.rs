//! Online admission: each arriving job is decided once, in arrival order.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, Job, JobId, Schedule};
use crate::pricing::{PriceConstants, PricingState};
use crate::search::best_schedule;

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub job_id: JobId,
    pub admitted: bool,
    pub schedule: Option<Schedule>,
    pub payoff: f64,
    /// Utility at the chosen deadline, 0 when rejected.
    pub utility: f64,
    /// Last slot with workers.
    pub completion: Option<u32>,
    pub latency: Duration,
}

#[derive(Clone, Debug)]
pub struct Engine {
    state: PricingState,
    last_arrival: u32,
    primal: f64,
    payoff_sum: f64,
    dual: f64,
}

impl Engine {
    pub fn new(cluster: ClusterSpec, constants: PriceConstants) -> Result<Self> {
        let state = PricingState::new(cluster, constants)?;
        let dual = state.dual_capacity_value();
        Ok(Engine {
            state,
            last_arrival: 0,
            primal: 0.0,
            payoff_sum: 0.0,
            dual,
        })
    }

    /// Constants computed from `population`, then a fresh engine.
    pub fn for_population(cluster: ClusterSpec, population: &[Job], estimate_scale: f64) -> Result<Self> {
        let constants = PriceConstants::compute(population, &cluster)?.with_estimate_scale(estimate_scale);
        Engine::new(cluster, constants)
    }

    pub fn state(&self) -> &PricingState {
        &self.state
    }

    pub fn alpha(&self) -> f64 {
        self.state.constants().alpha()
    }

    pub fn on_arrival(&mut self, job: &Job) -> Result<Decision> {
        let started = Instant::now();
        job.validate(self.state.cluster())?;
        if job.arrival < self.last_arrival {
            return Err(Error::OutOfOrder {
                job: job.id,
                arrival: job.arrival,
                previous: self.last_arrival,
            });
        }
        self.last_arrival = job.arrival;
        let (schedule, payoff) = best_schedule(job, &self.state);
        let decision = match schedule {
            Some(schedule) if payoff > 0.0 => {
                let price_delta = self.state.dual_capacity_delta(&schedule, job);
                self.state.commit(&schedule, job)?;
                let utility = job.utility_at(schedule.deadline);
                self.primal += utility;
                self.payoff_sum += payoff;
                self.dual += payoff + price_delta;
                Decision {
                    job_id: job.id,
                    admitted: true,
                    completion: schedule.completion(),
                    schedule: Some(schedule),
                    payoff,
                    utility,
                    latency: started.elapsed(),
                }
            }
            _ => Decision {
                job_id: job.id,
                admitted: false,
                schedule: None,
                payoff: 0.0,
                utility: 0.0,
                completion: None,
                latency: started.elapsed(),
            },
        };
        Ok(decision)
    }

    /// Primal objective (admitted utility) and dual objective (payoffs plus priced capacity).
    pub fn objective_values(&self) -> (f64, f64) {
        (self.primal, self.dual)
    }

    /// Dual objective recomputed from the current prices.
    pub fn dual_from_scratch(&self) -> f64 {
        self.payoff_sum + self.state.dual_capacity_value()
    }
}
