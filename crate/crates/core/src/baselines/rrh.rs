use super::{Action, BaselineConfig, Cursor, Event, FreeCapacity, Policy, SimView};
use crate::model::Job;
use crate::num::ceil_tol;

/// Risk-reward heuristic.
///
/// On arrival a job is admitted when its utility at the earliest completion,
/// minus the weighted utility it would lose by waiting for running jobs to
/// free enough room, exceeds the threshold. On every arrival and completion,
/// running jobs keep their allocation while their projected utility still
/// exceeds the threshold and are paused otherwise; waiting jobs that pay
/// start in arrival order when their fixed shape fits.
#[derive(Clone, Debug)]
pub struct Rrh {
    config: BaselineConfig,
    cursor: Cursor,
}

impl Rrh {
    pub fn new(config: BaselineConfig) -> Self {
        Rrh {
            config,
            cursor: Cursor::default(),
        }
    }

    /// Utility if the job, from `slot` on, trains `remaining` worker-slots
    /// with `workers` workers after waiting `delay` slots; 0 past the horizon.
    fn projected(view: &SimView, job: &Job, remaining: f64, workers: u32, delay: u32) -> f64 {
        let slots = ceil_tol(remaining / workers as f64).max(1) as u32;
        let completion = view.slot + delay + slots - 1;
        if completion > view.cluster.slots {
            0.0
        } else {
            job.utility_at(completion)
        }
    }

    /// Slots until `job` fits if running jobs keep their allocations until they finish.
    fn delay(view: &SimView, job: &Job, y: u32, z: u32) -> Option<u32> {
        let mut free = view.free();
        if Cursor::default().place(job, y, z, &mut free.clone()).is_some() {
            return Some(0);
        }
        let mut releases: Vec<(u32, usize)> = view
            .allocations
            .iter()
            .enumerate()
            .filter_map(|(j, a)| {
                let a = a.as_ref()?;
                let slots = ceil_tol(view.remaining_work(j) / a.worker_total() as f64).max(1) as u32;
                Some((slots, j))
            })
            .collect();
        releases.sort();
        for (slots, j) in releases {
            free.give(&view.jobs[j], view.allocations[j].as_ref().expect("running"));
            if Cursor::default().place(job, y, z, &mut free.clone()).is_some() {
                return Some(slots);
            }
        }
        None
    }

    fn admit(&self, view: &SimView, j: usize) -> bool {
        let job = &view.jobs[j];
        let Some((y, z)) = self.config.fixed_shape(job) else {
            return false;
        };
        if Cursor::default()
            .place(job, y, z, &mut FreeCapacity::empty(view.cluster))
            .is_none()
        {
            return false;
        }
        let work = job.total_work();
        let now = Self::projected(view, job, work, y, 0);
        let later = Self::delay(view, job, y, z).map_or(0.0, |d| Self::projected(view, job, work, y, d));
        now - self.config.rrh_delay_weight * (now - later) > self.config.rrh_threshold
    }

    fn reschedule(&mut self, view: &SimView) -> Vec<Action> {
        let mut free = view.free();
        let mut actions = Vec::new();
        let gain = |j: usize, y: u32| {
            let remaining = view.remaining_work(j).max(f64::MIN_POSITIVE);
            Self::projected(view, &view.jobs[j], remaining, y, 0)
        };
        for j in 0..view.jobs.len() {
            let Some(a) = view.allocations[j].as_ref() else { continue };
            if view.status[j].is_active() && gain(j, a.worker_total()) <= self.config.rrh_threshold {
                free.give(&view.jobs[j], a);
                actions.push(Action::Stop { job: j });
            }
        }
        for j in 0..view.jobs.len() {
            if !view.status[j].is_active() || view.allocations[j].is_some() {
                continue;
            }
            let job = &view.jobs[j];
            let (y, z) = self.config.fixed_shape(job).expect("admitted jobs have a shape");
            if gain(j, y) <= self.config.rrh_threshold {
                continue;
            }
            if let Some(allocation) = self.cursor.place(job, y, z, &mut free) {
                actions.push(Action::Start { job: j, allocation });
            }
        }
        actions
    }
}

impl Policy for Rrh {
    fn name(&self) -> &'static str {
        "rrh"
    }

    fn step(&mut self, event: Event, view: &SimView) -> Vec<Action> {
        match event {
            Event::Arrival(j) if !self.admit(view, j) => vec![Action::Reject { job: j }],
            Event::Arrival(_) | Event::Completion(_) => self.reschedule(view),
            Event::Tick => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::{cluster, job};
    use super::super::{run_policy, BaselineConfig};
    use super::*;

    fn config(threshold: f64) -> BaselineConfig {
        BaselineConfig {
            fixed_workers: 4,
            fixed_ps: 1,
            rrh_threshold: threshold,
            rrh_delay_weight: 1.0,
        }
    }

    #[test]
    fn high_threshold_rejects_everything() {
        let c = cluster(10, 2, 4.0);
        let jobs: Vec<Job> = (0..4).map(|i| job(i, 1 + i as u32, 4, 2)).collect();
        let run = run_policy(&mut Rrh::new(config(1e6)), &jobs, &c).unwrap();
        assert!(run.outcomes.iter().all(|o| !o.admitted && o.utility == 0.0));
    }

    #[test]
    fn first_job_on_empty_cluster_runs() {
        let c = cluster(10, 2, 4.0);
        let j = job(1, 1, 4, 2);
        let run = run_policy(&mut Rrh::new(config(0.0)), std::slice::from_ref(&j), &c).unwrap();
        assert_eq!(run.outcomes[0].completion, Some(2));
        assert_eq!(run.outcomes[0].utility, j.utility_at(2));
    }

    #[test]
    fn hopeless_job_is_rejected() {
        // 40 worker-slots at 4 workers need 10 slots; only 5 remain.
        let c = cluster(5, 2, 4.0);
        let j = job(1, 1, 4, 10);
        let run = run_policy(&mut Rrh::new(config(0.0)), &[j], &c).unwrap();
        assert!(!run.outcomes[0].admitted);
    }

    #[test]
    fn replay_is_deterministic() {
        let c = cluster(12, 2, 4.0);
        let jobs: Vec<Job> = (0..8).map(|i| job(i, 1 + i as u32 / 2, 2 + (i % 3) as u32, 3)).collect();
        let a = run_policy(&mut Rrh::new(config(0.0)), &jobs, &c).unwrap();
        let b = run_policy(&mut Rrh::new(config(0.0)), &jobs, &c).unwrap();
        assert_eq!(a.records, b.records);
    }
}
