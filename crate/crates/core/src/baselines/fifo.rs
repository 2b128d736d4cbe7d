use std::collections::VecDeque;

use super::{Action, BaselineConfig, Cursor, Event, FreeCapacity, Policy, SimView};

/// Runs jobs in arrival order with a fixed number of workers and parameter
/// servers each. The queue head blocks everything behind it.
#[derive(Clone, Debug)]
pub struct Fifo {
    config: BaselineConfig,
    cursor: Cursor,
    queue: VecDeque<usize>,
}

impl Fifo {
    pub fn new(config: BaselineConfig) -> Self {
        Fifo {
            config,
            cursor: Cursor::default(),
            queue: VecDeque::new(),
        }
    }
}

impl Policy for Fifo {
    fn name(&self) -> &'static str {
        "fifo"
    }

    fn step(&mut self, event: Event, view: &SimView) -> Vec<Action> {
        let mut actions = Vec::new();
        if let Event::Arrival(j) = event {
            let job = &view.jobs[j];
            let fits_alone = self.config.fixed_shape(job).is_some_and(|(y, z)| {
                Cursor::default()
                    .place(job, y, z, &mut FreeCapacity::empty(view.cluster))
                    .is_some()
            });
            if fits_alone {
                self.queue.push_back(j);
            } else {
                actions.push(Action::Reject { job: j });
            }
        }
        let mut free = view.free();
        while let Some(&head) = self.queue.front() {
            let job = &view.jobs[head];
            let (y, z) = self.config.fixed_shape(job).expect("checked on arrival");
            match self.cursor.place(job, y, z, &mut free) {
                Some(allocation) => {
                    actions.push(Action::Start { job: head, allocation });
                    self.queue.pop_front();
                }
                None => break,
            }
        }
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::{cluster, job};
    use super::super::{run_policy, BaselineConfig};
    use super::*;

    fn config(workers: u32) -> BaselineConfig {
        BaselineConfig {
            fixed_workers: workers,
            fixed_ps: 1,
            ..BaselineConfig::default()
        }
    }

    #[test]
    fn single_job_runs_workload_over_rate_slots() {
        let c = cluster(10, 2, 4.0);
        // 3 chunks * 5 epochs = 15 worker-slots at 3 workers: 5 slots.
        let j = job(1, 2, 3, 5);
        let run = run_policy(&mut Fifo::new(config(4)), std::slice::from_ref(&j), &c).unwrap();
        assert_eq!(run.outcomes[0].completion, Some(6));
        assert_eq!(run.outcomes[0].utility, j.utility_at(6));
        assert!(run.records.iter().all(|r| r.allocation.worker_total() == 3));
    }

    #[test]
    fn second_job_waits_for_the_first() {
        // One server with 4 GPUs: one 4-worker job at a time.
        let c = cluster(10, 1, 4.0);
        let jobs = vec![job(1, 1, 4, 2), job(2, 1, 4, 1)];
        let run = run_policy(&mut Fifo::new(config(4)), &jobs, &c).unwrap();
        assert_eq!(run.outcomes[0].completion, Some(2));
        assert_eq!(run.outcomes[1].completion, Some(3));
    }

    #[test]
    fn job_too_large_for_the_cluster_is_rejected() {
        let c = cluster(10, 1, 2.0);
        let jobs = vec![job(1, 1, 4, 2), job(2, 1, 2, 1)];
        let run = run_policy(&mut Fifo::new(config(4)), &jobs, &c).unwrap();
        assert!(!run.outcomes[0].admitted);
        assert_eq!(run.outcomes[1].completion, Some(1));
    }
}
