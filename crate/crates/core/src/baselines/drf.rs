use super::{Action, Allocation, Cursor, Event, FreeCapacity, Policy, SimView};
use crate::model::{ClusterSpec, Job};

/// Dominant resource fairness, recomputed by progressive filling whenever a
/// job arrives or completes.
///
/// Each round grants one worker, plus the extra parameter server the
/// bandwidth coupling then needs, to the job with the smallest dominant
/// share. A job stops growing at `N` workers or when its next grant does not
/// fit.
#[derive(Clone, Debug, Default)]
pub struct Drf {
    cursor: Cursor,
}

impl Drf {
    pub fn new() -> Self {
        Drf::default()
    }
}

/// Sum of every server's capacity per resource, over both pools.
pub fn cluster_totals(cluster: &ClusterSpec) -> Vec<f64> {
    (0..cluster.resource_count())
        .map(|r| {
            cluster.worker_servers.iter().map(|c| c.get(r)).sum::<f64>()
                + cluster.ps_servers.iter().map(|c| c.get(r)).sum::<f64>()
        })
        .collect()
}

/// Largest share of any resource held by `workers` workers and `ps` parameter servers.
pub fn dominant_share(job: &Job, workers: u32, ps: u32, totals: &[f64]) -> f64 {
    totals
        .iter()
        .enumerate()
        .map(|(r, total)| {
            (job.worker_demand.get(r) * workers as f64 + job.ps_demand.get(r) * ps as f64) / total
        })
        .fold(0.0, f64::max)
}

/// Whether `job` can run at all: one worker needs at most one parameter server.
pub fn drf_runnable(job: &Job) -> bool {
    job.ps_needed(1) <= 1
}

/// Progressive filling over `jobs`, starting from an empty cluster.
pub fn progressive_fill(jobs: &[&Job], cluster: &ClusterSpec, cursor: &mut Cursor) -> Vec<Allocation> {
    let totals = cluster_totals(cluster);
    let mut free = FreeCapacity::empty(cluster);
    let mut alloc: Vec<Allocation> = jobs
        .iter()
        .map(|_| Allocation {
            workers: vec![0; cluster.worker_count()],
            ps: vec![0; cluster.ps_count()],
        })
        .collect();
    let mut counts = vec![(0u32, 0u32); jobs.len()];
    let mut frozen: Vec<bool> = jobs.iter().map(|j| !drf_runnable(j)).collect();
    loop {
        let pick = (0..jobs.len())
            .filter(|&i| !frozen[i])
            .min_by(|&a, &b| {
                let sa = dominant_share(jobs[a], counts[a].0, counts[a].1, &totals);
                let sb = dominant_share(jobs[b], counts[b].0, counts[b].1, &totals);
                sa.total_cmp(&sb).then(a.cmp(&b))
            });
        let Some(i) = pick else { break };
        let job = jobs[i];
        let (y, z) = counts[i];
        let extra_ps = job.ps_needed(y + 1).saturating_sub(z);
        match cursor.place(job, 1, extra_ps, &mut free) {
            Some(grant) => {
                for (a, g) in alloc[i].workers.iter_mut().zip(&grant.workers) {
                    *a += g;
                }
                for (a, g) in alloc[i].ps.iter_mut().zip(&grant.ps) {
                    *a += g;
                }
                counts[i] = (y + 1, z + extra_ps);
                if y + 1 >= job.chunks {
                    frozen[i] = true;
                }
            }
            None => frozen[i] = true,
        }
    }
    alloc
}

impl Policy for Drf {
    fn name(&self) -> &'static str {
        "drf"
    }

    fn step(&mut self, event: Event, view: &SimView) -> Vec<Action> {
        let mut actions = Vec::new();
        match event {
            Event::Tick => return actions,
            Event::Arrival(j) if !drf_runnable(&view.jobs[j]) => {
                return vec![Action::Reject { job: j }];
            }
            _ => {}
        }
        let active: Vec<usize> = (0..view.jobs.len())
            .filter(|&j| view.status[j].is_active())
            .collect();
        let jobs: Vec<&Job> = active.iter().map(|&j| &view.jobs[j]).collect();
        let fill = progressive_fill(&jobs, view.cluster, &mut self.cursor);
        for (&j, allocation) in active.iter().zip(fill) {
            let current = view.allocations[j].as_ref();
            if allocation.worker_total() == 0 {
                if current.is_some() {
                    actions.push(Action::Stop { job: j });
                }
            } else if current != Some(&allocation) {
                actions.push(Action::Start { job: j, allocation });
            }
        }
        actions
    }
}
