//! Fixtures shared by the benchmarks under `benches/`.

use oasis_core::model::{ClusterSpec, Job, JobId, ResourceVector, UtilityFunction};
use oasis_core::{PriceConstants, PricingState};

/// One job and an empty cluster of `servers` worker and `servers` PS servers
/// with room to spare, so the decision cost depends only on the sizes.
pub fn decision_setup(slots: u32, servers: usize, epochs: u32, chunks: u32) -> (Job, PricingState) {
    let cluster = ClusterSpec {
        slots,
        worker_servers: vec![ResourceVector::new(vec![1000.0, 1000.0]); servers],
        ps_servers: vec![ResourceVector::new(vec![1000.0, 1000.0]); servers],
        resources: vec!["gpu".into(), "cpu".into()],
        bandwidth: None,
    };
    let job = Job {
        id: JobId(0),
        arrival: 1,
        epochs,
        chunks,
        minibatches: 1,
        tau: 0.05,
        exchange_time: 0.0,
        worker_bw: 1.0,
        ps_bw: 4.0,
        worker_demand: ResourceVector::new(vec![1.0, 2.0]),
        ps_demand: ResourceVector::new(vec![0.0, 2.0]),
        utility: UtilityFunction::new(100.0, 0.5, 5.0),
    };
    let k = PriceConstants::compute(std::slice::from_ref(&job), &cluster).expect("valid fixture");
    let state = PricingState::new(cluster, k).expect("valid fixture");
    (job, state)
}
