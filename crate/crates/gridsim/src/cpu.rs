//! Server CPU model: a K-core FIFO queue with per-activity service
//! demands.
//!
//! Each event a cache server handles costs one CPU "job". Jobs are
//! served in arrival order on the first core to become free, so the
//! completion time can be computed analytically at enqueue time (the
//! classic multi-server FIFO recursion) instead of simulating core
//! scheduling step by step. The server schedules the continuation event
//! at the returned completion time.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::types::SimTime;

/// The CPU-consuming activities a cache server performs. Each has its
/// own mean service demand.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Activity {
    TxBegin,
    LocalTxGet,
    LocalTxPut,
    /// Serving a get that arrived from another server.
    LocalTxGetFromRemote,
    /// Marshalling and sending remote gets for a non-local key.
    TxSendRemoteTxGet,
    TxPrepare,
    DistributedFinalTxCommit,
    TxAbort,
}

/// Mean service demand per activity, in seconds.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceDemands {
    pub tx_begin: f64,
    pub local_tx_get: f64,
    pub local_tx_put: f64,
    pub local_tx_get_from_remote: f64,
    pub tx_send_remote_tx_get: f64,
    pub tx_prepare: f64,
    pub distributed_final_tx_commit: f64,
    pub tx_abort: f64,
}

impl Default for ServiceDemands {
    fn default() -> Self {
        ServiceDemands {
            tx_begin: 5e-6,
            local_tx_get: 25e-6,
            local_tx_put: 20e-6,
            local_tx_get_from_remote: 15e-6,
            tx_send_remote_tx_get: 20e-6,
            tx_prepare: 100e-6,
            distributed_final_tx_commit: 80e-6,
            tx_abort: 100e-6,
        }
    }
}

impl ServiceDemands {
    pub fn demand(&self, activity: Activity) -> f64 {
        match activity {
            Activity::TxBegin => self.tx_begin,
            Activity::LocalTxGet => self.local_tx_get,
            Activity::LocalTxPut => self.local_tx_put,
            Activity::LocalTxGetFromRemote => self.local_tx_get_from_remote,
            Activity::TxSendRemoteTxGet => self.tx_send_remote_tx_get,
            Activity::TxPrepare => self.tx_prepare,
            Activity::DistributedFinalTxCommit => self.distributed_final_tx_commit,
            Activity::TxAbort => self.tx_abort,
        }
    }
}

/// How service times are drawn from the per-activity demand.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceModel {
    /// Exponentially distributed with the demand as mean.
    #[default]
    Exponential,
    /// Exactly the demand. Useful for hand-checkable scenarios.
    Deterministic,
}

/// K-core FIFO CPU queue for one server.
pub struct CpuQueue {
    cores: usize,
    demands: ServiceDemands,
    service: ServiceModel,
    rng: ChaCha8Rng,
    /// Completion time of the job each core is committed to last.
    core_free: BinaryHeap<Reverse<SimTime>>,
    /// Busy intervals `(start, end)` of jobs still inside the tracking
    /// horizon, in start order. Each interval occupies one core.
    intervals: VecDeque<(f64, f64)>,
    /// Busy seconds of intervals already dropped from `intervals`.
    retired_busy: f64,
    /// Trailing-window length for utilization queries, seconds.
    window: f64,
    jobs: u64,
}

impl CpuQueue {
    pub fn new(cores: usize, demands: ServiceDemands, service: ServiceModel, window: f64, rng: ChaCha8Rng) -> Self {
        assert!(cores >= 1, "a server needs at least one core");
        assert!(window > 0.0, "utilization window must be positive");
        let mut core_free = BinaryHeap::with_capacity(cores);
        for _ in 0..cores {
            core_free.push(Reverse(SimTime::ZERO));
        }
        CpuQueue {
            cores,
            demands,
            service,
            rng,
            core_free,
            intervals: VecDeque::new(),
            retired_busy: 0.0,
            window,
            jobs: 0,
        }
    }

    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn jobs_served(&self) -> u64 {
        self.jobs
    }

    fn draw_service(&mut self, mean: f64) -> f64 {
        match self.service {
            ServiceModel::Deterministic => mean,
            ServiceModel::Exponential => {
                let exp = Exp::new(1.0 / mean).expect("service demand must be positive");
                exp.sample(&mut self.rng)
            }
        }
    }

    /// Enqueue a job arriving at `now`; returns its completion time.
    ///
    /// Callers must enqueue in nondecreasing `now` order (guaranteed by
    /// event-ordered execution), otherwise FIFO would be violated.
    pub fn enqueue(&mut self, now: SimTime, activity: Activity) -> SimTime {
        let mean = self.demands.demand(activity);
        assert!(mean > 0.0, "service demand for {activity:?} must be positive");
        let service = self.draw_service(mean);

        let Reverse(first_free) = self.core_free.pop().expect("core heap never empties");
        let start = if first_free > now { first_free } else { now };
        let completion = start + service;
        self.core_free.push(Reverse(completion));

        self.intervals.push_back((start.as_secs(), completion.as_secs()));
        self.retire_before(now.as_secs() - self.window);
        self.jobs += 1;
        completion
    }

    /// Drop intervals that can no longer intersect any future query
    /// window, folding their busy time into the retired total.
    fn retire_before(&mut self, horizon: f64) {
        while let Some(&(start, end)) = self.intervals.front() {
            if end < horizon {
                self.retired_busy += end - start;
                self.intervals.pop_front();
            } else {
                break;
            }
        }
    }

    /// Total busy core-seconds in `[0, t]`. Valid for `t` no earlier
    /// than `window` before the latest enqueue (older history is
    /// retired), which holds for event-ordered callers.
    pub fn busy_until(&self, t: SimTime) -> f64 {
        let t = t.as_secs();
        let live: f64 = self
            .intervals
            .iter()
            .map(|&(start, end)| (end.min(t) - start).max(0.0))
            .sum();
        self.retired_busy + live
    }

    /// Mean utilization over `[0, t]`, all cores pooled.
    pub fn utilization_until(&self, t: SimTime) -> f64 {
        if t.as_secs() <= 0.0 {
            return 0.0;
        }
        self.busy_until(t) / (self.cores as f64 * t.as_secs())
    }

    /// Utilization over the trailing window ending at `now` (clipped to
    /// the run start). This is the load signal fed to the network
    /// response-time oracle.
    pub fn utilization_window(&self, now: SimTime) -> f64 {
        let t = now.as_secs();
        let lo = (t - self.window).max(0.0);
        let span = t - lo;
        if span <= 0.0 {
            return 0.0;
        }
        let busy: f64 = self
            .intervals
            .iter()
            .map(|&(start, end)| (end.min(t) - start.max(lo)).max(0.0))
            .sum();
        busy / (self.cores as f64 * span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn det_queue(cores: usize) -> CpuQueue {
        let mut demands = ServiceDemands::default();
        demands.local_tx_get = 1.0; // 1 s jobs make arithmetic obvious
        CpuQueue::new(
            cores,
            demands,
            ServiceModel::Deterministic,
            10.0,
            ChaCha8Rng::seed_from_u64(1),
        )
    }

    #[test]
    fn single_core_fifo_backlog() {
        let mut q = det_queue(1);
        // Three 1 s jobs arriving at t=0 finish back to back.
        assert_eq!(q.enqueue(SimTime::ZERO, Activity::LocalTxGet).as_secs(), 1.0);
        assert_eq!(q.enqueue(SimTime::ZERO, Activity::LocalTxGet).as_secs(), 2.0);
        assert_eq!(q.enqueue(SimTime::ZERO, Activity::LocalTxGet).as_secs(), 3.0);
        // A job arriving after the backlog drains starts immediately.
        let c = q.enqueue(SimTime::from_secs(5.5), Activity::LocalTxGet);
        assert_eq!(c.as_secs(), 6.5);
    }

    #[test]
    fn two_cores_serve_in_parallel() {
        let mut q = det_queue(2);
        assert_eq!(q.enqueue(SimTime::ZERO, Activity::LocalTxGet).as_secs(), 1.0);
        assert_eq!(q.enqueue(SimTime::ZERO, Activity::LocalTxGet).as_secs(), 1.0);
        // Third job waits for the first free core.
        assert_eq!(q.enqueue(SimTime::ZERO, Activity::LocalTxGet).as_secs(), 2.0);
    }

    #[test]
    fn busy_accounting_is_exact() {
        let mut q = det_queue(1);
        q.enqueue(SimTime::ZERO, Activity::LocalTxGet); // busy [0,1]
        q.enqueue(SimTime::from_secs(4.0), Activity::LocalTxGet); // busy [4,5]
        assert!((q.busy_until(SimTime::from_secs(6.0)) - 2.0).abs() < 1e-12);
        assert!((q.busy_until(SimTime::from_secs(4.5)) - 1.5).abs() < 1e-12);
        assert!((q.utilization_until(SimTime::from_secs(5.0)) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn window_utilization_sees_only_recent_work() {
        let mut demands = ServiceDemands::default();
        demands.local_tx_get = 1.0;
        let mut q = CpuQueue::new(
            1,
            demands,
            ServiceModel::Deterministic,
            2.0,
            ChaCha8Rng::seed_from_u64(1),
        );
        q.enqueue(SimTime::ZERO, Activity::LocalTxGet); // busy [0,1]
        // Window [8,10] contains no work at all.
        q.enqueue(SimTime::from_secs(9.5), Activity::LocalTxGet); // busy [9.5,10.5]
        // At t=10: busy within [8,10] is [9.5,10] = 0.5 → 25%.
        assert!((q.utilization_window(SimTime::from_secs(10.0)) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn early_window_is_clipped_to_run_start() {
        let mut q = det_queue(1); // window 10 s
        q.enqueue(SimTime::ZERO, Activity::LocalTxGet); // busy [0,1]
        // At t=2 the window clips to [0,2]: utilization 1/2.
        assert!((q.utilization_window(SimTime::from_secs(2.0)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_service_matches_mean() {
        // Sample mean of exponential service times ≈ configured demand.
        let demands = ServiceDemands { local_tx_get: 2e-3, ..Default::default() };
        let mut q = CpuQueue::new(
            1,
            demands,
            ServiceModel::Exponential,
            1.0,
            ChaCha8Rng::seed_from_u64(42),
        );
        let n = 40_000;
        let mut t = SimTime::ZERO;
        let mut total = 0.0;
        for _ in 0..n {
            // Arrive after the previous job finished: service = sojourn.
            let done = q.enqueue(t, Activity::LocalTxGet);
            total += done - t;
            t = done;
        }
        let mean = total / n as f64;
        // Standard error is demand/sqrt(n) ≈ 1e-5; allow 4 sigma.
        assert!((mean - 2e-3).abs() < 4e-5, "sample mean {mean}");
    }
}
