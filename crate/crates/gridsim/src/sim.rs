//! Simulation assembly and the run loop.
//!
//! [`SimulationBuilder`] wires placement, CPU queues, the
//! concurrency-control protocol, the network oracle, the workload and
//! the clients into a [`Simulation`]; `run` pops events in timestamp
//! order (FIFO within a timestamp), hands them to their destination
//! object, and folds every executed event into the rolling trace hash.
//! All randomness flows from one master seed through per-object,
//! per-purpose ChaCha streams, so a (config, seed) pair fully
//! determines the run.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cc::{builtin_factory, CcFactory};
use crate::client::Client;
use crate::cpu::{CpuQueue, ServiceDemands, ServiceModel};
use crate::event::{SimEvent, TraceRecord};
use crate::kernel::{Clock, EventQueue, RunBudget, TraceHash};
use crate::net::{MemoryModel, MessageCosts, NetModel, NetOracle, SenderNetState};
use crate::placement::{Placement, ReplicationMode};
use crate::server::Server;
use crate::stats::{ReportMeta, SimulationReport, Stats, WarmupCutoff};
use crate::types::{ObjectId, SimTime};
use crate::workload::{Script, ScriptGen, SystemMode, WorkloadSpec};

#[derive(Error, Debug)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Shared state handed to an object while it handles one event.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub placement: &'a Placement,
    pub net: &'a NetModel,
    pub mode: ReplicationMode,
    /// Per-server key-copy counts (memory feature of the net oracle).
    pub copies: &'a [u64],
    pub stats: &'a mut Stats,
    out: &'a mut Vec<SimEvent>,
}

impl Ctx<'_> {
    /// Schedule an event. Events may never be scheduled in the past.
    pub fn emit(&mut self, ev: SimEvent) {
        debug_assert!(ev.time >= self.now, "event scheduled in the past");
        self.out.push(ev);
    }
}

/// Everything a finished run returns.
pub struct RunOutput {
    pub report: SimulationReport,
    /// Recorded event trace (only when switched on).
    pub trace: Option<Vec<TraceRecord>>,
    pub trace_hash: u64,
}

fn lane_rng(seed: u64, object: u32, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(object) << 8) | lane);
    rng
}

pub struct SimulationBuilder {
    n_servers: usize,
    vnodes: usize,
    replication: usize,
    mode: ReplicationMode,
    cores: usize,
    demands: ServiceDemands,
    service: ServiceModel,
    util_window: f64,
    cc_name: String,
    deadlock_timeout: f64,
    cc_factory: Option<CcFactory>,
    oracle: NetOracle,
    memory: MemoryModel,
    costs: MessageCosts,
    ema_half_life: f64,
    workload: WorkloadSpec,
    trace_scripts: Option<Vec<Script>>,
    n_clients: usize,
    seed: u64,
    budget: RunBudget,
    warmup_fraction: f64,
    warmup_time: Option<f64>,
    warmup_commits: Option<u64>,
    record_trace: bool,
    config_label: String,
}

impl Default for SimulationBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SimulationBuilder {
    pub fn new() -> Self {
        SimulationBuilder {
            n_servers: 4,
            vnodes: 64,
            replication: 2,
            mode: ReplicationMode::Primary,
            cores: 1,
            demands: ServiceDemands::default(),
            service: ServiceModel::Exponential,
            util_window: 1.0,
            cc_name: "lock2pc".into(),
            deadlock_timeout: 0.005,
            cc_factory: None,
            oracle: NetOracle::Constant { mean: 1e-3 },
            memory: MemoryModel::default(),
            costs: MessageCosts::default(),
            ema_half_life: 0.5,
            workload: default_workload(),
            trace_scripts: None,
            n_clients: 8,
            seed: 1,
            budget: RunBudget::default(),
            warmup_fraction: 0.1,
            warmup_time: None,
            warmup_commits: None,
            record_trace: false,
            config_label: "adhoc".into(),
        }
    }

    pub fn servers(mut self, n: usize) -> Self {
        self.n_servers = n;
        self
    }

    pub fn vnodes(mut self, v: usize) -> Self {
        self.vnodes = v;
        self
    }

    pub fn replication(mut self, r: usize) -> Self {
        self.replication = r;
        self
    }

    pub fn mode(mut self, mode: ReplicationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn cores(mut self, k: usize) -> Self {
        self.cores = k;
        self
    }

    pub fn service_demands(mut self, demands: ServiceDemands) -> Self {
        self.demands = demands;
        self
    }

    pub fn service_model(mut self, service: ServiceModel) -> Self {
        self.service = service;
        self
    }

    /// Trailing window (seconds) for the CPU-utilization load signal.
    pub fn utilization_window(mut self, w: f64) -> Self {
        self.util_window = w;
        self
    }

    /// Select a registered concurrency-control protocol by name.
    pub fn cc(mut self, name: &str) -> Self {
        self.cc_name = name.into();
        self
    }

    pub fn deadlock_timeout(mut self, t: f64) -> Self {
        self.deadlock_timeout = t;
        self
    }

    /// Plug in a custom protocol constructor (overrides [`Self::cc`]).
    /// This is the extension point for alternative algorithms and for
    /// instrumented test doubles.
    pub fn with_cc_factory(mut self, factory: CcFactory) -> Self {
        self.cc_factory = Some(factory);
        self
    }

    pub fn net_oracle(mut self, oracle: NetOracle) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn memory_model(mut self, memory: MemoryModel) -> Self {
        self.memory = memory;
        self
    }

    pub fn message_costs(mut self, costs: MessageCosts) -> Self {
        self.costs = costs;
        self
    }

    /// Half-life (seconds) of the per-sender send-rate estimate.
    pub fn ema_half_life(mut self, h: f64) -> Self {
        self.ema_half_life = h;
        self
    }

    pub fn workload(mut self, spec: WorkloadSpec) -> Self {
        self.workload = spec;
        self
    }

    /// Replay these scripts instead of drawing from the distributions.
    /// Each client replays the list from the top, once.
    pub fn trace_scripts(mut self, scripts: Vec<Script>) -> Self {
        self.trace_scripts = Some(scripts);
        self
    }

    pub fn clients(mut self, m: usize) -> Self {
        self.n_clients = m;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_time(mut self, t: f64) -> Self {
        self.budget.max_time = Some(t);
        self
    }

    pub fn max_commits(mut self, n: u64) -> Self {
        self.budget.max_commits = Some(n);
        self
    }

    /// Fraction of the budget treated as warm-up (default 0.1).
    pub fn warmup_fraction(mut self, f: f64) -> Self {
        self.warmup_fraction = f;
        self
    }

    /// Absolute warm-up cutoff in simulated seconds (overrides the
    /// fraction).
    pub fn warmup_time(mut self, t: f64) -> Self {
        self.warmup_time = Some(t);
        self
    }

    /// Warm-up cutoff as a commit count (overrides the fraction).
    pub fn warmup_commits(mut self, n: u64) -> Self {
        self.warmup_commits = Some(n);
        self
    }

    /// Keep the full event trace in memory (tests and debugging).
    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    /// Identifier echoed into the report's `config_hash` column.
    pub fn config_label(mut self, label: &str) -> Self {
        self.config_label = label.into();
        self
    }

    pub fn build(self) -> Result<Simulation, SimError> {
        let cfg = |msg: String| SimError::Config(msg);
        if self.n_servers < 1 {
            return Err(cfg("cluster.servers must be at least 1".into()));
        }
        if self.replication < 1 {
            return Err(cfg("cluster.replication must be at least 1".into()));
        }
        if self.replication > self.n_servers {
            return Err(cfg(format!(
                "cluster.replication: replication degree {} exceeds server count {}",
                self.replication, self.n_servers
            )));
        }
        if self.cores < 1 {
            return Err(cfg("cpu.cores must be at least 1".into()));
        }
        if self.n_clients < 1 {
            return Err(cfg("cluster.clients must be at least 1".into()));
        }
        if !(self.util_window > 0.0) {
            return Err(cfg("cpu.utilization_window must be positive".into()));
        }
        if !(self.ema_half_life > 0.0) {
            return Err(cfg("net.rate_half_life must be positive".into()));
        }
        if !(self.deadlock_timeout >= 0.0) {
            return Err(cfg("cc.deadlock_timeout must be non-negative".into()));
        }
        if self.budget.max_time.is_none()
            && self.budget.max_commits.is_none()
            && self.trace_scripts.is_none()
        {
            return Err(cfg(
                "run needs run.max_time or run.max_commits unless the workload is trace-driven"
                    .into(),
            ));
        }
        let factory = match self.cc_factory {
            Some(f) => f,
            None => builtin_factory(&self.cc_name, self.deadlock_timeout).ok_or_else(|| {
                cfg(format!(
                    "cc.protocol \"{}\" is not registered (built-ins: lock2pc, ts2pc)",
                    self.cc_name
                ))
            })?,
        };
        let gen = match self.trace_scripts {
            Some(scripts) => ScriptGen::trace_driven(self.workload, scripts),
            None => ScriptGen::distributional(self.workload),
        }
        .map_err(|e| cfg(e.to_string()))?;
        let cutoff = {
            if let Some(t) = self.warmup_time {
                WarmupCutoff::Time(t)
            } else if let Some(n) = self.warmup_commits {
                WarmupCutoff::Commits(n)
            } else if let Some(t) = self.budget.max_time {
                WarmupCutoff::Time(self.warmup_fraction * t)
            } else if let Some(n) = self.budget.max_commits {
                WarmupCutoff::Commits((self.warmup_fraction * n as f64).ceil() as u64)
            } else {
                WarmupCutoff::Time(0.0)
            }
        };

        let placement = Placement::new(self.n_servers, self.vnodes, self.replication);
        let copies = placement.copy_counts(gen.spec().dataset_size);
        let mut servers = Vec::with_capacity(self.n_servers);
        for i in 0..self.n_servers {
            let id = ObjectId(i as u32);
            let cpu = CpuQueue::new(
                self.cores,
                self.demands,
                self.service,
                self.util_window,
                lane_rng(self.seed, id.0, 0),
            );
            let net_state = SenderNetState::new(copies[i], self.ema_half_life);
            servers.push(Server::new(id, cpu, factory(id), net_state, lane_rng(self.seed, id.0, 1)));
        }
        let gen = Rc::new(gen);
        let mut clients = Vec::with_capacity(self.n_clients);
        for j in 0..self.n_clients {
            let id = ObjectId((self.n_servers + j) as u32);
            let server = ObjectId((j % self.n_servers) as u32);
            clients.push(Client::new(id, server, Rc::clone(&gen), lane_rng(self.seed, id.0, 2)));
        }
        Ok(Simulation {
            placement,
            copies,
            mode: self.mode,
            net: NetModel { oracle: self.oracle, memory: self.memory, costs: self.costs },
            servers,
            clients,
            queue: EventQueue::new(),
            clock: Clock::default(),
            hash: TraceHash::default(),
            stats: Stats::new(cutoff),
            cutoff,
            budget: self.budget,
            seed: self.seed,
            config_label: self.config_label,
            trace: if self.record_trace { Some(Vec::new()) } else { None },
        })
    }
}

fn default_workload() -> WorkloadSpec {
    use crate::workload::{AccessPattern, OpCount, ThinkTime, UpdateStyle};
    WorkloadSpec {
        read_tx_fraction: 0.5,
        ops_per_read_tx: OpCount::Constant(5),
        ops_per_update_tx: OpCount::Constant(5),
        update_style: UpdateStyle::Puts,
        access: AccessPattern::Zipfian { theta: 0.7 },
        system: SystemMode::Closed { think_time: ThinkTime::Constant(0.0) },
        dataset_size: 10_000,
        retry_aborted: true,
        redraw_on_retry: false,
    }
}

enum StopReason {
    Drained,
    TimeBudget,
    CommitBudget,
}

pub struct Simulation {
    placement: Placement,
    copies: Vec<u64>,
    mode: ReplicationMode,
    net: NetModel,
    servers: Vec<Server>,
    clients: Vec<Client>,
    queue: EventQueue,
    clock: Clock,
    hash: TraceHash,
    stats: Stats,
    cutoff: WarmupCutoff,
    budget: RunBudget,
    seed: u64,
    config_label: String,
    trace: Option<Vec<TraceRecord>>,
}

impl Simulation {
    /// Number of client objects attached to the cluster.
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Execute the run to its budget (or until the event set drains)
    /// and produce the report.
    pub fn run(mut self) -> RunOutput {
        let n_servers = self.servers.len() as u32;
        let mut out: Vec<SimEvent> = Vec::new();

        {
            let mut ctx = Ctx {
                now: SimTime::ZERO,
                placement: &self.placement,
                net: &self.net,
                mode: self.mode,
                copies: &self.copies,
                stats: &mut self.stats,
                out: &mut out,
            };
            for client in &mut self.clients {
                client.init(&mut ctx);
            }
        }
        for ev in out.drain(..) {
            self.queue.push(ev);
        }

        // Per-server busy core-seconds at the warm-up boundary, taken
        // the moment measurement starts so later interval retirement
        // cannot blur it.
        let mut busy_snap: Option<Vec<f64>> = None;
        let stop;
        loop {
            if let Some(max_commits) = self.budget.max_commits {
                if self.stats.commits_seen() >= max_commits {
                    stop = StopReason::CommitBudget;
                    break;
                }
            }
            let Some(t) = self.queue.peek_time() else {
                stop = StopReason::Drained;
                break;
            };
            if let Some(max_time) = self.budget.max_time {
                if t.as_secs() > max_time {
                    stop = StopReason::TimeBudget;
                    break;
                }
            }
            if busy_snap.is_none() {
                if let WarmupCutoff::Time(tc) = self.cutoff {
                    if t.as_secs() >= tc {
                        let at = SimTime::from_secs(tc);
                        busy_snap =
                            Some(self.servers.iter().map(|s| s.cpu().busy_until(at)).collect());
                    }
                }
            }
            let ev = self.queue.pop().expect("peeked event vanished");
            self.clock.advance(ev.time);
            self.hash.fold(ev.fingerprint());
            if let Some(trace) = &mut self.trace {
                trace.push(TraceRecord {
                    time: ev.time,
                    src: ev.src,
                    dst: ev.dst,
                    label: ev.kind.label(),
                });
            }
            let dst = ev.dst;
            {
                let mut ctx = Ctx {
                    now: ev.time,
                    placement: &self.placement,
                    net: &self.net,
                    mode: self.mode,
                    copies: &self.copies,
                    stats: &mut self.stats,
                    out: &mut out,
                };
                if dst.0 < n_servers {
                    self.servers[dst.0 as usize].handle(ev, &mut ctx);
                } else {
                    self.clients[(dst.0 - n_servers) as usize].handle(ev, &mut ctx);
                }
            }
            for e in out.drain(..) {
                self.queue.push(e);
            }
            if busy_snap.is_none() && self.stats.measuring() {
                let w = self.stats.warmup_end().expect("measuring implies a warm-up boundary");
                busy_snap = Some(self.servers.iter().map(|s| s.cpu().busy_until(w)).collect());
            }
        }

        if matches!(stop, StopReason::Drained) {
            for s in &self.servers {
                s.assert_drained();
            }
            for c in &self.clients {
                c.assert_drained();
            }
        }

        let end_time = match stop {
            StopReason::TimeBudget => self.budget.max_time.expect("time budget stop"),
            _ => self.clock.now().as_secs(),
        };
        let end = SimTime::from_secs(end_time);
        let cpu_utilization: Vec<f64> = match (self.stats.warmup_end(), &busy_snap) {
            (Some(w), Some(snap)) if end_time > w.as_secs() => self
                .servers
                .iter()
                .zip(snap)
                .map(|(s, &b0)| {
                    (s.cpu().busy_until(end) - b0)
                        / (s.cpu().cores() as f64 * (end_time - w.as_secs()))
                })
                .collect(),
            _ => self.servers.iter().map(|s| s.cpu().utilization_until(end)).collect(),
        };
        let net_extrapolations: u64 =
            self.servers.iter().map(|s| s.net_state().extrapolations).sum();
        let trace_hash = self.hash.value();
        let report = self.stats.finalize(ReportMeta {
            seed: self.seed,
            config_hash: self.config_label,
            end_time,
            cpu_utilization,
            net_extrapolations,
            trace_hash,
        });
        RunOutput { report, trace: self.trace, trace_hash }
    }
}
