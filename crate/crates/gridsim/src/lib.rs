//! Discrete-event simulator for transactional replicated key-value stores.
//!
//! A cluster of cache servers executes client transaction scripts (begin,
//! get/put operations, commit) under a pluggable concurrency-control
//! protocol, two-phase commit across key owners, an analytic multi-core CPU
//! queue per server, and a message-delay oracle that can be a simple
//! distribution or a regression tree trained on measured latencies.
//!
//! The top-level entry points are [`SimulationBuilder`] for programmatic
//! setup and [`Config`] for TOML-driven runs; both produce a [`Simulation`]
//! whose [`Simulation::run`] returns a [`SimulationReport`].

pub mod cc;
pub mod client;
pub mod config;
pub mod cpu;
pub mod event;
pub mod kernel;
pub mod net;
pub mod placement;
pub mod server;
pub mod sim;
pub mod stats;
pub mod types;
pub mod workload;

pub use cc::{builtin_factory, CcFactory, CcIndication, CcInvocation, CcProtocol};
pub use config::{Config, ConfigError};
pub use cpu::{CpuQueue, ServiceDemands, ServiceModel};
pub use event::{EventKind, SimEvent, TraceRecord};
pub use kernel::RunBudget;
pub use net::tree::{KbRow, ModelTree, TrainParams};
pub use net::{MemoryModel, MessageCosts, NetModel, NetOracle};
pub use placement::{Placement, ReplicationMode};
pub use sim::{RunOutput, SimError, Simulation, SimulationBuilder};
pub use stats::{SimulationReport, WarmupCutoff};
pub use types::{Key, ObjectId, SimTime, TxId, TxInfo, TxTimestamp};
pub use workload::{
    AccessPattern, OpCount, Script, ScriptGen, ScriptOp, SystemMode, ThinkTime,
    UpdateStyle, WorkloadSpec,
};
