//! Sectioned TOML configuration with defaults, dotted-path overrides, and an
//! effective-config echo that reproduces a run byte-for-byte.
//!
//! The file is organised into `[cluster]`, `[cpu]`, `[cc]`, `[workload]`,
//! `[net]`, and `[run]` sections. Every key has a default, so an empty file is
//! a valid configuration. After loading, [`Config::echo`] serialises the
//! effective settings back to TOML; feeding that text through
//! [`Config::from_toml`] again yields an identical configuration, which is the
//! basis for the reproducibility guarantee in the report metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpu::{ServiceDemands, ServiceModel};
use crate::net::tree::{self, ModelTree, TrainParams};
use crate::net::{MemoryModel, MessageCosts, NetOracle};
use crate::placement::ReplicationMode;
use crate::sim::SimulationBuilder;
use crate::workload::{
    AccessPattern, OpCount, SystemMode, ThinkTime, UpdateStyle, WorkloadSpec,
};

/// Errors raised while loading or applying a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The TOML text failed to parse or contained an unknown key. The
    /// underlying message carries line/column information.
    #[error("config parse error: {0}")]
    Parse(String),
    /// A key had a syntactically valid but semantically unusable value.
    #[error("config error: {key}: {msg}")]
    Invalid { key: String, msg: String },
    /// A file referenced by the configuration could not be read.
    #[error("config error: {key}: cannot read '{path}': {source}")]
    Io {
        key: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.into() }
}

/// `[cluster]`: topology and replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Number of cache servers.
    pub servers: usize,
    /// Closed-loop clients attached to each server.
    pub clients_per_server: usize,
    /// Copies kept of every key.
    pub replication: usize,
    /// `primary` or `multimaster` write coordination.
    pub mode: ReplicationMode,
    /// Virtual ring points per server.
    pub vnodes: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            servers: 4,
            clients_per_server: 2,
            replication: 2,
            mode: ReplicationMode::Primary,
            vnodes: 64,
        }
    }
}

/// `[cpu]`: per-server processing model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpuConfig {
    /// Cores per server.
    pub cores: usize,
    /// `exponential` or `deterministic` service times.
    pub service: ServiceKind,
    /// Sliding window (seconds) for instantaneous utilization queries.
    pub utilization_window: f64,
    /// Mean service demand per activity, seconds.
    pub demands: ServiceDemands,
}

impl Default for CpuConfig {
    fn default() -> Self {
        CpuConfig {
            cores: 1,
            service: ServiceKind::Exponential,
            utilization_window: 1.0,
            demands: ServiceDemands::default(),
        }
    }
}

/// Service-time distribution selector for `[cpu] service`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Exponential,
    Deterministic,
}

/// `[cc]`: concurrency-control plugin selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcConfig {
    /// Registered protocol name (`lock2pc` or `ts2pc`).
    pub protocol: String,
    /// Seconds a queued lock request waits before the deadlock timer fires.
    pub deadlock_timeout: f64,
}

impl Default for CcConfig {
    fn default() -> Self {
        CcConfig { protocol: "lock2pc".into(), deadlock_timeout: 0.005 }
    }
}

/// `[workload]`: transaction mix and arrival process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Named mix: `A` (50/50), `B` (90/10), `F` (50/50 read-modify-write),
    /// or `custom` (use `read_tx_fraction` / `update_style` directly).
    pub preset: String,
    /// Fraction of transactions that are read-only (only for `custom`).
    pub read_tx_fraction: f64,
    /// `puts` or `rmw` update bodies (only for `custom`).
    pub update_style: String,
    /// Operations per transaction when constant.
    pub ops_per_tx: u32,
    /// Set both to draw the op count uniformly from `[ops_min, ops_max]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ops_min: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ops_max: Option<u32>,
    /// Key popularity: `uniform`, `zipfian`, `hotspot`, or `trace`.
    pub access: String,
    /// Skew parameter for `zipfian`.
    pub zipf_theta: f64,
    /// Fraction of the key space that is hot for `hotspot`.
    pub hot_fraction: f64,
    /// Fraction of accesses landing in the hot set for `hotspot`.
    pub hot_access_fraction: f64,
    /// Script file replayed per client when `access = "trace"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    /// `closed` (think time between transactions) or `open` (Poisson).
    pub system: String,
    /// Mean think time in seconds for closed mode.
    pub think_time: f64,
    /// `constant` or `exponential` think-time draws.
    pub think_dist: String,
    /// Per-client arrival rate (1/s) for open mode.
    pub arrival_rate: f64,
    /// Number of distinct keys.
    pub dataset_size: u64,
    /// Re-submit aborted transactions until they commit.
    pub retry_aborted: bool,
    /// Draw a fresh body on each retry instead of replaying the same keys.
    pub redraw_on_retry: bool,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            preset: "A".into(),
            read_tx_fraction: 0.5,
            update_style: "puts".into(),
            ops_per_tx: 5,
            ops_min: None,
            ops_max: None,
            access: "zipfian".into(),
            zipf_theta: 0.7,
            hot_fraction: 0.01,
            hot_access_fraction: 0.99,
            trace_path: None,
            system: "closed".into(),
            think_time: 0.0,
            think_dist: "constant".into(),
            arrival_rate: 100.0,
            dataset_size: 10_000,
            retry_aborted: true,
            redraw_on_retry: false,
        }
    }
}

/// `[net]`: message delay oracle and sizing model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Delay source: `constant`, `exponential`, or `tree`.
    pub oracle: String,
    /// Mean one-way delay in seconds for `constant` / `exponential`.
    pub mean_delay: f64,
    /// Serialized regression-tree dump for `oracle = "tree"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_path: Option<String>,
    /// Knowledge-base CSV to train a tree from when no dump is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kb_path: Option<String>,
    /// Smallest delay the tree oracle may predict, seconds.
    pub floor: f64,
    /// Half-life (seconds) of the decayed per-server send-rate estimate.
    pub rate_half_life: f64,
    /// Feed the receiver's memory footprint to the oracle instead of the
    /// sender's.
    pub use_receiver_memory: bool,
    /// Message sizing in bytes.
    pub header_bytes: f64,
    pub key_bytes: f64,
    pub value_bytes: f64,
    /// Memory model: fixed base plus a per-stored-copy increment.
    pub memory_base_bytes: f64,
    pub memory_per_copy_bytes: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        let costs = MessageCosts::default();
        let mem = MemoryModel::default();
        NetConfig {
            oracle: "constant".into(),
            mean_delay: 1e-3,
            tree_path: None,
            kb_path: None,
            floor: 1e-6,
            rate_half_life: 0.5,
            use_receiver_memory: false,
            header_bytes: costs.header_bytes,
            key_bytes: costs.key_bytes,
            value_bytes: costs.value_bytes,
            memory_base_bytes: mem.base_bytes,
            memory_per_copy_bytes: mem.per_copy_bytes,
        }
    }
}

/// `[run]`: stopping rule, warm-up, and seeding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Stop after this much simulated time, seconds (0 disables).
    pub max_time: f64,
    /// Stop after this many committed transactions (0 disables).
    pub max_commits: u64,
    /// Fraction of the budget discarded as warm-up.
    pub warmup_fraction: f64,
    /// Absolute warm-up cutoff in seconds; overrides the fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_time: Option<f64>,
    /// Absolute warm-up cutoff in commits; overrides the fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_commits: Option<u64>,
    /// Master RNG seed.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_time: 10.0,
            max_commits: 0,
            warmup_fraction: 0.1,
            warmup_time: None,
            warmup_commits: None,
            seed: 1,
        }
    }
}

/// Complete simulation configuration.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cluster: ClusterConfig,
    pub cpu: CpuConfig,
    pub cc: CcConfig,
    pub workload: WorkloadConfig,
    pub net: NetConfig,
    pub run: RunConfig,
}

impl Config {
    /// Parses a TOML document. Unknown keys are rejected with a message that
    /// names the key and its location.
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads and parses a TOML file.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            key: "config".into(),
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    /// Parses TOML text and then applies `section.key=value` overrides on top
    /// before validation, so an override can both change and introduce keys.
    pub fn from_toml_with_overrides(
        text: &str,
        overrides: &[String],
    ) -> Result<Config, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let rendered = toml::to_string(&table)
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        Config::from_toml(&rendered)
    }

    /// Serialises the effective configuration (defaults resolved) back to
    /// TOML. Parsing the echo reproduces this configuration exactly.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Order-independent digest of the effective configuration, printed in
    /// report metadata so runs can be matched to their settings.
    pub fn digest(&self) -> u64 {
        let bytes = self.echo().into_bytes();
        let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
        for chunk in bytes.chunks(8) {
            let mut v = [0u8; 8];
            v[..chunk.len()].copy_from_slice(chunk);
            h = crate::types::mix64(h ^ u64::from_le_bytes(v));
        }
        h
    }

    /// Compact run label in `mix-ops-pattern-infra` form, e.g. `A-5-Z-C`,
    /// used for naming output files.
    pub fn label(&self) -> String {
        let mix = match self.workload.preset.as_str() {
            "custom" => "X",
            p => p,
        };
        let ops = match (self.workload.ops_min, self.workload.ops_max) {
            (Some(a), Some(b)) => format!("{a}to{b}"),
            _ => self.workload.ops_per_tx.to_string(),
        };
        let pat = match self.workload.access.as_str() {
            "uniform" => "U",
            "zipfian" => "Z",
            "hotspot" => "H",
            "trace" => "T",
            other => other,
        };
        let infra = match self.net.oracle.as_str() {
            "constant" => "C",
            "exponential" => "E",
            "tree" => "T",
            other => other,
        };
        let mut s = String::new();
        let _ = write!(s, "{mix}-{ops}-{pat}-{infra}");
        s
    }

    /// Resolves the transaction-mix preset into concrete workload knobs.
    fn mix(&self) -> Result<(f64, UpdateStyle), ConfigError> {
        let style = |raw: &str| match raw {
            "puts" => Ok(UpdateStyle::Puts),
            "rmw" => Ok(UpdateStyle::ReadModifyWrite),
            other => Err(invalid(
                "workload.update_style",
                format!("unknown style '{other}' (expected puts|rmw)"),
            )),
        };
        match self.workload.preset.as_str() {
            "A" | "a" => Ok((0.5, UpdateStyle::Puts)),
            "B" | "b" => Ok((0.9, UpdateStyle::Puts)),
            "F" | "f" => Ok((0.5, UpdateStyle::ReadModifyWrite)),
            "custom" => Ok((
                self.workload.read_tx_fraction,
                style(&self.workload.update_style)?,
            )),
            other => Err(invalid(
                "workload.preset",
                format!("unknown preset '{other}' (expected A|B|F|custom)"),
            )),
        }
    }

    fn op_count(&self) -> Result<OpCount, ConfigError> {
        match (self.workload.ops_min, self.workload.ops_max) {
            (None, None) => Ok(OpCount::Constant(self.workload.ops_per_tx)),
            (Some(lo), Some(hi)) if lo <= hi && lo > 0 => {
                Ok(OpCount::Uniform { lo, hi })
            }
            (Some(_), Some(_)) => Err(invalid(
                "workload.ops_min",
                "range must satisfy 0 < ops_min <= ops_max",
            )),
            _ => Err(invalid(
                "workload.ops_min",
                "ops_min and ops_max must be set together",
            )),
        }
    }

    fn access(&self) -> Result<AccessPattern, ConfigError> {
        match self.workload.access.as_str() {
            "uniform" => Ok(AccessPattern::Uniform),
            "zipfian" => Ok(AccessPattern::Zipfian { theta: self.workload.zipf_theta }),
            "hotspot" => Ok(AccessPattern::Hotspot {
                hot_fraction: self.workload.hot_fraction,
                hot_access_fraction: self.workload.hot_access_fraction,
            }),
            "trace" => Ok(AccessPattern::Uniform), // body replaced by the trace
            other => Err(invalid(
                "workload.access",
                format!("unknown pattern '{other}' (expected uniform|zipfian|hotspot|trace)"),
            )),
        }
    }

    fn system(&self) -> Result<SystemMode, ConfigError> {
        match self.workload.system.as_str() {
            "closed" => {
                let think = match self.workload.think_dist.as_str() {
                    "constant" => ThinkTime::Constant(self.workload.think_time),
                    "exponential" => ThinkTime::Exponential { mean: self.workload.think_time },
                    other => {
                        return Err(invalid(
                            "workload.think_dist",
                            format!("unknown distribution '{other}' (expected constant|exponential)"),
                        ))
                    }
                };
                Ok(SystemMode::Closed { think_time: think })
            }
            "open" => {
                if self.workload.arrival_rate <= 0.0 {
                    return Err(invalid("workload.arrival_rate", "must be > 0 in open mode"));
                }
                Ok(SystemMode::Open { arrival_rate: self.workload.arrival_rate })
            }
            other => Err(invalid(
                "workload.system",
                format!("unknown mode '{other}' (expected closed|open)"),
            )),
        }
    }

    fn oracle(&self) -> Result<NetOracle, ConfigError> {
        match self.net.oracle.as_str() {
            "constant" => Ok(NetOracle::Constant { mean: self.net.mean_delay }),
            "exponential" => Ok(NetOracle::Exponential { mean: self.net.mean_delay }),
            "tree" => {
                let tree = self.load_tree()?;
                Ok(NetOracle::Tree { tree, floor: self.net.floor })
            }
            other => Err(invalid(
                "net.oracle",
                format!("unknown oracle '{other}' (expected constant|exponential|tree)"),
            )),
        }
    }

    /// Loads the latency model for `oracle = "tree"`: a pre-trained dump if
    /// `tree_path` is set, otherwise a tree trained from the knowledge base.
    fn load_tree(&self) -> Result<ModelTree, ConfigError> {
        if let Some(path) = &self.net.tree_path {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                key: "net.tree_path".into(),
                path: path.clone(),
                source,
            })?;
            return ModelTree::parse(&text).map_err(|e| invalid("net.tree_path", e.to_string()));
        }
        if let Some(path) = &self.net.kb_path {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                key: "net.kb_path".into(),
                path: path.clone(),
                source,
            })?;
            let samples =
                tree::parse_kb(&text).map_err(|e| invalid("net.kb_path", e.to_string()))?;
            return ModelTree::train(&samples, &TrainParams::default())
                .map_err(|e| invalid("net.kb_path", e.to_string()));
        }
        Err(invalid(
            "net.oracle",
            "oracle = \"tree\" needs net.tree_path or net.kb_path",
        ))
    }

    /// Builds the (validated) simulation builder for this configuration.
    pub fn to_builder(&self) -> Result<SimulationBuilder, ConfigError> {
        let (read_fraction, update_style) = self.mix()?;
        let ops = self.op_count()?;
        let spec = WorkloadSpec {
            read_tx_fraction: read_fraction,
            ops_per_read_tx: ops,
            ops_per_update_tx: ops,
            update_style,
            access: self.access()?,
            system: self.system()?,
            dataset_size: self.workload.dataset_size,
            retry_aborted: self.workload.retry_aborted,
            redraw_on_retry: self.workload.redraw_on_retry,
        };

        let costs = MessageCosts {
            header_bytes: self.net.header_bytes,
            key_bytes: self.net.key_bytes,
            value_bytes: self.net.value_bytes,
        };
        let memory = MemoryModel {
            base_bytes: self.net.memory_base_bytes,
            per_copy_bytes: self.net.memory_per_copy_bytes,
            use_receiver: self.net.use_receiver_memory,
        };

        let service = match self.cpu.service {
            ServiceKind::Exponential => ServiceModel::Exponential,
            ServiceKind::Deterministic => ServiceModel::Deterministic,
        };

        let total_clients = self.cluster.servers * self.cluster.clients_per_server;
        let mut b = SimulationBuilder::new()
            .servers(self.cluster.servers)
            .vnodes(self.cluster.vnodes)
            .replication(self.cluster.replication)
            .mode(self.cluster.mode)
            .cores(self.cpu.cores)
            .service_demands(self.cpu.demands.clone())
            .service_model(service)
            .utilization_window(self.cpu.utilization_window)
            .cc(&self.cc.protocol)
            .deadlock_timeout(self.cc.deadlock_timeout)
            .net_oracle(self.oracle()?)
            .message_costs(costs)
            .memory_model(memory)
            .ema_half_life(self.net.rate_half_life)
            .workload(spec)
            .clients(total_clients)
            .seed(self.run.seed)
            .warmup_fraction(self.run.warmup_fraction)
            .config_label(&self.label());

        if self.workload.access == "trace" {
            let path = self.workload.trace_path.as_ref().ok_or_else(|| {
                invalid("workload.trace_path", "required when access = \"trace\"")
            })?;
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                key: "workload.trace_path".into(),
                path: path.clone(),
                source,
            })?;
            let scripts =
                crate::workload::parse_trace(&text, self.workload.dataset_size)
                    .map_err(|e| invalid("workload.trace_path", e.to_string()))?;
            b = b.trace_scripts(scripts);
        }

        if self.run.max_time > 0.0 {
            b = b.max_time(self.run.max_time);
        }
        if self.run.max_commits > 0 {
            b = b.max_commits(self.run.max_commits);
        }
        if let Some(t) = self.run.warmup_time {
            b = b.warmup_time(t);
        }
        if let Some(n) = self.run.warmup_commits {
            b = b.warmup_commits(n);
        }
        Ok(b)
    }
}

/// Applies one `section.key=value` override to a parsed TOML table, creating
/// intermediate tables as needed. The value text is parsed as TOML; anything
/// that does not parse as a scalar is taken as a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        invalid("override", format!("'{spec}' is not of the form section.key=value"))
    })?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(invalid("override", format!("'{spec}' has an empty key path")));
    }

    let value = parse_scalar(raw);
    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = table;
    for seg in &segments[..segments.len() - 1] {
        let entry = cursor
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            invalid(path, format!("'{seg}' is not a section and cannot be overridden into"))
        })?;
    }
    cursor.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Parses an override value: TOML scalar syntax first, bare string otherwise.
fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    if let Ok(mut t) = toml::from_str::<toml::Table>(&doc) {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    toml::Value::String(raw.to_string())
}

/// Summary of one loaded configuration as flat dotted keys, used by the CLI
/// `--verbose` output.
pub fn flatten(config: &Config) -> BTreeMap<String, String> {
    let table: toml::Table =
        toml::from_str(&config.echo()).expect("echoed config parses");
    let mut out = BTreeMap::new();
    fn walk(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) {
        match value {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, v, out);
                }
            }
            other => {
                out.insert(prefix.to_string(), other.to_string());
            }
        }
    }
    walk("", &toml::Value::Table(table), &mut out);
    out
}
