//! Workload specification and transaction-script generation.
//!
//! Clients run *scripts*: ordered get/put sequences ending in an
//! implicit commit. Scripts are either drawn from a distributional
//! spec (YCSB-flavoured presets over zipfian / hot-spot / uniform key
//! access) or replayed from a trace file. Key popularity is defined
//! over *ranks*; a fixed pseudo-random permutation maps ranks to
//! concrete keys so that hot keys scatter across the placement ring
//! instead of clustering on one server.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::types::Key;

/// Seed of the rank→key scattering permutation. Deliberately a fixed
/// constant (not derived from the run seed): the same dataset size
/// always yields the same key layout, so runs differing only in seed
/// stay comparable.
const SCATTER_SEED: u64 = 0x9c67_11aa_03d4_52f1;

#[derive(Error, Debug)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error("cannot read trace file: {0}")]
    TraceIo(#[from] std::io::Error),
}

/// One step of a transaction script.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ScriptOp {
    Get(Key),
    Put(Key),
}

/// A transaction script: the ops, then an implicit commit.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Script {
    pub ops: Vec<ScriptOp>,
    pub read_only: bool,
}

impl Script {
    fn new(ops: Vec<ScriptOp>) -> Self {
        let read_only = ops.iter().all(|op| matches!(op, ScriptOp::Get(_)));
        Script { ops, read_only }
    }
}

/// Number of distinct keys per transaction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpCount {
    Constant(u32),
    /// Inclusive range.
    Uniform { lo: u32, hi: u32 },
}

impl OpCount {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        match *self {
            OpCount::Constant(k) => k,
            OpCount::Uniform { lo, hi } => rng.gen_range(lo..=hi),
        }
    }

    fn max(&self) -> u32 {
        match *self {
            OpCount::Constant(k) => k,
            OpCount::Uniform { hi, .. } => hi,
        }
    }

    fn min(&self) -> u32 {
        match *self {
            OpCount::Constant(k) => k,
            OpCount::Uniform { lo, .. } => lo,
        }
    }
}

/// Shape of update-transaction scripts.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UpdateStyle {
    /// Blind writes: D puts (presets A and B).
    Puts,
    /// Read-modify-write: D get-then-put pairs on the same keys
    /// (preset F).
    ReadModifyWrite,
}

/// Key-popularity model, defined over ranks of the permuted keyspace.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum AccessPattern {
    Uniform,
    /// Rank r drawn with probability r^(−theta) / H(N, theta).
    Zipfian { theta: f64 },
    /// With probability `hot_access_fraction`, uniform over the first
    /// ⌈hot_fraction·N⌉ ranks; otherwise uniform over the rest.
    Hotspot { hot_fraction: f64, hot_access_fraction: f64 },
}

/// Think-time distribution of closed-loop clients.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum ThinkTime {
    Constant(f64),
    Exponential { mean: f64 },
}

impl ThinkTime {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ThinkTime::Constant(t) => t,
            ThinkTime::Exponential { mean } => {
                if mean <= 0.0 {
                    0.0
                } else {
                    Exp::new(1.0 / mean).expect("positive mean").sample(rng)
                }
            }
        }
    }
}

/// Open vs closed system.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum SystemMode {
    /// Issue the next script only after the previous one finished,
    /// separated by a think time.
    Closed { think_time: ThinkTime },
    /// Scripts arrive as a Poisson process, regardless of completions.
    Open { arrival_rate: f64 },
}

/// Fully resolved workload specification (presets already applied).
#[derive(Clone, PartialEq, Debug)]
pub struct WorkloadSpec {
    pub read_tx_fraction: f64,
    pub ops_per_read_tx: OpCount,
    pub ops_per_update_tx: OpCount,
    pub update_style: UpdateStyle,
    pub access: AccessPattern,
    pub system: SystemMode,
    pub dataset_size: u64,
    /// Re-run an aborted script as a fresh transaction.
    pub retry_aborted: bool,
    /// Draw new keys for the retry instead of replaying the same ones.
    pub redraw_on_retry: bool,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |msg: String| Err(WorkloadError::Invalid(msg));
        if !(0.0..=1.0).contains(&self.read_tx_fraction) {
            return err(format!(
                "read_tx_fraction {} outside [0, 1]",
                self.read_tx_fraction
            ));
        }
        if self.dataset_size < 1 {
            return err("dataset_size must be at least 1".into());
        }
        for (name, ops) in [
            ("ops_per_read_tx", self.ops_per_read_tx),
            ("ops_per_update_tx", self.ops_per_update_tx),
        ] {
            if ops.min() < 1 {
                return err(format!("{name} must draw at least 1 op"));
            }
            if ops.min() > ops.max() {
                return err(format!("{name} range is inverted"));
            }
            if u64::from(ops.max()) > self.dataset_size {
                return err(format!(
                    "{name} can exceed the dataset ({} distinct keys from {})",
                    ops.max(),
                    self.dataset_size
                ));
            }
        }
        match self.access {
            AccessPattern::Zipfian { theta } => {
                if theta < 0.0 || !theta.is_finite() {
                    return err(format!("zipfian theta {theta} must be ≥ 0"));
                }
            }
            AccessPattern::Hotspot { hot_fraction, hot_access_fraction } => {
                if !(0.0 < hot_fraction && hot_fraction <= 1.0) {
                    return err(format!("hot_fraction {hot_fraction} outside (0, 1]"));
                }
                if !(0.0 < hot_access_fraction && hot_access_fraction <= 1.0) {
                    return err(format!(
                        "hot_access_fraction {hot_access_fraction} outside (0, 1]"
                    ));
                }
            }
            AccessPattern::Uniform => {}
        }
        match self.system {
            SystemMode::Open { arrival_rate } => {
                if !(arrival_rate > 0.0) {
                    return err(format!("arrival_rate {arrival_rate} must be > 0"));
                }
            }
            SystemMode::Closed { think_time } => {
                let t = match think_time {
                    ThinkTime::Constant(t) => t,
                    ThinkTime::Exponential { mean } => mean,
                };
                if t < 0.0 {
                    return err(format!("think time {t} must be ≥ 0"));
                }
            }
        }
        Ok(())
    }
}

/// Draws permuted-keyspace indices according to an [`AccessPattern`].
pub struct AccessSampler {
    /// Rank index → key value (a bijection on `0..n`).
    perm: Vec<u64>,
    kind: SamplerKind,
}

enum SamplerKind {
    Uniform,
    /// Cumulative rank distribution; `cdf[r]` = P(rank ≤ r).
    Zipf { cdf: Vec<f64> },
    Hotspot { hot_n: u64, hot_access_fraction: f64 },
}

impl AccessSampler {
    pub fn new(pattern: AccessPattern, dataset_size: u64) -> Self {
        assert!(dataset_size >= 1);
        let kind = match pattern {
            AccessPattern::Uniform => SamplerKind::Uniform,
            AccessPattern::Zipfian { theta } => {
                let n = dataset_size as usize;
                let mut cdf = Vec::with_capacity(n);
                let mut total = 0.0;
                for r in 1..=n {
                    total += (r as f64).powf(-theta);
                    cdf.push(total);
                }
                for c in cdf.iter_mut() {
                    *c /= total;
                }
                // Guard the top end against rounding.
                if let Some(last) = cdf.last_mut() {
                    *last = 1.0;
                }
                SamplerKind::Zipf { cdf }
            }
            AccessPattern::Hotspot { hot_fraction, hot_access_fraction } => {
                let hot_n =
                    ((hot_fraction * dataset_size as f64).ceil() as u64).clamp(1, dataset_size);
                SamplerKind::Hotspot { hot_n, hot_access_fraction }
            }
        };
        AccessSampler { perm: scatter_permutation(dataset_size), kind }
    }

    pub fn dataset_size(&self) -> u64 {
        self.perm.len() as u64
    }

    /// Draw an index into the permuted keyspace (the key's popularity
    /// rank). Exposed for distribution tests.
    pub fn sample_index(&self, rng: &mut ChaCha8Rng) -> u64 {
        match &self.kind {
            SamplerKind::Uniform => rng.gen_range(0..self.perm.len() as u64),
            SamplerKind::Zipf { cdf } => {
                let u: f64 = rng.gen();
                cdf.partition_point(|&c| c < u) as u64
            }
            SamplerKind::Hotspot { hot_n, hot_access_fraction } => {
                let n = self.perm.len() as u64;
                let u: f64 = rng.gen();
                if u < *hot_access_fraction || *hot_n == n {
                    rng.gen_range(0..*hot_n)
                } else {
                    rng.gen_range(*hot_n..n)
                }
            }
        }
    }

    /// Number of ranks that belong to the hot set (0 when the pattern
    /// has no hot set).
    pub fn hot_set_size(&self) -> u64 {
        match &self.kind {
            SamplerKind::Hotspot { hot_n, .. } => *hot_n,
            _ => 0,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Key {
        Key(self.perm[self.sample_index(rng) as usize])
    }
}

/// The fixed rank→key scattering permutation (Fisher–Yates under a
/// constant seed).
fn scatter_permutation(n: u64) -> Vec<u64> {
    use rand::SeedableRng;
    let mut perm: Vec<u64> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SCATTER_SEED);
    for i in (1..perm.len()).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Script source shared by all clients: distributional generation or a
/// preloaded trace.
pub struct ScriptGen {
    spec: WorkloadSpec,
    sampler: AccessSampler,
    trace: Option<Vec<Script>>,
}

impl ScriptGen {
    pub fn distributional(spec: WorkloadSpec) -> Result<Self, WorkloadError> {
        spec.validate()?;
        let sampler = AccessSampler::new(spec.access, spec.dataset_size);
        Ok(ScriptGen { spec, sampler, trace: None })
    }

    pub fn trace_driven(spec: WorkloadSpec, trace: Vec<Script>) -> Result<Self, WorkloadError> {
        spec.validate()?;
        let sampler = AccessSampler::new(spec.access, spec.dataset_size);
        Ok(ScriptGen { spec, sampler, trace: Some(trace) })
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    pub fn sampler(&self) -> &AccessSampler {
        &self.sampler
    }

    /// Produce the next script for a client. `cursor` is the client's
    /// private position in the trace (ignored in distributional mode).
    /// `None` means the trace is exhausted and the client goes idle.
    pub fn next_script(&self, cursor: &mut usize, rng: &mut ChaCha8Rng) -> Option<Script> {
        match &self.trace {
            Some(scripts) => {
                let script = scripts.get(*cursor).cloned();
                if script.is_some() {
                    *cursor += 1;
                }
                script
            }
            None => Some(self.generate(rng)),
        }
    }

    fn draw_distinct_keys(&self, d: u32, rng: &mut ChaCha8Rng) -> Vec<Key> {
        let mut keys: Vec<Key> = Vec::with_capacity(d as usize);
        while keys.len() < d as usize {
            let k = self.sampler.sample(rng);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys
    }

    fn generate(&self, rng: &mut ChaCha8Rng) -> Script {
        let read_only = rng.gen::<f64>() < self.spec.read_tx_fraction;
        let d = if read_only {
            self.spec.ops_per_read_tx.draw(rng)
        } else {
            self.spec.ops_per_update_tx.draw(rng)
        };
        let keys = self.draw_distinct_keys(d, rng);
        let ops = if read_only {
            keys.into_iter().map(ScriptOp::Get).collect()
        } else {
            match self.spec.update_style {
                UpdateStyle::Puts => keys.into_iter().map(ScriptOp::Put).collect(),
                UpdateStyle::ReadModifyWrite => keys
                    .into_iter()
                    .flat_map(|k| [ScriptOp::Get(k), ScriptOp::Put(k)])
                    .collect(),
            }
        };
        Script::new(ops)
    }
}

/// Parse a transaction trace: one transaction per line,
/// `R|U|F <key> <key> ...` (R = gets, U = puts, F = get-then-put
/// pairs). Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str, dataset_size: u64) -> Result<Vec<Script>, WorkloadError> {
    let mut scripts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let kind = parts.next().expect("non-empty line has a first token");
        let keys: Vec<Key> = parts
            .map(|tok| {
                tok.parse::<u64>().map(Key).map_err(|_| WorkloadError::Trace {
                    line: line_no,
                    msg: format!("invalid key {tok:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if keys.is_empty() {
            return Err(WorkloadError::Trace {
                line: line_no,
                msg: "transaction has no keys".into(),
            });
        }
        if let Some(k) = keys.iter().find(|k| k.0 >= dataset_size) {
            return Err(WorkloadError::Trace {
                line: line_no,
                msg: format!("key {k} outside dataset of size {dataset_size}"),
            });
        }
        let ops = match kind {
            "R" => keys.into_iter().map(ScriptOp::Get).collect(),
            "U" => keys.into_iter().map(ScriptOp::Put).collect(),
            "F" => keys
                .into_iter()
                .flat_map(|k| [ScriptOp::Get(k), ScriptOp::Put(k)])
                .collect(),
            other => {
                return Err(WorkloadError::Trace {
                    line: line_no,
                    msg: format!("unknown transaction kind {other:?} (want R, U or F)"),
                })
            }
        };
        scripts.push(Script::new(ops));
    }
    Ok(scripts)
}

/// [`parse_trace`] over a file, mapping IO failures into the error.
pub fn load_trace(path: &Path, dataset_size: u64) -> Result<Vec<Script>, WorkloadError> {
    let text = std::fs::read_to_string(path)?;
    parse_trace(&text, dataset_size)
}

impl fmt::Display for AccessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessPattern::Uniform => write!(f, "uniform"),
            AccessPattern::Zipfian { theta } => write!(f, "zipfian({theta})"),
            AccessPattern::Hotspot { hot_fraction, hot_access_fraction } => {
                write!(f, "hotspot({hot_fraction}, {hot_access_fraction})")
            }
        }
    }
}
