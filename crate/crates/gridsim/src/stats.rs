//! KPI collection and the end-of-run report.
//!
//! Transaction outcomes stream in from the coordinators; everything
//! that completes before the warm-up cutoff is discarded, the rest
//! feeds streaming aggregates (counts, sums, and a fixed-size quantile
//! sketch per transaction class). The report carries throughput,
//! update-transaction commit probability, latency summaries, CPU
//! utilization, and network-oracle diagnostics, and serializes as a
//! stable CSV row or a human-readable table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{SimTime, TxId};

/// Warm-up boundary, resolved from config before the run starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WarmupCutoff {
    /// Absolute simulated time: records ending earlier are dropped.
    Time(f64),
    /// Commit count: the first `n` committed transactions (and every
    /// abort before the `n`-th commit) are dropped.
    Commits(u64),
}

/// One finished transaction run, logged by its coordinator.
#[derive(Clone, Copy, Debug)]
pub struct TxRecord {
    pub tx: TxId,
    pub read_only: bool,
    pub committed: bool,
    /// 1 for the first execution of a script, 2 for its first retry…
    pub attempt: u32,
    pub begin_time: SimTime,
    pub end_time: SimTime,
}

/// Deterministic folding quantile sketch. Level `i` holds values of
/// weight `2^i`; a full level is sorted and every second value is
/// promoted. Fixed capacity, deterministic fold choice — identical
/// input streams give identical sketches.
#[derive(Clone, Debug)]
pub struct QuantileSketch {
    levels: Vec<Vec<f64>>,
    level_capacity: usize,
    count: u64,
}

impl QuantileSketch {
    pub fn new(level_capacity: usize) -> Self {
        assert!(level_capacity >= 2);
        QuantileSketch { levels: vec![Vec::new()], level_capacity, count: 0 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn insert(&mut self, x: f64) {
        self.count += 1;
        self.levels[0].push(x);
        let mut level = 0;
        while self.levels[level].len() >= self.level_capacity {
            if self.levels.len() == level + 1 {
                self.levels.push(Vec::new());
            }
            let mut buf = std::mem::take(&mut self.levels[level]);
            buf.sort_by(f64::total_cmp);
            // Promote the odd-indexed half; each survivor doubles in
            // weight. Keeping a fixed parity is a small deterministic
            // bias, bounded by the rank-error budget of the capacity.
            let promoted: Vec<f64> = buf.into_iter().skip(1).step_by(2).collect();
            self.levels[level + 1].extend(promoted);
            level += 1;
        }
    }

    /// Value at quantile `q` ∈ [0,1] (by weighted rank).
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let mut weighted: Vec<(f64, u64)> = Vec::new();
        for (level, buf) in self.levels.iter().enumerate() {
            let w = 1u64 << level;
            weighted.extend(buf.iter().map(|&v| (v, w)));
        }
        weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: u64 = weighted.iter().map(|(_, w)| w).sum();
        let target = (q.clamp(0.0, 1.0) * total as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (v, w) in &weighted {
            acc += w;
            if acc >= target {
                return Some(*v);
            }
        }
        weighted.last().map(|(v, _)| *v)
    }
}

/// Streaming per-class latency aggregate.
#[derive(Clone, Debug)]
struct LatencyAgg {
    count: u64,
    sum: f64,
    sketch: QuantileSketch,
}

impl LatencyAgg {
    fn new() -> Self {
        LatencyAgg { count: 0, sum: 0.0, sketch: QuantileSketch::new(4096) }
    }

    fn insert(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sketch.insert(v);
    }

    fn summary(&self) -> LatencySummary {
        LatencySummary {
            count: self.count,
            mean: (self.count > 0).then(|| self.sum / self.count as f64),
            p50: self.sketch.quantile(0.50),
            p95: self.sketch.quantile(0.95),
        }
    }
}

/// Latency summary of one transaction class; `None` = no samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean: Option<f64>,
    pub p50: Option<f64>,
    pub p95: Option<f64>,
}

/// Width of the message-rate observation windows, seconds.
pub const MSG_RATE_WINDOW_S: f64 = 0.5;

/// Run KPI accumulator.
pub struct Stats {
    cutoff: WarmupCutoff,
    /// Simulated time at which measurement started (set on the warm-up
    /// flip; `None` while warming up).
    warmup_end: Option<SimTime>,
    /// Commits seen so far including warm-up (drives commit budgets).
    commits_seen: u64,
    measured_commits: u64,
    update_attempts: u64,
    update_commits: u64,
    update_aborts: u64,
    retries: u64,
    read_only_commits: u64,
    read_latency: LatencyAgg,
    update_latency: LatencyAgg,
    prepare_delay_sum: f64,
    prepare_delay_count: u64,
    /// Sends per fixed window since t=0 (kept whole-run: stabilization
    /// is about approaching steady state, not about the cutoff).
    send_windows: Vec<u64>,
}

impl Stats {
    pub fn new(cutoff: WarmupCutoff) -> Self {
        let warmup_end = match cutoff {
            WarmupCutoff::Time(t) if t <= 0.0 => Some(SimTime::ZERO),
            _ => None,
        };
        Stats {
            cutoff,
            warmup_end,
            commits_seen: 0,
            measured_commits: 0,
            update_attempts: 0,
            update_commits: 0,
            update_aborts: 0,
            retries: 0,
            read_only_commits: 0,
            read_latency: LatencyAgg::new(),
            update_latency: LatencyAgg::new(),
            prepare_delay_sum: 0.0,
            prepare_delay_count: 0,
            send_windows: Vec::new(),
        }
    }

    pub fn commits_seen(&self) -> u64 {
        self.commits_seen
    }

    pub fn warmup_end(&self) -> Option<SimTime> {
        self.warmup_end
    }

    /// True once records are being accumulated rather than discarded.
    pub fn measuring(&self) -> bool {
        self.warmup_end.is_some()
    }

    fn in_warmup(&mut self, rec: &TxRecord) -> bool {
        match self.cutoff {
            WarmupCutoff::Time(t) => {
                if rec.end_time.as_secs() < t {
                    true
                } else {
                    if self.warmup_end.is_none() {
                        self.warmup_end = Some(SimTime::from_secs(t));
                    }
                    false
                }
            }
            WarmupCutoff::Commits(n) => {
                if self.warmup_end.is_some() {
                    false
                } else {
                    // `commits_seen` already counts this record. The n-th
                    // commit itself still belongs to warm-up; measurement
                    // starts at its completion time.
                    if rec.committed && self.commits_seen >= n {
                        self.warmup_end = Some(rec.end_time);
                    }
                    true
                }
            }
        }
    }

    /// Log one finished transaction run.
    pub fn record(&mut self, rec: TxRecord) {
        if rec.committed {
            self.commits_seen += 1;
        }
        if rec.attempt > 1 {
            self.retries += 1;
        }
        if self.in_warmup(&rec) {
            return;
        }
        let latency = rec.end_time - rec.begin_time;
        if rec.read_only {
            debug_assert!(rec.committed, "read-only transactions never abort");
            self.read_only_commits += 1;
            self.read_latency.insert(latency);
        } else {
            self.update_attempts += 1;
            if rec.committed {
                self.update_commits += 1;
            } else {
                self.update_aborts += 1;
            }
            self.update_latency.insert(latency);
        }
        if rec.committed {
            self.measured_commits += 1;
        }
    }

    /// Count one server-to-server send (for rate stabilization).
    pub fn note_send(&mut self, now: SimTime) {
        let idx = (now.as_secs() / MSG_RATE_WINDOW_S) as usize;
        if self.send_windows.len() <= idx {
            self.send_windows.resize(idx + 1, 0);
        }
        self.send_windows[idx] += 1;
    }

    /// Accumulate the network delay of one prepare-phase message
    /// (only counted once measurement has started).
    pub fn note_prepare_delay(&mut self, delay: f64) {
        if self.measuring() {
            self.prepare_delay_sum += delay;
            self.prepare_delay_count += 1;
        }
    }

    /// Produce the report. `cpu_utilization` is per server, already
    /// restricted to the measurement interval by the caller.
    pub fn finalize(self, meta: ReportMeta) -> SimulationReport {
        let no_samples = self.warmup_end.is_none()
            || (self.read_latency.count == 0 && self.update_latency.count == 0);
        let measured_time = self
            .warmup_end
            .map(|w| (meta.end_time - w.as_secs().min(meta.end_time)).max(0.0))
            .unwrap_or(0.0);
        debug_assert_eq!(
            self.update_attempts,
            self.update_commits + self.update_aborts,
            "attempt accounting must balance"
        );

        // Stabilization diagnostic: relative change between the last
        // two *complete* windows.
        let complete = self.send_windows.len().saturating_sub(1);
        let window_rates: Vec<f64> = self.send_windows[..complete]
            .iter()
            .map(|&c| c as f64 / MSG_RATE_WINDOW_S)
            .collect();
        let msg_rate_final_rel_change = (window_rates.len() >= 2).then(|| {
            let a = window_rates[window_rates.len() - 2];
            let b = window_rates[window_rates.len() - 1];
            (b - a).abs() / a.abs().max(1e-12)
        });

        SimulationReport {
            seed: meta.seed,
            config_hash: meta.config_hash,
            warmup_cutoff_s: self.warmup_end.map(|w| w.as_secs()),
            end_time_s: meta.end_time,
            measured_time_s: measured_time,
            no_samples,
            throughput_tps: if measured_time > 0.0 {
                self.measured_commits as f64 / measured_time
            } else {
                0.0
            },
            commit_probability: (self.update_attempts > 0)
                .then(|| self.update_commits as f64 / self.update_attempts as f64),
            update_attempts: self.update_attempts,
            update_commits: self.update_commits,
            update_aborts: self.update_aborts,
            retries: self.retries,
            read_only_commits: self.read_only_commits,
            read_latency: self.read_latency.summary(),
            update_latency: self.update_latency.summary(),
            cpu_utilization: meta.cpu_utilization,
            net_extrapolations: meta.net_extrapolations,
            mean_prepare_delay_s: (self.prepare_delay_count > 0)
                .then(|| self.prepare_delay_sum / self.prepare_delay_count as f64),
            msg_rate_windows: window_rates,
            msg_rate_final_rel_change,
            trace_hash: format!("{:016x}", meta.trace_hash),
        }
    }
}

/// Run-level metadata stamped into the report at finalize time.
pub struct ReportMeta {
    pub seed: u64,
    pub config_hash: String,
    pub end_time: f64,
    pub cpu_utilization: Vec<f64>,
    pub net_extrapolations: u64,
    pub trace_hash: u64,
}

/// The end-of-run report. Times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub config_hash: String,
    /// `None` = the run never left warm-up.
    pub warmup_cutoff_s: Option<f64>,
    pub end_time_s: f64,
    pub measured_time_s: f64,
    pub no_samples: bool,
    pub throughput_tps: f64,
    /// Committed / attempted update runs; `None` with no update load.
    pub commit_probability: Option<f64>,
    pub update_attempts: u64,
    pub update_commits: u64,
    pub update_aborts: u64,
    pub retries: u64,
    pub read_only_commits: u64,
    pub read_latency: LatencySummary,
    pub update_latency: LatencySummary,
    pub cpu_utilization: Vec<f64>,
    pub net_extrapolations: u64,
    pub mean_prepare_delay_s: Option<f64>,
    /// Whole-run sends/second per complete observation window.
    pub msg_rate_windows: Vec<f64>,
    pub msg_rate_final_rel_change: Option<f64>,
    pub trace_hash: String,
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

impl SimulationReport {
    /// Column names of [`SimulationReport::csv_row`], in order.
    pub fn csv_header() -> &'static str {
        "seed,config_hash,warmup_cutoff_s,end_time_s,measured_time_s,throughput_tps,\
         commit_probability,update_attempts,update_commits,update_aborts,retries,\
         read_only_commits,read_mean_s,read_p50_s,read_p95_s,update_mean_s,update_p50_s,\
         update_p95_s,cpu_utilization,net_extrapolations,mean_prepare_delay_s,\
         msg_rate_final_rel_change,trace_hash"
    }

    /// One CSV row; missing values rendered as `NA`, per-server CPU
    /// utilization semicolon-joined inside a single column.
    pub fn csv_row(&self) -> String {
        let cpu = self
            .cpu_utilization
            .iter()
            .map(|u| format!("{u:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.config_hash,
            opt(self.warmup_cutoff_s),
            self.end_time_s,
            self.measured_time_s,
            self.throughput_tps,
            opt(self.commit_probability),
            self.update_attempts,
            self.update_commits,
            self.update_aborts,
            self.retries,
            self.read_only_commits,
            opt(self.read_latency.mean),
            opt(self.read_latency.p50),
            opt(self.read_latency.p95),
            opt(self.update_latency.mean),
            opt(self.update_latency.p50),
            opt(self.update_latency.p95),
            cpu,
            self.net_extrapolations,
            opt(self.mean_prepare_delay_s),
            opt(self.msg_rate_final_rel_change),
            self.trace_hash,
        )
    }
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn ms(v: Option<f64>) -> String {
            match v {
                Some(v) => format!("{:.3} ms", v * 1e3),
                None => "no samples".into(),
            }
        }
        writeln!(f, "seed                 {}", self.seed)?;
        writeln!(f, "config hash          {}", self.config_hash)?;
        match self.warmup_cutoff_s {
            Some(w) => writeln!(f, "warm-up cutoff       {w:.3} s")?,
            None => writeln!(f, "warm-up cutoff       never reached (no samples)")?,
        }
        writeln!(
            f,
            "simulated time       {:.3} s ({:.3} s measured)",
            self.end_time_s, self.measured_time_s
        )?;
        writeln!(f, "throughput           {:.1} tx/s", self.throughput_tps)?;
        match self.commit_probability {
            Some(p) => writeln!(f, "commit probability   {p:.4}")?,
            None => writeln!(f, "commit probability   NA (no update transactions)")?,
        }
        writeln!(
            f,
            "update tx            {} attempts = {} commits + {} aborts ({} retries)",
            self.update_attempts, self.update_commits, self.update_aborts, self.retries
        )?;
        writeln!(f, "read-only commits    {}", self.read_only_commits)?;
        writeln!(
            f,
            "read-only latency    mean {} | p50 {} | p95 {}",
            ms(self.read_latency.mean),
            ms(self.read_latency.p50),
            ms(self.read_latency.p95)
        )?;
        writeln!(
            f,
            "update latency       mean {} | p50 {} | p95 {}",
            ms(self.update_latency.mean),
            ms(self.update_latency.p50),
            ms(self.update_latency.p95)
        )?;
        let cpu = self
            .cpu_utilization
            .iter()
            .enumerate()
            .map(|(i, u)| format!("s{i}={:.1}%", u * 100.0))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(f, "cpu utilization      {cpu}")?;
        writeln!(
            f,
            "net oracle           {} extrapolations, mean prepare delay {}",
            self.net_extrapolations,
            ms(self.mean_prepare_delay_s)
        )?;
        match self.msg_rate_final_rel_change {
            Some(c) => writeln!(f, "msg rate last delta  {:.2}%", c * 100.0)?,
            None => writeln!(f, "msg rate last delta  NA")?,
        }
        write!(f, "trace hash           {}", self.trace_hash)
    }
}
