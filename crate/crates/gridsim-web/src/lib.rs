//! Browser bindings for the grid simulator.
//!
//! Three operations back the static demo page: run one configuration and
//! return its report as JSON, sweep one config key and return a throughput
//! curve, and train the message-latency model tree from a knowledge-base
//! CSV. Everything is synchronous, deterministic, and string-in/string-out
//! so the page needs no framework; the same functions compile natively for
//! the test suite.

use wasm_bindgen::prelude::*;

use gridsim::config::Config;
use gridsim::net::tree::{kb_to_string, parse_kb, split_holdout, KbRow, ModelTree, TrainParams};
use gridsim::stats::SimulationReport;

/// Default configuration as TOML, used to prefill the demo page.
#[wasm_bindgen]
pub fn default_config() -> String {
    Config::default().echo()
}

fn run_config(cfg: &Config) -> Result<SimulationReport, String> {
    let sim = cfg
        .to_builder()
        .map_err(|e| e.to_string())?
        .build()
        .map_err(|e| e.to_string())?;
    Ok(sim.run().report)
}

/// Run the TOML configuration under one seed; returns the full report as
/// pretty-printed JSON. Errors come back as strings naming the bad key.
#[wasm_bindgen]
pub fn run_report(config_toml: &str, seed: u32) -> Result<String, String> {
    let mut cfg = Config::from_toml(config_toml).map_err(|e| e.to_string())?;
    cfg.run.seed = u64::from(seed);
    let report = run_config(&cfg)?;
    serde_json::to_string_pretty(&report).map_err(|e| e.to_string())
}

/// Run the configuration once per value of `key` (comma-separated list) and
/// return a JSON array of curve points: swept value, numeric x when the
/// value parses as a number, throughput, commit probability, and mean
/// update latency.
#[wasm_bindgen]
pub fn sweep_throughput(
    config_toml: &str,
    key: &str,
    values_csv: &str,
    seed: u32,
) -> Result<String, String> {
    let values: Vec<&str> = values_csv
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(format!("no values to sweep for {key}"));
    }
    let mut points = Vec::with_capacity(values.len());
    for (index, value) in values.iter().enumerate() {
        let overrides = [format!("{key}={value}")];
        let mut cfg =
            Config::from_toml_with_overrides(config_toml, &overrides).map_err(|e| e.to_string())?;
        cfg.run.seed = u64::from(seed);
        let report = run_config(&cfg)?;
        points.push(serde_json::json!({
            "value": value,
            "x": value.parse::<f64>().ok().unwrap_or(index as f64),
            "throughput_tps": report.throughput_tps,
            "commit_probability": report.commit_probability,
            "update_mean_s": report.update_latency.mean,
            "read_mean_s": report.read_latency.mean,
        }));
    }
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

/// Train the message-latency model tree from knowledge-base CSV text and
/// return JSON holding the textual tree dump, leaf count, and the
/// training/holdout RMSE of the split.
#[wasm_bindgen]
pub fn train_tree(kb_csv: &str, holdout_fraction: f64, split_seed: u32) -> Result<String, String> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(format!("holdout fraction {holdout_fraction} must lie in [0, 1)"));
    }
    let rows = parse_kb(kb_csv).map_err(|e| e.to_string())?;
    if rows.is_empty() {
        return Err("empty training set: the CSV has a header but no data rows".to_string());
    }
    let (train_rows, holdout_rows) = split_holdout(&rows, holdout_fraction, u64::from(split_seed));
    let tree =
        ModelTree::train(&train_rows, &TrainParams::default()).map_err(|e| e.to_string())?;
    let rmse = |rows: &[KbRow]| (!rows.is_empty()).then(|| tree.rmse(rows));
    let result = serde_json::json!({
        "dump": tree.dump(),
        "n_leaves": tree.n_leaves(),
        "rows": rows.len(),
        "training_rmse_s": rmse(&train_rows),
        "holdout_rmse_s": rmse(&holdout_rows),
    });
    serde_json::to_string_pretty(&result).map_err(|e| e.to_string())
}

/// Synthetic knowledge base used to prefill the training panel: latency
/// follows one linear law of the message rate plus a second regime for
/// large messages, so the trained tree shows a genuine split.
#[wasm_bindgen]
pub fn sample_kb(rows: u32) -> String {
    let n = rows.max(8) as usize;
    let kb: Vec<KbRow> = (0..n)
        .map(|i| {
            // Deterministic low-discrepancy spread; strides keep columns
            // linearly independent of each other.
            let spread = |stride: usize| ((i * stride) % n) as f64 / n as f64;
            let size = 200.0 + 3800.0 * spread(7);
            let rate = 30_000.0 * spread(13);
            let features = [5.0e7 + 2.0e7 * spread(17), 0.05 + 0.9 * spread(11), size, rate];
            let base = if size > 2000.0 { 4.5e-4 } else { 2.0e-4 };
            (features, base + 1.0e-8 * rate)
        })
        .collect();
    kb_to_string(&kb)
}
