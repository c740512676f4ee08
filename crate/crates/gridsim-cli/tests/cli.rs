//! End-to-end tests of the `gridsim` binary: flag handling, output files,
//! exit codes, and the config-echo reproducibility guarantee.

use std::path::PathBuf;
use std::process::{Command, Output};

use gridsim::net::tree::{kb_to_string, KbRow, ModelTree};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridsim"))
}

/// Fresh per-test scratch directory under the system temp dir.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gridsim-cli-{name}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        stdout(out),
        stderr(out)
    );
}

fn assert_exit_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        stderr(out)
    );
}

/// A deliberately small scenario so every invocation finishes quickly.
const SMALL_CONFIG: &str = "\
[cluster]
servers = 2
clients_per_server = 1

[run]
max_time = 0.3
seed = 9
";

fn write_small_config(dir: &PathBuf) -> PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, SMALL_CONFIG).unwrap();
    path
}

/// The single file in `dir` whose name starts with `prefix`.
fn only_file_with_prefix(dir: &PathBuf, prefix: &str) -> PathBuf {
    let mut matches: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().starts_with(prefix))
                .unwrap_or(false)
        })
        .collect();
    assert_eq!(matches.len(), 1, "expected one {prefix}* file in {dir:?}, got {matches:?}");
    matches.pop().unwrap()
}

#[test]
fn run_writes_per_seed_rows_and_an_aggregate_row() {
    let dir = scratch("run-rows");
    let cfg = write_small_config(&dir);
    let out_dir = dir.join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seeds", "1,2,3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);

    let csv = std::fs::read_to_string(only_file_with_prefix(&out_dir, "run-")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "header + 3 seed rows + aggregate:\n{csv}");
    assert!(lines[0].starts_with("seed,config_hash,"));
    for (row, seed) in lines[1..4].iter().zip(["1,", "2,", "3,"]) {
        assert!(row.starts_with(seed), "row {row:?} should start with {seed:?}");
    }
    assert!(lines[4].starts_with("aggregate,"), "last row: {:?}", lines[4]);
    assert!(lines[4].contains(",rsd="), "aggregate carries the throughput rsd");
    assert!(stdout(&out).contains("aggregate over 3 seed(s)"));
}

#[test]
fn run_without_config_file_uses_defaults_plus_overrides() {
    let dir = scratch("run-defaults");
    let out_dir = dir.join("out");
    let out = bin()
        .args([
            "run",
            "--set",
            "cluster.servers=2",
            "--set",
            "cluster.clients_per_server=1",
            "--set",
            "run.max_time=0.2",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);
    only_file_with_prefix(&out_dir, "run-");
    only_file_with_prefix(&out_dir, "config-");
}

#[test]
fn rerunning_the_echoed_config_reproduces_the_report_byte_for_byte() {
    let dir = scratch("run-echo");
    let cfg = write_small_config(&dir);
    let first_out = dir.join("first");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seeds", "5", "--out"])
        .arg(&first_out)
        .output()
        .unwrap();
    assert_success(&out);

    let echo = only_file_with_prefix(&first_out, "config-");
    let second_out = dir.join("second");
    let out = bin()
        .args(["run", "--config"])
        .arg(&echo)
        .args(["--seeds", "5", "--out"])
        .arg(&second_out)
        .output()
        .unwrap();
    assert_success(&out);

    let first = std::fs::read(only_file_with_prefix(&first_out, "run-")).unwrap();
    let second = std::fs::read(only_file_with_prefix(&second_out, "run-")).unwrap();
    assert_eq!(first, second, "echoed config must reproduce the exact report");
}

#[test]
fn replication_beyond_cluster_size_is_a_validation_error() {
    let dir = scratch("run-repl");
    let out = bin()
        .args([
            "run",
            "--set",
            "cluster.servers=2",
            "--set",
            "cluster.replication=3",
            "--out",
        ])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_exit_code(&out, 1);
    assert!(
        stderr(&out).contains("exceeds server count"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn unknown_override_key_is_rejected_by_name() {
    let dir = scratch("run-unknown");
    let out = bin()
        .args(["run", "--set", "cluster.bogus=1", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_exit_code(&out, 1);
    assert!(stderr(&out).contains("bogus"), "stderr: {}", stderr(&out));
}

#[test]
fn sweep_writes_per_value_reports_and_a_combined_data_file() {
    let dir = scratch("sweep");
    let cfg = write_small_config(&dir);
    let out_dir = dir.join("out");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args([
            "--key",
            "cluster.servers=2,3",
            "--set",
            "cluster.replication=1",
            "--seeds",
            "1",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);

    let names: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let per_value: Vec<&String> = names
        .iter()
        .filter(|n| n.starts_with("sweep-") && n.ends_with(".csv"))
        .collect();
    assert_eq!(per_value.len(), 2, "one CSV per swept value: {names:?}");
    assert!(per_value.iter().any(|n| n.contains("cluster.servers=2")));
    assert!(per_value.iter().any(|n| n.contains("cluster.servers=3")));

    let dat_name = names
        .iter()
        .find(|n| n.ends_with(".dat"))
        .expect("combined .dat file");
    let dat = std::fs::read_to_string(out_dir.join(dat_name)).unwrap();
    let points: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(points.len(), 2, "one data point per swept value:\n{dat}");
    let xs: Vec<f64> = points
        .iter()
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(xs, vec![2.0, 3.0]);
    for point in &points {
        let y: f64 = point.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(y > 0.0, "mean throughput should be positive: {point}");
    }
}

#[test]
fn sweeping_an_unknown_key_fails_before_any_simulation() {
    let dir = scratch("sweep-unknown");
    let out = bin()
        .args(["sweep", "--key", "cluster.nonsense=1,2", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_exit_code(&out, 1);
    assert!(stderr(&out).contains("nonsense"), "stderr: {}", stderr(&out));
}

/// Synthetic knowledge base following one linear law of the message rate.
fn linear_kb(n: usize) -> Vec<KbRow> {
    (0..n)
        .map(|i| {
            // Different strides keep the feature columns linearly independent.
            let spread = |stride: usize| ((i * stride) % n) as f64 / n as f64;
            let features = [
                5.0e7 + 1.0e7 * spread(17),
                0.1 + 0.8 * spread(11),
                200.0 + 3000.0 * spread(7),
                40_000.0 * spread(13),
            ];
            let latency = 2.0e-4 + 1.2e-8 * features[3];
            (features, latency)
        })
        .collect()
}

#[test]
fn train_reports_both_rmse_values_and_writes_a_parseable_dump() {
    let dir = scratch("train");
    let kb_path = dir.join("profile.csv");
    std::fs::write(&kb_path, kb_to_string(&linear_kb(240))).unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args(["train", "--kb"])
        .arg(&kb_path)
        .args(["--split-seed", "3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_success(&out);

    let text = stdout(&out);
    assert!(text.contains("training RMSE:"), "stdout: {text}");
    assert!(text.contains("holdout RMSE:"), "stdout: {text}");

    let dump = std::fs::read_to_string(out_dir.join("profile.tree")).unwrap();
    let tree = ModelTree::parse(&dump).unwrap();
    let rate = 20_000.0;
    let got = tree.predict(&[5.5e7, 0.5, 1500.0, rate], 1.0e-6).latency;
    let want = 2.0e-4 + 1.2e-8 * rate;
    assert!(
        (got - want).abs() < 1.0e-6,
        "tree should recover the linear law: got {got}, want {want}"
    );
}

#[test]
fn train_on_a_header_only_file_reports_an_empty_training_set() {
    let dir = scratch("train-empty");
    let kb_path = dir.join("empty.csv");
    std::fs::write(&kb_path, kb_to_string(&[])).unwrap();
    let out = bin()
        .args(["train", "--kb"])
        .arg(&kb_path)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_exit_code(&out, 1);
    assert!(
        stderr(&out).contains("empty training set"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn train_on_a_malformed_row_names_its_line_number() {
    let dir = scratch("train-bad");
    let kb_path = dir.join("bad.csv");
    let mut text = kb_to_string(&[]);
    text.push_str("1,2,3\n");
    std::fs::write(&kb_path, text).unwrap();
    let out = bin()
        .args(["train", "--kb"])
        .arg(&kb_path)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_exit_code(&out, 1);
    assert!(stderr(&out).contains("line 2"), "stderr: {}", stderr(&out));
}
