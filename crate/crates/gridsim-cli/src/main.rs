//! Command-line front end for the grid simulator.
//!
//! Three subcommands:
//!
//! * `run`   — one configuration, one or more seeds, report CSV + config echo.
//! * `sweep` — a configuration crossed with per-key value lists, one report
//!   CSV per combination plus a combined gnuplot data file.
//! * `train` — fit the message-latency model tree from a knowledge-base CSV
//!   and write its textual dump.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
//! input data), 2 runtime error (simulation or output I/O failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridsim::config::{flatten, Config};
use gridsim::net::tree::{parse_kb, split_holdout, KbRow, ModelTree, TrainParams};
use gridsim::stats::SimulationReport;

#[derive(Parser)]
#[command(
    name = "gridsim",
    version,
    about = "Discrete-event simulator for a replicated in-memory transactional data grid"
)]
struct Cli {
    /// Print the effective configuration and per-seed reports.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration across one or more seeds.
    Run(RunArgs),
    /// Run a configuration across every combination of swept key values.
    Sweep(SweepArgs),
    /// Train the message-latency model tree from a knowledge-base CSV.
    Train(TrainArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set cluster.servers=8`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated seed list; defaults to the seed in the config.
    #[arg(long, value_name = "S1,S2,...", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for the report CSV and the config echo.
    #[arg(short, long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Fixed override applied to every combination. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Swept key with its value list, e.g. `--key cluster.servers=4,8,16`.
    /// Repeatable; multiple keys produce the cross product.
    #[arg(short = 'k', long = "key", value_name = "KEY=V1,V2,...", required = true)]
    keys: Vec<String>,
    /// Comma-separated seed list; defaults to the seed in the config.
    #[arg(long, value_name = "S1,S2,...", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for per-combination CSVs and the combined data file.
    #[arg(short, long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Knowledge-base CSV (feature columns plus latency in microseconds).
    #[arg(long, value_name = "FILE")]
    kb: PathBuf,
    /// Output directory for the tree dump.
    #[arg(short, long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// File name of the tree dump; defaults to `<kb stem>.tree`.
    #[arg(long, value_name = "NAME")]
    tree_name: Option<String>,
    /// Fraction of rows held out for validation.
    #[arg(long, value_name = "FRACTION", default_value_t = 0.2)]
    holdout: f64,
    /// Seed of the train/holdout shuffle.
    #[arg(long, value_name = "SEED", default_value_t = 7)]
    split_seed: u64,
    /// Minimum rows per leaf.
    #[arg(long, value_name = "N")]
    min_leaf: Option<usize>,
    /// Maximum tree depth.
    #[arg(long, value_name = "N")]
    max_depth: Option<usize>,
    /// Minimum standard-deviation reduction for a split, as a fraction.
    #[arg(long, value_name = "FRACTION")]
    min_sdr: Option<f64>,
    /// Pruning factor; subtrees are collapsed unless they beat their parent
    /// model by this factor.
    #[arg(long, value_name = "FACTOR")]
    prune: Option<f64>,
}

/// Failures split by exit code: validation (1) versus runtime (2).
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> CliError {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, cli.verbose),
        Command::Sweep(args) => cmd_sweep(&args, cli.verbose),
        Command::Train(args) => cmd_train(&args, cli.verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Loads the config file (or the built-in defaults) and applies overrides.
fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    Config::from_toml_with_overrides(&text, overrides).map_err(CliError::validation)
}

fn print_effective_config(cfg: &Config) {
    println!("# effective configuration (digest {:016x})", cfg.digest());
    for (key, value) in flatten(cfg) {
        println!("#   {key} = {value}");
    }
}

/// Runs the configuration once per seed and returns the reports in seed order.
fn execute_seeds(cfg: &Config, seeds: &[u64], verbose: bool) -> Result<Vec<SimulationReport>, CliError> {
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut run_cfg = cfg.clone();
        run_cfg.run.seed = seed;
        let builder = run_cfg.to_builder().map_err(CliError::validation)?;
        let sim = builder.build().map_err(CliError::validation)?;
        let output = sim.run();
        if verbose {
            println!("{}", output.report);
        }
        reports.push(output.report);
    }
    Ok(reports)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Relative standard deviation (sample std-dev over mean); 0 for one value.
fn relative_std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    if m == 0.0 {
        0.0
    } else {
        var.sqrt() / m
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(mean(&present))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

/// Aggregate CSV row over per-seed reports: the seed column says `aggregate`,
/// numeric columns hold means, and the trailing column carries the relative
/// standard deviation of throughput instead of a trace hash.
fn aggregate_row(reports: &[SimulationReport]) -> String {
    let f = |get: &dyn Fn(&SimulationReport) -> f64| {
        mean(&reports.iter().map(get).collect::<Vec<_>>())
    };
    let o = |get: &dyn Fn(&SimulationReport) -> Option<f64>| {
        fmt_opt(mean_opt(reports.iter().map(get)))
    };
    let servers = reports[0].cpu_utilization.len();
    let cpu = (0..servers)
        .map(|i| format!("{:.6}", f(&|r| r.cpu_utilization[i])))
        .collect::<Vec<_>>()
        .join(";");
    let throughputs: Vec<f64> = reports.iter().map(|r| r.throughput_tps).collect();
    format!(
        "aggregate,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},rsd={}",
        reports[0].config_hash,
        o(&|r| r.warmup_cutoff_s),
        f(&|r| r.end_time_s),
        f(&|r| r.measured_time_s),
        f(&|r| r.throughput_tps),
        o(&|r| r.commit_probability),
        f(&|r| r.update_attempts as f64),
        f(&|r| r.update_commits as f64),
        f(&|r| r.update_aborts as f64),
        f(&|r| r.retries as f64),
        f(&|r| r.read_only_commits as f64),
        o(&|r| r.read_latency.mean),
        o(&|r| r.read_latency.p50),
        o(&|r| r.read_latency.p95),
        o(&|r| r.update_latency.mean),
        o(&|r| r.update_latency.p50),
        o(&|r| r.update_latency.p95),
        cpu,
        f(&|r| r.net_extrapolations as f64),
        o(&|r| r.mean_prepare_delay_s),
        o(&|r| r.msg_rate_final_rel_change),
        relative_std_dev(&throughputs),
    )
}

fn report_csv(reports: &[SimulationReport]) -> String {
    let mut csv = String::from(SimulationReport::csv_header());
    csv.push('\n');
    for report in reports {
        csv.push_str(&report.csv_row());
        csv.push('\n');
    }
    csv.push_str(&aggregate_row(reports));
    csv.push('\n');
    csv
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn seeds_or_default(cfg: &Config, seeds: &[u64]) -> Vec<u64> {
    if seeds.is_empty() {
        vec![cfg.run.seed]
    } else {
        seeds.to_vec()
    }
}

fn cmd_run(args: &RunArgs, verbose: bool) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref(), &args.set)?;
    if verbose {
        print_effective_config(&cfg);
    }
    let seeds = seeds_or_default(&cfg, &args.seeds);
    let reports = execute_seeds(&cfg, &seeds, verbose)?;

    create_out_dir(&args.out)?;
    let label = cfg.label();
    let report_path = args.out.join(format!("run-{label}.csv"));
    let echo_path = args.out.join(format!("config-{label}.toml"));
    write_file(&report_path, &report_csv(&reports))?;
    write_file(&echo_path, &cfg.echo())?;

    for report in &reports {
        println!(
            "seed {:>3}: {:.1} tx/s over {:.3} s measured",
            report.seed, report.throughput_tps, report.measured_time_s
        );
    }
    let throughputs: Vec<f64> = reports.iter().map(|r| r.throughput_tps).collect();
    println!(
        "aggregate over {} seed(s): mean {:.1} tx/s, rsd {:.4}",
        reports.len(),
        mean(&throughputs),
        relative_std_dev(&throughputs)
    );
    println!("report: {}", report_path.display());
    println!("config echo: {}", echo_path.display());
    Ok(())
}

/// One swept key with its raw value list, as parsed from `--key K=V1,V2,...`.
struct SweptKey {
    key: String,
    values: Vec<String>,
}

fn parse_swept_key(raw: &str) -> Result<SweptKey, CliError> {
    let (key, list) = raw.split_once('=').ok_or_else(|| {
        CliError::Validation(format!("swept key {raw:?} must look like key=v1,v2,..."))
    })?;
    let values: Vec<String> = list.split(',').map(str::to_string).collect();
    if values.iter().any(|v| v.is_empty()) {
        return Err(CliError::Validation(format!(
            "swept key {key:?} has an empty value in {list:?}"
        )));
    }
    Ok(SweptKey {
        key: key.to_string(),
        values,
    })
}

/// Cross product of the value lists, in the order the keys were given: the
/// last key varies fastest.
fn combinations(keys: &[SweptKey]) -> Vec<Vec<(String, String)>> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for swept in keys {
        combos = combos
            .into_iter()
            .flat_map(|combo| {
                swept.values.iter().map(move |value| {
                    let mut next = combo.clone();
                    next.push((swept.key.clone(), value.clone()));
                    next
                })
            })
            .collect();
    }
    combos
}

/// `/` in a value would split a file name into directories.
fn sanitize(value: &str) -> String {
    value.replace('/', "_")
}

/// Gnuplot column for a swept value: the value itself when numeric, else its
/// position in the value list.
fn numeric_or_index(value: &str, swept: &SweptKey) -> f64 {
    value.parse::<f64>().unwrap_or_else(|_| {
        swept.values.iter().position(|v| v == value).unwrap_or(0) as f64
    })
}

fn cmd_sweep(args: &SweepArgs, verbose: bool) -> Result<(), CliError> {
    let keys: Vec<SweptKey> = args
        .keys
        .iter()
        .map(|raw| parse_swept_key(raw))
        .collect::<Result<_, _>>()?;
    let base = load_config(args.config.as_deref(), &args.set)?;
    if verbose {
        print_effective_config(&base);
    }
    let seeds = seeds_or_default(&base, &args.seeds);
    let base_label = base.label();

    // Validate every combination up front so nothing runs on a bad grid.
    let combos = combinations(&keys);
    let mut configs = Vec::with_capacity(combos.len());
    for combo in &combos {
        let mut overrides = args.set.clone();
        overrides.extend(combo.iter().map(|(k, v)| format!("{k}={v}")));
        let text = match args.config.as_deref() {
            Some(p) => std::fs::read_to_string(p).map_err(|e| {
                CliError::Validation(format!("cannot read config {}: {e}", p.display()))
            })?,
            None => String::new(),
        };
        let cfg = Config::from_toml_with_overrides(&text, &overrides).map_err(CliError::validation)?;
        configs.push(cfg);
    }

    create_out_dir(&args.out)?;
    let mut dat = String::new();
    writeln!(dat, "# sweep {base_label}: {} combination(s)", combos.len()).unwrap();
    writeln!(
        dat,
        "# columns: {} mean_throughput_tps throughput_rsd",
        keys.iter().map(|k| k.key.as_str()).collect::<Vec<_>>().join(" ")
    )
    .unwrap();
    writeln!(
        dat,
        "# seeds: {}",
        seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    )
    .unwrap();

    for (combo, cfg) in combos.iter().zip(&configs) {
        let reports = execute_seeds(cfg, &seeds, verbose)?;
        let suffix = combo
            .iter()
            .map(|(k, v)| format!("{k}={}", sanitize(v)))
            .collect::<Vec<_>>()
            .join("-");
        let combo_path = args.out.join(format!("sweep-{}-{suffix}.csv", cfg.label()));
        write_file(&combo_path, &report_csv(&reports))?;

        let throughputs: Vec<f64> = reports.iter().map(|r| r.throughput_tps).collect();
        let xs = combo
            .iter()
            .zip(&keys)
            .map(|((_, v), swept)| format!("{}", numeric_or_index(v, swept)))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(dat, "{xs} {} {}", mean(&throughputs), relative_std_dev(&throughputs)).unwrap();
        println!(
            "{suffix}: mean {:.1} tx/s over {} seed(s) -> {}",
            mean(&throughputs),
            seeds.len(),
            combo_path.display()
        );
    }

    let dat_path = args.out.join(format!("sweep-{base_label}.dat"));
    write_file(&dat_path, &dat)?;
    println!("combined data file: {}", dat_path.display());
    Ok(())
}

fn train_params(args: &TrainArgs) -> TrainParams {
    let mut params = TrainParams::default();
    if let Some(v) = args.min_leaf {
        params.min_leaf = v;
    }
    if let Some(v) = args.max_depth {
        params.max_depth = v;
    }
    if let Some(v) = args.min_sdr {
        params.min_sdr_fraction = v;
    }
    if let Some(v) = args.prune {
        params.prune_factor = v;
    }
    params
}

fn rmse_label(tree: &ModelTree, rows: &[KbRow]) -> String {
    if rows.is_empty() {
        "NA (no rows)".to_string()
    } else {
        format!("{:.3e} s over {} row(s)", tree.rmse(rows), rows.len())
    }
}

fn cmd_train(args: &TrainArgs, verbose: bool) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(CliError::Validation(format!(
            "holdout fraction {} must lie in [0, 1)",
            args.holdout
        )));
    }
    let text = std::fs::read_to_string(&args.kb).map_err(|e| {
        CliError::Validation(format!("cannot read knowledge base {}: {e}", args.kb.display()))
    })?;
    let rows = parse_kb(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.kb.display())))?;
    if rows.is_empty() {
        return Err(CliError::Validation(format!(
            "empty training set: {} has a header but no data rows",
            args.kb.display()
        )));
    }

    let (train_rows, holdout_rows) = split_holdout(&rows, args.holdout, args.split_seed);
    let params = train_params(args);
    let tree = ModelTree::train(&train_rows, &params).map_err(CliError::validation)?;

    create_out_dir(&args.out)?;
    let tree_name = args.tree_name.clone().unwrap_or_else(|| {
        let stem = args
            .kb
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".to_string());
        format!("{stem}.tree")
    });
    let tree_path = args.out.join(tree_name);
    let dump = tree.dump();
    write_file(&tree_path, &dump)?;
    if verbose {
        print!("{dump}");
    }

    println!(
        "trained {} leaf/leaves from {} row(s) (holdout fraction {}, split seed {})",
        tree.n_leaves(),
        train_rows.len(),
        args.holdout,
        args.split_seed
    );
    println!("training RMSE: {}", rmse_label(&tree, &train_rows));
    println!("holdout RMSE: {}", rmse_label(&tree, &holdout_rows));
    println!("tree dump: {}", tree_path.display());
    Ok(())
}
