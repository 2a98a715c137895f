//! `knn-mdp` command-line front end.
//!
//! Exit codes: 0 success, 1 data error, 2 configuration error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use knn_mdp::dataset::{load_csv, min_max_rescale, TargetColumn};
use knn_mdp::experiments::{
    benchmark_complexity, run_artificial, run_real, ArtificialConfig, BenchmarkConfig, ExperimentReport, KStart,
    NoiseLevel, RealDataConfig, SCHEMA_VERSION,
};
use knn_mdp::selection::{
    aic_select_from, estimate_noise_variance, gcv_select_from, holdout_select, mdp_select_from, vfold_select,
    ArgminReading, Rule, SelectionResult,
};
use knn_mdp::{Error, NeighborTable};

const OUT_DIR_ENV: &str = "KNN_MDP_OUT_DIR";

#[derive(Debug, Parser, Serialize)]
#[command(name = "knn-mdp", version, about = "k-NN regression with data-driven choice of k")]
struct Cli {
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Suppress human-readable summaries on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Run selection rules on a CSV dataset.
    Select(SelectArgs),
    /// Replicated experiment on synthetic data.
    Simulate(SimulateArgs),
    /// Sub-sampling experiment on a real dataset.
    Realdata(RealdataArgs),
    /// Time the discrepancy scan against forced stopping points.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
struct Output {
    /// Directory for report files and the run manifest.
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Include wall-clock timings (outputs are then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Reading {
    /// Report the minimizing k.
    Minimizer,
    /// Report the minimizing k minus one.
    Shifted,
}

impl From<Reading> for ArgminReading {
    fn from(r: Reading) -> Self {
        match r {
            Reading::Minimizer => ArgminReading::Minimizer,
            Reading::Shifted => ArgminReading::ShiftedByOne,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,

    /// Target column name or 0-based index.
    #[arg(long)]
    target: String,

    /// Rules to run (mdp, aic, gcv, holdout, vfcv); repeat or comma-separate.
    #[arg(long = "rule", value_delimiter = ',', required = true, value_parser = parse_rule)]
    rules: Vec<Rule>,

    /// Noise variance σ² for the discrepancy rule.
    #[arg(long, alias = "sigma-sq", conflicts_with = "estimate_sigma")]
    sigma: Option<f64>,

    /// Use the nearest-neighbor estimate of σ² (the default when --sigma is absent).
    #[arg(long)]
    estimate_sigma: bool,

    /// First k of the discrepancy scan (default n).
    #[arg(long)]
    k_start: Option<usize>,

    /// Upper end of the {2..k_max} grid for the other rules (default n).
    #[arg(long)]
    k_max: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 5)]
    folds: usize,

    /// Skip min-max rescaling of covariates.
    #[arg(long)]
    no_rescale: bool,

    #[arg(long, value_enum, default_value_t = Reading::Minimizer)]
    argmin: Reading,

    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    Fig2a,
    Fig2b,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StartArg {
    Sqrt,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NoiseArg {
    Estimated,
    True,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Preset::Fig2a)]
    preset: Preset,

    /// Replications per sample size.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Override the preset's sample sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,

    /// Override the preset's noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,

    #[arg(long = "rule", value_delimiter = ',', value_parser = parse_rule)]
    rules: Option<Vec<Rule>>,

    #[arg(long, value_enum, default_value_t = StartArg::Sqrt)]
    k_start: StartArg,

    /// Noise level given to the discrepancy rule.
    #[arg(long, value_enum, default_value_t = NoiseArg::Estimated)]
    mdp_noise: NoiseArg,

    #[arg(long, value_enum, default_value_t = Reading::Minimizer)]
    argmin: Reading,

    /// Run replications sequentially (steadier timings).
    #[arg(long)]
    sequential: bool,

    /// Count neighbor-table construction in per-rule runtimes.
    #[arg(long)]
    include_table_time: bool,

    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct RealdataArgs {
    #[arg(long)]
    input: PathBuf,

    #[arg(long)]
    target: String,

    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    #[arg(long, value_delimiter = ',', default_value = "5,4,3,2,1")]
    divisors: Vec<usize>,

    #[arg(long = "rule", value_delimiter = ',', default_value = "mdp,aic,vfcv,gcv", value_parser = parse_rule)]
    rules: Vec<Rule>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,

    #[arg(long, value_enum, default_value_t = Reading::Minimizer)]
    argmin: Reading,

    /// Run trials in parallel (ignored with --timing).
    #[arg(long)]
    parallel: bool,

    #[arg(long)]
    include_table_time: bool,

    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,

    /// Number of forced stopping points spread over the scan range.
    #[arg(long, default_value_t = 20)]
    points: usize,

    #[arg(long, default_value_t = 5)]
    repeats: usize,

    #[arg(long)]
    k_start: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[command(flatten)]
    output: Output,
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse::<Rule>().map_err(|e| e.to_string())
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::OutOfRange { .. } => Failure::Config(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn target_column(s: &str) -> TargetColumn {
    TargetColumn::Name(s.to_string())
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    invocation: &'a Cli,
    /// Resolved experiment configuration, including the root seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_manifest(cli: &Cli, dir: &Path, config: Option<serde_json::Value>) -> CliResult<()> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        invocation: cli,
        config,
    };
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    Ok(())
}

fn selection_csv(results: &[SelectionResult], timing: bool) -> String {
    let mut out = String::from("rule,chosen_k,sigma_sq_used,elapsed_ns,ks_evaluated\n");
    for r in results {
        let rec = r.record(timing);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.rule,
            rec.chosen_k,
            rec.sigma_sq_used.map(|v| v.to_string()).unwrap_or_default(),
            rec.elapsed_ns.map(|v| v.to_string()).unwrap_or_default(),
            rec.ks_evaluated
        ));
    }
    out
}

fn selection_ndjson(results: &[SelectionResult], timing: bool) -> CliResult<String> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(&r.record(timing))?);
        out.push('\n');
    }
    Ok(out)
}

fn cmd_select(cli: &Cli, args: &SelectArgs) -> CliResult<()> {
    if args.rules.contains(&Rule::OracleBv) {
        return Err(Failure::Config("the bias-variance oracle needs the true regression function".into()));
    }
    if let Some(s) = args.sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Failure::Config(format!("--sigma must be a finite value >= 0, got {s}")));
        }
    }
    let needs_grid = args.rules.iter().any(|r| *r != Rule::Mdp);
    if needs_grid && args.k_max.is_some_and(|k| k < 2) {
        return Err(Failure::Config("--k-max must be at least 2: the selection grid starts at k = 2".into()));
    }
    if args.k_start == Some(0) {
        return Err(Failure::Config("--k-start must be at least 1".into()));
    }

    let raw = load_csv(&args.input, target_column(&args.target))?;
    let ds = if args.no_rescale { raw } else { min_max_rescale(&raw).dataset };
    let n = ds.len();
    if n < 2 {
        return Err(Failure::Data("need at least two rows".into()));
    }
    let k_start = args.k_start.unwrap_or(n);
    let k_max = args.k_max.unwrap_or(n);
    for (name, k) in [("--k-start", k_start), ("--k-max", k_max)] {
        if k > n {
            return Err(Failure::Config(format!("{name} = {k} exceeds the {n} rows of the dataset")));
        }
    }
    let width = k_start.max(k_max).max(2);
    let table = NeighborTable::build_truncated(&ds, args.seed, width)?;
    let y = ds.responses();
    let sigma_hat_sq = estimate_noise_variance(y, &table)?;
    let grid: Vec<usize> = (2..=k_max).collect();
    let reading: ArgminReading = args.argmin.into();

    let mut results = Vec::with_capacity(args.rules.len());
    for &rule in &args.rules {
        let res = match rule {
            Rule::Mdp => mdp_select_from(y, &table, args.sigma.unwrap_or(sigma_hat_sq), k_start)?,
            Rule::Aic => aic_select_from(y, &table, sigma_hat_sq, k_max)?,
            Rule::Gcv => gcv_select_from(y, &table, k_max)?,
            Rule::Holdout => holdout_select(&ds, args.seed, &grid)?,
            Rule::Vfcv => vfold_select(&ds, args.folds, args.seed, &grid)?,
            Rule::OracleBv => unreachable!("rejected above"),
        };
        results.push(res.with_reading(reading));
    }

    let out = &args.output;
    prepare_dir(&out.out_dir)?;
    let (name, body) = match out.format {
        Format::Csv => ("selection.csv", selection_csv(&results, out.timing)),
        Format::Json => ("selection.ndjson", selection_ndjson(&results, out.timing)?),
    };
    fs::write(out.out_dir.join(name), &body)?;
    write_manifest(cli, &out.out_dir, None)?;
    io::stdout().write_all(body.as_bytes())?;
    if !cli.quiet {
        eprintln!("n = {n}, estimated noise variance = {sigma_hat_sq}");
        for r in &results {
            eprintln!(
                "{:>8}: k = {:<4} ({} values of k evaluated)",
                r.rule.as_str(),
                r.chosen_k,
                r.ks_evaluated
            );
        }
    }
    Ok(())
}

fn write_report(cli: &Cli, report: &ExperimentReport, out: &Output, config: serde_json::Value) -> CliResult<()> {
    prepare_dir(&out.out_dir)?;
    match out.format {
        Format::Csv => {
            let mut summary = Vec::new();
            report.write_summary_csv(&mut summary, out.timing)?;
            fs::write(out.out_dir.join("summary.csv"), &summary)?;
            let mut records = Vec::new();
            report.write_records_csv(&mut records, out.timing)?;
            fs::write(out.out_dir.join("records.csv"), records)?;
            if cli.quiet {
                io::stdout().write_all(&summary)?;
            }
        }
        Format::Json => {
            let mut report = report.clone();
            if !out.timing {
                report.summary.iter_mut().for_each(|s| s.mean_runtime_ns = 0.0);
                report.records.iter_mut().for_each(|r| r.runtime_ns = 0);
            }
            let lines = |rows: Vec<String>| rows.into_iter().map(|l| l + "\n").collect::<String>();
            let summary = lines(report.summary.iter().map(|s| serde_json::to_string(s)).collect::<Result<_, _>>()?);
            let records = lines(report.records.iter().map(|r| serde_json::to_string(r)).collect::<Result<_, _>>()?);
            fs::write(out.out_dir.join("summary.ndjson"), &summary)?;
            fs::write(out.out_dir.join("records.ndjson"), records)?;
            if cli.quiet {
                io::stdout().write_all(summary.as_bytes())?;
            }
        }
    }
    write_manifest(cli, &out.out_dir, Some(config))?;
    if !cli.quiet {
        eprintln!("{:>10} {:>6} {:>14} {:>12} {:>8}", "rule", "n", report.metric.column(), "se", "mean k");
        for s in &report.summary {
            eprintln!(
                "{:>10} {:>6} {:>14.6e} {:>12.3e} {:>8.2}",
                s.rule.as_str(),
                s.n,
                s.mean_loss,
                s.se,
                s.mean_k
            );
        }
        eprintln!("reports written to {}", out.out_dir.display());
    }
    Ok(())
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<()> {
    let mut cfg = match args.preset {
        Preset::Fig2a => ArtificialConfig::fig2a(args.reps as usize, args.seed),
        Preset::Fig2b => ArtificialConfig::fig2b(args.reps as usize, args.seed),
    };
    if let Some(sizes) = &args.sizes {
        cfg.sample_sizes = sizes.clone();
    }
    if let Some(s) = args.sigma {
        cfg.sigma = s;
    }
    if let Some(rules) = &args.rules {
        cfg.rules = rules.clone();
    }
    cfg.k_start = match args.k_start {
        StartArg::Sqrt => KStart::SqrtN,
        StartArg::Full => KStart::Full,
    };
    cfg.mdp_noise = match args.mdp_noise {
        NoiseArg::Estimated => NoiseLevel::Estimated,
        NoiseArg::True => NoiseLevel::True,
    };
    cfg.argmin = args.argmin.into();
    // timings are only comparable without contention
    cfg.parallel = !(args.sequential || args.output.timing);
    cfg.include_table_time = args.include_table_time;
    cfg.validate()?;
    let report = run_artificial(&cfg)?;
    write_report(cli, &report, &args.output, serde_json::to_value(&cfg)?)
}

fn cmd_realdata(cli: &Cli, args: &RealdataArgs) -> CliResult<()> {
    let mut cfg = RealDataConfig::new(&args.input, target_column(&args.target));
    cfg.trials = args.trials as usize;
    cfg.subsample_grid_divisors = args.divisors.clone();
    cfg.rules = args.rules.clone();
    cfg.root_seed = args.seed;
    cfg.train_fraction = args.train_fraction;
    cfg.argmin = args.argmin.into();
    cfg.parallel = args.parallel && !args.output.timing;
    cfg.include_table_time = args.include_table_time;
    cfg.validate()?;
    let report = run_real(&cfg)?;
    write_report(cli, &report, &args.output, serde_json::to_value(&cfg)?)
}

fn cmd_benchmark(cli: &Cli, args: &BenchmarkArgs) -> CliResult<()> {
    if args.n < 4 || args.points < 2 || args.repeats == 0 {
        return Err(Failure::Config("benchmark needs --n >= 4, --points >= 2 and --repeats >= 1".into()));
    }
    let mut cfg = BenchmarkConfig::evenly_spaced(args.n, args.points, args.seed);
    cfg.repeats = args.repeats;
    cfg.k_start = args.k_start;
    if let Some(k) = cfg.k_start {
        let top = k.saturating_sub(1);
        cfg.positions = (0..args.points).map(|p| p * top / (args.points - 1)).collect();
    }
    let table = benchmark_complexity(&cfg)?;
    let out = &args.output;
    prepare_dir(&out.out_dir)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    fs::write(out.out_dir.join("benchmark.csv"), &csv)?;
    fs::write(out.out_dir.join("benchmark.json"), serde_json::to_string_pretty(&table)? + "\n")?;
    write_manifest(cli, &out.out_dir, Some(serde_json::to_value(&cfg)?))?;
    if cli.quiet {
        io::stdout().write_all(&csv)?;
    } else {
        eprintln!("n = {}, k_start = {}", table.n, table.k_start);
        eprintln!("{:>10} {:>8} {:>14}", "evaluated", "chosen k", "runtime (ns)");
        for r in &table.rows {
            eprintln!("{:>10} {:>8} {:>14}", r.ks_evaluated, r.chosen_k, r.runtime_ns);
        }
        eprintln!(
            "linear fit: slope {:.1} ns/step, R² = {:.4}; GCV and AIC evaluate {} and {} values of k",
            table.fit.slope, table.fit.r_squared, table.gcv_ks_evaluated, table.aic_ks_evaluated
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Select(a) => cmd_select(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Realdata(a) => cmd_realdata(cli, a),
        Command::Benchmark(a) => cmd_benchmark(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
