//! Replicated simulation and real-data experiments, plus the complexity
//! benchmark for the discrepancy scan.
//!
//! Replications run concurrently when `parallel` is set; every replication
//! derives its own seeds from the root seed, and aggregation walks records in
//! a fixed order, so reports are bit-identical regardless of scheduling.
//! Timings exclude neighbor-table construction unless `include_table_time`
//! is set.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    add_noise, generate_synthetic, load_csv, min_max_rescale, split_train_test, subsample, subsample_grid, Dataset,
    NamedFunction, SyntheticSpec, TargetColumn,
};
use crate::error::{Error, Result};
use crate::estimator::{fit_all, oracle_curves, predict};
use crate::neighbors::{NeighborTable, QueryNeighbors};
use crate::riskcurve::{empirical_risk, expected_empirical_risk};
use crate::seed::{self, Stream};
use crate::selection::{
    aic_select_from, estimate_noise_variance, gcv_select_from, holdout_select, mdp_select_from, oracle_bv_select,
    vfold_select, ArgminReading, Rule, SelectionResult,
};

/// Version of the CSV/JSON report layouts.
pub const SCHEMA_VERSION: u32 = 1;

/// Where the discrepancy scan starts in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KStart {
    /// `⌊√n⌋`
    SqrtN,
    /// `n`
    Full,
}

impl KStart {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            KStart::SqrtN => (n as f64).sqrt().floor() as usize,
            KStart::Full => n,
        }
    }
}

/// Which noise level the discrepancy rule compares against in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// The nearest-neighbor difference estimate.
    Estimated,
    /// The generating σ².
    True,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtificialConfig {
    pub function: NamedFunction,
    pub sigma: f64,
    pub dimension: usize,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub rules: Vec<Rule>,
    pub root_seed: u64,
    pub k_start: KStart,
    pub mdp_noise: NoiseLevel,
    pub folds: usize,
    pub argmin: ArgminReading,
    pub include_table_time: bool,
    pub parallel: bool,
}

impl ArtificialConfig {
    /// Smooth function, σ = 0.15, `n ∈ {50, 80, 100, 160, 200, 250}`.
    pub fn fig2a(replications: usize, root_seed: u64) -> Self {
        Self {
            function: NamedFunction::F1,
            sigma: 0.15,
            dimension: 3,
            sample_sizes: vec![50, 80, 100, 160, 200, 250],
            replications,
            rules: vec![Rule::Mdp, Rule::Holdout, Rule::Gcv, Rule::OracleBv],
            root_seed,
            k_start: KStart::SqrtN,
            mdp_noise: NoiseLevel::Estimated,
            folds: 5,
            argmin: ArgminReading::Minimizer,
            include_table_time: false,
            parallel: true,
        }
    }

    /// Same design with the sinus function.
    pub fn fig2b(replications: usize, root_seed: u64) -> Self {
        Self {
            function: NamedFunction::F2,
            ..Self::fig2a(replications, root_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 4) {
            return Err(Error::InvalidParameter("sample sizes must be given and >= 4".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.rules.is_empty() {
            return Err(Error::InvalidParameter("no rules requested".into()));
        }
        if self.dimension == 0 || self.folds < 2 {
            return Err(Error::InvalidParameter("dimension must be >= 1 and folds >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDataConfig {
    pub csv_path: PathBuf,
    pub target_column: TargetColumn,
    pub subsample_grid_divisors: Vec<usize>,
    pub trials: usize,
    pub rules: Vec<Rule>,
    pub root_seed: u64,
    pub train_fraction: f64,
    pub folds: usize,
    pub argmin: ArgminReading,
    pub include_table_time: bool,
    pub parallel: bool,
}

impl RealDataConfig {
    pub fn new(csv_path: impl Into<PathBuf>, target_column: impl Into<TargetColumn>) -> Self {
        Self {
            csv_path: csv_path.into(),
            target_column: target_column.into(),
            subsample_grid_divisors: vec![5, 4, 3, 2, 1],
            trials: 25,
            rules: vec![Rule::Mdp, Rule::Aic, Rule::Vfcv, Rule::Gcv],
            root_seed: 0,
            train_fraction: 0.7,
            folds: 5,
            argmin: ArgminReading::Minimizer,
            include_table_time: false,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.subsample_grid_divisors.is_empty() || self.subsample_grid_divisors.contains(&0) {
            return Err(Error::InvalidParameter("divisors must be positive integers".into()));
        }
        if self.rules.contains(&Rule::OracleBv) {
            return Err(Error::InvalidParameter("the bias-variance oracle needs the true regression function".into()));
        }
        if self.rules.is_empty() {
            return Err(Error::InvalidParameter("no rules requested".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie in (0, 1) so the test set is non-empty, got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Which loss an experiment reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `‖f^k − F*‖²_n` against the known regression function.
    TruthLoss,
    /// `‖f^k(x_test) − y_test‖` (Euclidean) on held-out data.
    PredictionError,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::TruthLoss => "truth_loss",
            Metric::PredictionError => "prediction_error",
        }
    }
}

/// One selector run inside one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rule: Rule,
    /// Sample size (artificial) or sub-sample size (real data).
    pub n: usize,
    pub replication: usize,
    pub chosen_k: usize,
    pub truth_loss: Option<f64>,
    pub prediction_error: Option<f64>,
    pub sigma_sq_used: Option<f64>,
    pub ks_evaluated: usize,
    pub runtime_ns: u64,
}

impl ReplicationRecord {
    pub fn loss(&self) -> f64 {
        self.truth_loss.or(self.prediction_error).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub rule: Rule,
    pub n: usize,
    pub replications: usize,
    pub mean_loss: f64,
    pub se: f64,
    pub mean_runtime_ns: f64,
    pub mean_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub metric: Metric,
    pub summary: Vec<SummaryRow>,
    pub records: Vec<ReplicationRecord>,
}

/// Mean and standard error (`sd/√N`, sample sd) of a sequence.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(records: &[ReplicationRecord], sizes: &[usize], rules: &[Rule]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &n in sizes {
        for &rule in rules {
            let group: Vec<&ReplicationRecord> = records.iter().filter(|r| r.n == n && r.rule == rule).collect();
            if group.is_empty() {
                continue;
            }
            let losses: Vec<f64> = group.iter().map(|r| r.loss()).collect();
            let (mean_loss, se) = mean_se(&losses);
            let count = group.len() as f64;
            rows.push(SummaryRow {
                rule,
                n,
                replications: group.len(),
                mean_loss,
                se,
                mean_runtime_ns: group.iter().map(|r| r.runtime_ns as f64).sum::<f64>() / count,
                mean_k: group.iter().map(|r| r.chosen_k as f64).sum::<f64>() / count,
            });
        }
    }
    rows
}

fn ns(d: Duration) -> u64 {
    d.as_nanos() as u64
}

fn empirical_sq_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn run_rules(
    rules: &[Rule],
    ds: &Dataset,
    table: &NeighborTable,
    sigma_hat_sq: f64,
    mdp_sigma_sq: f64,
    oracle: Option<(&[f64], f64)>,
    k_top: usize,
    folds: usize,
    split_seed: u64,
    reading: ArgminReading,
) -> Result<Vec<SelectionResult>> {
    let y = ds.responses();
    let grid: Vec<usize> = (2..=k_top).collect();
    rules
        .iter()
        .map(|&rule| {
            let res = match rule {
                Rule::Mdp => mdp_select_from(y, table, mdp_sigma_sq, k_top),
                Rule::OracleBv => {
                    let (truth, sigma_sq) = oracle.ok_or_else(|| {
                        Error::InvalidParameter("bias-variance oracle needs the true regression function".into())
                    })?;
                    let start = Instant::now();
                    let curves = oracle_curves(truth, table, sigma_sq, k_top)?;
                    let mut r = oracle_bv_select(&curves, k_top)?;
                    r.elapsed = start.elapsed();
                    Ok(r)
                }
                Rule::Aic => aic_select_from(y, table, sigma_hat_sq, k_top),
                Rule::Gcv => gcv_select_from(y, table, k_top),
                Rule::Holdout => holdout_select(ds, seed::derive_stream(split_seed, Stream::Holdout, 0), &grid),
                Rule::Vfcv => vfold_select(ds, folds, seed::derive_stream(split_seed, Stream::Folds, 0), &grid),
            }?;
            Ok(res.with_reading(reading))
        })
        .collect()
}

fn artificial_replication(cfg: &ArtificialConfig, n: usize, rep: usize) -> Result<Vec<ReplicationRecord>> {
    let rep_seed = seed::derive(cfg.root_seed, &[n as u64, rep as u64]);
    let spec = SyntheticSpec {
        function: cfg.function.into(),
        noise_sd: cfg.sigma,
        sample_size: n,
        dimension: cfg.dimension,
        seed: rep_seed,
    };
    let (ds, truth) = generate_synthetic(&spec)?;
    let k_top = cfg.k_start.resolve(n).clamp(2, n);
    let table_start = Instant::now();
    let table = NeighborTable::build_truncated(&ds, seed::derive_stream(rep_seed, Stream::Ties, 0), k_top)?;
    let table_ns = if cfg.include_table_time { ns(table_start.elapsed()) } else { 0 };

    let sigma_sq = cfg.sigma * cfg.sigma;
    let sigma_hat_sq = estimate_noise_variance(ds.responses(), &table)?;
    let mdp_sigma_sq = match cfg.mdp_noise {
        NoiseLevel::Estimated => sigma_hat_sq,
        NoiseLevel::True => sigma_sq,
    };
    // a noiseless design still needs a positive σ² for the oracle variance
    let results = run_rules(
        &cfg.rules,
        &ds,
        &table,
        sigma_hat_sq.max(f64::MIN_POSITIVE),
        mdp_sigma_sq,
        Some((&truth, sigma_sq)),
        k_top,
        cfg.folds,
        rep_seed,
        cfg.argmin,
    )?;
    let surface = fit_all(ds.responses(), &table, k_top)?;
    Ok(results
        .into_iter()
        .map(|r| ReplicationRecord {
            rule: r.rule,
            n,
            replication: rep,
            chosen_k: r.chosen_k,
            truth_loss: Some(empirical_sq_norm(&surface.fits_at(r.chosen_k), &truth)),
            prediction_error: None,
            sigma_sq_used: r.sigma_sq_used,
            ks_evaluated: r.ks_evaluated,
            runtime_ns: ns(r.elapsed) + table_ns,
        })
        .collect())
}

/// Synthetic fixed-design experiment: fresh covariates and noise for every
/// replication, losses measured against the known regression function.
pub fn run_artificial(cfg: &ArtificialConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let per_job: Vec<Result<Vec<ReplicationRecord>>> = if cfg.parallel {
        jobs.par_iter().map(|&(n, r)| artificial_replication(cfg, n, r)).collect()
    } else {
        jobs.iter().map(|&(n, r)| artificial_replication(cfg, n, r)).collect()
    };
    let mut records = Vec::with_capacity(jobs.len() * cfg.rules.len());
    for r in per_job {
        records.extend(r?);
    }
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        metric: Metric::TruthLoss,
        summary: summarize(&records, &cfg.sample_sizes, &cfg.rules),
        records,
    })
}

/// `3⌊ln n_s⌋`, capped at `n_s`.
pub fn real_data_k_max(n_s: usize) -> usize {
    (3 * (n_s as f64).ln().floor() as usize).min(n_s)
}

fn real_trial(
    cfg: &RealDataConfig,
    train: &Dataset,
    test: &Dataset,
    n_s: usize,
    trial: usize,
) -> Result<Vec<ReplicationRecord>> {
    let trial_seed = seed::derive(cfg.root_seed, &[Stream::Subsample as u64, n_s as u64, trial as u64]);
    let sample = subsample(train, n_s, trial_seed)?;
    let k_max = real_data_k_max(n_s);
    if k_max < 2 {
        return Err(Error::InvalidParameter(format!("sub-sample of {n_s} points is too small for a k grid")));
    }
    let table_start = Instant::now();
    let table = NeighborTable::build_truncated(&sample, seed::derive_stream(trial_seed, Stream::Ties, 0), k_max)?;
    let table_ns = if cfg.include_table_time { ns(table_start.elapsed()) } else { 0 };
    let sigma_hat_sq = estimate_noise_variance(sample.responses(), &table)?;
    let results = run_rules(
        &cfg.rules,
        &sample,
        &table,
        sigma_hat_sq.max(f64::MIN_POSITIVE),
        sigma_hat_sq,
        None,
        k_max,
        cfg.folds,
        trial_seed,
        cfg.argmin,
    )?;
    let qn = QueryNeighbors::for_dataset(&sample, test, seed::derive_stream(trial_seed, Stream::Ties, 1), k_max)?;
    results
        .into_iter()
        .map(|r| {
            let pred = predict(sample.responses(), &qn, r.chosen_k)?;
            let err = pred
                .iter()
                .zip(test.responses())
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>()
                .sqrt();
            Ok(ReplicationRecord {
                rule: r.rule,
                n: n_s,
                replication: trial,
                chosen_k: r.chosen_k,
                truth_loss: None,
                prediction_error: Some(err),
                sigma_sq_used: r.sigma_sq_used,
                ks_evaluated: r.ks_evaluated,
                runtime_ns: ns(r.elapsed) + table_ns,
            })
        })
        .collect()
}

/// Real-data protocol: rescale, split once, then for each sub-sample size
/// and trial estimate σ̂², run the selectors over `{2..3⌊ln n_s⌋}` and score
/// predictions on the fixed test part.
pub fn run_real(cfg: &RealDataConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = load_csv(&cfg.csv_path, cfg.target_column.clone())?;
    run_real_on(cfg, &ds)
}

/// [`run_real`] on an already loaded dataset.
pub fn run_real_on(cfg: &RealDataConfig, ds: &Dataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rescaled = min_max_rescale(ds).dataset;
    let (train, test) = split_train_test(
        &rescaled,
        cfg.train_fraction,
        seed::derive_stream(cfg.root_seed, Stream::Split, 0),
    )?;
    let sizes = subsample_grid(train.len(), &cfg.subsample_grid_divisors)?;
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&m| (0..cfg.trials).map(move |t| (m, t))).collect();
    let per_job: Vec<Result<Vec<ReplicationRecord>>> = if cfg.parallel {
        jobs.par_iter().map(|&(m, t)| real_trial(cfg, &train, &test, m, t)).collect()
    } else {
        jobs.iter().map(|&(m, t)| real_trial(cfg, &train, &test, m, t)).collect()
    };
    let mut records = Vec::new();
    for r in per_job {
        records.extend(r?);
    }
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        metric: Metric::PredictionError,
        summary: summarize(&records, &sizes, &cfg.rules),
        records,
    })
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    /// `rule,n,replications,mean_<metric>,se,mean_runtime_ns,mean_k`.
    /// Without timing the runtime column is left empty so reruns are
    /// byte-identical.
    pub fn write_summary_csv<W: Write>(&self, mut w: W, with_timing: bool) -> Result<()> {
        writeln!(w, "rule,n,replications,mean_{},se,mean_runtime_ns,mean_k", self.metric.column())?;
        for s in &self.summary {
            let runtime = if with_timing { s.mean_runtime_ns.to_string() } else { String::new() };
            writeln!(w, "{},{},{},{},{},{},{}", s.rule, s.n, s.replications, s.mean_loss, s.se, runtime, s.mean_k)?;
        }
        Ok(())
    }

    /// One row per (replication, rule).
    pub fn write_records_csv<W: Write>(&self, mut w: W, with_timing: bool) -> Result<()> {
        writeln!(
            w,
            "rule,n,replication,chosen_k,truth_loss,prediction_error,sigma_sq_used,ks_evaluated,runtime_ns"
        )?;
        for r in &self.records {
            let runtime = if with_timing { r.runtime_ns.to_string() } else { String::new() };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.rule,
                r.n,
                r.replication,
                r.chosen_k,
                fmt_opt_f64(r.truth_loss),
                fmt_opt_f64(r.prediction_error),
                fmt_opt_f64(r.sigma_sq_used),
                r.ks_evaluated,
                runtime
            )?;
        }
        Ok(())
    }

    /// JSON mirror of the whole report. Timing fields are zeroed when
    /// `with_timing` is false.
    pub fn write_json<W: Write>(&self, w: W, with_timing: bool) -> Result<()> {
        if with_timing {
            serde_json::to_writer_pretty(w, self)?;
        } else {
            let mut copy = self.clone();
            copy.summary.iter_mut().for_each(|s| s.mean_runtime_ns = 0.0);
            copy.records.iter_mut().for_each(|r| r.runtime_ns = 0);
            serde_json::to_writer_pretty(w, &copy)?;
        }
        Ok(())
    }

    pub fn row(&self, rule: Rule, n: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.rule == rule && s.n == n)
    }
}

/// Fixed-design Monte Carlo estimate of `E R_k` against its closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMonteCarlo {
    pub ks: Vec<usize>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub expected: Vec<f64>,
}

impl RiskMonteCarlo {
    /// Largest `|mean − expected| / se` over the grid.
    pub fn max_z(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.expected)
            .zip(&self.se)
            .map(|((m, e), s)| if *s > 0.0 { (m - e).abs() / s } else if m == e { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Draws the design once, then averages `R_k` over `replications` noise
/// draws for `k = 1..=k_max`.
pub fn monte_carlo_risk(
    function: NamedFunction,
    sigma: f64,
    n: usize,
    dimension: usize,
    k_max: usize,
    replications: usize,
    root_seed: u64,
) -> Result<RiskMonteCarlo> {
    if replications < 2 {
        return Err(Error::InvalidParameter("need at least two replications".into()));
    }
    let spec = SyntheticSpec {
        function: function.into(),
        noise_sd: sigma,
        sample_size: n,
        dimension,
        seed: root_seed,
    };
    let (ds, truth) = generate_synthetic(&spec)?;
    let table = NeighborTable::build_truncated(&ds, seed::derive_stream(root_seed, Stream::Ties, 0), k_max)?;
    let oracle = oracle_curves(&truth, &table, sigma * sigma, k_max)?;
    let draws: Vec<Result<Vec<f64>>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let y = add_noise(&truth, sigma, seed::derive(root_seed, &[Stream::Noise as u64, 1 + r as u64]));
            Ok(empirical_risk(&y, &fit_all(&y, &table, k_max)?)?.values)
        })
        .collect();
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    let (mean, se) = (0..k_max)
        .map(|k| mean_se(&draws.iter().map(|d| d[k]).collect::<Vec<_>>()))
        .unzip();
    Ok(RiskMonteCarlo {
        ks: (1..=k_max).collect(),
        mean,
        se,
        expected: expected_empirical_risk(&oracle),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n: usize,
    pub seed: u64,
    /// Requested scan lengths `m = k_start − k`; the threshold is set to
    /// `R_{k_start − m}`, and the scan may stop earlier if the curve dips.
    pub positions: Vec<usize>,
    pub repeats: usize,
    /// Defaults to `n`.
    pub k_start: Option<usize>,
}

impl BenchmarkConfig {
    /// `points` scan lengths spread evenly over `[0, n − 1]`.
    pub fn evenly_spaced(n: usize, points: usize, seed: u64) -> Self {
        let points = points.max(2);
        let positions = (0..points).map(|p| p * (n - 1) / (points - 1)).collect();
        Self {
            n,
            seed,
            positions,
            repeats: 5,
            k_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub requested_steps: usize,
    pub sigma_sq: f64,
    pub chosen_k: usize,
    pub ks_evaluated: usize,
    /// Median over repeats, including construction of the running sums.
    pub runtime_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub n: usize,
    pub k_start: usize,
    pub rows: Vec<BenchmarkRow>,
    pub gcv_ks_evaluated: usize,
    pub aic_ks_evaluated: usize,
    pub gcv_runtime_ns: u64,
    pub aic_runtime_ns: u64,
    pub fit: LinearFit,
}

impl BenchmarkTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "requested_steps,sigma_sq,chosen_k,ks_evaluated,runtime_ns")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.requested_steps, r.sigma_sq, r.chosen_k, r.ks_evaluated, r.runtime_ns)?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Times the discrepancy scan for forced stopping points on one fixed
/// synthetic sample with a precomputed neighbor table. Runs sequentially.
pub fn benchmark_complexity(cfg: &BenchmarkConfig) -> Result<BenchmarkTable> {
    if cfg.n < 4 || cfg.repeats == 0 || cfg.positions.is_empty() {
        return Err(Error::InvalidParameter("benchmark needs n >= 4, repeats >= 1 and some positions".into()));
    }
    let n = cfg.n;
    let k_start = cfg.k_start.unwrap_or(n);
    crate::error::check_range("k_start", k_start, 2, n)?;
    let spec = SyntheticSpec::new(NamedFunction::F1.into(), 0.15, n, cfg.seed);
    let (ds, _) = generate_synthetic(&spec)?;
    let table = NeighborTable::build_truncated(&ds, seed::derive_stream(cfg.seed, Stream::Ties, 0), k_start)?;
    let y = ds.responses();
    let curve = empirical_risk(y, &fit_all(y, &table, k_start)?)?;

    let mut rows = Vec::with_capacity(cfg.positions.len());
    for &m in &cfg.positions {
        let target = k_start.saturating_sub(m).max(1);
        let sigma_sq = curve.values[target - 1];
        let mut times = Vec::with_capacity(cfg.repeats);
        let mut last = None;
        for _ in 0..cfg.repeats {
            let res = mdp_select_from(y, &table, sigma_sq, k_start)?;
            times.push(ns(res.elapsed));
            last = Some(res);
        }
        let res = last.expect("repeats >= 1");
        rows.push(BenchmarkRow {
            requested_steps: m,
            sigma_sq,
            chosen_k: res.chosen_k,
            ks_evaluated: res.ks_evaluated,
            runtime_ns: median(times),
        });
    }
    let gcv = gcv_select_from(y, &table, k_start)?;
    let sigma_hat_sq = estimate_noise_variance(y, &table)?;
    let aic = aic_select_from(y, &table, sigma_hat_sq, k_start)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.ks_evaluated as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.runtime_ns as f64).collect();
    Ok(BenchmarkTable {
        n,
        k_start,
        fit: linear_fit(&xs, &ys),
        rows,
        gcv_ks_evaluated: gcv.ks_evaluated,
        aic_ks_evaluated: aic.ks_evaluated,
        gcv_runtime_ns: ns(gcv.elapsed),
        aic_runtime_ns: ns(aic.elapsed),
    })
}
