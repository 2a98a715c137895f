//! Data-driven and oracle rules for choosing the neighbor count `k`.
//!
//! All argmin-based rules break ties toward the smallest `k` and report the
//! minimizer itself. [`ArgminReading::ShiftedByOne`] reproduces the literal
//! "argmin − 1" convention for compatibility.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit_all, predict_all, OracleCurves};
use crate::neighbors::{NeighborTable, QueryNeighbors};
use crate::riskcurve::{empirical_risk, RiskCurve, StreamingRisk};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Minimum discrepancy principle, `sup{k : R_k ≤ σ²}`.
    Mdp,
    /// Bias-variance crossing `inf{k : B²(k) ≥ V(k)}`; needs the truth.
    OracleBv,
    Aic,
    Gcv,
    Holdout,
    Vfcv,
}

impl Rule {
    pub const ALL: [Rule; 6] = [Rule::Mdp, Rule::OracleBv, Rule::Aic, Rule::Gcv, Rule::Holdout, Rule::Vfcv];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Mdp => "mdp",
            Rule::OracleBv => "oracle_bv",
            Rule::Aic => "aic",
            Rule::Gcv => "gcv",
            Rule::Holdout => "holdout",
            Rule::Vfcv => "vfcv",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "mdp" | "tau" => Rule::Mdp,
            "oracle" | "oracle_bv" | "bv" | "kstar" => Rule::OracleBv,
            "aic" | "cp" => Rule::Aic,
            "gcv" => Rule::Gcv,
            "holdout" | "ho" => Rule::Holdout,
            "vfcv" | "vfold" | "cv" => Rule::Vfcv,
            other => return Err(Error::InvalidParameter(format!("unknown rule {other:?}"))),
        })
    }
}

/// How to turn an argmin over `k = 2, …` into the reported `k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgminReading {
    /// Report the minimizing `k`.
    #[default]
    Minimizer,
    /// Report the minimizing `k` minus one (never below 1).
    ShiftedByOne,
}

/// Outcome of one selector run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub rule: Rule,
    pub chosen_k: usize,
    /// `(k, score)` for every `k` the rule looked at, in evaluation order.
    pub score_trace: Vec<(usize, f64)>,
    pub sigma_sq_used: Option<f64>,
    pub elapsed: Duration,
    pub ks_evaluated: usize,
}

/// Flat serialization of a [`SelectionResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub rule: Rule,
    pub chosen_k: usize,
    pub sigma_sq_used: Option<f64>,
    pub elapsed_ns: Option<u64>,
    pub ks_evaluated: usize,
}

impl SelectionResult {
    /// `with_timing = false` blanks the elapsed field so repeated runs
    /// serialize identically.
    pub fn record(&self, with_timing: bool) -> SelectionRecord {
        SelectionRecord {
            rule: self.rule,
            chosen_k: self.chosen_k,
            sigma_sq_used: self.sigma_sq_used,
            elapsed_ns: with_timing.then(|| self.elapsed.as_nanos() as u64),
            ks_evaluated: self.ks_evaluated,
        }
    }

    pub fn with_reading(mut self, reading: ArgminReading) -> Self {
        if reading == ArgminReading::ShiftedByOne && matches!(self.rule, Rule::Aic | Rule::Gcv | Rule::Holdout | Rule::Vfcv) {
            self.chosen_k = self.chosen_k.saturating_sub(1).max(1);
        }
        self
    }
}

/// Smallest `k` among the minimal scores.
fn argmin(trace: &[(usize, f64)]) -> usize {
    let mut best = trace[0];
    for &(k, s) in &trace[1..] {
        if s < best.1 {
            best = (k, s);
        }
    }
    best.0
}

fn check_sigma(sigma_sq: f64) -> Result<()> {
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise variance must be finite and >= 0, got {sigma_sq}")));
    }
    Ok(())
}

/// `σ̂² = ‖(I − A_2)Y‖² / (n (1 − 1/2))`.
pub fn estimate_noise_variance(y: &[f64], table: &NeighborTable) -> Result<f64> {
    let n = y.len();
    if n < 2 || table.width() < 2 {
        return Err(Error::InvalidParameter("noise estimate needs n >= 2 and two neighbors per point".into()));
    }
    if n != table.len() {
        return Err(Error::DimensionMismatch {
            expected: table.len(),
            found: n,
        });
    }
    let rss: f64 = (0..n)
        .map(|i| {
            let nn = y[table.row(i)[1] as usize];
            let r = y[i] - 0.5 * (y[i] + nn);
            r * r
        })
        .sum();
    Ok(rss / (n as f64 * 0.5))
}

/// Scans the stream downward and stops at the first `k` with `R_k ≤ σ²`.
///
/// `R_1 = 0`, so the scan always terminates with a valid `k`.
pub fn mdp_select(stream: &mut StreamingRisk<'_>, sigma_sq: f64) -> Result<SelectionResult> {
    check_sigma(sigma_sq)?;
    let start = Instant::now();
    let before = stream.evaluated();
    let mut trace = Vec::new();
    let mut chosen = None;
    for (k, r) in stream.by_ref() {
        trace.push((k, r));
        if r <= sigma_sq {
            chosen = Some(k);
            break;
        }
    }
    let chosen_k = chosen.expect("R_1 = 0 always satisfies the threshold");
    Ok(SelectionResult {
        rule: Rule::Mdp,
        chosen_k,
        score_trace: trace,
        sigma_sq_used: Some(sigma_sq),
        elapsed: start.elapsed(),
        ks_evaluated: stream.evaluated() - before,
    })
}

/// [`mdp_select`] including construction of the running sums at `k_start`
/// in the reported time.
pub fn mdp_select_from(y: &[f64], table: &NeighborTable, sigma_sq: f64, k_start: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let mut stream = StreamingRisk::new(y, table, k_start)?;
    let mut res = mdp_select(&mut stream, sigma_sq)?;
    res.elapsed = start.elapsed();
    Ok(res)
}

/// First `k` with `B²(k) ≥ V(k)`, falling back to `k_max`.
pub fn oracle_bv_select(oracle: &OracleCurves, k_max: usize) -> Result<SelectionResult> {
    let k_max = k_max.min(oracle.k_max());
    if k_max == 0 {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut chosen = k_max;
    for k in 1..=k_max {
        let gap = oracle.bias_sq_at(k) - oracle.variance_at(k);
        trace.push((k, gap));
        if gap >= 0.0 {
            chosen = k;
            break;
        }
    }
    Ok(SelectionResult {
        rule: Rule::OracleBv,
        chosen_k: chosen,
        ks_evaluated: trace.len(),
        score_trace: trace,
        sigma_sq_used: Some(oracle.sigma_sq),
        elapsed: start.elapsed(),
    })
}

fn penalized_grid(curve: &RiskCurve) -> Result<Vec<(usize, f64)>> {
    let pts: Vec<(usize, f64)> = curve
        .grid
        .iter()
        .zip(&curve.values)
        .filter(|(k, _)| **k >= 2)
        .map(|(&k, &r)| (k, r))
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidParameter("grid must contain some k >= 2".into()));
    }
    Ok(pts)
}

/// AIC / Mallows' Cp: `(R_k + 2σ̂²/k) / σ̂²` over the grid points `k ≥ 2`.
pub fn aic_select(curve: &RiskCurve, sigma_hat_sq: f64) -> Result<SelectionResult> {
    if !(sigma_hat_sq > 0.0 && sigma_hat_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!("AIC needs a positive noise estimate, got {sigma_hat_sq}")));
    }
    let start = Instant::now();
    let trace: Vec<(usize, f64)> = penalized_grid(curve)?
        .into_iter()
        .map(|(k, r)| (k, (r + 2.0 * sigma_hat_sq / k as f64) / sigma_hat_sq))
        .collect();
    Ok(SelectionResult {
        rule: Rule::Aic,
        chosen_k: argmin(&trace),
        ks_evaluated: trace.len(),
        score_trace: trace,
        sigma_sq_used: Some(sigma_hat_sq),
        elapsed: start.elapsed(),
    })
}

/// GCV: `R_k / (1 − 1/k)²` over the grid points `k ≥ 2`.
pub fn gcv_select(curve: &RiskCurve) -> Result<SelectionResult> {
    let start = Instant::now();
    let trace: Vec<(usize, f64)> = penalized_grid(curve)?
        .into_iter()
        .map(|(k, r)| {
            let shrink = 1.0 - 1.0 / k as f64;
            (k, r / (shrink * shrink))
        })
        .collect();
    Ok(SelectionResult {
        rule: Rule::Gcv,
        chosen_k: argmin(&trace),
        ks_evaluated: trace.len(),
        score_trace: trace,
        sigma_sq_used: None,
        elapsed: start.elapsed(),
    })
}

fn full_curve(y: &[f64], table: &NeighborTable, k_max: usize) -> Result<RiskCurve> {
    empirical_risk(y, &fit_all(y, table, k_max)?)
}

/// AIC over `{2..=k_max}`, timing the curve computation as well.
pub fn aic_select_from(y: &[f64], table: &NeighborTable, sigma_hat_sq: f64, k_max: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let mut res = aic_select(&full_curve(y, table, k_max)?, sigma_hat_sq)?;
    res.elapsed = start.elapsed();
    Ok(res)
}

/// GCV over `{2..=k_max}`, timing the curve computation as well.
pub fn gcv_select_from(y: &[f64], table: &NeighborTable, k_max: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let mut res = gcv_select(&full_curve(y, table, k_max)?)?;
    res.elapsed = start.elapsed();
    Ok(res)
}

fn validate_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("k grid must be non-empty, positive and strictly ascending".into()));
    }
    Ok(())
}

fn cap_grid(grid: &[usize], limit: usize, rule: Rule) -> Result<Vec<usize>> {
    let capped: Vec<usize> = grid.iter().copied().filter(|&k| k <= limit).collect();
    if capped.len() < grid.len() {
        log::warn!("{rule}: k grid capped at {limit} (training part size)");
    }
    if capped.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{rule}: no k in the grid fits a training part of {limit} points"
        )));
    }
    Ok(capped)
}

/// Adds the squared prediction errors of `test` rows (fit on `train`) into
/// `acc`, one slot per grid entry, then returns the number of test rows.
fn accumulate_test_errors(train: &Dataset, test: &Dataset, grid: &[usize], tie_seed: u64, acc: &mut [f64]) -> Result<usize> {
    let k_top = *grid.last().expect("non-empty grid");
    let qn = QueryNeighbors::for_dataset(train, test, tie_seed, k_top)?;
    let preds = predict_all(train.responses(), &qn, k_top)?;
    for (q, &y) in test.responses().iter().enumerate() {
        let row = preds.point(q);
        for (a, &k) in acc.iter_mut().zip(grid) {
            let e = row[k - 1] - y;
            *a += e * e;
        }
    }
    Ok(test.len())
}

/// Hold-out: fit on a random half (`⌊n/2⌋` points), score mean squared error
/// on the other half.
pub fn holdout_select(ds: &Dataset, seed: u64, k_grid: &[usize]) -> Result<SelectionResult> {
    validate_grid(k_grid)?;
    let n = ds.len();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("hold-out needs n >= 4, got {n}")));
    }
    let start = Instant::now();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive_stream(seed, Stream::Holdout, 0)));
    let test_idx = idx.split_off(n / 2);
    let (train, test) = (ds.select(&idx), ds.select(&test_idx));
    let grid = cap_grid(k_grid, train.len(), Rule::Holdout)?;
    let mut acc = vec![0.0; grid.len()];
    let m = accumulate_test_errors(&train, &test, &grid, seed::derive_stream(seed, Stream::Ties, 0), &mut acc)?;
    let trace: Vec<(usize, f64)> = grid.iter().zip(&acc).map(|(&k, &s)| (k, s / m as f64)).collect();
    Ok(SelectionResult {
        rule: Rule::Holdout,
        chosen_k: argmin(&trace),
        ks_evaluated: trace.len(),
        score_trace: trace,
        sigma_sq_used: None,
        elapsed: start.elapsed(),
    })
}

/// Random assignment of `0..n` to `v` folds whose sizes differ by at most one.
pub fn fold_assignment(n: usize, v: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive_stream(seed, Stream::Folds, 0)));
    let mut folds = vec![Vec::with_capacity(n / v + 1); v];
    for (p, i) in idx.into_iter().enumerate() {
        folds[p % v].push(i);
    }
    folds
}

/// V-fold cross-validation: average over folds of the held-out mean squared
/// error.
pub fn vfold_select(ds: &Dataset, v: usize, seed: u64, k_grid: &[usize]) -> Result<SelectionResult> {
    validate_grid(k_grid)?;
    let n = ds.len();
    if v < 2 || v > n {
        return Err(Error::InvalidParameter(format!("fold count must lie in [2, {n}], got {v}")));
    }
    let start = Instant::now();
    let folds = fold_assignment(n, v, seed);
    let smallest_train = n - folds.iter().map(Vec::len).max().unwrap_or(0);
    let grid = cap_grid(k_grid, smallest_train, Rule::Vfcv)?;
    let mut total = vec![0.0; grid.len()];
    for (f, held) in folds.iter().enumerate() {
        let mut in_fold = vec![false; n];
        held.iter().for_each(|&i| in_fold[i] = true);
        let train_idx: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let mut acc = vec![0.0; grid.len()];
        let tie_seed = seed::derive(seed, &[Stream::Ties as u64, f as u64]);
        let m = accumulate_test_errors(&ds.select(&train_idx), &ds.select(held), &grid, tie_seed, &mut acc)?;
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a / m as f64;
        }
    }
    let trace: Vec<(usize, f64)> = grid.iter().zip(&total).map(|(&k, &s)| (k, s / v as f64)).collect();
    Ok(SelectionResult {
        rule: Rule::Vfcv,
        chosen_k: argmin(&trace),
        ks_evaluated: trace.len(),
        score_trace: trace,
        sigma_sq_used: None,
        elapsed: start.elapsed(),
    })
}
