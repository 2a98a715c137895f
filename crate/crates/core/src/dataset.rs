//! Fixed-design regression data: ingestion, rescaling, splitting and the
//! synthetic generators used by the simulation harness.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::seed::{self, Stream};

/// Covariates and responses of `n` observations in `d` dimensions.
///
/// Points are stored row-major in one contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    points: Vec<f64>,
    responses: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<f64>, d: usize, responses: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDataset("dimension must be at least 1".into()));
        }
        let n = responses.len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset must have at least one row".into()));
        }
        if points.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: points.len(),
            });
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite covariate at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(pos) = responses.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite response at row {pos}")));
        }
        Ok(Self {
            n,
            d,
            points,
            responses,
        })
    }

    /// Builds a dataset from per-row covariate vectors.
    pub fn from_rows(rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Self::new(rows.concat(), d, responses)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Same covariates, different responses.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        if responses.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: responses.len(),
            });
        }
        Self::new(self.points.clone(), self.d, responses)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut points = Vec::with_capacity(indices.len() * self.d);
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            points.extend_from_slice(self.point(i));
            responses.push(self.responses[i]);
        }
        Self {
            n: indices.len(),
            d: self.d,
            points,
            responses,
        }
    }
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl TargetColumn {
    /// Header names win over numeric interpretation, so a column literally
    /// named `"3"` is still addressable by name.
    fn resolve(&self, header: &csv::StringRecord) -> Result<usize> {
        match self {
            TargetColumn::Name(name) => header
                .iter()
                .position(|h| h.trim() == name)
                .or_else(|| name.parse::<usize>().ok().filter(|&i| i < header.len()))
                .ok_or_else(|| Error::MissingTarget(name.clone())),
            TargetColumn::Index(i) if *i < header.len() => Ok(*i),
            TargetColumn::Index(i) => Err(Error::MissingTarget(i.to_string())),
        }
    }
}

impl From<&str> for TargetColumn {
    fn from(s: &str) -> Self {
        TargetColumn::Name(s.to_string())
    }
}

impl From<usize> for TargetColumn {
    fn from(i: usize) -> Self {
        TargetColumn::Index(i)
    }
}

impl fmt::Display for TargetColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetColumn::Name(s) => f.write_str(s),
            TargetColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Reads a comma-delimited numeric table with a header row.
///
/// Row and column numbers in diagnostics are 1-based and count data rows
/// only (the header is not row 1).
pub fn load_csv(path: impl AsRef<Path>, target: impl Into<TargetColumn>) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    read_csv(file, &target.into())
}

pub fn read_csv<R: std::io::Read>(reader: R, target: &TargetColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyTable);
    }
    let target_idx = target.resolve(&header)?;
    let width = header.len();
    if width < 2 {
        return Err(Error::InvalidDataset(
            "need at least one covariate column besides the target".into(),
        ));
    }

    let mut points = Vec::new();
    let mut responses = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if record.len() != width {
            return Err(Error::RaggedRow {
                row: r + 1,
                found: record.len(),
                expected: width,
            });
        }
        for (c, field) in record.iter().enumerate() {
            let value = field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row: r + 1,
                    column: c + 1,
                    value: field.to_string(),
                })?;
            if c == target_idx {
                responses.push(value);
            } else {
                points.push(value);
            }
        }
    }
    if responses.is_empty() {
        return Err(Error::EmptyTable);
    }
    Dataset::new(points, width - 1, responses)
}

/// Output of [`min_max_rescale`]. Columns listed in `constant_columns`
/// had max = min and were mapped to zero.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub dataset: Dataset,
    pub constant_columns: Vec<usize>,
}

impl Rescaled {
    pub fn has_warning(&self) -> bool {
        !self.constant_columns.is_empty()
    }
}

/// Maps every covariate column onto [0, 1] by `(x - min) / (max - min)`.
pub fn min_max_rescale(ds: &Dataset) -> Rescaled {
    let (n, d) = (ds.n, ds.d);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (j, &v) in ds.point(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let constant_columns: Vec<usize> = (0..d).filter(|&j| hi[j] <= lo[j]).collect();
    for &j in &constant_columns {
        log::warn!("covariate column {j} is constant; rescaled to zeros");
    }
    let mut points = ds.points.clone();
    for row in points.chunks_exact_mut(d) {
        for (j, v) in row.iter_mut().enumerate() {
            let span = hi[j] - lo[j];
            *v = if span > 0.0 { (*v - lo[j]) / span } else { 0.0 };
        }
    }
    Rescaled {
        dataset: Dataset {
            points,
            ..ds.clone()
        },
        constant_columns,
    }
}

/// Regression function used to generate synthetic responses.
#[derive(Clone)]
pub enum RegressionFunction {
    /// `1.5 (‖x − 0.5‖/√d − 0.5)`
    SmoothF1,
    /// `1.5 sin(‖x‖/√d)`
    SinusF2,
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl RegressionFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let scale = (x.len() as f64).sqrt();
        match self {
            RegressionFunction::SmoothF1 => {
                let norm = x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>().sqrt();
                1.5 * (norm / scale - 0.5)
            }
            RegressionFunction::SinusF2 => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                1.5 * (norm / scale).sin()
            }
            RegressionFunction::Custom(f) => f(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressionFunction::SmoothF1 => "f1",
            RegressionFunction::SinusF2 => "f2",
            RegressionFunction::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for RegressionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named regression functions that can appear in config files and on the
/// command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedFunction {
    F1,
    F2,
}

impl From<NamedFunction> for RegressionFunction {
    fn from(f: NamedFunction) -> Self {
        match f {
            NamedFunction::F1 => RegressionFunction::SmoothF1,
            NamedFunction::F2 => RegressionFunction::SinusF2,
        }
    }
}

/// Recipe for a synthetic fixed-design sample.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub function: RegressionFunction,
    pub noise_sd: f64,
    pub sample_size: usize,
    pub dimension: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(function: RegressionFunction, noise_sd: f64, sample_size: usize, seed: u64) -> Self {
        Self {
            function,
            noise_sd,
            sample_size,
            dimension: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        if self.sample_size == 0 || self.dimension == 0 {
            return Err(Error::InvalidParameter(
                "sample_size and dimension must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Parses the key-value config format:
    ///
    /// ```text
    /// function = "f1"      # f1 | f2
    /// noise_sd = 0.15
    /// sample_size = 100
    /// dimension = 3        # optional, default 3
    /// seed = 42
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            function: NamedFunction,
            noise_sd: f64,
            sample_size: usize,
            #[serde(default = "default_dimension")]
            dimension: usize,
            seed: u64,
        }
        fn default_dimension() -> usize {
            3
        }
        let raw: Raw =
            toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let spec = Self {
            function: raw.function.into(),
            noise_sd: raw.noise_sd,
            sample_size: raw.sample_size,
            dimension: raw.dimension,
            seed: raw.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Draws covariates uniformly on `[0,1]^d` and responses `f(x) + N(0, σ²)`.
/// Returns the dataset together with the noiseless truth vector.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let (n, d) = (spec.sample_size, spec.dimension);
    let mut rng = seed::rng(seed::derive_stream(spec.seed, Stream::Covariates, 0));
    let points: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let truth: Vec<f64> = points.chunks_exact(d).map(|x| spec.function.eval(x)).collect();
    let responses = add_noise(&truth, spec.noise_sd, seed::derive_stream(spec.seed, Stream::Noise, 0));
    Ok((Dataset::new(points, d, responses)?, truth))
}

/// `truth + N(0, σ²)` noise from a seeded stream. With `sd = 0` the truth is
/// returned unchanged.
pub fn add_noise(truth: &[f64], sd: f64, seed: u64) -> Vec<f64> {
    if sd == 0.0 {
        return truth.to_vec();
    }
    let normal = Normal::new(0.0, sd).expect("finite non-negative sd");
    let mut rng = seed::rng(seed);
    truth.iter().map(|&f| f + normal.sample(&mut rng)).collect()
}

/// Random partition; the training part receives `⌈fraction · n⌉` rows.
pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let (train_idx, test_idx) = split_indices(ds.n, fraction, seed)?;
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}

pub(crate) fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    // tolerance absorbs representation error, e.g. 0.7 * 10
    let n_train = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidParameter(format!(
            "split of {n} rows at fraction {fraction} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// `m` rows drawn without replacement.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    check_range("subsample size", m, 1, ds.n)?;
    let picked = index::sample(&mut seed::rng(seed), ds.n, m).into_vec();
    Ok(ds.select(&picked))
}

/// Sub-sample sizes `⌊n_train / q⌋` for each divisor `q`.
pub fn subsample_grid(n_train: usize, divisors: &[usize]) -> Result<Vec<usize>> {
    divisors
        .iter()
        .map(|&q| {
            if q == 0 {
                return Err(Error::InvalidParameter("divisors must be positive".into()));
            }
            let m = n_train / q;
            if m == 0 {
                return Err(Error::InvalidParameter(format!(
                    "divisor {q} leaves an empty sub-sample of {n_train} rows"
                )));
            }
            Ok(m)
        })
        .collect()
}

/// Train/test proportions and sub-sampling schedule for real-data runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub subsample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if let Some(&m) = self.subsample_sizes.iter().find(|&&m| m == 0 || m > n_train) {
            return Err(Error::InvalidParameter(format!(
                "sub-sample size {m} exceeds training partition of {n_train} rows"
            )));
        }
        Ok(())
    }
}
