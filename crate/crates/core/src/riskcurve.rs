//! Empirical risk `R_k = ‖(I − A_k)Y‖²_n`, its expectation, and the
//! `λ = n/k` reparameterization with monotone envelopes.

use std::io::Write;

use crate::error::{check_range, Error, Result};
use crate::estimator::{FitSurface, OracleCurves};
use crate::neighbors::NeighborTable;

/// `k ↦ R_k` over an ascending grid of `k` values.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub grid: Vec<usize>,
    pub values: Vec<f64>,
}

impl RiskCurve {
    pub fn new(grid: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "risk grid must be non-empty, positive and strictly ascending".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn value_at(&self, k: usize) -> Option<f64> {
        self.grid.binary_search(&k).ok().map(|i| self.values[i])
    }

    /// Sub-curve on the grid points within `lo..=hi`.
    pub fn restrict(&self, lo: usize, hi: usize) -> Result<Self> {
        let (grid, values) = self
            .grid
            .iter()
            .zip(&self.values)
            .filter(|(k, _)| (lo..=hi).contains(*k))
            .map(|(&k, &v)| (k, v))
            .unzip();
        Self::new(grid, values)
    }

    /// Two-column CSV `k,risk`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,risk")?;
        for (k, r) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{k},{r}")?;
        }
        Ok(())
    }
}

/// `R_k = (1/n) Σ_i (y_i − f^k(x_i))²` for `k = 1..=k_max` of the surface.
pub fn empirical_risk(y: &[f64], surface: &FitSurface) -> Result<RiskCurve> {
    if y.len() != surface.len() {
        return Err(Error::DimensionMismatch {
            expected: surface.len(),
            found: y.len(),
        });
    }
    let k_max = surface.k_max();
    let mut values = vec![0.0; k_max];
    for (i, &yi) in y.iter().enumerate() {
        for (v, &f) in values.iter_mut().zip(surface.point(i)) {
            *v += (yi - f) * (yi - f);
        }
    }
    let n = y.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(RiskCurve {
        grid: (1..=k_max).collect(),
        values,
    })
}

/// `E R_k = σ² + B²(k) − V(k)`, indexed by `k − 1`.
pub fn expected_empirical_risk(oracle: &OracleCurves) -> Vec<f64> {
    oracle
        .bias_sq
        .iter()
        .zip(&oracle.variance)
        .map(|(b, v)| oracle.sigma_sq + b - v)
        .collect()
}

/// Computes `R_k` for `k = k_start, k_start − 1, …` on demand.
///
/// Holds the running neighbor sums `S_i(k)`; stepping from `k` to `k − 1`
/// removes the `k`-th neighbor of every point, which is the
/// `A_{k−1} = k/(k−1)·A_k` (restricted) update. Each step costs `O(n)`.
#[derive(Debug)]
pub struct StreamingRisk<'a> {
    y: &'a [f64],
    table: &'a NeighborTable,
    next_k: usize,
    sums: Vec<f64>,
    evaluated: usize,
}

impl<'a> StreamingRisk<'a> {
    pub fn new(y: &'a [f64], table: &'a NeighborTable, k_start: usize) -> Result<Self> {
        if y.len() != table.len() {
            return Err(Error::DimensionMismatch {
                expected: table.len(),
                found: y.len(),
            });
        }
        check_range("k_start", k_start, 1, table.width())?;
        let sums = (0..table.len())
            .map(|i| table.row(i)[..k_start].iter().map(|&j| y[j as usize]).sum())
            .collect();
        Ok(Self {
            y,
            table,
            next_k: k_start,
            sums,
            evaluated: 0,
        })
    }

    /// Number of `R_k` values produced so far.
    pub fn evaluated(&self) -> usize {
        self.evaluated
    }

    /// The `k` the next call to `next` will evaluate, or 0 once exhausted.
    pub fn next_k(&self) -> usize {
        self.next_k
    }
}

impl Iterator for StreamingRisk<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        let k = self.next_k;
        if k == 0 {
            return None;
        }
        let risk = if k == 1 {
            0.0
        } else {
            let kf = k as f64;
            let total: f64 = self
                .y
                .iter()
                .zip(&self.sums)
                .map(|(&yi, &s)| {
                    let r = yi - s / kf;
                    r * r
                })
                .sum();
            total / self.y.len() as f64
        };
        if k > 1 {
            for (i, s) in self.sums.iter_mut().enumerate() {
                *s -= self.y[self.table.row(i)[k - 1] as usize];
            }
        }
        self.next_k = k - 1;
        self.evaluated += 1;
        Some((k, risk))
    }
}

/// Risk curve in the `λ = n/k` parameterization with its tightest
/// non-increasing lower and upper envelopes. All vectors are ordered by
/// ascending `λ` (descending `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCurve {
    pub ks: Vec<usize>,
    pub lambda: Vec<f64>,
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Running minimum scanning left to right.
pub fn lower_envelope(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(f64::INFINITY, |m, &v| {
            *m = m.min(v);
            Some(*m)
        })
        .collect()
}

/// Running maximum scanning right to left.
pub fn upper_envelope(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = values
        .iter()
        .rev()
        .scan(f64::NEG_INFINITY, |m, &v| {
            *m = m.max(v);
            Some(*m)
        })
        .collect();
    out.reverse();
    out
}

pub fn to_lambda(curve: &RiskCurve, n: usize) -> LambdaCurve {
    let ks: Vec<usize> = curve.grid.iter().rev().copied().collect();
    let lambda = ks.iter().map(|&k| n as f64 / k as f64).collect();
    let values: Vec<f64> = curve.values.iter().rev().copied().collect();
    LambdaCurve {
        lower: lower_envelope(&values),
        upper: upper_envelope(&values),
        ks,
        lambda,
        values,
    }
}

impl LambdaCurve {
    /// `inf{λ : R̃_λ ≤ σ²}` mapped back to `k`.
    pub fn discrepancy_k(&self, sigma_sq: f64) -> Option<usize> {
        self.lower
            .iter()
            .position(|&r| r <= sigma_sq)
            .map(|i| self.ks[i])
    }
}
