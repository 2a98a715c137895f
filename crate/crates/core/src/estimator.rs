//! k-NN fitted values for a whole range of `k`, computed as running prefix
//! means along each neighbor ordering, plus oracle bias/variance curves.

use rayon::prelude::*;

use crate::error::{check_range, Error, Result};
use crate::neighbors::{NeighborTable, QueryNeighbors};

/// Fitted values `f^k(x_i)` for `k = 1..=k_max`.
///
/// Stored point-major: the `k_max` fits of point `i` are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSurface {
    n: usize,
    k_max: usize,
    fits: Vec<f64>,
}

impl FitSurface {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `f^k(x_i)`, with `k` 1-based.
    pub fn fit(&self, k: usize, i: usize) -> f64 {
        debug_assert!((1..=self.k_max).contains(&k));
        self.fits[i * self.k_max + k - 1]
    }

    /// The vector `F^k = A_k Y`.
    pub fn fits_at(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.fit(k, i)).collect()
    }

    /// All fits of point `i`, indexed by `k − 1`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.fits[i * self.k_max..(i + 1) * self.k_max]
    }
}

fn prefix_means<'a, F>(n_rows: usize, row: F, y: &[f64], k_max: usize) -> Vec<f64>
where
    F: Fn(usize) -> &'a [u32] + Sync,
{
    let mut fits = vec![0.0; n_rows * k_max];
    fits.par_chunks_mut(k_max).enumerate().for_each(|(i, out)| {
        let mut sum = 0.0;
        for (k0, (&j, o)) in row(i).iter().zip(out.iter_mut()).enumerate() {
            sum += y[j as usize];
            *o = sum / (k0 + 1) as f64;
        }
    });
    fits
}

/// Fits on the training points for every `k ≤ k_max`.
pub fn fit_all(y: &[f64], table: &NeighborTable, k_max: usize) -> Result<FitSurface> {
    if y.len() != table.len() {
        return Err(Error::DimensionMismatch {
            expected: table.len(),
            found: y.len(),
        });
    }
    check_range("k_max", k_max, 1, table.width())?;
    let fits = prefix_means(table.len(), |i| &table.row(i)[..k_max], y, k_max);
    Ok(FitSurface {
        n: table.len(),
        k_max,
        fits,
    })
}

/// Out-of-sample fits at the query points for every `k ≤ k_max`.
pub fn predict_all(y_train: &[f64], qn: &QueryNeighbors, k_max: usize) -> Result<FitSurface> {
    if y_train.len() != qn.n_train() {
        return Err(Error::DimensionMismatch {
            expected: qn.n_train(),
            found: y_train.len(),
        });
    }
    check_range("k_max", k_max, 1, qn.width())?;
    let fits = prefix_means(qn.len(), |q| &qn.row(q)[..k_max], y_train, k_max);
    Ok(FitSurface {
        n: qn.len(),
        k_max,
        fits,
    })
}

/// `f^k(x_0) = a_k(x_0)ᵀ y` for each query.
pub fn predict(y_train: &[f64], qn: &QueryNeighbors, k: usize) -> Result<Vec<f64>> {
    if y_train.len() != qn.n_train() {
        return Err(Error::DimensionMismatch {
            expected: qn.n_train(),
            found: y_train.len(),
        });
    }
    check_range("k", k, 1, qn.width())?;
    Ok((0..qn.len())
        .map(|q| qn.row(q)[..k].iter().map(|&j| y_train[j as usize]).sum::<f64>() / k as f64)
        .collect())
}

/// Squared bias, variance and risk as functions of `k`, indexed by `k − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCurves {
    pub sigma_sq: f64,
    pub bias_sq: Vec<f64>,
    pub variance: Vec<f64>,
    pub mse: Vec<f64>,
}

impl OracleCurves {
    pub fn k_max(&self) -> usize {
        self.bias_sq.len()
    }

    pub fn bias_sq_at(&self, k: usize) -> f64 {
        self.bias_sq[k - 1]
    }

    pub fn variance_at(&self, k: usize) -> f64 {
        self.variance[k - 1]
    }

    pub fn mse_at(&self, k: usize) -> f64 {
        self.mse[k - 1]
    }
}

/// `B²(k) = ‖(I − A_k)F*‖²_n`, `V(k) = σ²/k`, `MSE = B² + V`.
pub fn oracle_curves(
    truth: &[f64],
    table: &NeighborTable,
    sigma_sq: f64,
    k_max: usize,
) -> Result<OracleCurves> {
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma_sq must be >= 0, got {sigma_sq}")));
    }
    let surface = fit_all(truth, table, k_max)?;
    let n = truth.len() as f64;
    let mut bias_sq = vec![0.0; k_max];
    for (i, &f) in truth.iter().enumerate() {
        for (b, &fit) in bias_sq.iter_mut().zip(surface.point(i)) {
            *b += (fit - f) * (fit - f);
        }
    }
    bias_sq.iter_mut().for_each(|b| *b /= n);
    // A_1 = I: make B²(1) exactly zero regardless of summation order
    bias_sq[0] = 0.0;
    let variance: Vec<f64> = (1..=k_max).map(|k| sigma_sq / k as f64).collect();
    let mse = bias_sq.iter().zip(&variance).map(|(b, v)| b + v).collect();
    Ok(OracleCurves {
        sigma_sq,
        bias_sq,
        variance,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn d4() -> (Dataset, NeighborTable) {
        let ds = Dataset::new(vec![0.0, 1.0, 3.0, 7.0], 1, vec![0.0, 2.0, 6.0, 14.0]).unwrap();
        let t = NeighborTable::build(&ds, 0);
        (ds, t)
    }

    #[test]
    fn d4_fits() {
        let (ds, t) = d4();
        let s = fit_all(ds.responses(), &t, 4).unwrap();
        assert_eq!(s.fits_at(1), ds.responses());
        assert_eq!(s.fits_at(2), vec![1.0, 1.0, 4.0, 10.0]);
        let third = s.fits_at(3);
        let expected = [8.0 / 3.0, 8.0 / 3.0, 8.0 / 3.0, 22.0 / 3.0];
        for (a, b) in third.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(fit_all(ds.responses(), &t, 0).is_err());
        assert!(fit_all(ds.responses(), &t, 5).is_err());
    }

    #[test]
    fn d4_prediction() {
        let (ds, _) = d4();
        for seed in 0..8 {
            let qn = QueryNeighbors::build(&ds, &[2.0, 3.0], 1, seed).unwrap();
            let p2 = predict(ds.responses(), &qn, 2).unwrap();
            assert_eq!(p2[0], 4.0);
            let p1 = predict(ds.responses(), &qn, 1).unwrap();
            assert_eq!(p1[1], 6.0);
            let p4 = predict(ds.responses(), &qn, 4).unwrap();
            assert_eq!(p4, vec![5.5, 5.5]);
            assert!(predict(ds.responses(), &qn, 5).is_err());
            let all = predict_all(ds.responses(), &qn, 4).unwrap();
            for k in 1..=4 {
                assert_eq!(all.fits_at(k), predict(ds.responses(), &qn, k).unwrap());
            }
        }
    }

    #[test]
    fn d4_oracle() {
        let (ds, t) = d4();
        let o = oracle_curves(ds.responses(), &t, 0.01, 4).unwrap();
        assert_eq!(o.bias_sq_at(1), 0.0);
        assert_eq!(o.bias_sq_at(2), 5.5);
        let five = Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], 1, vec![0.0; 5]).unwrap();
        let t5 = NeighborTable::build(&five, 0);
        let o5 = oracle_curves(five.responses(), &t5, 0.01, 5).unwrap();
        assert!((o5.variance_at(5) - 0.002).abs() < 1e-18);
        for k in 1..=4 {
            assert_eq!(o.mse_at(k), o.bias_sq_at(k) + o.variance_at(k));
        }
    }

    #[test]
    fn variance_sandwich() {
        let (ds, t) = d4();
        let o = oracle_curves(ds.responses(), &t, 0.3, 4).unwrap();
        for k in 2..=4 {
            let (prev, cur) = (o.variance_at(k - 1), o.variance_at(k));
            assert!(cur < prev && 0.5 * prev <= cur);
        }
    }
}
