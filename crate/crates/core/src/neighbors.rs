//! Exact Euclidean neighbor orderings.
//!
//! Row `i` of a [`NeighborTable`] lists training indices by increasing
//! distance to `x_i`, starting with `i` itself. The first `k` entries of that
//! row are the support of row `i` of the smoothing matrix `A_k`, so a single
//! table encodes every `A_k` at once.
//!
//! Ties are broken by a per-row seeded shuffle followed by a stable sort on
//! distance. Squared distances are stored; [`NeighborTable::distance`] takes
//! the root on demand.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{check_range, Error, Result};
use crate::seed::{self, Stream};

/// Per-point neighbor orderings of a training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    n: usize,
    d: usize,
    width: usize,
    seed: u64,
    order: Vec<u32>,
    sq_dist: Vec<f64>,
}

/// Orderings of training points around external query points.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryNeighbors {
    n_queries: usize,
    n_train: usize,
    width: usize,
    order: Vec<u32>,
    sq_dist: Vec<f64>,
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Orders `reference` rows around `query`, keeping the first `width`.
///
/// `self_index` is moved to the front before sorting so that it wins any
/// zero-distance tie (duplicated points).
fn order_row(
    query: &[f64],
    reference: &[f64],
    d: usize,
    self_index: Option<usize>,
    row_seed: u64,
    width: usize,
    out_order: &mut [u32],
    out_dist: &mut [f64],
) {
    let n = reference.len() / d;
    let mut idx: Vec<u32> = (0..n as u32).collect();
    idx.shuffle(&mut seed::rng(row_seed));
    if let Some(s) = self_index {
        let pos = idx.iter().position(|&j| j as usize == s).expect("self in range");
        idx.swap(0, pos);
    }
    let mut keyed: Vec<(f64, u32, u32)> = idx
        .iter()
        .enumerate()
        .map(|(pos, &j)| {
            let j_us = j as usize;
            let dist = if Some(j_us) == self_index {
                0.0
            } else {
                sq_euclidean(query, &reference[j_us * d..(j_us + 1) * d])
            };
            (dist, pos as u32, j)
        })
        .collect();
    // (distance, shuffled position) is a total order equal to a stable sort
    // of the shuffled indices by distance
    let cmp = |a: &(f64, u32, u32), b: &(f64, u32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if width < n {
        keyed.select_nth_unstable_by(width - 1, cmp);
        keyed.truncate(width);
    }
    keyed.sort_unstable_by(cmp);
    for (slot, (dist, _, j)) in keyed.into_iter().enumerate() {
        out_order[slot] = j;
        out_dist[slot] = dist;
    }
}

impl NeighborTable {
    /// Full orderings (`width = n`).
    pub fn build(ds: &Dataset, seed: u64) -> Self {
        Self::build_truncated(ds, seed, ds.len()).expect("full width is always valid")
    }

    /// Keeps only the first `width` neighbors of each point. The kept prefix
    /// is identical to the prefix of the full table built with the same seed.
    pub fn build_truncated(ds: &Dataset, seed: u64, width: usize) -> Result<Self> {
        let (n, d) = (ds.len(), ds.dim());
        check_range("width", width, 1, n)?;
        let mut order = vec![0u32; n * width];
        let mut sq_dist = vec![0.0; n * width];
        let points = ds.points();
        order
            .par_chunks_mut(width)
            .zip(sq_dist.par_chunks_mut(width))
            .enumerate()
            .for_each(|(i, (o, dist))| {
                let row_seed = seed::derive(seed, &[Stream::Ties as u64, i as u64]);
                order_row(ds.point(i), points, d, Some(i), row_seed, width, o, dist);
            });
        Ok(Self {
            n,
            d,
            width,
            seed,
            order,
            sq_dist,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of neighbors stored per point.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.order[i * self.width..(i + 1) * self.width]
    }

    pub fn sq_distances(&self, i: usize) -> &[f64] {
        &self.sq_dist[i * self.width..(i + 1) * self.width]
    }

    /// Euclidean distance from `x_i` to its `rank`-th neighbor.
    pub fn distance(&self, i: usize, rank: usize) -> f64 {
        self.sq_distances(i)[rank].sqrt()
    }

    /// Writes the binary dump.
    ///
    /// Layout, all little-endian: magic `KNNTBL01`; `n`, `width`, `d`, `seed`
    /// as u64; `n·width` u32 indices row-major; `n·width` f64 squared
    /// distances row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for v in [self.n as u64, self.width as u64, self.d as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.order.len() * 4 + self.sq_dist.len() * 8);
        for &j in &self.order {
            buf.extend_from_slice(&j.to_le_bytes());
        }
        for &v in &self.sq_dist {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::BadDump("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [n, width, d, seed] = header;
        let (n, width, d) = (n as usize, width as usize, d as usize);
        if n == 0 || width == 0 || width > n || d == 0 {
            return Err(Error::BadDump(format!("inconsistent header n={n} width={width} d={d}")));
        }
        let cells = n
            .checked_mul(width)
            .ok_or_else(|| Error::BadDump("size overflow".into()))?;
        let mut raw = vec![0u8; cells * 12];
        r.read_exact(&mut raw)?;
        let (idx_bytes, dist_bytes) = raw.split_at(cells * 4);
        let order: Vec<u32> = idx_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if order.iter().any(|&j| j as usize >= n) {
            return Err(Error::BadDump("neighbor index out of range".into()));
        }
        let sq_dist = dist_bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            n,
            d,
            width,
            seed,
            order,
            sq_dist,
        })
    }
}

const DUMP_MAGIC: &[u8; 8] = b"KNNTBL01";

impl QueryNeighbors {
    /// Orders training points around each query; `queries` is row-major with
    /// `query_dim` columns.
    pub fn build(train: &Dataset, queries: &[f64], query_dim: usize, seed: u64) -> Result<Self> {
        Self::build_truncated(train, queries, query_dim, seed, train.len())
    }

    pub fn build_truncated(
        train: &Dataset,
        queries: &[f64],
        query_dim: usize,
        seed: u64,
        width: usize,
    ) -> Result<Self> {
        let d = train.dim();
        if query_dim != d || queries.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: query_dim,
            });
        }
        check_range("width", width, 1, train.len())?;
        let n_queries = queries.len() / d;
        let mut order = vec![0u32; n_queries * width];
        let mut sq_dist = vec![0.0; n_queries * width];
        order
            .par_chunks_mut(width)
            .zip(sq_dist.par_chunks_mut(width))
            .enumerate()
            .for_each(|(q, (o, dist))| {
                let row_seed = seed::derive(seed, &[Stream::Ties as u64, q as u64]);
                let query = &queries[q * d..(q + 1) * d];
                order_row(query, train.points(), d, None, row_seed, width, o, dist);
            });
        Ok(Self {
            n_queries,
            n_train: train.len(),
            width,
            order,
            sq_dist,
        })
    }

    /// Convenience: queries taken from another dataset's covariates.
    pub fn for_dataset(train: &Dataset, queries: &Dataset, seed: u64, width: usize) -> Result<Self> {
        Self::build_truncated(train, queries.points(), queries.dim(), seed, width)
    }

    pub fn len(&self) -> usize {
        self.n_queries
    }

    pub fn is_empty(&self) -> bool {
        self.n_queries == 0
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, q: usize) -> &[u32] {
        &self.order[q * self.width..(q + 1) * self.width]
    }

    pub fn distance(&self, q: usize, rank: usize) -> f64 {
        self.sq_dist[q * self.width + rank].sqrt()
    }
}

/// Row-major dense square matrix, used to cross-check the implicit
/// smoothing operators on small instances.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `tr(MᵀM)`, the squared Frobenius norm.
    pub fn gram_trace(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, &vi) in self.data.chunks_exact(self.n).zip(v) {
            for (o, a) in out.iter_mut().zip(r) {
                *o += a * vi;
            }
        }
        out
    }

    /// `I − self`.
    pub fn residual_operator(&self) -> Self {
        let mut m = Self::identity(self.n);
        for (o, a) in m.data.iter_mut().zip(&self.data) {
            *o -= a;
        }
        m
    }

    /// Largest singular value by power iteration on `MᵀM`.
    pub fn spectral_norm(&self, iterations: usize) -> f64 {
        let n = self.n;
        // deterministic start with no special alignment
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_033_988_7).fract()).collect();
        let mut sigma = 0.0;
        for _ in 0..iterations {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let mv = self.mul_vec(&v);
            sigma = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = self.transpose_mul_vec(&mv);
        }
        sigma
    }
}

/// Dense `A_k`: entry `(i, j)` is `1/k` when `j` is among the first `k`
/// neighbors of `i`.
pub fn materialize_matrix(table: &NeighborTable, k: usize) -> Result<DenseMatrix> {
    check_range("k", k, 1, table.width())?;
    let n = table.len();
    let mut m = DenseMatrix::zeros(n);
    let w = 1.0 / k as f64;
    for i in 0..n {
        for &j in &table.row(i)[..k] {
            m.set(i, j as usize, w);
        }
    }
    Ok(m)
}
