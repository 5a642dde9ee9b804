//! Matrices supported on a fixed sample set.
//!
//! Both the observed data and every SVT iterate live here. The iterate's
//! support never grows past the sample set, so it is never densified; the
//! pattern is shared behind an [`Arc`] and only the values change.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dense::{gaussian_block, DenseBlock, LowRankFactors};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};

/// Index structure of a sample set: entries sorted row-major, with row offsets
/// and a column-major permutation for transposed traversal.
#[derive(Debug, PartialEq, Eq)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    col_ptr: Vec<usize>,
    col_order: Vec<usize>,
}

impl Pattern {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// `(row, col)` of entry `e` in row-major order.
    pub fn position(&self, e: usize) -> (usize, usize) {
        (self.row_idx[e], self.col_idx[e])
    }

    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_idx.iter().copied().zip(self.col_idx.iter().copied())
    }

    /// Entry id of `(i, j)` if it is in the pattern.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nrows {
            return None;
        }
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }
}

/// A sparse `m x n` matrix stored as values on a shared [`Pattern`].
#[derive(Clone, Debug)]
pub struct SampledMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl PartialEq for SampledMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.same_pattern(other) && self.values == other.values
    }
}

impl SampledMatrix {
    /// Builds from `(row, col, value)` triplets in any order.
    ///
    /// Duplicates, out-of-range indices, non-finite values and empty input are
    /// errors.
    pub fn from_triplets(m: usize, n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Pattern(format!("empty frame {m}x{n}")));
        }
        if triplets.is_empty() {
            return Err(Error::Pattern("no sampled entries".into()));
        }
        for &(i, j, v) in &triplets {
            if i >= m || j >= n {
                return Err(Error::Pattern(format!("entry ({i}, {j}) outside {m}x{n}")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sampled entry"));
            }
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = triplets.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Pattern(format!("duplicate entry ({}, {})", w[0].0, w[0].1)));
        }

        let nnz = triplets.len();
        let mut row_ptr = vec![0usize; m + 1];
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(nnz);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (i, j, v) in triplets {
            row_ptr[i + 1] += 1;
            col_ptr[j + 1] += 1;
            row_idx.push(i);
            col_idx.push(j);
            values.push(v);
        }
        for k in 0..m {
            row_ptr[k + 1] += row_ptr[k];
        }
        for k in 0..n {
            col_ptr[k + 1] += col_ptr[k];
        }
        // Stable counting sort by column keeps rows ascending within a column.
        let mut next = col_ptr.clone();
        let mut col_order = vec![0usize; nnz];
        for (e, &j) in col_idx.iter().enumerate() {
            col_order[next[j]] = e;
            next[j] += 1;
        }

        let pattern = Pattern {
            nrows: m,
            ncols: n,
            row_ptr,
            row_idx,
            col_idx,
            col_ptr,
            col_order,
        };
        Ok(Self {
            pattern: Arc::new(pattern),
            values,
        })
    }

    /// Same pattern, new values (given in row-major entry order).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::Dimension(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                self.nnz()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sampled entry"));
        }
        Ok(Self {
            pattern: Arc::clone(&self.pattern),
            values,
        })
    }

    /// Samples the given positions of a dense matrix.
    pub fn sample_dense(full: &DMatrix<f64>, positions: &[(usize, usize)]) -> Result<Self> {
        let triplets = positions.iter().map(|&(i, j)| (i, j, full[(i, j)])).collect();
        Self::from_triplets(full.nrows(), full.ncols(), triplets)
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Values in row-major entry order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.pattern.find(i, j).map(|e| self.values[e])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pattern
            .positions()
            .zip(self.values.iter().copied())
            .map(|((i, j), v)| (i, j, v))
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern
    }

    /// Dense copy with zeros off the pattern.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), self.ncols());
        for (i, j, v) in self.triplets() {
            out[(i, j)] = v;
        }
        out
    }

    /// Entrywise `f` applied to the values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

fn check_inner(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!(
            "{what}: inner dimension {expected} vs block with {got} rows"
        )));
    }
    Ok(())
}

/// `S * X` for an `n x k` block.
pub fn sp_mult(s: &SampledMatrix, x: &DenseBlock) -> Result<DenseBlock> {
    sp_mult_with(s, x, Parallelism::default())
}

pub fn sp_mult_with(s: &SampledMatrix, x: &DenseBlock, par: Parallelism) -> Result<DenseBlock> {
    check_inner("sp_mult", s.ncols(), x.rows())?;
    Ok(DenseBlock::from_matrix_unchecked(mult_rows(s, x.matrix(), par)))
}

/// `S^T * X` for an `m x k` block.
pub fn sp_mult_t(s: &SampledMatrix, x: &DenseBlock) -> Result<DenseBlock> {
    sp_mult_t_with(s, x, Parallelism::default())
}

pub fn sp_mult_t_with(s: &SampledMatrix, x: &DenseBlock, par: Parallelism) -> Result<DenseBlock> {
    check_inner("sp_mult_t", s.nrows(), x.rows())?;
    Ok(DenseBlock::from_matrix_unchecked(mult_cols(s, x.matrix(), par)))
}

pub(crate) fn mult_rows(s: &SampledMatrix, x: &DMatrix<f64>, par: Parallelism) -> DMatrix<f64> {
    let k = x.ncols();
    let p = &*s.pattern;
    let xr = x.transpose();
    let xr = xr.as_slice();
    let vals = &s.values;
    let mut out = vec![0.0; p.nrows * k];
    par::for_each_row(&mut out, k, par, |i, row| {
        for e in p.row_ptr[i]..p.row_ptr[i + 1] {
            let v = vals[e];
            let src = &xr[p.col_idx[e] * k..(p.col_idx[e] + 1) * k];
            for (o, xv) in row.iter_mut().zip(src) {
                *o += v * xv;
            }
        }
    });
    DMatrix::from_row_slice(p.nrows, k, &out)
}

pub(crate) fn mult_cols(s: &SampledMatrix, x: &DMatrix<f64>, par: Parallelism) -> DMatrix<f64> {
    let k = x.ncols();
    let p = &*s.pattern;
    let xr = x.transpose();
    let xr = xr.as_slice();
    let vals = &s.values;
    let mut out = vec![0.0; p.ncols * k];
    par::for_each_row(&mut out, k, par, |j, row| {
        for &e in &p.col_order[p.col_ptr[j]..p.col_ptr[j + 1]] {
            let v = vals[e];
            let src = &xr[p.row_idx[e] * k..(p.row_idx[e] + 1) * k];
            for (o, xv) in row.iter_mut().zip(src) {
                *o += v * xv;
            }
        }
    });
    DMatrix::from_row_slice(p.ncols, k, &out)
}

/// Values of `U * diag(sigma) * V^T` on the pattern of `pattern`.
///
/// Costs `O(nnz * r)`; the product is never formed densely.
pub fn project_low_rank(pattern: &SampledMatrix, f: &LowRankFactors) -> Result<SampledMatrix> {
    project_low_rank_with(pattern, f, Parallelism::default())
}

pub fn project_low_rank_with(pattern: &SampledMatrix, f: &LowRankFactors, par: Parallelism) -> Result<SampledMatrix> {
    if f.nrows() != pattern.nrows() || f.ncols() != pattern.ncols() {
        return Err(Error::Dimension(format!(
            "factors are {}x{}, pattern is {}x{}",
            f.nrows(),
            f.ncols(),
            pattern.nrows(),
            pattern.ncols()
        )));
    }
    let r = f.rank();
    let mut values = vec![0.0; pattern.nnz()];
    if r > 0 {
        let mut us = f.u().matrix().clone();
        for (t, s) in f.sigma().iter().enumerate() {
            us.column_mut(t).scale_mut(*s);
        }
        let us = us.transpose();
        let vr = f.v().matrix().transpose();
        let (us, vr) = (us.as_slice(), vr.as_slice());
        let p = &*pattern.pattern;
        par::fill_indexed(&mut values, par, |e| {
            let (i, j) = p.position(e);
            us[i * r..(i + 1) * r]
                .iter()
                .zip(&vr[j * r..(j + 1) * r])
                .map(|(a, b)| a * b)
                .sum()
        });
    }
    Ok(SampledMatrix {
        pattern: Arc::clone(&pattern.pattern),
        values,
    })
}

/// `Y + alpha * D` on a shared pattern.
pub fn sp_axpy(y: &SampledMatrix, alpha: f64, d: &SampledMatrix) -> Result<SampledMatrix> {
    if !y.same_pattern(d) {
        return Err(Error::Pattern("sp_axpy operands have different patterns".into()));
    }
    let values = y.values.iter().zip(&d.values).map(|(a, b)| a + alpha * b).collect();
    y.with_values(values)
}

pub fn sp_frob_norm_sq(s: &SampledMatrix) -> f64 {
    s.values.iter().map(|v| v * v).sum()
}

/// Power-iteration estimate of the largest singular value.
///
/// Alternates `S v` and `S^T u` from a seeded Gaussian start, renormalising each
/// step. The returned value is `||S v||` for a unit `v`, so it never exceeds the
/// true largest singular value (up to rounding).
pub fn spectral_norm_est(s: &SampledMatrix, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::InvalidParameter("spectral_norm_est needs iters >= 1".into()));
    }
    let par = Parallelism::default();
    let mut v = gaussian_block(s.ncols(), 1, seed)?.into_matrix();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let vn = v.norm();
        if vn == 0.0 {
            break;
        }
        v /= vn;
        let u = mult_rows(s, &v, par);
        estimate = u.norm();
        if estimate == 0.0 {
            break;
        }
        v = mult_cols(s, &u, par);
    }
    Ok(estimate)
}
