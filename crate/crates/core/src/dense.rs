//! Dense blocks and the deterministic kernels the sketches are built from.
//!
//! All blocks are column-major [`nalgebra::DMatrix<f64>`] values wrapped in
//! [`DenseBlock`], which checks shape and finiteness on construction.

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A dense, finite, column-major matrix.
///
/// Blocks built through [`DenseBlock::new`] have at least one row and one
/// column. The only zero-column blocks are the factor blocks of a rank-0
/// [`LowRankFactors`] (see [`DenseBlock::empty`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    data: DMatrix<f64>,
}

impl DenseBlock {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "dense block must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dense block"));
        }
        Ok(Self { data })
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} block",
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::identity(n, n))
    }

    /// An `rows x 0` block; the factor blocks of a rank-0 approximation.
    pub fn empty(rows: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::zeros(rows, 0))
    }

    pub(crate) fn from_matrix_unchecked(data: DMatrix<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { data }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Column `j` as a contiguous slice.
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.rows();
        &self.data.as_slice()[j * m..(j + 1) * m]
    }

    /// Copies the block into a row-major buffer.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.data.transpose().as_slice().to_vec()
    }

    /// Largest entry of `|Q^T Q - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.data)
    }
}

pub(crate) fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let gram = q.tr_mul(q);
    let mut worst = 0.0f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// The triple `(U, sigma, V)` standing for `U * diag(sigma) * V^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactors {
    u: DenseBlock,
    sigma: Vec<f64>,
    v: DenseBlock,
}

impl LowRankFactors {
    /// Checks shapes and that `sigma` is non-negative and non-increasing.
    /// Orthonormality of the factor columns is the producer's contract and is
    /// not re-verified here.
    pub fn new(u: DenseBlock, sigma: Vec<f64>, v: DenseBlock) -> Result<Self> {
        if u.cols() != sigma.len() || v.cols() != sigma.len() {
            return Err(Error::Dimension(format!(
                "factor ranks disagree: U has {}, sigma has {}, V has {}",
                u.cols(),
                sigma.len(),
                v.cols()
            )));
        }
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("singular values"));
        }
        if sigma.iter().any(|&s| s < 0.0) || sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "singular values must be non-negative and non-increasing".into(),
            ));
        }
        Ok(Self { u, sigma, v })
    }

    /// Rank-0 factors of an `m x n` matrix.
    pub fn zero(m: usize, n: usize) -> Self {
        Self {
            u: DenseBlock::empty(m),
            sigma: Vec::new(),
            v: DenseBlock::empty(n),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn nrows(&self) -> usize {
        self.u.rows()
    }

    pub fn ncols(&self) -> usize {
        self.v.rows()
    }

    pub fn u(&self) -> &DenseBlock {
        &self.u
    }

    pub fn v(&self) -> &DenseBlock {
        &self.v
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn into_parts(self) -> (DenseBlock, Vec<f64>, DenseBlock) {
        (self.u, self.sigma, self.v)
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.rank());
        Self {
            u: DenseBlock::from_matrix_unchecked(self.u.data.columns(0, k).into_owned()),
            sigma: self.sigma[..k].to_vec(),
            v: DenseBlock::from_matrix_unchecked(self.v.data.columns(0, k).into_owned()),
        }
    }

    /// Dense `U * diag(sigma) * V^T`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut us = self.u.data.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.data.transpose()
    }
}

/// splitmix64 finaliser; derives independent sub-seeds from a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The generator behind every sketch: ChaCha8 seeded from a `u64`.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A `rows x cols` block of i.i.d. standard normal draws.
///
/// Draws come from ChaCha8 (`seed_from_u64(seed)`) through `rand_distr`'s
/// `StandardNormal` (ziggurat) and fill the block in column-major order, so a
/// narrower block with the same seed is a prefix of a wider one.
pub fn gaussian_block(rows: usize, cols: usize, seed: u64) -> Result<DenseBlock> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "gaussian block must be non-empty, got {rows}x{cols}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let data = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    Ok(DenseBlock::from_matrix_unchecked(data))
}

/// Economy-size orthonormal factor of a Householder QR.
///
/// Always returns `k` orthonormal columns, including for rank-deficient input;
/// columns past the numerical rank complete the basis.
pub fn qr_orthonormal(x: &DenseBlock) -> Result<DenseBlock> {
    if x.cols() > x.rows() {
        return Err(Error::Dimension(format!(
            "QR needs a tall block, got {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    Ok(DenseBlock::from_matrix_unchecked(orthonormalize(x.data.clone())))
}

pub(crate) fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    if x.ncols() == 0 {
        return x;
    }
    x.qr().q()
}

/// Thin SVD of a small dense block, singular values sorted non-increasing.
pub fn small_svd(b: &DenseBlock) -> Result<LowRankFactors> {
    svd_of(b.data.clone())
}

pub(crate) fn svd_of(b: DMatrix<f64>) -> Result<LowRankFactors> {
    let (rows, cols) = b.shape();
    if rows == 0 || cols == 0 {
        return Ok(LowRankFactors::zero(rows, cols));
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("SVD input"));
    }
    let svd = SVD::try_new(b, true, true, f64::EPSILON, 0).ok_or(Error::SvdNoConvergence { rows, cols })?;
    let u = svd.u.expect("left vectors requested");
    let v = svd.v_t.expect("right vectors requested").transpose();
    let sigma: Vec<f64> = svd.singular_values.iter().map(|s| s.max(0.0)).collect();
    if !u.iter().chain(v.iter()).all(|x| x.is_finite()) {
        return Err(Error::SvdNoConvergence { rows, cols });
    }
    Ok(LowRankFactors {
        u: DenseBlock::from_matrix_unchecked(u),
        sigma,
        v: DenseBlock::from_matrix_unchecked(v),
    })
}

pub fn frob_norm_sq(x: &DenseBlock) -> f64 {
    x.data.iter().map(|v| v * v).sum()
}
