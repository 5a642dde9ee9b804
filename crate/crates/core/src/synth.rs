//! Seeded synthetic instances: low-rank matrices, prescribed spectra,
//! uniform sample sets, smooth low-rank images and noisy rating matrices.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dense::{derive_seed, gaussian_block, orthonormalize, seeded_rng};
use crate::error::{Error, Result};
use crate::io::{GrayImage, RatingsDataset};
use crate::sparse::SampledMatrix;

fn check_shape(m: usize, n: usize, r: usize) -> Result<()> {
    if m == 0 || n == 0 || r == 0 || r > m.min(n) {
        return Err(Error::Dimension(format!(
            "need 1 <= rank <= min(m, n), got rank {r} for {m}x{n}"
        )));
    }
    Ok(())
}

/// `L R^T` with i.i.d. standard normal `m x r` and `n x r` factors.
pub fn low_rank_matrix(m: usize, n: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_shape(m, n, r)?;
    let l = gaussian_block(m, r, derive_seed(seed, 0))?.into_matrix();
    let rt = gaussian_block(n, r, derive_seed(seed, 1))?.into_matrix();
    Ok(l * rt.transpose())
}

/// Random orthonormal singular vectors around the given spectrum.
pub fn matrix_with_spectrum(m: usize, n: usize, sigma: &[f64], seed: u64) -> Result<DMatrix<f64>> {
    let k = sigma.len();
    check_shape(m, n, k)?;
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidParameter(
            "spectrum must be finite and non-negative".into(),
        ));
    }
    let u = orthonormalize(gaussian_block(m, k, derive_seed(seed, 0))?.into_matrix());
    let v = orthonormalize(gaussian_block(n, k, derive_seed(seed, 1))?.into_matrix());
    let mut us = u;
    for (j, s) in sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    Ok(us * v.transpose())
}

/// Full-rank matrix with singular values `1, ratio, ratio^2, ...`.
pub fn geometric_spectrum_matrix(m: usize, n: usize, ratio: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let sigma: Vec<f64> = (0..m.min(n)).map(|i| ratio.powi(i as i32)).collect();
    matrix_with_spectrum(m, n, &sigma, seed)
}

/// `floor(fraction * m * n)` distinct positions drawn uniformly, row-major.
pub fn uniform_positions(m: usize, n: usize, fraction: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total = m * n;
    let count = ((fraction * total as f64).floor() as usize).min(total);
    if count == 0 {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} of {m}x{n} selects nothing"
        )));
    }
    let mut picks = index::sample(&mut seeded_rng(seed), total, count).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|p| (p / n, p % n)).collect())
}

/// Samples `full` on a uniform random set of positions.
pub fn sample_uniform(full: &DMatrix<f64>, fraction: f64, seed: u64) -> Result<SampledMatrix> {
    let positions = uniform_positions(full.nrows(), full.ncols(), fraction, seed)?;
    SampledMatrix::sample_dense(full, &positions)
}

/// A smooth `height x width` image of rank at most `rank` before 8-bit
/// quantization: a sum of outer products of low-frequency cosine profiles
/// with decaying weights, affinely mapped onto `[0, 255]`.
pub fn smooth_low_rank_image(width: usize, height: usize, rank: usize, seed: u64) -> Result<GrayImage> {
    check_shape(height, width, rank)?;
    let mut rng = seeded_rng(seed);
    let mut profile = |len: usize| -> Vec<f64> {
        let freq = rng.random_range(0.5..4.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let freq2 = rng.random_range(0.5..4.0);
        let phase2 = rng.random_range(0.0..2.0 * PI);
        (0..len)
            .map(|t| {
                let x = t as f64 / len as f64;
                (2.0 * PI * freq * x + phase).cos() + 0.5 * (2.0 * PI * freq2 * x + phase2).sin()
            })
            .collect()
    };
    let mut img = DMatrix::zeros(height, width);
    for k in 0..rank {
        let col = profile(height);
        let row = profile(width);
        let weight = 0.85f64.powi(k as i32);
        for j in 0..width {
            for i in 0..height {
                img[(i, j)] += weight * col[i] * row[j];
            }
        }
    }
    let (lo, hi) = img
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    img.apply(|v| *v = 10.0 + 235.0 * (*v - lo) / span);
    GrayImage::from_matrix(&img)
}

/// Parameters for [`synthetic_ratings`].
#[derive(Clone, Debug)]
pub struct RatingsSpec {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    /// Fraction of the `users x items` grid that carries a rating.
    pub density: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

/// Noisy low-rank ratings on a 1..=5 scale.
///
/// The clean matrix is `3 + L R^T` scaled so its entries have unit standard
/// deviation; observed ratings add Gaussian noise and clip to `[1, 5]`.
/// Returns the dataset and the clean matrix.
pub fn synthetic_ratings(spec: &RatingsSpec) -> Result<(RatingsDataset, DMatrix<f64>)> {
    let RatingsSpec {
        users,
        items,
        rank,
        density,
        noise,
        seed,
    } = *spec;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise must be finite and non-negative, got {noise}"
        )));
    }
    let scale = 1.0 / (rank as f64).sqrt();
    let clean = low_rank_matrix(users, items, rank, derive_seed(seed, 0))?.map(|v| 3.0 + v * scale);
    let positions = uniform_positions(users, items, density, derive_seed(seed, 1))?;
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = seeded_rng(derive_seed(seed, 2));
    let triples = positions
        .into_iter()
        .map(|(u, i)| (u, i, (clean[(u, i)] + normal.sample(&mut rng)).clamp(1.0, 5.0)))
        .collect();
    let provenance =
        format!("synthetic: {users} users x {items} items, rank {rank}, density {density}, noise {noise}, seed {seed}");
    Ok((RatingsDataset::from_triples(users, items, triples, provenance)?, clean))
}
