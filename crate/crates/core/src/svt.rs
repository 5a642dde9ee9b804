//! The SVT driver.
//!
//! Each iteration computes a partial SVD of the iterate `Y` (supported on the
//! sample set), shrinks it by `tau` to get `X`, measures the sample-set
//! residual `||P(A - X)||_F`, adjusts the sketch precision, and takes the step
//! `Y <- Y + delta * P(A - X)`.
//!
//! Cooling: whenever the residual fails to improve on the best value so far,
//! the sketch error-percentage target is multiplied by `beta`.

use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;
use std::time::Duration;

use cpu_time::ProcessTime;
use serde::{Deserialize, Serialize};

use crate::dense::{self, derive_seed, DenseBlock, LowRankFactors};
use crate::error::{Error, Result};
use crate::sketch::{self, SketchParams};
use crate::sparse::{project_low_rank, sp_axpy, sp_frob_norm_sq, spectral_norm_est, SampledMatrix};

/// Power-iteration count used for the kickstart's spectral norm estimate.
pub const KICKSTART_POWER_ITERS: usize = 20;

const KICKSTART_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvtConfig {
    /// Shrinkage threshold.
    pub tau: f64,
    /// Step size.
    pub delta: f64,
    pub maxit: usize,
    /// Initial sample count of the first (non-recycled) sketch.
    pub t0: usize,
    /// Columns per extension round.
    pub dt: usize,
    /// Power passes per fresh sketch block.
    pub np: usize,
    /// Starting error-percentage target of the sketches.
    pub eps_threshold0: f64,
    /// Annealing factor applied to the target when the residual stalls.
    pub beta: f64,
    pub seed: u64,
}

impl SvtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.eps_threshold0 > 0.0 && self.eps_threshold0 < 1.0) {
            return bad(format!(
                "eps_threshold0 must lie in (0, 1), got {}",
                self.eps_threshold0
            ));
        }
        if self.maxit == 0 || self.t0 == 0 || self.dt == 0 {
            return bad("maxit, t0 and dt must be at least 1".into());
        }
        Ok(())
    }

    fn sketch_params(&self, eps_threshold: f64, iter: usize) -> SketchParams {
        SketchParams {
            t: self.t0,
            dt: self.dt,
            np: self.np,
            eps_threshold,
            seed: derive_seed(self.seed, iter as u64),
            oversample: 0,
        }
    }
}

/// Defaults for a sampled matrix: `tau = ||P(A)||_F`, `delta = sqrt(m n / ns)`,
/// `t0 = max(1, floor(0.05 min(m, n)))`, `dt = 10`, `beta = 0.95`, `np = 1`,
/// `eps_threshold0 = 0.5`, `maxit = 500`.
pub fn default_config(a: &SampledMatrix) -> SvtConfig {
    let (m, n, ns) = (a.nrows() as f64, a.ncols() as f64, a.nnz() as f64);
    let min_dim = a.nrows().min(a.ncols());
    SvtConfig {
        tau: sp_frob_norm_sq(a).sqrt(),
        delta: (m * n / ns).sqrt(),
        maxit: 500,
        t0: ((0.05 * min_dim as f64).floor() as usize).max(1),
        dt: 10,
        np: 1,
        eps_threshold0: 0.5,
        beta: 0.95,
        seed: 0,
    }
}

/// When to declare convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "below", rename_all = "kebab-case")]
pub enum StopRule {
    /// Sample-set residual `||P(A - X)||_F` below the value.
    Residual(f64),
    /// Mean absolute error on the sample set below the value.
    TrainMae(f64),
}

impl StopRule {
    fn satisfied(&self, residual: f64, train_mae: f64) -> bool {
        match *self {
            StopRule::Residual(eps) => residual < eps,
            StopRule::TrainMae(eps) => train_mae < eps,
        }
    }
}

/// Partial-SVD engine used at every iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Backend {
    /// Rank-revealing sketch seeded with the previous iterate's left vectors.
    R4svd,
    /// Rank-revealing sketch from scratch every iteration.
    R3svd,
    /// Fixed-rank randomized SVD.
    RsvdFixed { rank: usize, oversample: usize },
    /// Dense SVD of the densified iterate.
    FullOracle,
}

impl Backend {
    pub const NAMES: [&'static str; 4] = ["r4svd", "r3svd", "rsvd-fixed", "full-oracle"];

    pub fn name(&self) -> &'static str {
        match self {
            Backend::R4svd => "r4svd",
            Backend::R3svd => "r3svd",
            Backend::RsvdFixed { .. } => "rsvd-fixed",
            Backend::FullOracle => "full-oracle",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    /// Parses a backend name; `rsvd-fixed` gets rank 50 and oversampling 10,
    /// which callers usually override.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r4svd" => Ok(Backend::R4svd),
            "r3svd" => Ok(Backend::R3svd),
            "rsvd-fixed" => Ok(Backend::RsvdFixed {
                rank: 50,
                oversample: 10,
            }),
            "full-oracle" => Ok(Backend::FullOracle),
            other => Err(Error::InvalidParameter(format!(
                "unknown backend {other:?}, expected one of {}",
                Backend::NAMES.join(", ")
            ))),
        }
    }
}

/// One row of the convergence trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Rank after shrinkage.
    pub rank: usize,
    /// Rank revealed by the partial SVD before shrinkage.
    pub sketch_rank: usize,
    /// `||P(A - X)||_F`.
    pub residual: f64,
    /// Sketch target in force for the next iteration.
    pub eps_threshold: f64,
    pub train_mae: f64,
    /// CPU time of the partial SVD.
    pub sketch_ms: f64,
    /// CPU time since the solver started.
    pub total_ms: f64,
    /// Held-out MAE, filled in by observers that have an evaluation set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_mae: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Observer,
}

#[derive(Clone, Debug)]
pub struct SvtOutcome {
    /// Shrunk factors at the stopping iteration. On `MaxIterations` these are
    /// the factors with the lowest residual seen.
    pub factors: LowRankFactors,
    pub trace: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl SvtOutcome {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }
}

/// Per-iteration hook. May annotate the record (e.g. `test_mae`) and ask the
/// solver to stop by returning `Break`.
pub type Observer<'a> = dyn FnMut(&mut IterationRecord, &LowRankFactors) -> ControlFlow<()> + 'a;

/// Soft-thresholds the singular values: keeps triplets with `sigma > tau` and
/// subtracts `tau` from each. May return rank 0.
pub fn shrink(f: &LowRankFactors, tau: f64) -> LowRankFactors {
    let keep = f.sigma().iter().take_while(|&&s| s > tau).count();
    let kept = f.truncate(keep);
    let (u, sigma, v) = kept.into_parts();
    let sigma = sigma.into_iter().map(|s| s - tau).collect();
    LowRankFactors::new(u, sigma, v).expect("shrinking preserves ordering")
}

/// `ceil(tau / (delta * sigma1))`, at least 1.
pub fn kickstart_multiplier(tau: f64, delta: f64, sigma1: f64) -> f64 {
    (tau / (delta * sigma1)).ceil().max(1.0)
}

/// Initial iterate `k0 * delta * P(A)` with `k0 = ceil(tau / (delta * sigma1))`,
/// `sigma1` estimated by power iteration.
pub fn kickstart(a: &SampledMatrix, tau: f64, delta: f64, seed: u64) -> Result<SampledMatrix> {
    let sigma1 = spectral_norm_est(a, KICKSTART_POWER_ITERS, seed)?;
    if sigma1 <= 0.0 {
        return Err(Error::ZeroTarget);
    }
    let scale = kickstart_multiplier(tau, delta, sigma1) * delta;
    a.map(|v| scale * v)
}

/// `||A - Y||_F` over the shared pattern.
pub fn residual(a: &SampledMatrix, y: &SampledMatrix) -> Result<f64> {
    if !a.same_pattern(y) {
        return Err(Error::Pattern("residual operands have different patterns".into()));
    }
    Ok(a.values()
        .iter()
        .zip(y.values())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt())
}

fn mean_abs_diff(a: &SampledMatrix, y: &SampledMatrix) -> f64 {
    let sum: f64 = a.values().iter().zip(y.values()).map(|(p, q)| (p - q).abs()).sum();
    sum / a.nnz() as f64
}

/// Mean absolute error of the factors on the sample set.
pub fn train_mae(a: &SampledMatrix, f: &LowRankFactors) -> Result<f64> {
    let p = project_low_rank(a, f)?;
    Ok(mean_abs_diff(a, &p))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// SVT with the recycling sketch backend.
pub fn svt_run(a: &SampledMatrix, cfg: &SvtConfig, stop: StopRule) -> Result<SvtOutcome> {
    solve(a, cfg, stop, Backend::R4svd, None)
}

/// SVT with a dense SVD of the full iterate at every step.
pub fn svt_run_oracle(a: &SampledMatrix, cfg: &SvtConfig, stop: StopRule) -> Result<SvtOutcome> {
    solve(a, cfg, stop, Backend::FullOracle, None)
}

/// Runs SVT on the sampled entries `a` with the given partial-SVD backend.
pub fn solve(
    a: &SampledMatrix,
    cfg: &SvtConfig,
    stop: StopRule,
    backend: Backend,
    mut observer: Option<&mut Observer<'_>>,
) -> Result<SvtOutcome> {
    cfg.validate()?;
    let (m, n) = (a.nrows(), a.ncols());
    let clock = ProcessTime::now();

    let mut y = kickstart(a, cfg.tau, cfg.delta, derive_seed(cfg.seed, KICKSTART_STREAM))?;
    let mut recycled = DenseBlock::empty(m);
    let mut eps_threshold = cfg.eps_threshold0;
    let mut eps_min = f64::INFINITY;
    let mut best: Option<(f64, LowRankFactors)> = None;
    let mut trace = Vec::with_capacity(cfg.maxit.min(1024));

    for iter in 1..=cfg.maxit {
        let sketch_clock = ProcessTime::now();
        let params = cfg.sketch_params(eps_threshold, iter);
        let (factors, sketch_rank) = match backend {
            Backend::R4svd if iter > 1 => {
                let out = sketch::r4svd(&y, &recycled, &params)?;
                (out.factors, out.rank)
            }
            Backend::R4svd | Backend::R3svd => {
                let out = sketch::r3svd(&y, &params)?;
                (out.factors, out.rank)
            }
            Backend::RsvdFixed { rank, oversample } => {
                let limit = m.min(n);
                let oversample = oversample.min(limit - 1);
                let rank = rank.clamp(1, limit - oversample);
                let p = SketchParams { oversample, ..params };
                (sketch::rsvd(&y, rank, &p)?, rank)
            }
            Backend::FullOracle => (dense::svd_of(y.to_dense())?, m.min(n)),
        };
        let sketch_ms = ms(sketch_clock.elapsed());
        if backend == Backend::R4svd {
            // The whole revealed basis carries over, not just the columns that
            // survive shrinkage.
            recycled = factors.u().clone();
        }

        let x = shrink(&factors, cfg.tau);
        let px = project_low_rank(a, &x)?;
        let res = residual(a, &px)?;
        let mae = mean_abs_diff(a, &px);

        if res < eps_min {
            eps_min = res;
        } else {
            eps_threshold *= cfg.beta;
        }

        let mut record = IterationRecord {
            iter,
            rank: x.rank(),
            sketch_rank,
            residual: res,
            eps_threshold,
            train_mae: mae,
            sketch_ms,
            total_ms: ms(clock.elapsed()),
            test_mae: None,
        };
        let halt = match observer.as_deref_mut() {
            Some(obs) => obs(&mut record, &x).is_break(),
            None => false,
        };
        log::debug!(
            "iter {iter}: rank {} (sketch {sketch_rank}), residual {res:.4e}, mae {mae:.4e}, eps_threshold {eps_threshold:.3e}",
            x.rank()
        );
        trace.push(record);

        if stop.satisfied(res, mae) {
            return Ok(SvtOutcome {
                factors: x,
                trace,
                stop_reason: StopReason::Converged,
            });
        }
        if halt {
            return Ok(SvtOutcome {
                factors: x,
                trace,
                stop_reason: StopReason::Observer,
            });
        }
        if best.as_ref().is_none_or(|(r, _)| res < *r) {
            best = Some((res, x.clone()));
        }

        let step: Vec<f64> = a.values().iter().zip(px.values()).map(|(p, q)| p - q).collect();
        y = sp_axpy(&y, cfg.delta, &a.with_values(step)?)?;
    }

    let factors = best.map(|(_, f)| f).unwrap_or_else(|| LowRankFactors::zero(m, n));
    Ok(SvtOutcome {
        factors,
        trace,
        stop_reason: StopReason::MaxIterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn diag_factors(sigma: &[f64]) -> LowRankFactors {
        let n = sigma.len();
        LowRankFactors::new(DenseBlock::identity(n), sigma.to_vec(), DenseBlock::identity(n)).unwrap()
    }

    #[test]
    fn shrink_cases() {
        let f = diag_factors(&[5.0, 3.0, 1.0]);
        let s = shrink(&f, 2.0);
        assert_eq!(s.sigma(), &[3.0, 1.0]);
        assert_eq!(s.rank(), 2);
        assert_eq!(shrink(&f, 5.0).rank(), 0);
        assert_eq!(shrink(&f, 9.0).rank(), 0);
        assert_eq!(shrink(&f, 0.0), f);
    }

    #[test]
    fn default_config_values() {
        let a = SampledMatrix::from_triplets(512, 512, vec![(0, 0, 3.0), (5, 9, 4.0)]).unwrap();
        let cfg = default_config(&a);
        assert_eq!(cfg.tau, 5.0);
        assert_eq!(cfg.t0, 25);
        assert_eq!(cfg.dt, 10);
        assert_eq!(cfg.beta, 0.95);

        let trip: Vec<_> = (0..52429).map(|e| (e / 512, e % 512, 1.0)).collect();
        let a = SampledMatrix::from_triplets(512, 512, trip).unwrap();
        let cfg = default_config(&a);
        assert!((cfg.delta - (512.0f64 * 512.0 / 52429.0).sqrt()).abs() < 1e-15);
        assert!((cfg.delta - 2.236).abs() < 1e-3);

        let tiny = SampledMatrix::from_triplets(3, 10, vec![(0, 0, 1.0)]).unwrap();
        assert_eq!(default_config(&tiny).t0, 1);
    }

    #[test]
    fn kickstart_multiplier_cases() {
        assert_eq!(kickstart_multiplier(10.0, 1.0, 3.0), 4.0);
        assert_eq!(kickstart_multiplier(2.0, 1.0, 3.0), 1.0);
    }

    #[test]
    fn kickstart_scales_samples() {
        // Rank-1 sample set: sigma1 = 2 exactly, tau = 10, delta = 1 -> k0 = 5.
        let a = SampledMatrix::from_triplets(3, 3, vec![(1, 1, 2.0)]).unwrap();
        let y = kickstart(&a, 10.0, 1.0, 4).unwrap();
        assert!(y.same_pattern(&a));
        assert_eq!(y.values(), &[10.0]);
        let y = kickstart(&a, 1.0, 1.5, 4).unwrap();
        assert_eq!(y.values(), &[3.0]);
    }

    #[test]
    fn residual_cases() {
        let a = SampledMatrix::from_triplets(2, 2, vec![(0, 0, 3.0)]).unwrap();
        assert_eq!(residual(&a, &a).unwrap(), 0.0);
        assert_eq!(residual(&a, &a.map(|_| 0.0).unwrap()).unwrap(), 3.0);
        let other = SampledMatrix::from_triplets(2, 2, vec![(1, 0, 3.0)]).unwrap();
        assert!(residual(&a, &other).is_err());
    }

    #[test]
    fn train_mae_cases() {
        let a = SampledMatrix::from_triplets(2, 2, vec![(0, 0, 3.0), (1, 1, 1.0)]).unwrap();
        let exact = diag_factors(&[3.0, 1.0]);
        assert_eq!(train_mae(&a, &exact).unwrap(), 0.0);
        let one = SampledMatrix::from_triplets(2, 2, vec![(0, 0, 5.0)]).unwrap();
        assert_eq!(train_mae(&one, &exact).unwrap(), 2.0);
    }

    #[test]
    fn backend_names_round_trip() {
        for name in Backend::NAMES {
            assert_eq!(name.parse::<Backend>().unwrap().name(), name);
        }
        assert!("lanczos".parse::<Backend>().is_err());
    }

    #[test]
    fn config_validation() {
        let a = SampledMatrix::from_triplets(4, 4, vec![(0, 0, 1.0)]).unwrap();
        let good = default_config(&a);
        assert!(good.validate().is_ok());
        assert!(SvtConfig {
            beta: 1.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(SvtConfig {
            tau: 0.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(SvtConfig { maxit: 0, ..good }.validate().is_err());
    }

    #[test]
    fn fully_observed_rank_one_recovers() {
        let u = DMatrix::from_fn(6, 1, |i, _| 1.0 + i as f64);
        let v = DMatrix::from_fn(5, 1, |j, _| 2.0 - 0.3 * j as f64);
        let full = &u * v.transpose();
        let pos: Vec<_> = (0..6).flat_map(|i| (0..5).map(move |j| (i, j))).collect();
        let a = SampledMatrix::sample_dense(&full, &pos).unwrap();
        let cfg = default_config(&a);
        let out = svt_run(&a, &cfg, StopRule::TrainMae(1e-6)).unwrap();
        assert!(out.converged());
        assert_eq!(out.factors.rank(), 1);
        assert!(out.trace.last().unwrap().train_mae < 1e-6);
    }
}
