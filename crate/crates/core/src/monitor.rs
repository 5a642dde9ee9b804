//! Held-out evaluation during a solve: test-set MAE and an overfitting
//! detector.

use crate::dense::LowRankFactors;
use crate::error::Result;
use crate::sparse::SampledMatrix;
use crate::svt::train_mae;

/// MAE of the factors on a held-out pattern. Only the held-out entries of
/// `U diag(sigma) V^T` are formed.
pub fn holdout_mae(test: &SampledMatrix, f: &LowRankFactors) -> Result<f64> {
    train_mae(test, f)
}

/// Fires once the held-out error has had an interior minimum and then failed
/// to improve on it for `patience` consecutive iterations.
#[derive(Clone, Debug)]
pub struct OverfitDetector {
    patience: usize,
    best: f64,
    best_iter: usize,
    seen: usize,
    since_best: usize,
}

impl OverfitDetector {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: f64::INFINITY,
            best_iter: 0,
            seen: 0,
            since_best: 0,
        }
    }

    /// Feeds the next held-out error; returns `true` when the detector fires.
    pub fn observe(&mut self, iter: usize, err: f64) -> bool {
        self.seen += 1;
        if err < self.best {
            self.best = err;
            self.best_iter = iter;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.fired()
    }

    /// A minimum at the very first observation is not interior.
    pub fn fired(&self) -> bool {
        self.seen > self.since_best + 1 && self.since_best >= self.patience
    }

    /// `(iteration, error)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best.is_finite().then_some((self.best_iter, self.best))
    }
}

/// Whether `curve` has a minimum before its last point that the remainder
/// never beats.
pub fn has_interior_minimum(curve: &[f64]) -> Option<usize> {
    let (k, _) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))?;
    (k > 0 && k + 1 < curve.len()).then_some(k)
}
