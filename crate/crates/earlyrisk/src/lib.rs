//! From-scratch tabular classification toolkit.
//!
//! The crate covers the full path from a raw symptom CSV to comparative model
//! reports: encoding ([`tabular`]), association-rule mining ([`assoc`]),
//! multi-method feature selection ([`featsel`]), classical and ensemble
//! classifiers ([`baselines`], [`forests`], [`boosting`]), a hybrid
//! convolutional/recurrent network ([`dnet`]), and the evaluation harness
//! ([`evalharness`]).
//!
//! Every source of randomness is seeded from a single `u64` through
//! [`rng::derive_seed`], so identical inputs and seeds give identical outputs
//! on every platform.

pub mod assoc;
pub mod baselines;
pub mod boosting;
pub mod dnet;
pub mod evalharness;
pub mod featsel;
pub mod forests;
pub mod rng;
pub mod tabular;

/// Uniform contract for fitted classifiers: a positive-class score in `[0, 1]`.
///
/// The hard label is derived from the score so that ranking metrics (ROC/AUC)
/// and thresholded metrics share one code path for every model.
pub trait ScoredModel {
    /// Positive-class score for one feature row. Always within `[0, 1]`.
    fn score(&self, x: &[f64]) -> f64;

    /// Hard 0/1 prediction at the fixed 0.5 threshold.
    fn predict(&self, x: &[f64]) -> u8 {
        if self.score(x) >= 0.5 {
            1
        } else {
            0
        }
    }

    /// Scores for a batch of rows.
    fn score_batch(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.score(r)).collect()
    }
}
