//! Diagnostics for entropy-driven failures of likelihood-based
//! out-of-distribution detection.
//!
//! The average log-likelihood of a model `P_θ` on data drawn from a law `Q`
//! decomposes into two terms,
//!
//! ```text
//! E_{Y∼Q}[log p_θ(Y)] = −KL(Q‖P_θ) − H[Q],
//! ```
//!
//! so a dataset with low entropy `H[Q]` can out-score the training
//! distribution even under a perfect model of the training law. This crate
//! provides the machinery to measure and probe that effect:
//!
//! - [`distributions`] — analytic ground-truth laws with exact sampling,
//!   log-densities, and closed-form entropy/KL where they exist;
//! - [`density_models`] — exact wrappers, fitted estimators (Gaussian MLE,
//!   EM mixtures, histograms, per-site categoricals), and compression-based
//!   pseudo-densities behind one log-density contract;
//! - [`estimators`] — Monte Carlo and k-nearest-neighbor estimators of
//!   entropy, cross-entropy, and KL, with standard errors;
//! - [`analysis`] — the decomposition ledger and the contrast statistic
//!   `Z = log p_θ(Y) − log p_θ(X)` with its Chebyshev failure bound;
//! - [`detectors`] — raw-likelihood, likelihood-ratio, and typicality
//!   scoring rules plus threshold-free evaluation (AUROC, FPR@95%TPR);
//! - [`data_io`] — IDX image ingestion, subsampling, CSV export;
//! - [`experiment`] — a config-driven, seed-reproducible experiment runner
//!   and report/plot emitter, also exposed as the `entroscope` CLI.
//!
//! All log quantities are in nats; bits-per-dimension conversions happen only
//! in reporting. Everything random is derived from a single root seed through
//! labeled substreams ([`rng`]), so results are bit-identical across runs and
//! worker counts.

pub mod analysis;
pub mod data_io;
pub mod density_models;
pub mod detectors;
pub mod distributions;
pub mod estimators;
pub mod experiment;
pub mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Base measure a density is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Lebesgue measure on the ambient space (continuous data).
    Lebesgue,
    /// Counting measure (discrete data coded as integers).
    Counting,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::Lebesgue => write!(f, "lebesgue"),
            Measure::Counting => write!(f, "counting"),
        }
    }
}

/// Errors from evaluating a log-density at a point.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite input coordinate at index {index}")]
    NonFiniteInput { index: usize },
    #[error("pixel value {value} at index {index} outside [0, {categories})")]
    InvalidPixel {
        index: usize,
        value: f64,
        categories: usize,
    },
}

/// The single log-density contract shared by ground-truth laws and models.
///
/// Implementations return the log-density in nats with respect to
/// [`measure`](LogDensity::measure); `-∞` signals a point outside the
/// support, errors signal malformed input. Implementations are immutable
/// once built, so evaluation is re-entrant and shareable across workers.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;
    fn measure(&self) -> Measure;
    fn log_density(&self, x: &[f64]) -> Result<f64, EvalError>;

    /// Checks dimension and coordinate finiteness; shared precondition.
    fn check_point(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.dim() {
            return Err(EvalError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteInput { index });
        }
        Ok(())
    }
}

pub use distributions::{Dataset, Distribution, Provenance};

#[cfg(doctest)]
mod book {
    //! Runs every code snippet in the mdbook guide as a doctest.
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/failure_probability.md")]
    mod failure_probability {}
    #[doc = include_str!("../../../book/src/detectors.md")]
    mod detectors {}
    #[doc = include_str!("../../../book/src/entropy_estimation.md")]
    mod entropy_estimation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
