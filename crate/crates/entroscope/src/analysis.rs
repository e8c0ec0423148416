//! The core accounting: the likelihood decomposition ledger and the contrast
//! statistic with its Chebyshev failure bound.
//!
//! For data `X ∼ P` and a model with density `p_θ`, the expected
//! log-likelihood satisfies `E[log p_θ(X)] = −KL(P‖P_θ) − H[P]`. The ledger
//! estimates the left side by Monte Carlo and fills the right side with
//! analytic values where they exist, leaving the mismatch as a residual.
//!
//! For independent `X ∼ P`, `Y ∼ Q`, the contrast `Z := log p_θ(Y) −
//! log p_θ(X)` has mean `μ` and variance `σ² = Var(log p_θ(X)) +
//! Var(log p_θ(Y))`; when `μ > 0`, Chebyshev's inequality yields
//! `P(Z > 0) ≥ 1 − σ²/μ²`, turning an on-average detection failure into a
//! failure with high probability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density_models::DensityModel;
use crate::distributions::Distribution;
use crate::estimators::{mc_cross_entropy, mc_entropy, mc_kl, Estimate, EstimatorError};
use crate::rng::{derive_seed, par_map_chunks, substream, Welford};
use crate::{LogDensity, Measure};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("a compressor proxy has no normalized density; the ledger needs true densities")]
    CompressorHasNoDensity,
    #[error("dimension mismatch: data has dim {data}, model has dim {model}")]
    DimensionMismatch { data: usize, model: usize },
    #[error("measure mismatch: data is {data}, model is {model}")]
    MeasureMismatch { data: Measure, model: Measure },
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("sigma2 must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("all {0} pairs were excluded for non-finite log-likelihoods")]
    AllPairsExcluded(u64),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// A term of the decomposition: closed form or Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Term {
    Analytic { value: f64 },
    Estimated { estimate: Estimate },
}

impl Term {
    pub fn value(&self) -> f64 {
        match self {
            Term::Analytic { value } => *value,
            Term::Estimated { estimate } => estimate.value,
        }
    }

    pub fn std_error(&self) -> f64 {
        match self {
            Term::Analytic { .. } => 0.0,
            Term::Estimated { estimate } => estimate.std_error,
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, Term::Analytic { .. })
    }
}

/// The account `avg_ll = −KL − H + residual` for one (data law, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionLedger {
    pub avg_log_likelihood: Estimate,
    pub kl_term: Term,
    pub entropy_term: Term,
    /// `avg_ll + KL + H`; within Monte Carlo noise of zero when the terms
    /// are exact.
    pub residual: f64,
    pub data_dist_id: String,
    pub model_id: String,
    pub n: u64,
}

/// Builds the decomposition ledger for `n` draws of `data_dist` under `model`.
///
/// KL and entropy use closed forms when available (exact models over
/// supported pairs), falling back to Monte Carlo estimates on independent
/// substreams; the method field records which.
pub fn decomposition_ledger(
    data_dist: &Distribution,
    model: &DensityModel,
    n: usize,
    seed: u64,
) -> Result<DecompositionLedger, AnalysisError> {
    if model.is_compressor_proxy() {
        return Err(AnalysisError::CompressorHasNoDensity);
    }
    if data_dist.dim() != model.dim() {
        return Err(AnalysisError::DimensionMismatch {
            data: data_dist.dim(),
            model: model.dim(),
        });
    }
    if data_dist.measure() != model.measure() {
        return Err(AnalysisError::MeasureMismatch {
            data: data_dist.measure(),
            model: model.measure(),
        });
    }

    let cross = mc_cross_entropy(
        data_dist.into(),
        model,
        n,
        derive_seed(seed, "ledger-avg-ll"),
    )?;
    let avg_log_likelihood = Estimate {
        value: -cross.value,
        ..cross
    };

    let kl_term = match model
        .as_exact()
        .map(|d| Distribution::analytic_kl(data_dist, d))
    {
        Some(Ok(kl)) => Term::Analytic { value: kl },
        _ => Term::Estimated {
            estimate: mc_kl(data_dist, model, n, derive_seed(seed, "ledger-kl"))?,
        },
    };

    let entropy_term = match data_dist.analytic_entropy() {
        Ok(h) => Term::Analytic { value: h },
        Err(_) => Term::Estimated {
            estimate: mc_entropy(data_dist, n, derive_seed(seed, "ledger-entropy"))?,
        },
    };

    let residual = avg_log_likelihood.value + kl_term.value() + entropy_term.value();
    Ok(DecompositionLedger {
        avg_log_likelihood,
        kl_term,
        entropy_term,
        residual,
        data_dist_id: data_dist.id(),
        model_id: model.id(),
        n: n as u64,
    })
}

/// The §-contrast quantities for `Z = log p_θ(Y) − log p_θ(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastStats {
    /// `E[log p_θ(Y)] − E[log p_θ(X)]` (plug-in).
    pub mu: f64,
    /// `Var(log p_θ(X)) + Var(log p_θ(Y))` (plug-in, sample variances).
    pub sigma2: f64,
    /// `1 − σ²/μ²` when `μ > 0`; may be negative (vacuous). `None` when the
    /// derivation's `μ > 0` assumption fails.
    pub chebyshev_bound: Option<f64>,
    pub empirical_p_z_gt_0: Estimate,
    pub n_pairs: u64,
    /// Pairs dropped because a log-likelihood was non-finite; mapping them to
    /// `Z = ±∞` would void the finite-variance assumption.
    pub excluded_pairs: u64,
}

/// Draws `n_pairs` independent `(X, Y)` pairs, `X ∼ p`, `Y ∼ q`, and scores
/// both under `model`.
pub fn contrast_stats(
    p: &Distribution,
    q: &Distribution,
    model: &DensityModel,
    n_pairs: usize,
    seed: u64,
) -> Result<ContrastStats, AnalysisError> {
    if n_pairs < 2 {
        return Err(AnalysisError::TooFewPairs(n_pairs));
    }
    for dist in [p, q] {
        if dist.dim() != model.dim() {
            return Err(AnalysisError::DimensionMismatch {
                data: dist.dim(),
                model: model.dim(),
            });
        }
        if dist.measure() != model.measure() {
            return Err(AnalysisError::MeasureMismatch {
                data: dist.measure(),
                model: model.measure(),
            });
        }
    }

    #[derive(Default, Clone)]
    struct PairAccum {
        in_ll: Welford,
        out_ll: Welford,
        z_positive: u64,
        included: u64,
        excluded: u64,
    }

    let partials: Vec<PairAccum> = par_map_chunks(n_pairs, |chunk_idx, range| {
        let mut rng_x = substream(seed, "contrast-x", chunk_idx);
        let mut rng_y = substream(seed, "contrast-y", chunk_idx);
        let mut x = vec![0.0; p.dim()];
        let mut y = vec![0.0; q.dim()];
        let mut acc = PairAccum::default();
        for _ in range {
            p.sample_point(&mut rng_x, &mut x);
            q.sample_point(&mut rng_y, &mut y);
            let a = model.log_density(&x).expect("validated sample");
            let b = model.log_density(&y).expect("validated sample");
            if a.is_finite() && b.is_finite() {
                acc.in_ll.push(a);
                acc.out_ll.push(b);
                if b > a {
                    acc.z_positive += 1;
                }
                acc.included += 1;
            } else {
                acc.excluded += 1;
            }
        }
        acc
    });

    let mut total = PairAccum::default();
    for part in &partials {
        total.in_ll.merge(&part.in_ll);
        total.out_ll.merge(&part.out_ll);
        total.z_positive += part.z_positive;
        total.included += part.included;
        total.excluded += part.excluded;
    }
    if total.included == 0 {
        return Err(AnalysisError::AllPairsExcluded(total.excluded));
    }

    let mu = total.out_ll.mean() - total.in_ll.mean();
    let sigma2 = total.in_ll.variance() + total.out_ll.variance();
    let p_hat = total.z_positive as f64 / total.included as f64;
    let binomial_se = (p_hat * (1.0 - p_hat) / total.included as f64).sqrt();
    let chebyshev = if sigma2 > 0.0 {
        chebyshev_bound(mu, sigma2)?
    } else {
        None
    };
    Ok(ContrastStats {
        mu,
        sigma2,
        chebyshev_bound: chebyshev,
        empirical_p_z_gt_0: Estimate {
            value: p_hat,
            std_error: binomial_se,
            n: total.included,
            method: "empirical-fraction(binomial-se)".into(),
            support_violations: 0,
        },
        n_pairs: total.included,
        excluded_pairs: total.excluded,
    })
}

/// Contrast statistics from already-computed per-sample log-likelihoods,
/// pairing `in_ll[i]` with `out_ll[i]` up to the shorter length. This is the
/// dataset-backed path used by experiments on real data.
pub fn contrast_stats_from_scores(
    in_ll: &[f64],
    out_ll: &[f64],
) -> Result<ContrastStats, AnalysisError> {
    let n_pairs = in_ll.len().min(out_ll.len());
    if n_pairs < 2 {
        return Err(AnalysisError::TooFewPairs(n_pairs));
    }
    let mut in_w = Welford::new();
    let mut out_w = Welford::new();
    let mut z_positive = 0u64;
    let mut included = 0u64;
    let mut excluded = 0u64;
    for (a, b) in in_ll.iter().zip(out_ll.iter()) {
        if a.is_finite() && b.is_finite() {
            in_w.push(*a);
            out_w.push(*b);
            if b > a {
                z_positive += 1;
            }
            included += 1;
        } else {
            excluded += 1;
        }
    }
    if included == 0 {
        return Err(AnalysisError::AllPairsExcluded(excluded));
    }
    let mu = out_w.mean() - in_w.mean();
    let sigma2 = in_w.variance() + out_w.variance();
    let p_hat = z_positive as f64 / included as f64;
    let binomial_se = (p_hat * (1.0 - p_hat) / included as f64).sqrt();
    let chebyshev = if sigma2 > 0.0 {
        chebyshev_bound(mu, sigma2)?
    } else {
        None
    };
    Ok(ContrastStats {
        mu,
        sigma2,
        chebyshev_bound: chebyshev,
        empirical_p_z_gt_0: Estimate {
            value: p_hat,
            std_error: binomial_se,
            n: included,
            method: "empirical-fraction(binomial-se)".into(),
            support_violations: 0,
        },
        n_pairs: included,
        excluded_pairs: excluded,
    })
}

/// `1 − σ²/μ²` when `μ > 0`; `None` otherwise (the derivation assumes
/// `μ > 0`). May be negative, in which case the bound is vacuous.
pub fn chebyshev_bound(mu: f64, sigma2: f64) -> Result<Option<f64>, AnalysisError> {
    if !(sigma2 > 0.0) {
        return Err(AnalysisError::NonPositiveVariance(sigma2));
    }
    if mu > 0.0 {
        Ok(Some(1.0 - sigma2 / (mu * mu)))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chebyshev_direct_values() {
        assert_abs_diff_eq!(chebyshev_bound(2.0, 1.0).unwrap().unwrap(), 0.75, epsilon = 1e-15);
        assert!(chebyshev_bound(-1.0, 1.0).unwrap().is_none());
        assert!(chebyshev_bound(0.0, 1.0).unwrap().is_none());
        assert!(matches!(
            chebyshev_bound(1.0, 0.0),
            Err(AnalysisError::NonPositiveVariance(_))
        ));
        // The flagship d = 16 numbers.
        assert_abs_diff_eq!(
            chebyshev_bound(7.5, 8.03125).unwrap().unwrap(),
            0.8572222222222222,
            epsilon = 1e-12
        );
    }

    #[test]
    fn perfect_self_model_ledger() {
        let p = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let ledger = decomposition_ledger(&p, &model, 100_000, 5).unwrap();
        assert_abs_diff_eq!(ledger.kl_term.value(), 0.0, epsilon = 1e-15);
        assert!(ledger.kl_term.is_analytic());
        assert_abs_diff_eq!(ledger.entropy_term.value(), 1.4189385332046727, epsilon = 1e-12);
        assert!(
            (ledger.avg_log_likelihood.value + 1.4189385332046727).abs()
                < 4.0 * ledger.avg_log_likelihood.std_error
        );
        assert!(ledger.residual.abs() <= 4.0 * ledger.avg_log_likelihood.std_error);
    }

    #[test]
    fn ledger_rejects_compressor() {
        use crate::density_models::{compressor_model, CodecSpec};
        let p = Distribution::categorical_product(vec![vec![0.5, 0.5]; 4]).unwrap();
        let proxy = compressor_model(CodecSpec::deflate(6), 4).unwrap();
        assert!(matches!(
            decomposition_ledger(&p, &proxy, 100, 0),
            Err(AnalysisError::CompressorHasNoDensity)
        ));
    }

    #[test]
    fn contrast_symmetric_case() {
        let p = Distribution::standard_normal(2).unwrap();
        let model = DensityModel::exact(p.clone());
        let stats = contrast_stats(&p, &p, &model, 20_000, 3).unwrap();
        assert!(stats.mu.abs() < 0.05, "mu = {}", stats.mu);
        // Near μ = 0 the bound is either undefined or deeply vacuous.
        if let Some(b) = stats.chebyshev_bound {
            assert!(b < 0.0);
        }
        let pz = stats.empirical_p_z_gt_0.value;
        assert!((pz - 0.5).abs() < 4.0 * stats.empirical_p_z_gt_0.std_error + 0.01);
        assert_eq!(stats.excluded_pairs, 0);
    }

    #[test]
    fn contrast_flagship_d1_moments() {
        let p = Distribution::isotropic_gaussian(vec![0.0], 16.0).unwrap();
        let q = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let stats = contrast_stats(&p, &q, &model, 200_000, 11).unwrap();
        // Closed-form Gaussian moment oracle: μ = 15/32, σ² = 257/512.
        assert_abs_diff_eq!(stats.mu, 0.46875, epsilon = 0.02);
        assert_abs_diff_eq!(stats.sigma2, 0.501953125, epsilon = 0.02);
        // μ > 0 but σ²/μ² > 1: defined yet vacuous.
        assert!(stats.chebyshev_bound.unwrap() < 0.0);
    }

    #[test]
    fn contrast_excludes_nonfinite_pairs() {
        // Model support misses part of q's support: those pairs are dropped.
        let p = Distribution::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let q = Distribution::uniform_box(vec![0.5], vec![1.5]).unwrap();
        let model = DensityModel::exact(p.clone());
        let stats = contrast_stats(&p, &q, &model, 10_000, 13).unwrap();
        assert!(stats.excluded_pairs > 0);
        assert!(stats.n_pairs + stats.excluded_pairs == 10_000);
    }

    #[test]
    fn scores_path_matches_convention() {
        let in_ll = [0.0, 1.0, 2.0, 3.0];
        let out_ll = [10.0, 11.0, 12.0, 13.0];
        let stats = contrast_stats_from_scores(&in_ll, &out_ll).unwrap();
        assert_abs_diff_eq!(stats.mu, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.empirical_p_z_gt_0.value, 1.0, epsilon = 1e-12);
    }
}
