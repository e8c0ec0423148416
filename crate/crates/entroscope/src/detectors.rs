//! OOD scoring rules and threshold-free evaluation.
//!
//! Three detectors share one orientation — higher score means "more
//! in-distribution":
//!
//! - raw likelihood: `log p_θ(x)`;
//! - likelihood ratio: `log p_θ(x) − log r_φ(x)` against a reference model,
//!   whose expectation `KL(Q‖R_φ) − KL(Q‖P_θ)` does not depend on the
//!   entropy of the incoming data;
//! - typicality: a batch statistic `−|mean batch log-likelihood + Ĥ|`, which
//!   compares likelihoods against the training entropy only.
//!
//! Evaluation is rank-based: AUROC counts pairs with ties at one half, and
//! FPR@95%TPR comes from an explicit threshold sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density_models::DensityModel;
use crate::distributions::Dataset;
use crate::estimators::Estimate;
use crate::rng::par_map_chunks;
use crate::{EvalError, LogDensity};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("empty score set for {0}")]
    EmptyScores(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("scores contain NaN at index {0}")]
    NanScore(usize),
}

/// Per-sample scores from one detector; higher = more in-distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub detector_id: String,
    pub model_ids: Vec<String>,
    /// Provenance description of the scored dataset.
    pub dataset: String,
    /// Scores that came out non-finite (support violations), kept in place.
    pub non_finite: u64,
}

impl ScoreSet {
    fn new(scores: Vec<f64>, detector_id: String, model_ids: Vec<String>, dataset: String) -> Self {
        let non_finite = scores.iter().filter(|s| !s.is_finite()).count() as u64;
        Self {
            scores,
            detector_id,
            model_ids,
            dataset,
            non_finite,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Threshold-free detector quality on an in/out split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub auroc: f64,
    pub fpr_at_95_tpr: f64,
    pub n_in: u64,
    pub n_out: u64,
}

fn score_rows<F>(data: &Dataset, f: F) -> Result<Vec<f64>, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError> + Sync,
{
    let chunks: Vec<Result<Vec<f64>, EvalError>> = par_map_chunks(data.n(), |_, range| {
        range.map(|i| f(data.row(i))).collect()
    });
    let mut scores = Vec::with_capacity(data.n());
    for c in chunks {
        scores.extend(c?);
    }
    Ok(scores)
}

/// Raw likelihood scores: `score_i = log p_θ(x_i)`.
pub fn score_likelihood(model: &DensityModel, data: &Dataset) -> Result<ScoreSet, DetectorError> {
    let scores = score_rows(data, |row| model.log_density(row))?;
    Ok(ScoreSet::new(
        scores,
        "likelihood".into(),
        vec![model.id()],
        data.provenance().description.clone(),
    ))
}

/// Likelihood-ratio scores: `score_i = log p_θ(x_i) − log r_φ(x_i)`.
///
/// The reference may be a compressor proxy; both models must share the data's
/// dimension and measure.
pub fn score_likelihood_ratio(
    model: &DensityModel,
    reference: &DensityModel,
    data: &Dataset,
) -> Result<ScoreSet, DetectorError> {
    let scores = score_rows(data, |row| {
        Ok(model.log_density(row)? - reference.log_density(row)?)
    })?;
    Ok(ScoreSet::new(
        scores,
        "likelihood-ratio".into(),
        vec![model.id(), reference.id()],
        data.provenance().description.clone(),
    ))
}

/// Typicality score of one batch: `−|mean batch log-likelihood + Ĥ_train|`.
///
/// `train_entropy` is the plug-in estimate from in-distribution data
/// (negative mean train log-likelihood). Higher = more typical.
pub fn score_typicality(
    model: &DensityModel,
    train_entropy: &Estimate,
    batch: &Dataset,
) -> Result<f64, DetectorError> {
    if batch.is_empty() {
        return Err(DetectorError::EmptyBatch);
    }
    let scores = score_rows(batch, |row| model.log_density(row))?;
    let mean_ll = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(-(mean_ll + train_entropy.value).abs())
}

/// Default batch size for batch-level typicality scoring.
pub const DEFAULT_TYPICALITY_BATCH: usize = 64;

/// Scores disjoint contiguous batches of `batch_size` rows; a trailing
/// partial batch is dropped so every score aggregates the same count.
pub fn typicality_score_set(
    model: &DensityModel,
    train_entropy: &Estimate,
    data: &Dataset,
    batch_size: usize,
) -> Result<ScoreSet, DetectorError> {
    if batch_size == 0 || data.n() < batch_size {
        return Err(DetectorError::EmptyBatch);
    }
    let n_batches = data.n() / batch_size;
    let per_row = score_rows(data, |row| model.log_density(row))?;
    let scores: Vec<f64> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let slice = &per_row[b * batch_size..(b + 1) * batch_size];
            let mean_ll = slice.iter().sum::<f64>() / batch_size as f64;
            -(mean_ll + train_entropy.value).abs()
        })
        .collect();
    Ok(ScoreSet::new(
        scores,
        format!("typicality(batch={batch_size})"),
        vec![model.id()],
        data.provenance().description.clone(),
    ))
}

/// AUROC with ties counted one half, plus FPR at 95% TPR.
pub fn evaluate_detector(
    in_scores: &ScoreSet,
    out_scores: &ScoreSet,
) -> Result<DetectorMetrics, DetectorError> {
    if in_scores.is_empty() {
        return Err(DetectorError::EmptyScores("in-distribution"));
    }
    if out_scores.is_empty() {
        return Err(DetectorError::EmptyScores("out-of-distribution"));
    }
    if let Some(i) = in_scores.scores.iter().position(|s| s.is_nan()) {
        return Err(DetectorError::NanScore(i));
    }
    if let Some(i) = out_scores.scores.iter().position(|s| s.is_nan()) {
        return Err(DetectorError::NanScore(i));
    }
    Ok(DetectorMetrics {
        auroc: auroc_rank(&in_scores.scores, &out_scores.scores),
        fpr_at_95_tpr: fpr_at_tpr(&in_scores.scores, &out_scores.scores, 0.95),
        n_in: in_scores.len() as u64,
        n_out: out_scores.len() as u64,
    })
}

/// Mann–Whitney rank statistic: `P(in > out) + ½ P(in = out)`.
fn auroc_rank(in_scores: &[f64], out_scores: &[f64]) -> f64 {
    let n_in = in_scores.len();
    let n_out = out_scores.len();
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(n_in + n_out);
    all.extend(in_scores.iter().map(|&s| (s, true)));
    all.extend(out_scores.iter().map(|&s| (s, false)));
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN rejected earlier"));

    // Average ranks over tie groups, accumulate the in-group rank sum.
    let mut rank_sum_in = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for item in &all[i..j] {
            if item.1 {
                rank_sum_in += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_in - (n_in as f64 * (n_in as f64 + 1.0)) / 2.0;
    u / (n_in as f64 * n_out as f64)
}

/// Smallest FPR among thresholds that keep TPR ≥ `target`, classifying
/// "in-distribution" when score ≥ threshold.
fn fpr_at_tpr(in_scores: &[f64], out_scores: &[f64], target: f64) -> f64 {
    let mut thresholds: Vec<f64> = in_scores.iter().chain(out_scores).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("NaN rejected earlier"));
    thresholds.dedup();

    let mut sorted_in = in_scores.to_vec();
    let mut sorted_out = out_scores.to_vec();
    sorted_in.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted_out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count_ge = |sorted: &[f64], t: f64| -> usize {
        // Points at or above t = n − (first index with value ≥ t).
        sorted.len() - sorted.partition_point(|v| *v < t)
    };

    for t in thresholds {
        let tpr = count_ge(&sorted_in, t) as f64 / in_scores.len() as f64;
        if tpr >= target {
            return count_ge(&sorted_out, t) as f64 / out_scores.len() as f64;
        }
    }
    1.0
}

/// ROC staircase points `(fpr, tpr)` from (0,0) to (1,1), for plotting.
pub fn roc_points(in_scores: &[f64], out_scores: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(in_scores.len() + out_scores.len());
    all.extend(in_scores.iter().map(|&s| (s, true)));
    all.extend(out_scores.iter().map(|&s| (s, false)));
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores must not be NaN"));
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((
            fp as f64 / out_scores.len().max(1) as f64,
            tp as f64 / in_scores.len().max(1) as f64,
        ));
        i = j;
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use approx::assert_abs_diff_eq;

    fn scores(v: Vec<f64>) -> ScoreSet {
        ScoreSet::new(v, "test".into(), vec![], "fixture".into())
    }

    #[test]
    fn likelihood_scores_match_log_density() {
        let p = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let data = crate::distributions::Dataset::new(
            vec![0.0, 2.0],
            1,
            crate::Measure::Lebesgue,
            crate::distributions::Provenance::external("points"),
        )
        .unwrap();
        let s = score_likelihood(&model, &data).unwrap();
        assert_abs_diff_eq!(s.scores[0], -0.9189385332046727, epsilon = 1e-12);
        assert_abs_diff_eq!(s.scores[1], -2.9189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn empty_dataset_gives_empty_scores() {
        let p = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let data = p.sample(0, 1);
        let s = score_likelihood(&model, &data).unwrap();
        assert!(s.is_empty());
        assert!(evaluate_detector(&s, &s).is_err());
    }

    #[test]
    fn ratio_of_model_with_itself_is_zero() {
        let p = Distribution::standard_normal(3).unwrap();
        let model = DensityModel::exact(p.clone());
        let data = p.sample(100, 2);
        let s = score_likelihood_ratio(&model, &model, &data).unwrap();
        assert!(s.scores.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn auroc_brute_force_oracle_case() {
        // Pairs: (2,1.5)+ (2,0)+ (1,1.5)− (1,0)+ → 3/4.
        let m = evaluate_detector(&scores(vec![2.0, 1.0]), &scores(vec![1.5, 0.0])).unwrap();
        assert_abs_diff_eq!(m.auroc, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn auroc_perfect_and_tied() {
        let m = evaluate_detector(&scores(vec![3.0, 2.5]), &scores(vec![1.0, 0.5])).unwrap();
        assert_abs_diff_eq!(m.auroc, 1.0, epsilon = 1e-12);
        let m = evaluate_detector(&scores(vec![1.0, 2.0]), &scores(vec![1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(m.auroc, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fpr_at_95_tpr_sweep() {
        // 20 in-scores 1..=20; 10 out-scores 0.5..9.5. Threshold keeping 95%
        // TPR is 2 (19/20 at or above); out ≥ 2 are 8.5..1.5 → 8 of 10.
        let in_s: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let out_s: Vec<f64> = (0..10).map(|i| i as f64 + 0.5).collect();
        let m = evaluate_detector(&scores(in_s), &scores(out_s)).unwrap();
        assert_abs_diff_eq!(m.fpr_at_95_tpr, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn typicality_constant_zero_batch_oracle() {
        let p = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let train_entropy = Estimate {
            value: 1.4189385332046727,
            std_error: 0.0,
            n: 1,
            method: "analytic".into(),
            support_violations: 0,
        };
        let batch = crate::distributions::Dataset::new(
            vec![0.0; 32],
            1,
            crate::Measure::Lebesgue,
            crate::distributions::Provenance::external("constant"),
        )
        .unwrap();
        let s = score_typicality(&model, &train_entropy, &batch).unwrap();
        // mean ll = −0.918939, H = 1.418939 → −|0.5| = −0.5.
        assert_abs_diff_eq!(s, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn typicality_rejects_empty_batch() {
        let p = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let e = Estimate {
            value: 1.0,
            std_error: 0.0,
            n: 1,
            method: "analytic".into(),
            support_violations: 0,
        };
        let batch = p.sample(0, 1);
        assert!(matches!(
            score_typicality(&model, &e, &batch),
            Err(DetectorError::EmptyBatch)
        ));
    }

    #[test]
    fn batch_scores_drop_trailing_partial() {
        let p = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(p.clone());
        let e = Estimate {
            value: 1.4189385332046727,
            std_error: 0.0,
            n: 1,
            method: "analytic".into(),
            support_violations: 0,
        };
        let data = p.sample(150, 3);
        let s = typicality_score_set(&model, &e, &data, 64).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn roc_points_are_monotone() {
        let pts = roc_points(&[3.0, 2.0, 1.0], &[2.5, 0.5]);
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        for w in pts.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
    }
}
