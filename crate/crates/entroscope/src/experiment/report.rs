//! The experiment report: a self-contained JSON document whose echoed config
//! and seed reproduce every number bit-exactly under the same library
//! version.

use serde::{Deserialize, Serialize};

use crate::analysis::{ContrastStats, DecompositionLedger};
use crate::data_io::{format_sig9, CsvTable};
use crate::detectors::{DetectorMetrics, ScoreSet};
use crate::estimators::Estimate;

pub const LN_2: f64 = std::f64::consts::LN_2;

/// Caveat attached to every contrast block: the bound uses the same sample
/// moments as the empirical frequency, not true moments.
pub const PLUG_IN_CAVEAT: &str =
    "chebyshev_bound uses plug-in moments estimated from the same pairs as empirical_p_z_gt_0";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorReport {
    pub detector: String,
    pub metrics: DetectorMetrics,
    pub mean_score_in: f64,
    pub mean_score_out: f64,
}

/// Typicality ε calibrated on training batches (reported, not enforced).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypicalityCalibration {
    /// 95th percentile of |mean batch log-likelihood + Ĥ| over seeded
    /// bootstrap batches of the training data.
    pub epsilon_95: f64,
    pub batch_size: usize,
    pub resamples: usize,
    pub train_entropy: Estimate,
}

/// Mean log-likelihood of one side, with the bits-per-dimension conversion
/// for counting-measure (image) data: `−avg_ll / (dim · ln 2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SideSummary {
    pub avg_log_likelihood: Estimate,
    pub n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll_bits_per_dim: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub library_version: String,
    pub id: String,
    pub seed: u64,
    pub dim: usize,
    pub ledger_in: Option<DecompositionLedger>,
    pub ledger_out: Option<DecompositionLedger>,
    pub contrast: Option<ContrastStats>,
    pub contrast_note: Option<String>,
    pub summary_in: SideSummary,
    pub summary_out: SideSummary,
    pub detectors: Vec<DetectorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub typicality_calibration: Option<TypicalityCalibration>,
    /// The exact config text this run was produced from.
    pub config_echo: String,
    /// Wall-clock is runtime information only: serializing it would break
    /// byte-identical reproducibility of the report file.
    #[serde(skip)]
    pub wall_clock_ms: u128,
}

/// Score sets generated by a run, kept out of the JSON report and written as
/// CSVs instead.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    /// (detector id, side, scores); side is "in" or "out".
    pub score_sets: Vec<(String, &'static str, ScoreSet)>,
}

pub fn bits_per_dim(avg_ll: f64, dim: usize) -> f64 {
    -avg_ll / (dim as f64 * LN_2)
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Flat `metric,value` rows for the summary CSV.
    pub fn summary_table(&self) -> CsvTable {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut push = |metric: &str, value: f64| {
            rows.push(vec![metric.to_string(), format_sig9(value)]);
        };
        push("summary_in.avg_log_likelihood", self.summary_in.avg_log_likelihood.value);
        push("summary_in.std_error", self.summary_in.avg_log_likelihood.std_error);
        if let Some(b) = self.summary_in.nll_bits_per_dim {
            push("summary_in.nll_bits_per_dim", b);
        }
        push("summary_out.avg_log_likelihood", self.summary_out.avg_log_likelihood.value);
        push("summary_out.std_error", self.summary_out.avg_log_likelihood.std_error);
        if let Some(b) = self.summary_out.nll_bits_per_dim {
            push("summary_out.nll_bits_per_dim", b);
        }
        for (name, ledger) in [("ledger_in", &self.ledger_in), ("ledger_out", &self.ledger_out)] {
            if let Some(l) = ledger {
                push(&format!("{name}.avg_log_likelihood"), l.avg_log_likelihood.value);
                push(&format!("{name}.kl"), l.kl_term.value());
                push(&format!("{name}.entropy"), l.entropy_term.value());
                push(&format!("{name}.residual"), l.residual);
            }
        }
        if let Some(c) = &self.contrast {
            push("contrast.mu", c.mu);
            push("contrast.sigma2", c.sigma2);
            if let Some(b) = c.chebyshev_bound {
                push("contrast.chebyshev_bound", b);
            }
            push("contrast.empirical_p_z_gt_0", c.empirical_p_z_gt_0.value);
            push("contrast.excluded_pairs", c.excluded_pairs as f64);
        }
        for d in &self.detectors {
            push(&format!("detector.{}.auroc", d.detector), d.metrics.auroc);
            push(
                &format!("detector.{}.fpr_at_95_tpr", d.detector),
                d.metrics.fpr_at_95_tpr,
            );
            push(&format!("detector.{}.mean_score_in", d.detector), d.mean_score_in);
            push(&format!("detector.{}.mean_score_out", d.detector), d.mean_score_out);
        }
        if let Some(t) = &self.typicality_calibration {
            push("typicality.epsilon_95", t.epsilon_95);
            push("typicality.train_entropy", t.train_entropy.value);
        }
        CsvTable {
            header: vec!["metric".into(), "value".into()],
            rows,
        }
    }
}
