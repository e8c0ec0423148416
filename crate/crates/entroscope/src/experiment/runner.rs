//! Executes one experiment config: fit → ledgers → contrast → detectors →
//! report, with every sub-seed derived from the config seed by labeled
//! hashing.

use std::path::PathBuf;
use std::time::Instant;

use crate::analysis::{
    contrast_stats, contrast_stats_from_scores, decomposition_ledger, AnalysisError, ContrastStats,
};
use crate::data_io::{
    export_csv_table, export_scores_csv, load_idx, subsample, DataIoError,
};
use crate::density_models::{
    compressor_model, fit_gaussian, fit_gmm_em, fit_histogram, fit_pixel_categorical,
    DensityModel, EmConfig, ModelError,
};
use crate::detectors::{
    evaluate_detector, score_likelihood, score_likelihood_ratio, typicality_score_set,
    DetectorError, ScoreSet,
};
use crate::distributions::Dataset;
use crate::estimators::{mc_cross_entropy, Estimate, EstimatorError};
use crate::rng::{derive_seed, substream};
use crate::{LogDensity, Measure};

use super::config::{
    ConfigError, DataSource, ExperimentConfig, ModelCfg, OutputFormat, ReferenceCfg,
};
use super::plots;
use super::report::{
    bits_per_dim, DetectorReport, ExperimentReport, RunArtifacts, SideSummary,
    TypicalityCalibration, PLUG_IN_CAVEAT,
};

#[derive(Debug, thiserror::Error)]
pub enum RunErrorKind {
    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Data(#[from] DataIoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A failure in a named stage of the run.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {kind}")]
pub struct RunError {
    pub stage: &'static str,
    pub kind: RunErrorKind,
}

impl RunError {
    /// CLI exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match &self.kind {
            RunErrorKind::Config(_) => 2,
            RunErrorKind::Data(_) | RunErrorKind::Io { .. } => 3,
            _ => 4,
        }
    }
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, RunError>;
}

impl<T, E: Into<RunErrorKind>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, RunError> {
        self.map_err(|e| RunError {
            stage,
            kind: e.into(),
        })
    }
}

fn resolve_data(
    source: &DataSource,
    n: usize,
    sample_seed: u64,
    subsample_seed: u64,
) -> Result<Dataset, DataIoError> {
    match source {
        DataSource::Distribution(dist) => Ok(dist.sample(n, sample_seed)),
        DataSource::Idx(spec) => {
            let data = load_idx(spec)?;
            if n > 0 && data.n() > n {
                subsample(&data, n, subsample_seed)
            } else {
                Ok(data)
            }
        }
    }
}

fn fit_model(
    cfg: &ExperimentConfig,
    train: Option<&Dataset>,
) -> Result<DensityModel, RunErrorKind> {
    match &cfg.model {
        ModelCfg::Exact => match &cfg.in_data {
            DataSource::Distribution(dist) => Ok(DensityModel::exact(dist.clone())),
            DataSource::Idx(_) => Err(RunErrorKind::Config(vec![ConfigError {
                path: "model.kind".into(),
                message: "exact model needs a distribution in_dist".into(),
            }])),
        },
        fitted => {
            let train = train.expect("validated: fitted models have train data");
            let model = match fitted {
                ModelCfg::GaussianMle { ridge } => fit_gaussian(train, *ridge)?,
                ModelCfg::GmmEm {
                    k,
                    max_iters,
                    tol,
                    ridge,
                } => fit_gmm_em(
                    train,
                    *k,
                    &EmConfig {
                        max_iters: *max_iters,
                        tol: *tol,
                        seed: derive_seed(cfg.seed, "em"),
                        ridge: *ridge,
                    },
                )?,
                ModelCfg::Histogram {
                    bins_per_dim,
                    lower,
                    upper,
                } => {
                    let range: Vec<(f64, f64)> =
                        lower.iter().copied().zip(upper.iter().copied()).collect();
                    fit_histogram(train, *bins_per_dim, &range)?
                }
                ModelCfg::PixelCategorical { alpha, categories } => {
                    fit_pixel_categorical(train, *alpha, *categories)?
                }
                ModelCfg::Exact => unreachable!(),
            };
            Ok(model)
        }
    }
}

/// Runs the whole experiment; returns the report plus the score sets needed
/// for CSV/SVG artifacts.
pub fn run_experiment(
    cfg: &ExperimentConfig,
) -> Result<(ExperimentReport, RunArtifacts), RunError> {
    let started = Instant::now();

    // Training data, when a fitted model or the typicality detector needs it.
    let needs_train = cfg.model.is_fitted() || cfg.detectors.typicality.is_some();
    let train: Option<Dataset> = if needs_train {
        Some(match &cfg.train_data {
            Some(spec) => resolve_data(
                spec,
                0,
                derive_seed(cfg.seed, "train-sample"),
                derive_seed(cfg.seed, "subsample-train"),
            )
            .stage("load-train-data")?,
            None => resolve_data(
                &cfg.in_data,
                cfg.samples.n_train,
                derive_seed(cfg.seed, "train-sample"),
                derive_seed(cfg.seed, "subsample-train"),
            )
            .stage("load-train-data")?,
        })
    } else {
        None
    };

    let model = fit_model(cfg, train.as_ref()).map_err(|kind| RunError {
        stage: "fit-model",
        kind,
    })?;

    let reference: Option<DensityModel> = match &cfg.reference {
        Some(ReferenceCfg::Exact { dist }) => Some(DensityModel::exact(dist.clone())),
        Some(ReferenceCfg::Compressor { codec }) => {
            Some(compressor_model(codec.clone(), cfg.in_data.dim()).stage("fit-model")?)
        }
        None => None,
    };

    // Evaluation datasets.
    let eval_in = resolve_data(
        &cfg.in_data,
        cfg.samples.n_eval,
        derive_seed(cfg.seed, "eval-in"),
        derive_seed(cfg.seed, "subsample-in"),
    )
    .stage("load-eval-data")?;
    let eval_out = resolve_data(
        &cfg.out_data,
        cfg.samples.n_eval,
        derive_seed(cfg.seed, "eval-out"),
        derive_seed(cfg.seed, "subsample-out"),
    )
    .stage("load-eval-data")?;

    // Decomposition ledgers need a ground-truth density on the data side.
    let ledger_in = match &cfg.in_data {
        DataSource::Distribution(dist) => Some(
            decomposition_ledger(dist, &model, cfg.samples.n_eval, derive_seed(cfg.seed, "ledger-in"))
                .stage("ledger-in")?,
        ),
        DataSource::Idx(_) => None,
    };
    let ledger_out = match &cfg.out_data {
        DataSource::Distribution(dist) => Some(
            decomposition_ledger(
                dist,
                &model,
                cfg.samples.n_eval,
                derive_seed(cfg.seed, "ledger-out"),
            )
            .stage("ledger-out")?,
        ),
        DataSource::Idx(_) => None,
    };

    // Contrast statistics: fresh pairs for distributions, paired rows for data.
    let contrast: Option<ContrastStats> = match (&cfg.in_data, &cfg.out_data) {
        (DataSource::Distribution(p), DataSource::Distribution(q)) => Some(
            contrast_stats(p, q, &model, cfg.samples.n_pairs, derive_seed(cfg.seed, "contrast"))
                .stage("contrast")?,
        ),
        _ => {
            let in_ll = score_likelihood(&model, &eval_in).stage("contrast")?;
            let out_ll = score_likelihood(&model, &eval_out).stage("contrast")?;
            Some(contrast_stats_from_scores(&in_ll.scores, &out_ll.scores).stage("contrast")?)
        }
    };

    // Per-side mean log-likelihood summaries (+ bits/dim for image data).
    let cross_in = mc_cross_entropy((&eval_in).into(), &model, 0, 0).stage("summary")?;
    let cross_out = mc_cross_entropy((&eval_out).into(), &model, 0, 0).stage("summary")?;
    let summary_in = side_summary(cross_in, eval_in.dim(), eval_in.measure());
    let summary_out = side_summary(cross_out, eval_out.dim(), eval_out.measure());

    // Detectors.
    let mut detector_reports = Vec::new();
    let mut artifacts = RunArtifacts::default();
    if cfg.detectors.likelihood {
        let s_in = score_likelihood(&model, &eval_in).stage("detector-likelihood")?;
        let s_out = score_likelihood(&model, &eval_out).stage("detector-likelihood")?;
        push_detector(
            &mut detector_reports,
            &mut artifacts,
            "likelihood",
            s_in,
            s_out,
        )
        .stage("detector-likelihood")?;
    }
    if cfg.detectors.ratio {
        let reference = reference
            .as_ref()
            .expect("validated: ratio detector has a reference");
        let s_in = score_likelihood_ratio(&model, reference, &eval_in).stage("detector-ratio")?;
        let s_out = score_likelihood_ratio(&model, reference, &eval_out).stage("detector-ratio")?;
        push_detector(&mut detector_reports, &mut artifacts, "ratio", s_in, s_out)
            .stage("detector-ratio")?;
    }
    let mut typicality_calibration = None;
    if let Some(typ) = &cfg.detectors.typicality {
        let train = train.as_ref().expect("validated: typicality has train data");
        let train_cross =
            mc_cross_entropy((train).into(), &model, 0, 0).stage("detector-typicality")?;
        let train_entropy = Estimate {
            method: "plug-in(-mean train log-likelihood)".into(),
            ..train_cross
        };
        let s_in = typicality_score_set(&model, &train_entropy, &eval_in, typ.batch_size)
            .stage("detector-typicality")?;
        let s_out = typicality_score_set(&model, &train_entropy, &eval_out, typ.batch_size)
            .stage("detector-typicality")?;
        push_detector(
            &mut detector_reports,
            &mut artifacts,
            "typicality",
            s_in,
            s_out,
        )
        .stage("detector-typicality")?;
        typicality_calibration = Some(calibrate_typicality(
            &model,
            train,
            &train_entropy,
            typ.batch_size,
            cfg.seed,
        ));
    }

    let report = ExperimentReport {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        id: cfg.id.clone(),
        seed: cfg.seed,
        dim: cfg.in_data.dim(),
        ledger_in,
        ledger_out,
        contrast_note: contrast.as_ref().map(|_| PLUG_IN_CAVEAT.to_string()),
        contrast,
        summary_in,
        summary_out,
        detectors: detector_reports,
        typicality_calibration,
        config_echo: cfg.config_text.clone(),
        wall_clock_ms: started.elapsed().as_millis(),
    };
    Ok((report, artifacts))
}

fn side_summary(cross: Estimate, dim: usize, measure: Measure) -> SideSummary {
    let avg_ll = Estimate {
        value: -cross.value,
        ..cross
    };
    let nll_bits_per_dim = match measure {
        Measure::Counting => Some(bits_per_dim(avg_ll.value, dim)),
        Measure::Lebesgue => None,
    };
    SideSummary {
        n: avg_ll.n,
        nll_bits_per_dim,
        avg_log_likelihood: avg_ll,
    }
}

fn push_detector(
    reports: &mut Vec<DetectorReport>,
    artifacts: &mut RunArtifacts,
    name: &str,
    s_in: ScoreSet,
    s_out: ScoreSet,
) -> Result<(), DetectorError> {
    let metrics = evaluate_detector(&s_in, &s_out)?;
    reports.push(DetectorReport {
        detector: name.to_string(),
        metrics,
        mean_score_in: mean(&s_in.scores),
        mean_score_out: mean(&s_out.scores),
    });
    artifacts.score_sets.push((name.to_string(), "in", s_in));
    artifacts.score_sets.push((name.to_string(), "out", s_out));
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// ε calibration: the 95th percentile of |mean batch log-likelihood + Ĥ|
/// over seeded bootstrap batches of the training data.
fn calibrate_typicality(
    model: &DensityModel,
    train: &Dataset,
    train_entropy: &Estimate,
    batch_size: usize,
    seed: u64,
) -> TypicalityCalibration {
    const RESAMPLES: usize = 200;
    let per_row: Vec<f64> = train
        .rows()
        .map(|r| model.log_density(r).expect("validated training point"))
        .collect();
    let mut deviations: Vec<f64> = (0..RESAMPLES)
        .map(|b| {
            let mut rng = substream(seed, "typicality-calibration", b as u64);
            let mut sum = 0.0;
            for _ in 0..batch_size {
                sum += per_row[rand::Rng::random_range(&mut rng, 0..per_row.len())];
            }
            (sum / batch_size as f64 + train_entropy.value).abs()
        })
        .collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).expect("finite deviations"));
    let idx = ((RESAMPLES as f64 * 0.95).ceil() as usize).min(RESAMPLES) - 1;
    TypicalityCalibration {
        epsilon_95: deviations[idx],
        batch_size,
        resamples: RESAMPLES,
        train_entropy: train_entropy.clone(),
    }
}

/// Writes report/CSV/SVG artifacts per the formats list; returns the paths.
pub fn write_outputs(
    report: &ExperimentReport,
    artifacts: &RunArtifacts,
    dir: &std::path::Path,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| RunError {
            stage: "write-outputs",
            kind: RunErrorKind::Io {
                path: dir.display().to_string(),
                source,
            },
        })?;
    let mut written = Vec::new();

    if formats.contains(&OutputFormat::Json) {
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()).map_err(|source| RunError {
            stage: "write-outputs",
            kind: RunErrorKind::Io {
                path: path.display().to_string(),
                source,
            },
        })?;
        written.push(path);
    }
    if formats.contains(&OutputFormat::Csv) {
        let path = dir.join("summary.csv");
        export_csv_table(&report.summary_table(), &path).stage("write-outputs")?;
        written.push(path);
        for (name, side, scores) in &artifacts.score_sets {
            let path = dir.join(format!("scores_{}_{side}.csv", sanitize(name)));
            export_scores_csv(scores, &path).stage("write-outputs")?;
            written.push(path);
        }
    }
    if formats.contains(&OutputFormat::Svg) {
        written.extend(plots::emit_plots(report, artifacts, dir)?);
    }
    Ok(written)
}

pub(crate) fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}
