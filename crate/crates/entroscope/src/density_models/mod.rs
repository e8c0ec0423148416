//! Density models: exact wrappers around ground-truth laws, classical fitted
//! estimators, and compression-based pseudo-densities, all behind the single
//! [`LogDensity`] contract.
//!
//! A fitted model records its training provenance, iteration count, and final
//! train log-likelihood in [`FitMeta`]. The compressor proxy is a *score*,
//! not a normalized density: it may be used inside ratio-style detectors but
//! is rejected by the decomposition ledger, which needs true densities.

mod compressor;
mod em;

pub use compressor::{CodecSpec, CompressorModel};
pub use em::{fit_gmm_em, EmConfig};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Dataset, Distribution, DistributionError, DistributionSpec, Provenance};
use crate::{EvalError, LogDensity, Measure};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("not enough data: need at least {needed} points, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("expected {expected} data, got {got}")]
    WrongMeasure { expected: Measure, got: Measure },
    #[error("dimension {got} exceeds the supported maximum {max} for this model")]
    TooManyDims { max: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("covariance not positive definite at ridge {ridge}; increase the ridge")]
    NotPositiveDefinite { ridge: f64 },
    #[error("component {component} kept collapsing after {attempts} re-seeds")]
    EmptyComponentRecurred { component: usize, attempts: usize },
    #[error("unknown codec {0:?}; whitelisted codecs: png, deflate")]
    UnknownCodec(String),
    #[error("value {value} at flat index {index} outside [0, {categories})")]
    ValueOutOfRange {
        index: usize,
        value: f64,
        categories: usize,
    },
    #[error("model file format error: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Training-set provenance and fit trace for a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub train_provenance: Provenance,
    pub iterations: usize,
    pub final_train_log_likelihood: f64,
    /// Average train log-likelihood after each iteration (EM only).
    #[serde(default)]
    pub trajectory: Vec<f64>,
}

/// Per-site categorical model with Laplace smoothing; always finite on valid
/// codes since every category receives pseudo-count `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCategorical {
    log_probs: Vec<f64>, // dim × categories, row-major
    dim: usize,
    categories: usize,
    alpha: f64,
    meta: FitMeta,
}

impl PixelCategorical {
    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn probability(&self, site: usize, code: usize) -> f64 {
        self.log_probs[site * self.categories + code].exp()
    }

    /// Shannon entropy of the model: sum of per-site categorical entropies.
    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .map(|lp| {
                let p = lp.exp();
                p * lp
            })
            .sum::<f64>()
    }
}

/// Piecewise-constant density on a regular grid, d ≤ 3.
///
/// Every bin carries pseudo-count 0.5 so the density integrates to one and
/// stays positive; points outside the range evaluate at the nearest edge bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins_per_dim: usize,
    range: Vec<(f64, f64)>,
    log_density: Vec<f64>, // bins_per_dim^dim values
    meta: FitMeta,
}

impl Histogram {
    const PSEUDO_COUNT: f64 = 0.5;

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    fn bin_index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for (d, (xi, (lo, hi))) in x.iter().zip(self.range.iter()).enumerate() {
            let width = (hi - lo) / self.bins_per_dim as f64;
            let raw = ((xi - lo) / width).floor();
            let b = (raw.max(0.0) as usize).min(self.bins_per_dim - 1);
            idx += b * self.bins_per_dim.pow((self.range.len() - 1 - d) as u32);
        }
        idx
    }

    /// Total probability mass — the normalization check used in tests.
    pub fn total_mass(&self) -> f64 {
        let bin_volume: f64 = self
            .range
            .iter()
            .map(|(lo, hi)| (hi - lo) / self.bins_per_dim as f64)
            .product();
        self.log_density.iter().map(|ld| ld.exp() * bin_volume).sum()
    }
}

/// A model `P_θ` or reference `R_φ` exposing one log-density contract.
#[derive(Debug, Clone)]
pub enum DensityModel {
    /// Wraps a ground-truth law: the "perfect model" thought experiment.
    Exact(Distribution),
    GaussianMle {
        gaussian: Distribution, // always the full-Gaussian variant
        meta: FitMeta,
    },
    GmmEm {
        mixture: Distribution, // always the Gaussian-mixture variant
        meta: FitMeta,
    },
    Histogram(Histogram),
    PixelCategorical(PixelCategorical),
    CompressorProxy(CompressorModel),
}

impl DensityModel {
    pub fn exact(dist: Distribution) -> Self {
        Self::Exact(dist)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Exact(_) => "exact",
            Self::GaussianMle { .. } => "gaussian-mle",
            Self::GmmEm { .. } => "gmm-em",
            Self::Histogram(_) => "histogram",
            Self::PixelCategorical(_) => "pixel-categorical",
            Self::CompressorProxy(_) => "compressor-proxy",
        }
    }

    pub fn id(&self) -> String {
        match self {
            Self::Exact(d) => format!("exact({})", d.id()),
            Self::GaussianMle { gaussian, .. } => format!("gaussian-mle(dim={})", gaussian.dim()),
            Self::GmmEm { mixture, meta } => match mixture {
                Distribution::GaussianMixture { weights, .. } => format!(
                    "gmm-em(k={}, dim={}, iterations={})",
                    weights.len(),
                    mixture.dim(),
                    meta.iterations
                ),
                _ => unreachable!("GmmEm always wraps a mixture"),
            },
            Self::Histogram(h) => format!(
                "histogram(dim={}, bins_per_dim={})",
                h.range.len(),
                h.bins_per_dim
            ),
            Self::PixelCategorical(p) => format!(
                "pixel-categorical(dim={}, categories={}, alpha={})",
                p.dim, p.categories, p.alpha
            ),
            Self::CompressorProxy(c) => c.id(),
        }
    }

    pub fn is_compressor_proxy(&self) -> bool {
        matches!(self, Self::CompressorProxy(_))
    }

    /// The wrapped ground-truth law, when this is an exact model.
    pub fn as_exact(&self) -> Option<&Distribution> {
        match self {
            Self::Exact(d) => Some(d),
            _ => None,
        }
    }

    pub fn fit_meta(&self) -> Option<&FitMeta> {
        match self {
            Self::Exact(_) | Self::CompressorProxy(_) => None,
            Self::GaussianMle { meta, .. } | Self::GmmEm { meta, .. } => Some(meta),
            Self::Histogram(h) => Some(&h.meta),
            Self::PixelCategorical(p) => Some(&p.meta),
        }
    }

    /// Model entropy when a closed form exists (exact laws with closed forms,
    /// fitted Gaussians, per-site categoricals).
    pub fn closed_form_entropy(&self) -> Result<f64, ModelError> {
        match self {
            Self::Exact(d) => Ok(d.analytic_entropy()?),
            Self::GaussianMle { gaussian, .. } => Ok(gaussian.analytic_entropy()?),
            Self::GmmEm { mixture, .. } => Ok(mixture.analytic_entropy()?),
            Self::PixelCategorical(p) => Ok(p.entropy()),
            Self::Histogram(_) | Self::CompressorProxy(_) => Err(ModelError::Distribution(
                DistributionError::Unavailable(format!("{} model entropy", self.kind())),
            )),
        }
    }
}

impl LogDensity for DensityModel {
    fn dim(&self) -> usize {
        match self {
            Self::Exact(d) => d.dim(),
            Self::GaussianMle { gaussian, .. } => gaussian.dim(),
            Self::GmmEm { mixture, .. } => mixture.dim(),
            Self::Histogram(h) => h.range.len(),
            Self::PixelCategorical(p) => p.dim,
            Self::CompressorProxy(c) => c.dim(),
        }
    }

    fn measure(&self) -> Measure {
        match self {
            Self::Exact(d) => d.measure(),
            Self::GaussianMle { .. } | Self::GmmEm { .. } | Self::Histogram(_) => Measure::Lebesgue,
            Self::PixelCategorical(_) | Self::CompressorProxy(_) => Measure::Counting,
        }
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, EvalError> {
        match self {
            Self::Exact(d) => d.log_density(x),
            Self::GaussianMle { gaussian, .. } => gaussian.log_density(x),
            Self::GmmEm { mixture, .. } => mixture.log_density(x),
            Self::Histogram(h) => {
                self.check_point(x)?;
                Ok(h.log_density[h.bin_index(x)])
            }
            Self::PixelCategorical(p) => {
                self.check_point(x)?;
                let mut acc = 0.0;
                for (site, xi) in x.iter().enumerate() {
                    if xi.fract() != 0.0 || *xi < 0.0 || *xi >= p.categories as f64 {
                        return Err(EvalError::InvalidPixel {
                            index: site,
                            value: *xi,
                            categories: p.categories,
                        });
                    }
                    acc += p.log_probs[site * p.categories + *xi as usize];
                }
                Ok(acc)
            }
            Self::CompressorProxy(c) => c.pseudo_log_density(x),
        }
    }
}

/// Maximum-likelihood Gaussian: sample mean, population covariance plus
/// `ridge·I`.
pub fn fit_gaussian(data: &Dataset, ridge: f64) -> Result<DensityModel, ModelError> {
    if data.measure() != Measure::Lebesgue {
        return Err(ModelError::WrongMeasure {
            expected: Measure::Lebesgue,
            got: data.measure(),
        });
    }
    if data.n() < 2 {
        return Err(ModelError::NotEnoughData {
            needed: 2,
            got: data.n(),
        });
    }
    if !ridge.is_finite() || ridge < 0.0 {
        return Err(ModelError::InvalidParameter(format!(
            "ridge must be ≥ 0, got {ridge}"
        )));
    }
    let (mean, covariance) = mean_and_population_covariance(data);
    let covariance = covariance + DMatrix::identity(data.dim(), data.dim()) * ridge;
    let gaussian = Distribution::full_gaussian(mean, covariance)
        .map_err(|_| ModelError::NotPositiveDefinite { ridge })?;
    let train_ll = mean_log_likelihood(&gaussian, data);
    Ok(DensityModel::GaussianMle {
        gaussian,
        meta: FitMeta {
            train_provenance: data.provenance().clone(),
            iterations: 1,
            final_train_log_likelihood: train_ll,
            trajectory: Vec::new(),
        },
    })
}

pub(crate) fn mean_and_population_covariance(data: &Dataset) -> (DVector<f64>, DMatrix<f64>) {
    let d = data.dim();
    let n = data.n() as f64;
    let mut mean = DVector::zeros(d);
    for row in data.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    let mut r = DVector::zeros(d);
    for row in data.rows() {
        for (ri, (x, m)) in r.iter_mut().zip(row.iter().zip(mean.iter())) {
            *ri = x - m;
        }
        cov.syger(1.0 / n, &r, &r, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..d {
        for j in (i + 1)..d {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    (mean, cov)
}

pub(crate) fn mean_log_likelihood(model: &impl LogDensity, data: &Dataset) -> f64 {
    if data.n() == 0 {
        return f64::NAN;
    }
    data.rows()
        .map(|row| model.log_density(row).expect("validated training point"))
        .sum::<f64>()
        / data.n() as f64
}

/// Histogram density on `range` with `bins_per_dim` bins per axis; d ≤ 3.
pub fn fit_histogram(
    data: &Dataset,
    bins_per_dim: usize,
    range: &[(f64, f64)],
) -> Result<DensityModel, ModelError> {
    if data.measure() != Measure::Lebesgue {
        return Err(ModelError::WrongMeasure {
            expected: Measure::Lebesgue,
            got: data.measure(),
        });
    }
    if data.dim() > 3 {
        return Err(ModelError::TooManyDims {
            max: 3,
            got: data.dim(),
        });
    }
    if bins_per_dim == 0 {
        return Err(ModelError::InvalidParameter(
            "bins_per_dim must be positive".into(),
        ));
    }
    if range.len() != data.dim() {
        return Err(ModelError::InvalidParameter(format!(
            "range has {} entries for dimension {}",
            range.len(),
            data.dim()
        )));
    }
    for (lo, hi) in range {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(ModelError::InvalidParameter(format!(
                "range bounds must satisfy lower < upper, got [{lo}, {hi}]"
            )));
        }
    }
    let total_bins = bins_per_dim.pow(data.dim() as u32);
    let mut hist = Histogram {
        bins_per_dim,
        range: range.to_vec(),
        log_density: vec![0.0; total_bins],
        meta: FitMeta {
            train_provenance: data.provenance().clone(),
            iterations: 1,
            final_train_log_likelihood: f64::NAN,
            trajectory: Vec::new(),
        },
    };
    let mut counts = vec![0.0f64; total_bins];
    for row in data.rows() {
        counts[hist.bin_index(row)] += 1.0;
    }
    let bin_volume: f64 = range
        .iter()
        .map(|(lo, hi)| (hi - lo) / bins_per_dim as f64)
        .product();
    let norm = data.n() as f64 + total_bins as f64 * Histogram::PSEUDO_COUNT;
    for (ld, c) in hist.log_density.iter_mut().zip(&counts) {
        *ld = ((c + Histogram::PSEUDO_COUNT) / (norm * bin_volume)).ln();
    }
    // Mean train log-likelihood straight from the counts.
    hist.meta.final_train_log_likelihood = if data.n() > 0 {
        counts
            .iter()
            .zip(&hist.log_density)
            .map(|(c, ld)| c * ld)
            .sum::<f64>()
            / data.n() as f64
    } else {
        f64::NAN
    };
    Ok(DensityModel::Histogram(hist))
}

/// Independent per-site categoricals with Laplace smoothing
/// `(count + α) / (n + Kα)`.
pub fn fit_pixel_categorical(
    data: &Dataset,
    alpha: f64,
    categories: usize,
) -> Result<DensityModel, ModelError> {
    if data.measure() != Measure::Counting {
        return Err(ModelError::WrongMeasure {
            expected: Measure::Counting,
            got: data.measure(),
        });
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "smoothing alpha must be positive, got {alpha}"
        )));
    }
    if categories == 0 {
        return Err(ModelError::InvalidParameter(
            "need at least one category".into(),
        ));
    }
    if let Some(index) = data.values().iter().position(|v| *v >= categories as f64) {
        return Err(ModelError::ValueOutOfRange {
            index,
            value: data.values()[index],
            categories,
        });
    }
    let dim = data.dim();
    let mut counts = vec![0.0f64; dim * categories];
    for row in data.rows() {
        for (site, v) in row.iter().enumerate() {
            counts[site * categories + *v as usize] += 1.0;
        }
    }
    let norm = data.n() as f64 + categories as f64 * alpha;
    let log_probs: Vec<f64> = counts.iter().map(|c| ((c + alpha) / norm).ln()).collect();
    let train_ll = if data.n() > 0 {
        counts
            .iter()
            .zip(&log_probs)
            .map(|(c, lp)| c * lp)
            .sum::<f64>()
            / data.n() as f64
    } else {
        f64::NAN
    };
    Ok(DensityModel::PixelCategorical(PixelCategorical {
        log_probs,
        dim,
        categories,
        alpha,
        meta: FitMeta {
            train_provenance: data.provenance().clone(),
            iterations: 1,
            final_train_log_likelihood: train_ll,
            trajectory: Vec::new(),
        },
    }))
}

/// Compression-based pseudo-density over byte images:
/// `log r(y) = −(compressed bits) · ln 2`. See [`CodecSpec`].
pub fn compressor_model(codec: CodecSpec, dim: usize) -> Result<DensityModel, ModelError> {
    Ok(DensityModel::CompressorProxy(CompressorModel::new(
        codec, dim,
    )?))
}

// ---------------------------------------------------------------------------
// Versioned model file format
// ---------------------------------------------------------------------------

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: ModelSpec,
}

/// Serializable model parameters with kind tag and fit metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Exact {
        dist: DistributionSpec,
    },
    GaussianMle {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        fit_meta: FitMeta,
    },
    GmmEm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
        fit_meta: FitMeta,
    },
    Histogram {
        bins_per_dim: usize,
        range: Vec<(f64, f64)>,
        log_density: Vec<f64>,
        fit_meta: FitMeta,
    },
    PixelCategorical {
        categories: usize,
        alpha: f64,
        log_probs: Vec<f64>,
        dim: usize,
        fit_meta: FitMeta,
    },
    CompressorProxy {
        codec: CodecSpec,
        dim: usize,
    },
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ModelError> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(ModelError::Format("covariance matrix is not square".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(d, d, &flat))
}

impl DensityModel {
    pub fn to_spec(&self) -> ModelSpec {
        match self {
            Self::Exact(d) => ModelSpec::Exact {
                dist: DistributionSpec::from_distribution(d),
            },
            Self::GaussianMle { gaussian, meta } => match gaussian {
                Distribution::FullGaussian(g) => ModelSpec::GaussianMle {
                    mean: g.mean().as_slice().to_vec(),
                    covariance: matrix_rows(g.covariance()),
                    fit_meta: meta.clone(),
                },
                _ => unreachable!("GaussianMle always wraps a full Gaussian"),
            },
            Self::GmmEm { mixture, meta } => match mixture {
                Distribution::GaussianMixture { weights, components } => {
                    let mut means = Vec::new();
                    let mut covariances = Vec::new();
                    for c in components {
                        match c {
                            Distribution::FullGaussian(g) => {
                                means.push(g.mean().as_slice().to_vec());
                                covariances.push(matrix_rows(g.covariance()));
                            }
                            _ => unreachable!("EM components are full Gaussians"),
                        }
                    }
                    ModelSpec::GmmEm {
                        weights: weights.clone(),
                        means,
                        covariances,
                        fit_meta: meta.clone(),
                    }
                }
                _ => unreachable!("GmmEm always wraps a mixture"),
            },
            Self::Histogram(h) => ModelSpec::Histogram {
                bins_per_dim: h.bins_per_dim,
                range: h.range.clone(),
                log_density: h.log_density.clone(),
                fit_meta: h.meta.clone(),
            },
            Self::PixelCategorical(p) => ModelSpec::PixelCategorical {
                categories: p.categories,
                alpha: p.alpha,
                log_probs: p.log_probs.clone(),
                dim: p.dim,
                fit_meta: p.meta.clone(),
            },
            Self::CompressorProxy(c) => ModelSpec::CompressorProxy {
                codec: c.codec().clone(),
                dim: c.dim(),
            },
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self, ModelError> {
        match spec {
            ModelSpec::Exact { dist } => Ok(Self::Exact(dist.build()?)),
            ModelSpec::GaussianMle {
                mean,
                covariance,
                fit_meta,
            } => {
                let gaussian = Distribution::full_gaussian(
                    DVector::from_vec(mean.clone()),
                    rows_matrix(covariance)?,
                )?;
                Ok(Self::GaussianMle {
                    gaussian,
                    meta: fit_meta.clone(),
                })
            }
            ModelSpec::GmmEm {
                weights,
                means,
                covariances,
                fit_meta,
            } => {
                let mut components = Vec::with_capacity(means.len());
                for (m, c) in means.iter().zip(covariances.iter()) {
                    components.push(Distribution::full_gaussian(
                        DVector::from_vec(m.clone()),
                        rows_matrix(c)?,
                    )?);
                }
                Ok(Self::GmmEm {
                    mixture: Distribution::gaussian_mixture(weights.clone(), components)?,
                    meta: fit_meta.clone(),
                })
            }
            ModelSpec::Histogram {
                bins_per_dim,
                range,
                log_density,
                fit_meta,
            } => {
                if *bins_per_dim == 0 || range.is_empty() || range.len() > 3 {
                    return Err(ModelError::Format("bad histogram shape".into()));
                }
                if log_density.len() != bins_per_dim.pow(range.len() as u32) {
                    return Err(ModelError::Format("histogram bin count mismatch".into()));
                }
                Ok(Self::Histogram(Histogram {
                    bins_per_dim: *bins_per_dim,
                    range: range.clone(),
                    log_density: log_density.clone(),
                    meta: fit_meta.clone(),
                }))
            }
            ModelSpec::PixelCategorical {
                categories,
                alpha,
                log_probs,
                dim,
                fit_meta,
            } => {
                if log_probs.len() != dim * categories {
                    return Err(ModelError::Format("log_probs length mismatch".into()));
                }
                Ok(Self::PixelCategorical(PixelCategorical {
                    log_probs: log_probs.clone(),
                    dim: *dim,
                    categories: *categories,
                    alpha: *alpha,
                    meta: fit_meta.clone(),
                }))
            }
            ModelSpec::CompressorProxy { codec, dim } => {
                Ok(Self::CompressorProxy(CompressorModel::new(
                    codec.clone(),
                    *dim,
                )?))
            }
        }
    }

    /// Writes the model as versioned JSON.
    pub fn save_json(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.to_spec(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| ModelError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format version {} (supported: {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Self::from_spec(&file.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lebesgue_data(points: Vec<f64>, dim: usize) -> Dataset {
        Dataset::new(points, dim, Measure::Lebesgue, Provenance::external("fixture")).unwrap()
    }

    fn counting_data(points: Vec<f64>, dim: usize) -> Dataset {
        Dataset::new(points, dim, Measure::Counting, Provenance::external("fixture")).unwrap()
    }

    #[test]
    fn exact_model_delegates() {
        let dist = Distribution::standard_normal(1).unwrap();
        let model = DensityModel::exact(dist.clone());
        assert_abs_diff_eq!(
            model.log_density(&[0.0]).unwrap(),
            -0.9189385332046727,
            epsilon = 1e-12
        );
        for x in [-2.0, -0.5, 0.0, 1.3, 4.0] {
            assert_eq!(
                model.log_density(&[x]).unwrap(),
                dist.log_density(&[x]).unwrap()
            );
        }
    }

    #[test]
    fn gaussian_mle_two_points_population_convention() {
        let data = lebesgue_data(vec![-1.0, 1.0], 1);
        let model = fit_gaussian(&data, 0.0).unwrap();
        match &model {
            DensityModel::GaussianMle { gaussian, meta } => {
                if let Distribution::FullGaussian(g) = gaussian {
                    assert_abs_diff_eq!(g.mean()[0], 0.0, epsilon = 1e-15);
                    assert_abs_diff_eq!(g.covariance()[(0, 0)], 1.0, epsilon = 1e-15);
                } else {
                    panic!("expected full gaussian");
                }
                assert_eq!(meta.iterations, 1);
                assert!(meta.final_train_log_likelihood.is_finite());
            }
            _ => panic!("expected gaussian-mle"),
        }
    }

    #[test]
    fn gaussian_mle_degenerate_data_with_ridge() {
        let data = lebesgue_data(vec![2.5, 2.5, 2.5], 1);
        let model = fit_gaussian(&data, 1e-6).unwrap();
        if let DensityModel::GaussianMle { gaussian: Distribution::FullGaussian(g), .. } = &model {
            assert_abs_diff_eq!(g.mean()[0], 2.5, epsilon = 1e-12);
            assert_abs_diff_eq!(g.covariance()[(0, 0)], 1e-6, epsilon = 1e-18);
        } else {
            panic!("expected gaussian-mle");
        }
        // Without ridge the zero covariance must be rejected with advice.
        assert!(matches!(
            fit_gaussian(&data, 0.0),
            Err(ModelError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn gaussian_mle_needs_two_points() {
        let data = lebesgue_data(vec![0.0], 1);
        assert!(matches!(
            fit_gaussian(&data, 0.0),
            Err(ModelError::NotEnoughData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn pixel_categorical_hand_oracle() {
        // Two 2-pixel images {(0,255),(0,0)}, α=1, K=256:
        // site 0 sees 0 twice → (2+1)/(2+256); site 1 sees 0 once → (1+1)/258.
        let data = counting_data(vec![0.0, 255.0, 0.0, 0.0], 2);
        let model = fit_pixel_categorical(&data, 1.0, 256).unwrap();
        let expected = (3.0f64 / 258.0).ln() + (2.0f64 / 258.0).ln();
        assert_abs_diff_eq!(model.log_density(&[0.0, 0.0]).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(
            model.log_density(&[0.0, 0.0]).unwrap(),
            -9.31415970061518,
            epsilon = 1e-10
        );
    }

    #[test]
    fn pixel_categorical_smoothing_dominates() {
        let data = counting_data(vec![0.0, 3.0], 2);
        let model = fit_pixel_categorical(&data, 1e9, 4).unwrap();
        if let DensityModel::PixelCategorical(p) = &model {
            for site in 0..2 {
                for code in 0..4 {
                    assert!((p.probability(site, code) - 0.25).abs() < 1e-6);
                }
            }
        } else {
            panic!("expected pixel-categorical");
        }
    }

    #[test]
    fn pixel_categorical_constant_images_maximize_own_likelihood() {
        let data = counting_data(vec![0.0; 12], 4); // three constant-zero images
        let model = fit_pixel_categorical(&data, 1.0, 256).unwrap();
        let at_zero = model.log_density(&[0.0; 4]).unwrap();
        for probe in [[1.0, 0.0, 0.0, 0.0], [255.0, 255.0, 255.0, 255.0]] {
            assert!(at_zero > model.log_density(&probe).unwrap());
        }
    }

    #[test]
    fn pixel_categorical_rejects_out_of_range() {
        let data = counting_data(vec![0.0, 7.0], 2);
        assert!(matches!(
            fit_pixel_categorical(&data, 1.0, 4),
            Err(ModelError::ValueOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn pixel_categorical_normalizes() {
        let data = counting_data(vec![0.0, 2.0, 1.0, 1.0], 2);
        let model = fit_pixel_categorical(&data, 0.5, 3).unwrap();
        if let DensityModel::PixelCategorical(p) = &model {
            for site in 0..2 {
                let total: f64 = (0..3).map(|c| p.probability(site, c)).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn histogram_single_point_normalizes() {
        let data = lebesgue_data(vec![0.3], 1);
        let model = fit_histogram(&data, 2, &[(0.0, 1.0)]).unwrap();
        if let DensityModel::Histogram(h) = &model {
            assert_abs_diff_eq!(h.total_mass(), 1.0, epsilon = 1e-9);
        }
        // Occupied bin: (1 + 0.5) / ((1 + 2·0.5) · 0.5) = 1.5; empty: 0.5.
        assert_abs_diff_eq!(model.log_density(&[0.25]).unwrap(), 1.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(model.log_density(&[0.75]).unwrap(), 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn histogram_clamps_out_of_range_to_edge_bins() {
        let data = lebesgue_data(vec![0.1, 0.9], 1);
        let model = fit_histogram(&data, 2, &[(0.0, 1.0)]).unwrap();
        assert_eq!(
            model.log_density(&[-5.0]).unwrap(),
            model.log_density(&[0.1]).unwrap()
        );
        assert_eq!(
            model.log_density(&[42.0]).unwrap(),
            model.log_density(&[0.9]).unwrap()
        );
    }

    #[test]
    fn histogram_guards() {
        let data4 = lebesgue_data(vec![0.0; 4], 4);
        assert!(matches!(
            fit_histogram(&data4, 2, &[(0.0, 1.0); 4]),
            Err(ModelError::TooManyDims { max: 3, got: 4 })
        ));
        let data1 = lebesgue_data(vec![0.5], 1);
        assert!(matches!(
            fit_histogram(&data1, 0, &[(0.0, 1.0)]),
            Err(ModelError::InvalidParameter(_))
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = counting_data(vec![0.0, 255.0, 0.0, 0.0], 2);
        let model = fit_pixel_categorical(&data, 1.0, 256).unwrap();
        let path = dir.path().join("model.json");
        model.save_json(&path).unwrap();
        let loaded = DensityModel::load_json(&path).unwrap();
        assert_eq!(
            model.log_density(&[0.0, 0.0]).unwrap(),
            loaded.log_density(&[0.0, 0.0]).unwrap()
        );
        assert_eq!(loaded.fit_meta().unwrap().iterations, 1);
    }
}
