//! Analytic distribution zoo: ground-truth laws with exact sampling,
//! log-densities, and closed-form entropy/KL where they exist.
//!
//! Six kinds are supported: isotropic, diagonal, and full-covariance
//! Gaussians, Gaussian mixtures, axis-aligned uniform boxes (all Lebesgue),
//! and products of per-site categoricals (counting measure). Log-densities
//! are in nats. Full-covariance laws are validated by Cholesky factorization
//! at construction and keep the factor for stable evaluation (log-determinant
//! accumulated from the factor diagonal); mixtures evaluate through
//! log-sum-exp.

mod dataset;

pub use dataset::{Dataset, Provenance};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{par_map_chunks, substream};
use crate::{EvalError, LogDensity, Measure};

/// Tolerance for "weights sum to one"-style construction invariants.
const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("measure mismatch: {p} vs {q}")]
    MeasureMismatch { p: Measure, q: Measure },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("no closed form: {0}; use the estimators module instead")]
    Unavailable(String),
}

/// A Gaussian with full covariance, validated SPD at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_det: f64,
}

impl FullGaussian {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, DistributionError> {
        let d = mean.len();
        if d == 0 {
            return Err(DistributionError::InvalidParameter(
                "mean must be non-empty".into(),
            ));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(DistributionError::DimensionMismatch {
                expected: d,
                actual: covariance.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(DistributionError::InvalidParameter(
                "parameters must be finite".into(),
            ));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-9 * (1.0 + covariance.amax()) {
            return Err(DistributionError::InvalidParameter(format!(
                "covariance is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let chol = nalgebra::Cholesky::new(covariance.clone())
            .ok_or(DistributionError::NotPositiveDefinite)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            covariance,
            chol_l,
            log_det,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let r = DVector::from_iterator(
            self.mean.len(),
            x.iter().zip(self.mean.iter()).map(|(a, b)| a - b),
        );
        let z = self
            .chol_l
            .solve_lower_triangular(&r)
            .expect("factor has positive diagonal");
        -0.5 * (d * LN_2PI + self.log_det + z.norm_squared())
    }

    fn sample_point(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        let d = self.mean.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.mean + &self.chol_l * z;
        out.copy_from_slice(x.as_slice());
    }
}

const LN_2PI: f64 = 1.8378770664093453;
const LN_2PI_E: f64 = 2.8378770664093453;

/// A ground-truth law with exact sampler and log-density.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    IsotropicGaussian {
        mean: DVector<f64>,
        variance: f64,
    },
    DiagonalGaussian {
        mean: DVector<f64>,
        variances: DVector<f64>,
    },
    FullGaussian(FullGaussian),
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<Distribution>,
    },
    UniformBox {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    CategoricalProduct {
        site_probs: Vec<Vec<f64>>,
    },
}

impl Distribution {
    pub fn isotropic_gaussian(mean: Vec<f64>, variance: f64) -> Result<Self, DistributionError> {
        if mean.is_empty() {
            return Err(DistributionError::InvalidParameter(
                "mean must be non-empty".into(),
            ));
        }
        if !variance.is_finite() || variance <= 0.0 {
            return Err(DistributionError::InvalidParameter(format!(
                "variance must be positive and finite, got {variance}"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(DistributionError::InvalidParameter(
                "mean must be finite".into(),
            ));
        }
        Ok(Self::IsotropicGaussian {
            mean: DVector::from_vec(mean),
            variance,
        })
    }

    /// N(0, I_d).
    pub fn standard_normal(dim: usize) -> Result<Self, DistributionError> {
        Self::isotropic_gaussian(vec![0.0; dim], 1.0)
    }

    pub fn diagonal_gaussian(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self, DistributionError> {
        if mean.is_empty() || mean.len() != variances.len() {
            return Err(DistributionError::InvalidParameter(format!(
                "mean ({}) and variances ({}) must be non-empty and equal length",
                mean.len(),
                variances.len()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(DistributionError::InvalidParameter(
                "mean must be finite".into(),
            ));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(DistributionError::InvalidParameter(
                "variances must be positive and finite".into(),
            ));
        }
        Ok(Self::DiagonalGaussian {
            mean: DVector::from_vec(mean),
            variances: DVector::from_vec(variances),
        })
    }

    pub fn full_gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, DistributionError> {
        Ok(Self::FullGaussian(FullGaussian::new(mean, covariance)?))
    }

    /// Mixture of Gaussian components (isotropic, diagonal, or full).
    pub fn gaussian_mixture(
        weights: Vec<f64>,
        components: Vec<Distribution>,
    ) -> Result<Self, DistributionError> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(DistributionError::InvalidParameter(format!(
                "need matching non-empty weights ({}) and components ({})",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DistributionError::InvalidParameter(
                "weights must be non-negative and finite".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(DistributionError::InvalidParameter(format!(
                "mixture weights must sum to 1 within {SUM_TOL:.0e}, got {sum}"
            )));
        }
        let dim = components[0].dim();
        for c in &components {
            if !matches!(
                c,
                Distribution::IsotropicGaussian { .. }
                    | Distribution::DiagonalGaussian { .. }
                    | Distribution::FullGaussian(_)
            ) {
                return Err(DistributionError::InvalidParameter(
                    "mixture components must be Gaussian".into(),
                ));
            }
            if c.dim() != dim {
                return Err(DistributionError::DimensionMismatch {
                    expected: dim,
                    actual: c.dim(),
                });
            }
        }
        Ok(Self::GaussianMixture {
            weights,
            components,
        })
    }

    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DistributionError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(DistributionError::InvalidParameter(
                "bounds must be non-empty and equal length".into(),
            ));
        }
        for (i, (l, u)) in lower.iter().zip(upper.iter()).enumerate() {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(DistributionError::InvalidParameter(format!(
                    "bounds must satisfy lower < upper in coordinate {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(Self::UniformBox {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        })
    }

    /// Independent categorical per site; values are codes in `[0, K_i)`.
    pub fn categorical_product(site_probs: Vec<Vec<f64>>) -> Result<Self, DistributionError> {
        if site_probs.is_empty() {
            return Err(DistributionError::InvalidParameter(
                "need at least one site".into(),
            ));
        }
        for (i, probs) in site_probs.iter().enumerate() {
            if probs.is_empty() {
                return Err(DistributionError::InvalidParameter(format!(
                    "site {i} has no categories"
                )));
            }
            if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(DistributionError::InvalidParameter(format!(
                    "site {i} probabilities must be non-negative and finite"
                )));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(DistributionError::InvalidParameter(format!(
                    "site {i} probabilities must sum to 1 within {SUM_TOL:.0e}, got {sum}"
                )));
            }
        }
        Ok(Self::CategoricalProduct { site_probs })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::IsotropicGaussian { .. } => "isotropic-gaussian",
            Self::DiagonalGaussian { .. } => "diagonal-gaussian",
            Self::FullGaussian(_) => "full-gaussian",
            Self::GaussianMixture { .. } => "gaussian-mixture",
            Self::UniformBox { .. } => "uniform-box",
            Self::CategoricalProduct { .. } => "categorical-product",
        }
    }

    /// Short identifier used in provenance, ledgers, and reports.
    pub fn id(&self) -> String {
        match self {
            Self::IsotropicGaussian { mean, variance } => {
                if mean.iter().all(|v| *v == 0.0) {
                    format!("isotropic-gaussian(dim={}, variance={})", mean.len(), variance)
                } else {
                    format!(
                        "isotropic-gaussian(dim={}, variance={}, mean={})",
                        mean.len(),
                        variance,
                        head(mean.as_slice())
                    )
                }
            }
            Self::DiagonalGaussian { mean, variances } => format!(
                "diagonal-gaussian(dim={}, variances={})",
                mean.len(),
                head(variances.as_slice())
            ),
            Self::FullGaussian(g) => format!("full-gaussian(dim={})", g.mean.len()),
            Self::GaussianMixture { weights, components } => format!(
                "gaussian-mixture(k={}, dim={}, weights={})",
                weights.len(),
                components[0].dim(),
                head(weights)
            ),
            Self::UniformBox { lower, upper } => format!(
                "uniform-box(dim={}, lower={}, upper={})",
                lower.len(),
                head(lower.as_slice()),
                head(upper.as_slice())
            ),
            Self::CategoricalProduct { site_probs } => {
                format!("categorical-product(sites={})", site_probs.len())
            }
        }
    }

    /// Draws `n` i.i.d. points. Bit-identical for identical `(self, n, seed)`
    /// regardless of worker count: each fixed-size chunk of rows uses its own
    /// substream of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let dim = self.dim();
        let chunks = par_map_chunks(n, |chunk_idx, range| {
            let mut rng = substream(seed, "sample", chunk_idx);
            let mut buf = vec![0.0; range.len() * dim];
            for row in buf.chunks_exact_mut(dim) {
                self.sample_point(&mut rng, row);
            }
            buf
        });
        let mut points = Vec::with_capacity(n * dim);
        for c in chunks {
            points.extend_from_slice(&c);
        }
        let provenance = Provenance::sampled(format!("sampled n={n} from {}", self.id()), seed);
        Dataset::new(points, dim, self.measure(), provenance).expect("sampler output is valid")
    }

    pub(crate) fn sample_point(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        match self {
            Self::IsotropicGaussian { mean, variance } => {
                let sd = variance.sqrt();
                for (o, m) in out.iter_mut().zip(mean.iter()) {
                    *o = m + sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::DiagonalGaussian { mean, variances } => {
                for ((o, m), v) in out.iter_mut().zip(mean.iter()).zip(variances.iter()) {
                    *o = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::FullGaussian(g) => g.sample_point(rng, out),
            Self::GaussianMixture { weights, components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = j;
                        break;
                    }
                }
                components[chosen].sample_point(rng, out);
            }
            Self::UniformBox { lower, upper } => {
                for ((o, l), u) in out.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                    let t: f64 = rng.random();
                    *o = l + t * (u - l);
                }
            }
            Self::CategoricalProduct { site_probs } => {
                for (o, probs) in out.iter_mut().zip(site_probs.iter()) {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut code = probs.len() - 1;
                    for (k, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            code = k;
                            break;
                        }
                    }
                    *o = code as f64;
                }
            }
        }
    }

    /// Differential entropy (Lebesgue) or Shannon entropy (counting), nats.
    ///
    /// Errors with [`DistributionError::Unavailable`] for mixtures with more
    /// than one distinct component, which have no closed form.
    pub fn analytic_entropy(&self) -> Result<f64, DistributionError> {
        match self {
            Self::IsotropicGaussian { mean, variance } => {
                let d = mean.len() as f64;
                Ok(0.5 * d * (LN_2PI_E + variance.ln()))
            }
            Self::DiagonalGaussian { mean, variances } => {
                let d = mean.len() as f64;
                Ok(0.5 * (d * LN_2PI_E + variances.iter().map(|v| v.ln()).sum::<f64>()))
            }
            Self::FullGaussian(g) => {
                let d = g.mean.len() as f64;
                Ok(0.5 * (d * LN_2PI_E + g.log_det))
            }
            Self::GaussianMixture { components, .. } => {
                let all_same = components
                    .windows(2)
                    .all(|w| w[0].approx_same(&w[1], SUM_TOL));
                if all_same {
                    // Degenerate mixture: the density equals its component's.
                    components[0].analytic_entropy()
                } else {
                    Err(DistributionError::Unavailable(
                        "gaussian mixture with more than one distinct component".into(),
                    ))
                }
            }
            Self::UniformBox { lower, upper } => Ok(lower
                .iter()
                .zip(upper.iter())
                .map(|(l, u)| (u - l).ln())
                .sum()),
            Self::CategoricalProduct { site_probs } => Ok(site_probs
                .iter()
                .map(|probs| -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>())
                .sum()),
        }
    }

    /// Closed-form KL(p‖q) in nats; `+∞` when `supp(p) ⊄ supp(q)`.
    ///
    /// Supported pairs: Gaussian↔Gaussian (any covariance forms),
    /// categorical-product↔categorical-product, uniform-box↔uniform-box, and
    /// any pair with equal parameters (which is 0, mixtures included).
    pub fn analytic_kl(p: &Distribution, q: &Distribution) -> Result<f64, DistributionError> {
        if p.dim() != q.dim() {
            return Err(DistributionError::DimensionMismatch {
                expected: p.dim(),
                actual: q.dim(),
            });
        }
        if p.measure() != q.measure() {
            return Err(DistributionError::MeasureMismatch {
                p: p.measure(),
                q: q.measure(),
            });
        }
        if p.approx_same(q, 1e-9) {
            return Ok(0.0);
        }
        match (p, q) {
            (pg, qg) if pg.is_gaussian() && qg.is_gaussian() => Ok(gaussian_kl(pg, qg)),
            (
                Self::UniformBox { lower: pl, upper: pu },
                Self::UniformBox { lower: ql, upper: qu },
            ) => {
                let subset = pl
                    .iter()
                    .zip(pu.iter())
                    .zip(ql.iter().zip(qu.iter()))
                    .all(|((pl, pu), (ql, qu))| ql <= pl && pu <= qu);
                if !subset {
                    return Ok(f64::INFINITY);
                }
                let log_vol_p: f64 = pl.iter().zip(pu.iter()).map(|(l, u)| (u - l).ln()).sum();
                let log_vol_q: f64 = ql.iter().zip(qu.iter()).map(|(l, u)| (u - l).ln()).sum();
                Ok(log_vol_q - log_vol_p)
            }
            (
                Self::CategoricalProduct { site_probs: pp },
                Self::CategoricalProduct { site_probs: qp },
            ) => {
                let mut total = 0.0;
                for (ps, qs) in pp.iter().zip(qp.iter()) {
                    for (k, &pk) in ps.iter().enumerate() {
                        if pk == 0.0 {
                            continue;
                        }
                        let qk = qs.get(k).copied().unwrap_or(0.0);
                        if qk == 0.0 {
                            return Ok(f64::INFINITY);
                        }
                        total += pk * (pk / qk).ln();
                    }
                }
                Ok(total)
            }
            _ => Err(DistributionError::Unavailable(format!(
                "no closed-form KL for {} vs {}",
                p.kind(),
                q.kind()
            ))),
        }
    }

    fn is_gaussian(&self) -> bool {
        matches!(
            self,
            Self::IsotropicGaussian { .. } | Self::DiagonalGaussian { .. } | Self::FullGaussian(_)
        )
    }

    /// Structural parameter equality within `tol` (same kind and shapes).
    pub fn approx_same(&self, other: &Distribution, tol: f64) -> bool {
        match (self, other) {
            (
                Self::IsotropicGaussian { mean: m0, variance: v0 },
                Self::IsotropicGaussian { mean: m1, variance: v1 },
            ) => m0.len() == m1.len() && close_all(m0.as_slice(), m1.as_slice(), tol) && (v0 - v1).abs() <= tol,
            (
                Self::DiagonalGaussian { mean: m0, variances: v0 },
                Self::DiagonalGaussian { mean: m1, variances: v1 },
            ) => {
                m0.len() == m1.len()
                    && close_all(m0.as_slice(), m1.as_slice(), tol)
                    && close_all(v0.as_slice(), v1.as_slice(), tol)
            }
            (Self::FullGaussian(g0), Self::FullGaussian(g1)) => {
                g0.mean.len() == g1.mean.len()
                    && close_all(g0.mean.as_slice(), g1.mean.as_slice(), tol)
                    && close_all(g0.covariance.as_slice(), g1.covariance.as_slice(), tol)
            }
            (
                Self::GaussianMixture { weights: w0, components: c0 },
                Self::GaussianMixture { weights: w1, components: c1 },
            ) => {
                w0.len() == w1.len()
                    && close_all(w0, w1, tol)
                    && c0.iter().zip(c1.iter()).all(|(a, b)| a.approx_same(b, tol))
            }
            (
                Self::UniformBox { lower: l0, upper: u0 },
                Self::UniformBox { lower: l1, upper: u1 },
            ) => {
                l0.len() == l1.len()
                    && close_all(l0.as_slice(), l1.as_slice(), tol)
                    && close_all(u0.as_slice(), u1.as_slice(), tol)
            }
            (
                Self::CategoricalProduct { site_probs: p0 },
                Self::CategoricalProduct { site_probs: p1 },
            ) => {
                p0.len() == p1.len()
                    && p0
                        .iter()
                        .zip(p1.iter())
                        .all(|(a, b)| a.len() == b.len() && close_all(a, b, tol))
            }
            _ => false,
        }
    }
}

fn close_all(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
}

fn head(values: &[f64]) -> String {
    let shown: Vec<String> = values.iter().take(4).map(|v| format!("{v}")).collect();
    if values.len() > 4 {
        format!("[{}, …]", shown.join(", "))
    } else {
        format!("[{}]", shown.join(", "))
    }
}

impl LogDensity for Distribution {
    fn dim(&self) -> usize {
        match self {
            Self::IsotropicGaussian { mean, .. } => mean.len(),
            Self::DiagonalGaussian { mean, .. } => mean.len(),
            Self::FullGaussian(g) => g.mean.len(),
            Self::GaussianMixture { components, .. } => components[0].dim(),
            Self::UniformBox { lower, .. } => lower.len(),
            Self::CategoricalProduct { site_probs } => site_probs.len(),
        }
    }

    fn measure(&self) -> Measure {
        match self {
            Self::CategoricalProduct { .. } => Measure::Counting,
            _ => Measure::Lebesgue,
        }
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.check_point(x)?;
        Ok(match self {
            Self::IsotropicGaussian { mean, variance } => {
                let d = mean.len() as f64;
                let sq: f64 = x
                    .iter()
                    .zip(mean.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                -0.5 * (d * (LN_2PI + variance.ln()) + sq / variance)
            }
            Self::DiagonalGaussian { mean, variances } => {
                let mut acc = 0.0;
                for ((xi, mi), vi) in x.iter().zip(mean.iter()).zip(variances.iter()) {
                    let r = xi - mi;
                    acc += LN_2PI + vi.ln() + r * r / vi;
                }
                -0.5 * acc
            }
            Self::FullGaussian(g) => g.log_density(x),
            Self::GaussianMixture { weights, components } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(components.iter())
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, c)| w.ln() + c.log_density(x).expect("validated point"))
                    .collect();
                log_sum_exp(&terms)
            }
            Self::UniformBox { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter())
                    .zip(upper.iter())
                    .all(|((xi, l), u)| l <= xi && xi <= u);
                if inside {
                    -lower
                        .iter()
                        .zip(upper.iter())
                        .map(|(l, u)| (u - l).ln())
                        .sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::CategoricalProduct { site_probs } => {
                let mut acc = 0.0;
                for (xi, probs) in x.iter().zip(site_probs.iter()) {
                    if xi.fract() != 0.0 || *xi < 0.0 || *xi >= probs.len() as f64 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    let p = probs[*xi as usize];
                    if p == 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    acc += p.ln();
                }
                acc
            }
        })
    }
}

/// `ln Σ exp(xᵢ)`, stable against underflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Lower Cholesky factor of the covariance, for any Gaussian form.
fn cov_chol_l(g: &Distribution) -> DMatrix<f64> {
    match g {
        Distribution::IsotropicGaussian { mean, variance } => {
            DMatrix::from_diagonal_element(mean.len(), mean.len(), variance.sqrt())
        }
        Distribution::DiagonalGaussian { variances, .. } => {
            DMatrix::from_diagonal(&variances.map(|v| v.sqrt()))
        }
        Distribution::FullGaussian(g) => g.chol_l.clone(),
        _ => unreachable!("caller checks is_gaussian"),
    }
}

fn gaussian_mean(g: &Distribution) -> &DVector<f64> {
    match g {
        Distribution::IsotropicGaussian { mean, .. } => mean,
        Distribution::DiagonalGaussian { mean, .. } => mean,
        Distribution::FullGaussian(g) => &g.mean,
        _ => unreachable!("caller checks is_gaussian"),
    }
}

fn gaussian_log_det(g: &Distribution) -> f64 {
    match g {
        Distribution::IsotropicGaussian { mean, variance } => mean.len() as f64 * variance.ln(),
        Distribution::DiagonalGaussian { variances, .. } => variances.iter().map(|v| v.ln()).sum(),
        Distribution::FullGaussian(g) => g.log_det,
        _ => unreachable!("caller checks is_gaussian"),
    }
}

fn diag_variances(g: &Distribution) -> Option<Vec<f64>> {
    match g {
        Distribution::IsotropicGaussian { mean, variance } => Some(vec![*variance; mean.len()]),
        Distribution::DiagonalGaussian { variances, .. } => Some(variances.as_slice().to_vec()),
        _ => None,
    }
}

/// KL between Gaussians of any covariance form:
/// `½ [tr(Σ₁⁻¹Σ₀) + (μ₁−μ₀)ᵀΣ₁⁻¹(μ₁−μ₀) − d + ln det Σ₁ − ln det Σ₀]`.
fn gaussian_kl(p: &Distribution, q: &Distribution) -> f64 {
    let d = p.dim() as f64;
    let dmu = gaussian_mean(q) - gaussian_mean(p);
    let log_det_ratio = gaussian_log_det(q) - gaussian_log_det(p);
    if let (Some(vp), Some(vq)) = (diag_variances(p), diag_variances(q)) {
        let trace: f64 = vp.iter().zip(vq.iter()).map(|(a, b)| a / b).sum();
        let quad: f64 = dmu
            .iter()
            .zip(vq.iter())
            .map(|(r, v)| r * r / v)
            .sum();
        return 0.5 * (trace + quad - d + log_det_ratio);
    }
    let lq = cov_chol_l(q);
    let lp = cov_chol_l(p);
    let m = lq
        .solve_lower_triangular(&lp)
        .expect("factor has positive diagonal");
    let trace = m.norm_squared();
    let z = lq
        .solve_lower_triangular(&dmu)
        .expect("factor has positive diagonal");
    0.5 * (trace + z.norm_squared() - d + log_det_ratio)
}

// ---------------------------------------------------------------------------
// Serializable spec (the text schema used by configs and model files)
// ---------------------------------------------------------------------------

/// Scalar-or-vector mean, so dimension sweeps can broadcast a scalar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl MeanSpec {
    fn resolve(&self, dim: usize) -> Result<Vec<f64>, DistributionError> {
        match self {
            MeanSpec::Scalar(v) => Ok(vec![*v; dim]),
            MeanSpec::Vector(v) => {
                if v.len() != dim {
                    return Err(DistributionError::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }
}

/// Serializable description of a [`Distribution`]; the text config schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    IsotropicGaussian {
        dim: usize,
        #[serde(default = "zero_mean")]
        mean: MeanSpec,
        variance: f64,
    },
    DiagonalGaussian {
        mean: Vec<f64>,
        variances: Vec<f64>,
    },
    FullGaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<DistributionSpec>,
    },
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    CategoricalProduct {
        site_probs: Vec<Vec<f64>>,
    },
}

fn zero_mean() -> MeanSpec {
    MeanSpec::Scalar(0.0)
}

impl DistributionSpec {
    pub fn build(&self) -> Result<Distribution, DistributionError> {
        match self {
            Self::IsotropicGaussian { dim, mean, variance } => {
                Distribution::isotropic_gaussian(mean.resolve(*dim)?, *variance)
            }
            Self::DiagonalGaussian { mean, variances } => {
                Distribution::diagonal_gaussian(mean.clone(), variances.clone())
            }
            Self::FullGaussian { mean, covariance } => {
                let d = mean.len();
                if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
                    return Err(DistributionError::InvalidParameter(format!(
                        "covariance must be a {d}×{d} matrix"
                    )));
                }
                let flat: Vec<f64> = covariance.iter().flatten().copied().collect();
                Distribution::full_gaussian(
                    DVector::from_vec(mean.clone()),
                    DMatrix::from_row_slice(d, d, &flat),
                )
            }
            Self::GaussianMixture { weights, components } => {
                let comps = components
                    .iter()
                    .map(|c| c.build())
                    .collect::<Result<Vec<_>, _>>()?;
                Distribution::gaussian_mixture(weights.clone(), comps)
            }
            Self::UniformBox { lower, upper } => {
                Distribution::uniform_box(lower.clone(), upper.clone())
            }
            Self::CategoricalProduct { site_probs } => {
                Distribution::categorical_product(site_probs.clone())
            }
        }
    }

    pub fn from_distribution(dist: &Distribution) -> Self {
        match dist {
            Distribution::IsotropicGaussian { mean, variance } => Self::IsotropicGaussian {
                dim: mean.len(),
                mean: MeanSpec::Vector(mean.as_slice().to_vec()),
                variance: *variance,
            },
            Distribution::DiagonalGaussian { mean, variances } => Self::DiagonalGaussian {
                mean: mean.as_slice().to_vec(),
                variances: variances.as_slice().to_vec(),
            },
            Distribution::FullGaussian(g) => Self::FullGaussian {
                mean: g.mean.as_slice().to_vec(),
                covariance: (0..g.mean.len())
                    .map(|i| g.covariance.row(i).iter().copied().collect())
                    .collect(),
            },
            Distribution::GaussianMixture { weights, components } => Self::GaussianMixture {
                weights: weights.clone(),
                components: components.iter().map(Self::from_distribution).collect(),
            },
            Distribution::UniformBox { lower, upper } => Self::UniformBox {
                lower: lower.as_slice().to_vec(),
                upper: upper.as_slice().to_vec(),
            },
            Distribution::CategoricalProduct { site_probs } => Self::CategoricalProduct {
                site_probs: site_probs.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_normal_log_density_at_mode() {
        let d = Distribution::standard_normal(1).unwrap();
        assert_abs_diff_eq!(
            d.log_density(&[0.0]).unwrap(),
            -0.9189385332046727,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degenerate_mixture_equals_component() {
        let c = Distribution::standard_normal(1).unwrap();
        let m = Distribution::gaussian_mixture(vec![0.5, 0.5], vec![c.clone(), c]).unwrap();
        assert_abs_diff_eq!(
            m.log_density(&[0.0]).unwrap(),
            -0.9189385332046727,
            epsilon = 1e-12
        );
        // Entropy of the degenerate mixture falls back to the component's.
        assert_abs_diff_eq!(m.analytic_entropy().unwrap(), 1.4189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_two_dim_value() {
        let d = Distribution::standard_normal(2).unwrap();
        assert_abs_diff_eq!(
            d.log_density(&[1.0, 1.0]).unwrap(),
            -2.8378770664093453,
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_density_input_errors() {
        let d = Distribution::standard_normal(2).unwrap();
        assert_eq!(
            d.log_density(&[0.0]).unwrap_err(),
            EvalError::DimensionMismatch { expected: 2, actual: 1 }
        );
        assert_eq!(
            d.log_density(&[0.0, f64::NAN]).unwrap_err(),
            EvalError::NonFiniteInput { index: 1 }
        );
    }

    #[test]
    fn support_contract_box_and_categorical() {
        let b = Distribution::uniform_box(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(b.log_density(&[0.5, 1.0]).unwrap(), -(2.0f64).ln(), epsilon = 1e-12);
        assert_eq!(b.log_density(&[1.5, 1.0]).unwrap(), f64::NEG_INFINITY);

        let c = Distribution::categorical_product(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(c.log_density(&[1.0, 0.0]).unwrap(), (0.5f64).ln(), epsilon = 1e-12);
        assert_eq!(c.log_density(&[0.0, 1.0]).unwrap(), f64::NEG_INFINITY); // zero-prob category
        assert_eq!(c.log_density(&[2.0, 0.0]).unwrap(), f64::NEG_INFINITY); // invalid code
        assert_eq!(c.log_density(&[0.5, 0.0]).unwrap(), f64::NEG_INFINITY); // non-integer
    }

    #[test]
    fn entropy_closed_forms() {
        let n01 = Distribution::standard_normal(1).unwrap();
        assert_abs_diff_eq!(n01.analytic_entropy().unwrap(), 1.4189385332046727, epsilon = 1e-12);

        let n016 = Distribution::isotropic_gaussian(vec![0.0], 16.0).unwrap();
        assert_abs_diff_eq!(n016.analytic_entropy().unwrap(), 2.8052328943245634, epsilon = 1e-12);

        for d in [1, 3, 7] {
            let u = Distribution::uniform_box(vec![0.0; d], vec![1.0; d]).unwrap();
            assert_abs_diff_eq!(u.analytic_entropy().unwrap(), 0.0, epsilon = 1e-12);
        }

        let mix = Distribution::gaussian_mixture(
            vec![0.5, 0.5],
            vec![
                Distribution::isotropic_gaussian(vec![-5.0], 1.0).unwrap(),
                Distribution::isotropic_gaussian(vec![5.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        assert!(matches!(
            mix.analytic_entropy(),
            Err(DistributionError::Unavailable(_))
        ));
    }

    #[test]
    fn kl_closed_forms() {
        let p = Distribution::standard_normal(1).unwrap();
        let q = Distribution::isotropic_gaussian(vec![0.0], 16.0).unwrap();
        assert_abs_diff_eq!(
            Distribution::analytic_kl(&p, &q).unwrap(),
            0.9175443611198906,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(Distribution::analytic_kl(&p, &p).unwrap(), 0.0, epsilon = 1e-15);

        let cp = Distribution::categorical_product(vec![vec![0.5, 0.5]]).unwrap();
        let cq = Distribution::categorical_product(vec![vec![0.25, 0.75]]).unwrap();
        assert_abs_diff_eq!(
            Distribution::analytic_kl(&cp, &cq).unwrap(),
            0.14384103622589046,
            epsilon = 1e-12
        );

        // Box nested in box, and the infinite direction.
        let inner = Distribution::uniform_box(vec![0.25], vec![0.75]).unwrap();
        let outer = Distribution::uniform_box(vec![0.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(
            Distribution::analytic_kl(&inner, &outer).unwrap(),
            (2.0f64).ln(),
            epsilon = 1e-12
        );
        assert_eq!(
            Distribution::analytic_kl(&outer, &inner).unwrap(),
            f64::INFINITY
        );

        // Measure mismatch and unsupported pairs error.
        assert!(matches!(
            Distribution::analytic_kl(&p, &cp),
            Err(DistributionError::MeasureMismatch { .. })
        ));
        assert!(matches!(
            Distribution::analytic_kl(&p, &outer),
            Err(DistributionError::Unavailable(_))
        ));
    }

    #[test]
    fn kl_between_covariance_forms_agrees() {
        // Same law expressed as isotropic, diagonal, and full must give equal KLs.
        let iso = Distribution::isotropic_gaussian(vec![1.0, -1.0], 2.0).unwrap();
        let diag = Distribution::diagonal_gaussian(vec![0.0, 0.5], vec![1.0, 3.0]).unwrap();
        let full = Distribution::full_gaussian(
            DVector::from_vec(vec![0.0, 0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
        )
        .unwrap();
        let kl_diag = Distribution::analytic_kl(&iso, &diag).unwrap();
        let kl_full = Distribution::analytic_kl(&iso, &full).unwrap();
        assert_abs_diff_eq!(kl_diag, kl_full, epsilon = 1e-10);

        let kl_rev_diag = Distribution::analytic_kl(&diag, &iso).unwrap();
        let kl_rev_full = Distribution::analytic_kl(&full, &iso).unwrap();
        assert_abs_diff_eq!(kl_rev_diag, kl_rev_full, epsilon = 1e-10);
    }

    #[test]
    fn sampling_empty_and_deterministic() {
        let d = Distribution::standard_normal(3).unwrap();
        let empty = d.sample(0, 7);
        assert_eq!(empty.n(), 0);
        assert_eq!(empty.dim(), 3);
        assert_eq!(empty.provenance().root_seed, Some(7));

        let a = d.sample(1000, 1);
        let b = d.sample(1000, 1);
        assert_eq!(a.values(), b.values());
        let c = d.sample(1000, 2);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn invalid_construction_is_rejected() {
        assert!(Distribution::isotropic_gaussian(vec![0.0], -1.0).is_err());
        assert!(Distribution::uniform_box(vec![1.0], vec![1.0]).is_err());
        assert!(Distribution::categorical_product(vec![vec![0.5, 0.6]]).is_err());
        assert!(Distribution::gaussian_mixture(
            vec![0.5, 0.6],
            vec![
                Distribution::standard_normal(1).unwrap(),
                Distribution::standard_normal(1).unwrap(),
            ],
        )
        .is_err());
        // Non-SPD covariance fails Cholesky.
        assert!(matches!(
            Distribution::full_gaussian(
                DVector::from_vec(vec![0.0, 0.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            ),
            Err(DistributionError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn spec_round_trip() {
        let dist = Distribution::gaussian_mixture(
            vec![0.25, 0.75],
            vec![
                Distribution::isotropic_gaussian(vec![-1.0, 0.0], 0.5).unwrap(),
                Distribution::diagonal_gaussian(vec![1.0, 2.0], vec![1.0, 4.0]).unwrap(),
            ],
        )
        .unwrap();
        let spec = DistributionSpec::from_distribution(&dist);
        let text = toml::to_string(&spec).unwrap();
        let parsed: DistributionSpec = toml::from_str(&text).unwrap();
        let rebuilt = parsed.build().unwrap();
        assert!(dist.approx_same(&rebuilt, 1e-12));
    }
}
