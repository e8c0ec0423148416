//! Monte Carlo and sample-based estimators of entropy, cross-entropy, and KL
//! divergence, with standard errors.
//!
//! Monte Carlo loops are partitioned into fixed chunks with one RNG substream
//! each and merged in chunk order, so every estimate is bit-identical across
//! worker counts. The k-nearest-neighbor entropy estimator is the standard
//! Kozachenko–Leonenko form
//!
//! ```text
//! Ĥ = ψ(n) − ψ(k) + ln V_d + (d/n) Σᵢ ln εᵢ
//! ```
//!
//! with `εᵢ` the Euclidean distance from point `i` to its `k`-th neighbor and
//! `V_d` the unit-ball volume; its standard error comes from a seeded
//! nonparametric bootstrap over the per-point contributions `d·ln εᵢ`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Dataset, Distribution};
use crate::rng::{par_map_chunks, substream, Welford};
use crate::{EvalError, LogDensity, Measure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("dimension mismatch: sampler has dim {q}, density has dim {p}")]
    DimensionMismatch { q: usize, p: usize },
    #[error("measure mismatch: sampler is {q}, density is {p}")]
    MeasureMismatch { q: Measure, p: Measure },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("need at least 2 Monte Carlo draws, got {0}")]
    TooFewSamples(usize),
    #[error("k-NN entropy needs n > k ≥ 1: n = {n}, k = {k}")]
    BadNeighborOrder { n: usize, k: usize },
    #[error("k-NN entropy requires lebesgue-measure data")]
    DiscreteData,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A scalar estimate with its standard error and sample count.
///
/// `support_violations` counts draws where the evaluated log-density was
/// `−∞`; any violation forces `value = +∞` for cross-entropy/KL style
/// integrands (the expectation diverges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    pub method: String,
    #[serde(default)]
    pub support_violations: u64,
}

impl Estimate {
    pub fn support_violated(&self) -> bool {
        self.support_violations > 0
    }
}

/// Something i.i.d. observations can be taken from: a law or a fixed dataset.
#[derive(Debug, Clone, Copy)]
pub enum SampleSource<'a> {
    Distribution(&'a Distribution),
    Dataset(&'a Dataset),
}

impl<'a> From<&'a Distribution> for SampleSource<'a> {
    fn from(d: &'a Distribution) -> Self {
        SampleSource::Distribution(d)
    }
}

impl<'a> From<&'a Dataset> for SampleSource<'a> {
    fn from(d: &'a Dataset) -> Self {
        SampleSource::Dataset(d)
    }
}

impl SampleSource<'_> {
    fn dim(&self) -> usize {
        match self {
            SampleSource::Distribution(d) => d.dim(),
            SampleSource::Dataset(d) => d.dim(),
        }
    }

    fn measure(&self) -> Measure {
        match self {
            SampleSource::Distribution(d) => d.measure(),
            SampleSource::Dataset(d) => d.measure(),
        }
    }
}

#[derive(Default, Clone, Copy)]
struct McAccum {
    welford: Welford,
    violations: u64,
}

impl McAccum {
    fn push(&mut self, log_p: f64) {
        if log_p == f64::NEG_INFINITY {
            self.violations += 1;
        } else {
            self.welford.push(log_p);
        }
    }

    fn merge(&mut self, other: &McAccum) {
        self.welford.merge(&other.welford);
        self.violations += other.violations;
    }
}

/// Accumulates `f(x)` over the source: fresh substreamed draws for a
/// distribution, all rows for a dataset.
fn accumulate<F>(
    q: SampleSource<'_>,
    n: usize,
    seed: u64,
    label: &str,
    f: F,
) -> Result<McAccum, EstimatorError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError> + Sync,
{
    let partials: Vec<Result<McAccum, EvalError>> = match q {
        SampleSource::Distribution(dist) => par_map_chunks(n, |chunk_idx, range| {
            let mut rng = substream(seed, label, chunk_idx);
            let mut point = vec![0.0; dist.dim()];
            let mut acc = McAccum::default();
            for _ in range {
                dist.sample_point(&mut rng, &mut point);
                acc.push(f(&point)?);
            }
            Ok(acc)
        }),
        SampleSource::Dataset(data) => par_map_chunks(data.n(), |_, range| {
            let mut acc = McAccum::default();
            for i in range {
                acc.push(f(data.row(i))?);
            }
            Ok(acc)
        }),
    };
    let mut total = McAccum::default();
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

fn check_compatible(q: &SampleSource<'_>, p: &dyn LogDensity) -> Result<(), EstimatorError> {
    if q.dim() != p.dim() {
        return Err(EstimatorError::DimensionMismatch {
            q: q.dim(),
            p: p.dim(),
        });
    }
    if q.measure() != p.measure() {
        return Err(EstimatorError::MeasureMismatch {
            q: q.measure(),
            p: p.measure(),
        });
    }
    Ok(())
}

fn source_size(q: &SampleSource<'_>, n: usize) -> Result<usize, EstimatorError> {
    match q {
        SampleSource::Distribution(_) => {
            if n < 2 {
                Err(EstimatorError::TooFewSamples(n))
            } else {
                Ok(n)
            }
        }
        SampleSource::Dataset(d) => {
            if d.is_empty() {
                Err(EstimatorError::EmptyDataset)
            } else {
                Ok(d.n())
            }
        }
    }
}

/// Cross-entropy `−E_{Y∼q}[log p(Y)] = KL(q‖p) + H[q]`, by Monte Carlo over
/// `n` draws (or over all rows when `q` is a dataset, ignoring `n`, `seed`).
pub fn mc_cross_entropy(
    q: SampleSource<'_>,
    p: &dyn LogDensity,
    n: usize,
    seed: u64,
) -> Result<Estimate, EstimatorError> {
    check_compatible(&q, p)?;
    let total = source_size(&q, n)?;
    let acc = accumulate(q, n, seed, "mc-cross-entropy", |x| p.log_density(x))?;
    let method = match q {
        SampleSource::Distribution(_) => "mc-cross-entropy(chacha12)",
        SampleSource::Dataset(_) => "dataset-cross-entropy",
    };
    Ok(finish_negated(acc, total as u64, method))
}

/// Plug-in Monte Carlo entropy: `mc_cross_entropy(dist, dist, ..)`.
pub fn mc_entropy(dist: &Distribution, n: usize, seed: u64) -> Result<Estimate, EstimatorError> {
    let mut est = mc_cross_entropy(SampleSource::Distribution(dist), dist, n, seed)?;
    est.method = "mc-entropy(plug-in)".into();
    Ok(est)
}

/// `KL(q‖p)` as the Monte Carlo mean of `log q(Y) − log p(Y)`, `Y ∼ q`.
pub fn mc_kl(
    q: &Distribution,
    p: &dyn LogDensity,
    n: usize,
    seed: u64,
) -> Result<Estimate, EstimatorError> {
    let source = SampleSource::Distribution(q);
    check_compatible(&source, p)?;
    let total = source_size(&source, n)?;
    let acc = accumulate(source, n, seed, "mc-kl", |x| {
        let lq = q.log_density(x)?;
        let lp = p.log_density(x)?;
        // Encode a support violation of p as −∞ so the accumulator flags it.
        Ok(if lp == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            lq - lp
        })
    })?;
    if acc.violations > 0 {
        return Ok(Estimate {
            value: f64::INFINITY,
            std_error: f64::INFINITY,
            n: total as u64,
            method: "mc-kl(chacha12)".into(),
            support_violations: acc.violations,
        });
    }
    Ok(Estimate {
        value: acc.welford.mean(),
        std_error: acc.welford.std_error(),
        n: total as u64,
        method: "mc-kl(chacha12)".into(),
        support_violations: 0,
    })
}

fn finish_negated(acc: McAccum, n: u64, method: &str) -> Estimate {
    if acc.violations > 0 {
        return Estimate {
            value: f64::INFINITY,
            std_error: f64::INFINITY,
            n,
            method: method.into(),
            support_violations: acc.violations,
        };
    }
    Estimate {
        value: -acc.welford.mean(),
        std_error: acc.welford.std_error(),
        n,
        method: method.into(),
        support_violations: 0,
    }
}

// ---------------------------------------------------------------------------
// Kozachenko–Leonenko k-NN entropy
// ---------------------------------------------------------------------------

/// Resamples used for the bootstrap standard error.
pub const KNN_BOOTSTRAP_RESAMPLES: usize = 200;

const KNN_BOOTSTRAP_SEED: u64 = 0x6b6e6e; // "knn"

/// k-NN differential entropy with the default 200-resample bootstrap SE.
pub fn knn_entropy(data: &Dataset, k: usize) -> Result<Estimate, EstimatorError> {
    knn_entropy_with(data, k, KNN_BOOTSTRAP_RESAMPLES)
}

/// k-NN differential entropy with a configurable bootstrap resample count.
///
/// Exact duplicate points make `ln εᵢ` undefined; when any k-th neighbor
/// distance is zero the whole dataset is jittered by `1e-10 ×` the data scale
/// (recorded in the method field) and distances are recomputed.
pub fn knn_entropy_with(
    data: &Dataset,
    k: usize,
    resamples: usize,
) -> Result<Estimate, EstimatorError> {
    if data.measure() != Measure::Lebesgue {
        return Err(EstimatorError::DiscreteData);
    }
    let n = data.n();
    if k == 0 || n <= k {
        return Err(EstimatorError::BadNeighborOrder { n, k });
    }
    let d = data.dim();

    let mut jittered = false;
    let mut eps = kth_neighbor_distances(data.values(), n, d, k);
    if eps.iter().any(|e| *e == 0.0) {
        let magnitude = 1e-10 * data_scale(data);
        let mut points = data.values().to_vec();
        let chunks = par_map_chunks(points.len(), |chunk_idx, range| {
            let mut rng = substream(KNN_BOOTSTRAP_SEED, "knn-jitter", chunk_idx);
            range
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * magnitude)
                .collect::<Vec<f64>>()
        });
        let mut flat_idx = 0;
        for chunk in chunks {
            for delta in chunk {
                points[flat_idx] += delta;
                flat_idx += 1;
            }
        }
        eps = kth_neighbor_distances(&points, n, d, k);
        jittered = true;
    }

    let const_term = digamma(n as f64) - digamma(k as f64) + ln_unit_ball_volume(d);
    let contributions: Vec<f64> = eps.iter().map(|e| d as f64 * e.ln()).collect();
    let mean_contribution = contributions.iter().sum::<f64>() / n as f64;
    let value = const_term + mean_contribution;

    // Seeded nonparametric bootstrap over the per-point contributions.
    let boot_means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(KNN_BOOTSTRAP_SEED, "knn-bootstrap", b as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += contributions[rng.random_range(0..n)];
            }
            sum / n as f64
        })
        .collect();
    let mut w = Welford::new();
    for m in &boot_means {
        w.push(*m);
    }
    let std_error = w.variance().sqrt();

    let mut method = format!("knn-entropy(kozachenko-leonenko, k={k}, bootstrap={resamples})");
    if jittered {
        method.push_str(", jittered=1e-10×scale");
    }
    Ok(Estimate {
        value,
        std_error,
        n: n as u64,
        method,
        support_violations: 0,
    })
}

/// Largest per-coordinate range, as the jitter scale; 1.0 for degenerate data.
fn data_scale(data: &Dataset) -> f64 {
    let d = data.dim();
    let mut scale = 0.0f64;
    for c in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..data.n() {
            let v = data.row(r)[c];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        scale = scale.max(hi - lo);
    }
    if scale > 0.0 {
        scale
    } else {
        1.0
    }
}

/// Exact brute-force k-th-nearest-neighbor Euclidean distances, parallel by
/// query point.
fn kth_neighbor_distances(points: &[f64], n: usize, d: usize, k: usize) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &points[i * d..(i + 1) * d];
            // `best` holds the k smallest squared distances, largest first.
            let mut best = vec![f64::INFINITY; k];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let xj = &points[j * d..(j + 1) * d];
                let mut sq = 0.0;
                for (a, b) in xi.iter().zip(xj) {
                    let t = a - b;
                    sq += t * t;
                }
                if sq < best[0] {
                    best[0] = sq;
                    // Sift the new entry down to keep `best` sorted descending.
                    let mut idx = 0;
                    while idx + 1 < k && best[idx] < best[idx + 1] {
                        best.swap(idx, idx + 1);
                        idx += 1;
                    }
                }
            }
            best[0].sqrt()
        })
        .collect()
}

/// Digamma via recurrence below 8 and the Bernoulli asymptotic series above;
/// absolute error < 1e-12 on `[1, 1e9]`.
pub fn digamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut result = 0.0;
    while x < 8.0 {
        result -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ(x) ≈ ln x − 1/(2x) − Σ B_{2m}/(2m x^{2m})
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    result + x.ln() - 0.5 * inv - series
}

/// `ln V_d` for the Euclidean unit ball: `(d/2) ln π − ln Γ(d/2 + 1)`.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let half_ln_pi = 0.5 * std::f64::consts::PI.ln();
    d as f64 * half_ln_pi - ln_gamma_half(d + 2)
}

/// `ln Γ(m/2)` by recurrence from `Γ(1) = 1` or `Γ(1/2) = √π`.
fn ln_gamma_half(m: usize) -> f64 {
    if m % 2 == 0 {
        (2..m / 2).map(|j| (j as f64).ln()).sum()
    } else {
        let mut acc = 0.5 * std::f64::consts::PI.ln();
        let mut z = 0.5;
        let target = m as f64 / 2.0;
        while z + 1.0 <= target {
            acc += z.ln();
            z += 1.0;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn digamma_matches_reference_values() {
        // Frozen from mpmath (30 digits).
        let cases = [
            (1.0, -0.57721566490153286),
            (1.5, 0.036489973978576521),
            (2.0, 0.42278433509846714),
            (3.0, 0.92278433509846714),
            (4.2, 1.3113388912865996),
            (10.0, 2.2517525890667211),
            (100.0, 4.6001618527380874),
            (1e6, 13.815510057964191),
            (1e9, 20.723265836446411),
        ];
        for (x, expected) in cases {
            assert_abs_diff_eq!(digamma(x), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert_abs_diff_eq!(ln_unit_ball_volume(1), (2.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_unit_ball_volume(2),
            std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ln_unit_ball_volume(3),
            (4.0 / 3.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ln_unit_ball_volume(4),
            (std::f64::consts::PI * std::f64::consts::PI / 2.0).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cross_entropy_of_self_is_entropy() {
        let q = Distribution::standard_normal(1).unwrap();
        let est = mc_cross_entropy((&q).into(), &q, 100_000, 42).unwrap();
        assert!(
            (est.value - 1.4189385332046727).abs() < 4.0 * est.std_error,
            "value {} se {}",
            est.value,
            est.std_error
        );
        assert!(!est.support_violated());
    }

    #[test]
    fn disjoint_support_flags_violation() {
        let q = Distribution::uniform_box(vec![2.0], vec![3.0]).unwrap();
        let p = Distribution::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let est = mc_cross_entropy((&q).into(), &p, 1000, 1).unwrap();
        assert_eq!(est.value, f64::INFINITY);
        assert!(est.support_violated());
        assert_eq!(est.support_violations, 1000);
    }

    #[test]
    fn uniform_entropy_is_exactly_zero() {
        let u = Distribution::uniform_box(vec![0.0], vec![1.0]).unwrap();
        let est = mc_entropy(&u, 100, 9).unwrap();
        assert_abs_diff_eq!(est.value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.std_error, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_identity_is_zero() {
        let q = Distribution::standard_normal(2).unwrap();
        let est = mc_kl(&q, &q, 1000, 3).unwrap();
        assert_abs_diff_eq!(est.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_dimension_mismatch_errors() {
        let q = Distribution::standard_normal(2).unwrap();
        let p = Distribution::standard_normal(3).unwrap();
        assert!(matches!(
            mc_kl(&q, &p, 100, 0),
            Err(EstimatorError::DimensionMismatch { q: 2, p: 3 })
        ));
    }

    #[test]
    fn dataset_source_uses_all_points() {
        let q = Distribution::standard_normal(1).unwrap();
        let data = q.sample(5000, 17);
        let est = mc_cross_entropy((&data).into(), &q, 0, 0).unwrap();
        assert_eq!(est.n, 5000);
        assert!((est.value - 1.4189385332046727).abs() < 5.0 * est.std_error);
    }

    #[test]
    fn empty_dataset_errors() {
        let q = Distribution::standard_normal(1).unwrap();
        let data = q.sample(0, 1);
        assert!(matches!(
            mc_cross_entropy((&data).into(), &q, 0, 0),
            Err(EstimatorError::EmptyDataset)
        ));
    }

    #[test]
    fn knn_preconditions() {
        let data = Distribution::standard_normal(1).unwrap().sample(3, 1);
        assert!(matches!(
            knn_entropy(&data, 5),
            Err(EstimatorError::BadNeighborOrder { n: 3, k: 5 })
        ));
        assert!(matches!(
            knn_entropy(&data, 0),
            Err(EstimatorError::BadNeighborOrder { n: 3, k: 0 })
        ));
    }

    #[test]
    fn knn_handles_duplicates_by_jitter() {
        let mut values = vec![0.5; 50];
        values.extend((0..50).map(|i| i as f64 / 50.0));
        let data = Dataset::new(
            values,
            1,
            Measure::Lebesgue,
            crate::distributions::Provenance::external("dups"),
        )
        .unwrap();
        let est = knn_entropy(&data, 3).unwrap();
        assert!(est.value.is_finite());
        assert!(est.method.contains("jittered"));
    }

    #[test]
    fn estimates_are_worker_count_invariant() {
        let q = Distribution::isotropic_gaussian(vec![0.0; 4], 2.0).unwrap();
        let p = Distribution::standard_normal(4).unwrap();
        let reference = mc_kl(&q, &p, 20_000, 7).unwrap();
        for workers in [1usize, 2, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let est = pool.install(|| mc_kl(&q, &p, 20_000, 7).unwrap());
            assert_eq!(est.value.to_bits(), reference.value.to_bits());
            assert_eq!(est.std_error.to_bits(), reference.std_error.to_bits());
        }
    }
}
