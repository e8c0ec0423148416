//! EM fitting for Gaussian mixtures.
//!
//! Initialization is k-means++-style seeding from data points using the run
//! seed. Responsibilities are computed in log space with log-sum-exp. A
//! component whose responsibility mass collapses is re-seeded from a random
//! data point; the fit fails only if a component collapses `k` times.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{log_sum_exp, Dataset, Distribution};
use crate::rng::substream;
use crate::{LogDensity, Measure};

use super::{mean_and_population_covariance, DensityModel, FitMeta, ModelError};

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Absolute improvement in average log-likelihood below which EM stops.
    pub tol: f64,
    pub seed: u64,
    pub ridge: f64,
}

impl EmConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            max_iters: 200,
            tol: 1e-7,
            seed,
            ridge: 1e-6,
        }
    }
}

/// Fits a `k`-component full-covariance Gaussian mixture by EM.
///
/// The average train log-likelihood is non-decreasing per iteration (up to
/// tiny slack from the ridge) and is recorded per iteration in the fit
/// metadata trajectory.
pub fn fit_gmm_em(data: &Dataset, k: usize, cfg: &EmConfig) -> Result<DensityModel, ModelError> {
    if data.measure() != Measure::Lebesgue {
        return Err(ModelError::WrongMeasure {
            expected: Measure::Lebesgue,
            got: data.measure(),
        });
    }
    if k == 0 {
        return Err(ModelError::InvalidParameter(
            "component count must be ≥ 1".into(),
        ));
    }
    if data.n() < k || data.n() < 2 {
        return Err(ModelError::NotEnoughData {
            needed: k.max(2),
            got: data.n(),
        });
    }
    if !(cfg.ridge >= 0.0) || !cfg.ridge.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "ridge must be ≥ 0, got {}",
            cfg.ridge
        )));
    }

    let n = data.n();
    let d = data.dim();
    let (_, data_cov) = mean_and_population_covariance(data);
    let ridge_eye = DMatrix::identity(d, d) * cfg.ridge;
    let pooled_cov = &data_cov + &ridge_eye;

    let mut means = kmeans_pp_seeds(data, k, cfg.seed);
    let mut covs: Vec<DMatrix<f64>> = vec![pooled_cov.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut components = build_components(&means, &covs, cfg.ridge)?;
    let mut trajectory: Vec<f64> = Vec::new();
    let mut reseed_counts = vec![0usize; k];
    let mut reseed_draws = 0u64;
    let mut log_resp = vec![0.0f64; n * k];

    let mut iterations = 0;
    for _iter in 0..cfg.max_iters {
        iterations += 1;

        // E-step: responsibilities and the average log-likelihood.
        let mut avg_ll = 0.0;
        for (i, row) in data.rows().enumerate() {
            let lr = &mut log_resp[i * k..(i + 1) * k];
            for (j, comp) in components.iter().enumerate() {
                lr[j] = weights[j].max(f64::MIN_POSITIVE).ln()
                    + comp.log_density(row).expect("validated training point");
            }
            let lse = log_sum_exp(lr);
            for v in lr.iter_mut() {
                *v -= lse;
            }
            avg_ll += lse;
        }
        avg_ll /= n as f64;
        trajectory.push(avg_ll);

        // M-step.
        let mut collapsed = Vec::new();
        for j in 0..k {
            let mass: f64 = (0..n).map(|i| log_resp[i * k + j].exp()).sum();
            if mass < 1e-10 {
                collapsed.push(j);
                continue;
            }
            let mut mu = DVector::zeros(d);
            for (i, row) in data.rows().enumerate() {
                let r = log_resp[i * k + j].exp();
                for (m, x) in mu.iter_mut().zip(row) {
                    *m += r * x;
                }
            }
            mu /= mass;
            let mut cov = DMatrix::zeros(d, d);
            let mut diff = DVector::zeros(d);
            for (i, row) in data.rows().enumerate() {
                let r = log_resp[i * k + j].exp();
                for (t, (x, m)) in diff.iter_mut().zip(row.iter().zip(mu.iter())) {
                    *t = x - m;
                }
                cov.syger(r / mass, &diff, &diff, 1.0);
            }
            for a in 0..d {
                for b in (a + 1)..d {
                    cov[(a, b)] = cov[(b, a)];
                }
            }
            cov += &ridge_eye;
            weights[j] = mass / n as f64;
            means[j] = mu;
            covs[j] = cov;
        }

        // Re-seed collapsed components from random data points.
        for j in collapsed {
            reseed_counts[j] += 1;
            if reseed_counts[j] >= k {
                return Err(ModelError::EmptyComponentRecurred {
                    component: j,
                    attempts: reseed_counts[j],
                });
            }
            let mut rng = substream(cfg.seed, "em-reseed", reseed_draws);
            reseed_draws += 1;
            let pick = rng.random_range(0..n);
            means[j] = DVector::from_row_slice(data.row(pick));
            covs[j] = pooled_cov.clone();
            weights[j] = 1.0 / n as f64;
        }
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }

        components = build_components(&means, &covs, cfg.ridge)?;

        if trajectory.len() >= 2 {
            let prev = trajectory[trajectory.len() - 2];
            if (avg_ll - prev).abs() < cfg.tol {
                break;
            }
        }
    }

    // Final pass so the recorded likelihood matches the returned parameters.
    let mixture = Distribution::gaussian_mixture(weights, components)?;
    let final_ll = data
        .rows()
        .map(|row| mixture.log_density(row).expect("validated training point"))
        .sum::<f64>()
        / n as f64;
    trajectory.push(final_ll);

    Ok(DensityModel::GmmEm {
        mixture,
        meta: FitMeta {
            train_provenance: data.provenance().clone(),
            iterations,
            final_train_log_likelihood: final_ll,
            trajectory,
        },
    })
}

fn build_components(
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
    ridge: f64,
) -> Result<Vec<Distribution>, ModelError> {
    means
        .iter()
        .zip(covs.iter())
        .map(|(m, c)| {
            Distribution::full_gaussian(m.clone(), c.clone())
                .map_err(|_| ModelError::NotPositiveDefinite { ridge })
        })
        .collect()
}

/// k-means++ seeding: first center uniform, later centers proportional to
/// squared distance from the nearest chosen center.
fn kmeans_pp_seeds(data: &Dataset, k: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = data.n();
    let mut rng = substream(seed, "em-init", 0);
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centers.push(DVector::from_row_slice(data.row(first)));

    let mut min_sq = vec![0.0f64; n];
    for (i, row) in data.rows().enumerate() {
        min_sq[i] = sq_dist(row, &centers[0]);
    }
    while centers.len() < k {
        let total: f64 = min_sq.iter().sum();
        let pick = if total > 0.0 {
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in min_sq.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with existing centers; fall back to uniform.
            rng.random_range(0..n)
        };
        let center = DVector::from_row_slice(data.row(pick));
        for (i, row) in data.rows().enumerate() {
            min_sq[i] = min_sq[i].min(sq_dist(row, &center));
        }
        centers.push(center);
    }
    centers
}

fn sq_dist(row: &[f64], center: &DVector<f64>) -> f64 {
    row.iter()
        .zip(center.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Provenance;
    use approx::assert_abs_diff_eq;

    fn two_cluster_data() -> Dataset {
        let p = Distribution::gaussian_mixture(
            vec![0.5, 0.5],
            vec![
                Distribution::isotropic_gaussian(vec![-10.0], 1.0).unwrap(),
                Distribution::isotropic_gaussian(vec![10.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        p.sample(1000, 99)
    }

    #[test]
    fn k1_matches_fit_gaussian() {
        let data = Distribution::standard_normal(2).unwrap().sample(500, 3);
        let em = fit_gmm_em(&data, 1, &EmConfig::new(5)).unwrap();
        let mle = super::super::fit_gaussian(&data, EmConfig::new(5).ridge).unwrap();
        let (em_mix, mle_g) = match (&em, &mle) {
            (
                DensityModel::GmmEm { mixture, .. },
                DensityModel::GaussianMle { gaussian, .. },
            ) => (mixture, gaussian),
            _ => panic!("unexpected kinds"),
        };
        if let Distribution::GaussianMixture { components, .. } = em_mix {
            assert!(components[0].approx_same(mle_g, 1e-9));
        } else {
            panic!("expected mixture");
        }
    }

    #[test]
    fn separated_clusters_recovered() {
        let data = two_cluster_data();
        let model = fit_gmm_em(&data, 2, &EmConfig::new(11)).unwrap();
        if let DensityModel::GmmEm { mixture: Distribution::GaussianMixture { components, .. }, meta } =
            &model
        {
            let mut centers: Vec<f64> = components
                .iter()
                .map(|c| match c {
                    Distribution::FullGaussian(g) => g.mean()[0],
                    _ => unreachable!(),
                })
                .collect();
            centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_abs_diff_eq!(centers[0], -10.0, epsilon = 0.2);
            assert_abs_diff_eq!(centers[1], 10.0, epsilon = 0.2);
            assert!(meta.iterations >= 1);
            assert!(!meta.trajectory.is_empty());
        } else {
            panic!("expected gmm");
        }
    }

    #[test]
    fn k_larger_than_n_errors() {
        let data = Distribution::standard_normal(1).unwrap().sample(3, 1);
        assert!(matches!(
            fit_gmm_em(&data, 5, &EmConfig::new(1)),
            Err(ModelError::NotEnoughData { .. })
        ));
    }

    #[test]
    fn counting_data_rejected() {
        let data = Dataset::new(
            vec![0.0, 1.0],
            1,
            Measure::Counting,
            Provenance::external("x"),
        )
        .unwrap();
        assert!(matches!(
            fit_gmm_em(&data, 1, &EmConfig::new(1)),
            Err(ModelError::WrongMeasure { .. })
        ));
    }
}
