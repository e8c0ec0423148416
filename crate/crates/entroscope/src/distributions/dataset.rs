use serde::{Deserialize, Serialize};

use crate::rng::GENERATOR_ID;
use crate::Measure;

use super::DistributionError;

/// Where a dataset came from: free text, the root seed when sampled, and the
/// pinned generator identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub description: String,
    pub root_seed: Option<u64>,
    pub generator: String,
}

impl Provenance {
    pub fn sampled(description: impl Into<String>, root_seed: u64) -> Self {
        Self {
            description: description.into(),
            root_seed: Some(root_seed),
            generator: GENERATOR_ID.to_string(),
        }
    }

    pub fn external(description: impl Into<String>) -> Self {
        Self {
            description: description.into(),
            root_seed: None,
            generator: "external".to_string(),
        }
    }

    /// Provenance for a dataset derived from this one (subsampling etc.).
    pub fn derived(&self, step: &str, root_seed: Option<u64>) -> Self {
        Self {
            description: format!("{step} of [{}]", self.description),
            root_seed: root_seed.or(self.root_seed),
            generator: GENERATOR_ID.to_string(),
        }
    }
}

/// An immutable collection of fixed-dimension observations.
///
/// Rows are stored flat in row-major order. Counting-measure datasets hold
/// integer-coded values (validated at construction); all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    dim: usize,
    measure: Measure,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        points: Vec<f64>,
        dim: usize,
        measure: Measure,
        provenance: Provenance,
    ) -> Result<Self, DistributionError> {
        if dim == 0 {
            return Err(DistributionError::InvalidParameter(
                "dataset dimension must be positive".into(),
            ));
        }
        if points.len() % dim != 0 {
            return Err(DistributionError::InvalidParameter(format!(
                "{} values do not form complete rows of dimension {dim}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(DistributionError::InvalidParameter(format!(
                "non-finite value at flat index {i}"
            )));
        }
        if measure == Measure::Counting {
            if let Some(i) = points.iter().position(|v| v.fract() != 0.0 || *v < 0.0) {
                return Err(DistributionError::InvalidParameter(format!(
                    "counting-measure value at flat index {i} is not a non-negative integer: {}",
                    points[i]
                )));
            }
        }
        Ok(Self {
            points,
            dim,
            measure,
            provenance,
        })
    }

    pub fn empty(dim: usize, measure: Measure, provenance: Provenance) -> Self {
        Self::new(Vec::new(), dim, measure, provenance).expect("empty dataset is valid")
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::external("test")
    }

    #[test]
    fn rejects_ragged_and_nonfinite() {
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2, Measure::Lebesgue, prov()).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 2, Measure::Lebesgue, prov()).is_err());
        assert!(Dataset::new(vec![1.0, f64::INFINITY], 2, Measure::Lebesgue, prov()).is_err());
    }

    #[test]
    fn counting_measure_requires_integers() {
        assert!(Dataset::new(vec![0.0, 255.0], 2, Measure::Counting, prov()).is_ok());
        assert!(Dataset::new(vec![0.5, 1.0], 2, Measure::Counting, prov()).is_err());
        assert!(Dataset::new(vec![-1.0, 1.0], 2, Measure::Counting, prov()).is_err());
    }

    #[test]
    fn rows_are_dim_sized() {
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, Measure::Lebesgue, prov()).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.rows().len(), 2);
    }
}
