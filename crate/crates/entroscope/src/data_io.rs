//! Dataset ingestion and tabular export: big-endian IDX image files,
//! seed-deterministic subsampling, and RFC-4180 CSV with pinned float
//! formatting.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::ScoreSet;
use crate::distributions::{Dataset, Provenance};
use crate::rng::substream;
use crate::Measure;

/// IDX magic for unsigned-byte 3-D tensors (images).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX magic for unsigned-byte 1-D tensors (labels).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic in {path}: expected 0x{expected:08x}, found 0x{found:08x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error(
        "truncated IDX file {path}: expected {expected} bytes, got {actual}; \
         data missing from byte offset {actual}"
    )]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("IDX dimensions {rows}×{cols} in {path} do not match expected {expected_rows}×{expected_cols}")]
    DimMismatch {
        path: String,
        rows: u32,
        cols: u32,
        expected_rows: u32,
        expected_cols: u32,
    },
    #[error("label count {labels} does not match image count {images}")]
    LabelCountMismatch { labels: usize, images: usize },
    #[error("cannot subsample {requested} from {available} points")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Distribution(#[from] crate::distributions::DistributionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Where an IDX image file lives and what shape it must have.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageDatasetSpec {
    pub path: PathBuf,
    /// (rows, cols) each image must have.
    pub expected_dims: (u32, u32),
    pub label_path: Option<PathBuf>,
    pub split: Split,
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path, total: usize) -> Result<u32, DataIoError> {
    if offset + 4 > bytes.len() {
        return Err(DataIoError::Truncated {
            path: path.display().to_string(),
            expected: total.max(offset + 4),
            actual: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap()))
}

/// Parses a big-endian IDX image file into a counting-measure dataset with
/// `dim = rows·cols` and byte values 0–255.
pub fn load_idx(spec: &ImageDatasetSpec) -> Result<Dataset, DataIoError> {
    let bytes = read_file(&spec.path)?;
    let path = spec.path.as_path();

    let magic = read_u32_be(&bytes, 0, path, 16)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataIoError::BadMagic {
            path: path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&bytes, 4, path, 16)? as usize;
    let rows = read_u32_be(&bytes, 8, path, 16)?;
    let cols = read_u32_be(&bytes, 12, path, 16)?;
    let expected_total = 16 + n * rows as usize * cols as usize;
    if bytes.len() < expected_total {
        return Err(DataIoError::Truncated {
            path: path.display().to_string(),
            expected: expected_total,
            actual: bytes.len(),
        });
    }
    if (rows, cols) != spec.expected_dims {
        return Err(DataIoError::DimMismatch {
            path: path.display().to_string(),
            rows,
            cols,
            expected_rows: spec.expected_dims.0,
            expected_cols: spec.expected_dims.1,
        });
    }

    if let Some(label_path) = &spec.label_path {
        let labels = load_idx_labels(label_path)?;
        if labels.len() != n {
            return Err(DataIoError::LabelCountMismatch {
                labels: labels.len(),
                images: n,
            });
        }
    }

    let dim = rows as usize * cols as usize;
    let points: Vec<f64> = bytes[16..expected_total].iter().map(|b| *b as f64).collect();
    let provenance = Provenance::external(format!(
        "idx images {} ({} split, n={n}, {rows}×{cols})",
        path.display(),
        spec.split
    ));
    Ok(Dataset::new(points, dim, Measure::Counting, provenance)?)
}

/// Parses a big-endian IDX label vector (magic 0x00000801).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, DataIoError> {
    let bytes = read_file(path)?;
    let magic = read_u32_be(&bytes, 0, path, 8)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataIoError::BadMagic {
            path: path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&bytes, 4, path, 8)? as usize;
    let expected_total = 8 + n;
    if bytes.len() < expected_total {
        return Err(DataIoError::Truncated {
            path: path.display().to_string(),
            expected: expected_total,
            actual: bytes.len(),
        });
    }
    Ok(bytes[8..expected_total].to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataIoError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

/// Writes images as a big-endian IDX tensor (the inverse of [`load_idx`]).
pub fn write_idx_images(
    path: &Path,
    pixels: &[u8],
    n: u32,
    rows: u32,
    cols: u32,
) -> Result<(), DataIoError> {
    assert_eq!(
        pixels.len(),
        n as usize * rows as usize * cols as usize,
        "pixel buffer must match the declared shape"
    );
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&n.to_be_bytes());
    bytes.extend_from_slice(&rows.to_be_bytes());
    bytes.extend_from_slice(&cols.to_be_bytes());
    bytes.extend_from_slice(pixels);
    std::fs::write(path, bytes).map_err(|source| DataIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Uniform subsample without replacement; seed-deterministic, provenance
/// chained to the parent dataset.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset, DataIoError> {
    if n > data.n() {
        return Err(DataIoError::SubsampleTooLarge {
            requested: n,
            available: data.n(),
        });
    }
    let mut rng = substream(seed, "subsample", 0);
    let indices = rand::seq::index::sample(&mut rng, data.n(), n);
    let mut points = Vec::with_capacity(n * data.dim());
    for i in indices.iter() {
        points.extend_from_slice(data.row(i));
    }
    let provenance = data
        .provenance()
        .derived(&format!("subsample(n={n}, seed={seed})"), Some(seed));
    Ok(Dataset::new(points, data.dim(), data.measure(), provenance)?)
}

/// Formats a float with 9 significant digits, plain decimal notation.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

/// A small table destined for CSV; rows are already formatted strings.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Writes any table as RFC-4180 CSV with a header row.
pub fn export_csv_table(table: &CsvTable, path: &Path) -> Result<(), DataIoError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_from_csv(e, path))?;
    writer
        .write_record(&table.header)
        .map_err(|e| io_from_csv(e, path))?;
    for row in &table.rows {
        writer.write_record(row).map_err(|e| io_from_csv(e, path))?;
    }
    writer.flush().map_err(|source| DataIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_from_csv(e: csv::Error, path: &Path) -> DataIoError {
    DataIoError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Exports scores as `index,score,detector_id` rows, floats with 9
/// significant digits, stable row order.
pub fn export_scores_csv(scores: &ScoreSet, path: &Path) -> Result<(), DataIoError> {
    let table = CsvTable {
        header: vec!["index".into(), "score".into(), "detector_id".into()],
        rows: scores
            .scores
            .iter()
            .enumerate()
            .map(|(i, s)| vec![i.to_string(), format_sig9(*s), scores.detector_id.clone()])
            .collect(),
    };
    export_csv_table(&table, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;

    #[test]
    fn idx_round_trip_and_fixture_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs-idx3-ubyte");
        let pixels: Vec<u8> = vec![0, 255, 10, 20, 1, 2, 3, 4];
        write_idx_images(&path, &pixels, 2, 2, 2).unwrap();
        let spec = ImageDatasetSpec {
            path: path.clone(),
            expected_dims: (2, 2),
            label_path: None,
            split: Split::Train,
        };
        let data = load_idx(&spec).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.dim(), 4);
        assert_eq!(data.row(0), &[0.0, 255.0, 10.0, 20.0]);

        // Bit-identical round trip.
        let original = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("copy-idx3-ubyte");
        let as_bytes: Vec<u8> = data.values().iter().map(|v| *v as u8).collect();
        write_idx_images(&path2, &as_bytes, 2, 2, 2).unwrap();
        assert_eq!(original, std::fs::read(&path2).unwrap());
    }

    #[test]
    fn idx_bad_magic_names_both_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        std::fs::write(&path, [0u8; 32]).unwrap();
        let spec = ImageDatasetSpec {
            path,
            expected_dims: (2, 2),
            label_path: None,
            split: Split::Test,
        };
        match load_idx(&spec) {
            Err(DataIoError::BadMagic { expected, found, .. }) => {
                assert_eq!(expected, 0x0000_0803);
                assert_eq!(found, 0);
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn idx_truncation_reports_exact_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc");
        // Header declares 3 images of 2×2 (28 bytes total) but carries 8 pixels.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[7u8; 8]);
        std::fs::write(&path, &bytes).unwrap();
        let spec = ImageDatasetSpec {
            path,
            expected_dims: (2, 2),
            label_path: None,
            split: Split::Test,
        };
        match load_idx(&spec) {
            Err(DataIoError::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, 28);
                assert_eq!(actual, 24);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn idx_dim_mismatch_vs_spec() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        write_idx_images(&path, &[0u8; 8], 2, 2, 2).unwrap();
        let spec = ImageDatasetSpec {
            path,
            expected_dims: (28, 28),
            label_path: None,
            split: Split::Train,
        };
        assert!(matches!(load_idx(&spec), Err(DataIoError::DimMismatch { .. })));
    }

    #[test]
    fn subsample_determinism_and_full_permutation() {
        let data = Distribution::standard_normal(2).unwrap().sample(100, 5);
        let a = subsample(&data, 40, 9).unwrap();
        let b = subsample(&data, 40, 9).unwrap();
        assert_eq!(a.values(), b.values());

        let full = subsample(&data, 100, 1).unwrap();
        // A permutation of the full set: same multiset of rows.
        let mut orig: Vec<Vec<u64>> = data
            .rows()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut perm: Vec<Vec<u64>> = full
            .rows()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        orig.sort();
        perm.sort();
        assert_eq!(orig, perm);

        assert!(matches!(
            subsample(&data, 101, 0),
            Err(DataIoError::SubsampleTooLarge { .. })
        ));
    }

    #[test]
    fn sig9_formatting_golden() {
        assert_eq!(format_sig9(-0.918939), "-0.918939000");
        assert_eq!(format_sig9(0.0), "0.000000000");
        assert_eq!(format_sig9(123.456), "123.456000");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(-2.9189385332046727), "-2.91893853");
    }

    #[test]
    fn csv_export_and_reparse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let scores = ScoreSet {
            scores: vec![-0.918939, 2.5, 0.0],
            detector_id: "likelihood".into(),
            model_ids: vec!["exact".into()],
            dataset: "fixture".into(),
            non_finite: 0,
        };
        export_scores_csv(&scores, &path).unwrap();

        let mut reader = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(&rows[0][1], "-0.918939000");
        for (i, row) in rows.iter().enumerate() {
            let parsed: f64 = row[1].parse().unwrap();
            assert!((parsed - scores.scores[i]).abs() < 1e-9);
            assert_eq!(&row[2], "likelihood");
        }
    }

    #[test]
    fn empty_scores_export_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let scores = ScoreSet {
            scores: vec![],
            detector_id: "likelihood".into(),
            model_ids: vec![],
            dataset: "fixture".into(),
            non_finite: 0,
        };
        export_scores_csv(&scores, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "index,score,detector_id");
    }
}
