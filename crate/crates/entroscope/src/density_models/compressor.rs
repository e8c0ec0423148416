//! Lossless-compression pseudo-densities.
//!
//! A compressed length of `b` bits stands in for a log-probability of
//! `−b·ln 2` nats. Two codecs are whitelisted: `png` (grayscale 8-bit
//! encoding of the image shape) and `deflate` (raw byte stream). The codec
//! identifier and level are pinned in the serialized model, and encoding is
//! deterministic for a pinned codec build.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{EvalError, Measure};

use super::ModelError;

const LN_2: f64 = std::f64::consts::LN_2;

/// Pinned codec identifier and level.
///
/// Levels: `deflate` accepts 0–9 (flate2 scale); `png` accepts 0–4 mapping to
/// none/fastest/fast/balanced/high.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecSpec {
    pub identifier: String,
    pub level: u8,
    /// Image shape (rows, cols) for 2-D codecs; defaults to a single row.
    #[serde(default)]
    pub shape: Option<(u32, u32)>,
}

impl CodecSpec {
    pub fn png(level: u8, shape: Option<(u32, u32)>) -> Self {
        Self {
            identifier: "png".into(),
            level,
            shape,
        }
    }

    pub fn deflate(level: u8) -> Self {
        Self {
            identifier: "deflate".into(),
            level,
            shape: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Codec {
    Png,
    Deflate,
}

/// Pseudo log-density from a pinned lossless codec; counting measure over
/// byte-valued vectors.
#[derive(Debug, Clone)]
pub struct CompressorModel {
    spec: CodecSpec,
    codec: Codec,
    dim: usize,
    rows: u32,
    cols: u32,
}

impl CompressorModel {
    pub fn new(spec: CodecSpec, dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        let codec = match spec.identifier.as_str() {
            "png" => {
                if spec.level > 4 {
                    return Err(ModelError::InvalidParameter(format!(
                        "png level must be 0–4, got {}",
                        spec.level
                    )));
                }
                Codec::Png
            }
            "deflate" => {
                if spec.level > 9 {
                    return Err(ModelError::InvalidParameter(format!(
                        "deflate level must be 0–9, got {}",
                        spec.level
                    )));
                }
                Codec::Deflate
            }
            other => return Err(ModelError::UnknownCodec(other.to_string())),
        };
        let (rows, cols) = match spec.shape {
            Some((r, c)) => {
                if r as usize * c as usize != dim {
                    return Err(ModelError::InvalidParameter(format!(
                        "shape {r}×{c} does not cover dimension {dim}"
                    )));
                }
                (r, c)
            }
            None => (1, dim as u32),
        };
        Ok(Self {
            spec,
            codec,
            dim,
            rows,
            cols,
        })
    }

    pub fn codec(&self) -> &CodecSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measure(&self) -> Measure {
        Measure::Counting
    }

    pub fn id(&self) -> String {
        format!(
            "compressor-proxy({}, level={}, {}×{})",
            self.spec.identifier, self.spec.level, self.rows, self.cols
        )
    }

    /// Compressed size of the point, in bytes.
    pub fn compressed_len(&self, x: &[f64]) -> Result<usize, EvalError> {
        if x.len() != self.dim {
            return Err(EvalError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let mut bytes = Vec::with_capacity(x.len());
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(EvalError::NonFiniteInput { index: i });
            }
            if v.fract() != 0.0 || *v < 0.0 || *v > 255.0 {
                return Err(EvalError::InvalidPixel {
                    index: i,
                    value: *v,
                    categories: 256,
                });
            }
            bytes.push(*v as u8);
        }
        Ok(match self.codec {
            Codec::Png => png_len(&bytes, self.rows, self.cols, self.spec.level),
            Codec::Deflate => deflate_len(&bytes, self.spec.level),
        })
    }

    /// `log r(y) = −(compressed length in bits) · ln 2`.
    pub fn pseudo_log_density(&self, x: &[f64]) -> Result<f64, EvalError> {
        let bits = (8 * self.compressed_len(x)?) as f64;
        Ok(-bits * LN_2)
    }
}

fn png_len(bytes: &[u8], rows: u32, cols: u32, level: u8) -> usize {
    let compression = match level {
        0 => png::Compression::NoCompression,
        1 => png::Compression::Fastest,
        2 => png::Compression::Fast,
        3 => png::Compression::Balanced,
        _ => png::Compression::High,
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, cols, rows);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(compression);
        let mut writer = encoder.write_header().expect("in-memory png header");
        writer
            .write_image_data(bytes)
            .expect("in-memory png payload");
    }
    out.len()
}

fn deflate_len(bytes: &[u8], level: u8) -> usize {
    let mut encoder =
        flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::new(level as u32));
    encoder.write_all(bytes).expect("in-memory deflate");
    encoder.finish().expect("in-memory deflate").len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_models::compressor_model;
    use crate::LogDensity;

    #[test]
    fn unknown_codec_rejected() {
        let err = CompressorModel::new(
            CodecSpec {
                identifier: "lzma".into(),
                level: 3,
                shape: None,
            },
            16,
        );
        assert!(matches!(err, Err(ModelError::UnknownCodec(_))));
    }

    #[test]
    fn shape_must_cover_dim() {
        assert!(CompressorModel::new(CodecSpec::png(3, Some((4, 4))), 16).is_ok());
        assert!(CompressorModel::new(CodecSpec::png(3, Some((4, 5))), 16).is_err());
    }

    #[test]
    fn scores_are_deterministic() {
        let model = compressor_model(CodecSpec::png(3, Some((8, 8))), 64).unwrap();
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 256) as f64).collect();
        assert_eq!(
            model.log_density(&x).unwrap(),
            model.log_density(&x).unwrap()
        );
    }

    #[test]
    fn rejects_fractional_or_oob_values() {
        let model = compressor_model(CodecSpec::deflate(6), 4).unwrap();
        assert!(model.log_density(&[0.0, 1.5, 2.0, 3.0]).is_err());
        assert!(model.log_density(&[0.0, 300.0, 2.0, 3.0]).is_err());
        assert!(model.log_density(&[0.0, 1.0, 2.0, 3.0]).is_ok());
    }
}
