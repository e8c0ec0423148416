//! The experiment config format: versioned, human-readable TOML.
//!
//! Validation walks the whole document and reports *every* problem it finds,
//! not just the first; each error carries the dotted path of the offending
//! field. See the guide's experiments chapter for the full schema.

use std::path::PathBuf;

use toml::value::{Table, Value};

use crate::data_io::{ImageDatasetSpec, Split};
use crate::density_models::CodecSpec;
use crate::distributions::{Distribution, DistributionSpec};
use crate::LogDensity;

pub const CONFIG_SCHEMA_VERSION: i64 = 1;

/// One validation problem, located by the dotted path of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Where a side's observations come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Distribution(Distribution),
    Idx(ImageDatasetSpec),
}

impl DataSource {
    pub fn dim(&self) -> usize {
        match self {
            DataSource::Distribution(d) => d.dim(),
            DataSource::Idx(s) => s.expected_dims.0 as usize * s.expected_dims.1 as usize,
        }
    }

    pub fn measure(&self) -> crate::Measure {
        match self {
            DataSource::Distribution(d) => d.measure(),
            DataSource::Idx(_) => crate::Measure::Counting,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelCfg {
    Exact,
    GaussianMle {
        ridge: f64,
    },
    GmmEm {
        k: usize,
        max_iters: usize,
        tol: f64,
        ridge: f64,
    },
    Histogram {
        bins_per_dim: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    PixelCategorical {
        alpha: f64,
        categories: usize,
    },
}

impl ModelCfg {
    pub fn is_fitted(&self) -> bool {
        !matches!(self, ModelCfg::Exact)
    }
}

#[derive(Debug, Clone)]
pub enum ReferenceCfg {
    Exact { dist: Distribution },
    Compressor { codec: CodecSpec },
}

#[derive(Debug, Clone, Default)]
pub struct DetectorsCfg {
    pub likelihood: bool,
    pub ratio: bool,
    pub typicality: Option<TypicalityCfg>,
}

#[derive(Debug, Clone)]
pub struct TypicalityCfg {
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SamplesCfg {
    pub n_train: usize,
    pub n_eval: usize,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone)]
pub struct OutputsCfg {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

/// A parsed and validated experiment: one (in, out, model) triple.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub in_data: DataSource,
    pub out_data: DataSource,
    pub train_data: Option<DataSource>,
    pub model: ModelCfg,
    pub reference: Option<ReferenceCfg>,
    pub detectors: DetectorsCfg,
    pub samples: SamplesCfg,
    pub outputs: OutputsCfg,
    /// The exact text this config was parsed from, echoed into reports.
    pub config_text: String,
}

struct Walker {
    errors: Vec<ConfigError>,
}

impl Walker {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn check_unknown_keys(&mut self, table: &Table, path: &str, known: &[&str]) {
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                let full = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                self.err(&full, "unknown field");
            }
        }
    }

    fn required_table<'a>(&mut self, root: &'a Table, key: &str) -> Option<&'a Table> {
        match root.get(key) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(key, "must be a table");
                None
            }
            None => {
                self.err(key, "required section is missing");
                None
            }
        }
    }

    fn u64_value(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.err(path, "must be a non-negative integer");
                None
            }
        }
    }

    fn usize_field(&mut self, t: &Table, key: &str, path: &str, default: usize) -> usize {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(_) => {
                self.err(&format!("{path}.{key}"), "must be a non-negative integer");
                default
            }
        }
    }

    fn f64_field(&mut self, t: &Table, key: &str, path: &str, default: f64) -> f64 {
        match t.get(key) {
            None => default,
            Some(Value::Float(f)) => *f,
            Some(Value::Integer(i)) => *i as f64,
            Some(_) => {
                self.err(&format!("{path}.{key}"), "must be a number");
                default
            }
        }
    }

    fn string_field(&mut self, t: &Table, key: &str, path: &str) -> Option<String> {
        match t.get(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.err(&format!("{path}.{key}"), "must be a string");
                None
            }
            None => None,
        }
    }
}

/// Parses and validates; on failure returns every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let root: Table = toml::from_str(text).map_err(|e| {
        vec![ConfigError {
            path: String::new(),
            message: format!("TOML syntax error: {e}"),
        }]
    })?;

    let mut w = Walker { errors: Vec::new() };
    w.check_unknown_keys(
        &root,
        "",
        &[
            "schema_version",
            "id",
            "seed",
            "in_dist",
            "out_dist",
            "train_data",
            "model",
            "reference",
            "detectors",
            "samples",
            "outputs",
        ],
    );

    match root.get("schema_version") {
        Some(Value::Integer(v)) if *v == CONFIG_SCHEMA_VERSION => {}
        Some(Value::Integer(v)) => w.err(
            "schema_version",
            format!("unsupported version {v} (supported: {CONFIG_SCHEMA_VERSION})"),
        ),
        Some(_) => w.err("schema_version", "must be an integer"),
        None => w.err("schema_version", "required field is missing"),
    }

    let id = match root.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            w.err("id", "must be a non-empty string");
            String::new()
        }
        None => {
            w.err("id", "required field is missing");
            String::new()
        }
    };

    let seed = match root.get("seed") {
        Some(v) => w.u64_value(v, "seed").unwrap_or(0),
        None => {
            w.err("seed", "seed required (no implicit randomness)");
            0
        }
    };

    let in_data = w
        .required_table(&root, "in_dist")
        .and_then(|t| parse_data_source(&mut w, t, "in_dist"));
    let out_data = w
        .required_table(&root, "out_dist")
        .and_then(|t| parse_data_source(&mut w, t, "out_dist"));
    let train_data = match root.get("train_data") {
        Some(Value::Table(t)) => parse_data_source(&mut w, t, "train_data"),
        Some(_) => {
            w.err("train_data", "must be a table");
            None
        }
        None => None,
    };

    let model = w
        .required_table(&root, "model")
        .and_then(|t| parse_model(&mut w, t));

    let reference = match root.get("reference") {
        Some(Value::Table(t)) => parse_reference(&mut w, t),
        Some(_) => {
            w.err("reference", "must be a table");
            None
        }
        None => None,
    };
    let reference_present = matches!(root.get("reference"), Some(Value::Table(_)));

    let detectors = match root.get("detectors") {
        Some(Value::Table(t)) => parse_detectors(&mut w, t),
        Some(_) => {
            w.err("detectors", "must be a table of detector sections");
            DetectorsCfg::default()
        }
        None => DetectorsCfg::default(),
    };

    let samples = match root.get("samples") {
        Some(Value::Table(t)) => {
            w.check_unknown_keys(t, "samples", &["n_train", "n_eval", "n_pairs"]);
            SamplesCfg {
                n_train: w.usize_field(t, "n_train", "samples", 0),
                n_eval: w.usize_field(t, "n_eval", "samples", 10_000),
                n_pairs: w.usize_field(t, "n_pairs", "samples", 10_000),
            }
        }
        Some(_) => {
            w.err("samples", "must be a table");
            SamplesCfg {
                n_train: 0,
                n_eval: 10_000,
                n_pairs: 10_000,
            }
        }
        None => SamplesCfg {
            n_train: 0,
            n_eval: 10_000,
            n_pairs: 10_000,
        },
    };

    let outputs = match root.get("outputs") {
        Some(Value::Table(t)) => parse_outputs(&mut w, t, &id),
        Some(_) => {
            w.err("outputs", "must be a table");
            default_outputs(&id)
        }
        None => default_outputs(&id),
    };

    // Cross-field checks need the parsed pieces.
    if let (Some(in_data), Some(out_data), Some(model)) = (&in_data, &out_data, &model) {
        validate_cross(
            &mut w,
            in_data,
            out_data,
            train_data.as_ref(),
            model,
            reference.as_ref(),
            reference_present,
            &detectors,
            &samples,
        );
    }

    if !w.errors.is_empty() {
        return Err(w.errors);
    }
    Ok(ExperimentConfig {
        id,
        seed,
        in_data: in_data.expect("validated"),
        out_data: out_data.expect("validated"),
        train_data,
        model: model.expect("validated"),
        reference,
        detectors,
        samples,
        outputs,
        config_text: text.to_string(),
    })
}

fn default_outputs(id: &str) -> OutputsCfg {
    OutputsCfg {
        dir: PathBuf::from("out").join(if id.is_empty() { "experiment" } else { id }),
        formats: vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Svg],
    }
}

fn parse_data_source(w: &mut Walker, table: &Table, path: &str) -> Option<DataSource> {
    let kind = match table.get("kind") {
        Some(Value::String(s)) => s.clone(),
        _ => {
            w.err(&format!("{path}.kind"), "required string field");
            return None;
        }
    };
    if kind == "idx-image" {
        w.check_unknown_keys(
            table,
            path,
            &["kind", "path", "rows", "cols", "label_path", "split"],
        );
        let file = w.string_field(table, "path", path);
        let rows = w.usize_field(table, "rows", path, 28);
        let cols = w.usize_field(table, "cols", path, 28);
        let split = match table.get("split") {
            Some(Value::String(s)) if s == "train" => Split::Train,
            Some(Value::String(s)) if s == "test" => Split::Test,
            Some(_) => {
                w.err(&format!("{path}.split"), "must be \"train\" or \"test\"");
                Split::Test
            }
            None => Split::Test,
        };
        let label_path = w.string_field(table, "label_path", path).map(PathBuf::from);
        let file = match file {
            Some(f) => f,
            None => {
                w.err(&format!("{path}.path"), "required for idx-image sources");
                return None;
            }
        };
        return Some(DataSource::Idx(ImageDatasetSpec {
            path: PathBuf::from(file),
            expected_dims: (rows as u32, cols as u32),
            label_path,
            split,
        }));
    }
    // Otherwise the table is a distribution spec; serde names unknown fields.
    match Value::Table(table.clone()).try_into::<DistributionSpec>() {
        Ok(spec) => match spec.build() {
            Ok(dist) => Some(DataSource::Distribution(dist)),
            Err(e) => {
                w.err(path, e.to_string());
                None
            }
        },
        Err(e) => {
            w.err(path, e.to_string());
            None
        }
    }
}

fn parse_model(w: &mut Walker, table: &Table) -> Option<ModelCfg> {
    let kind = match table.get("kind") {
        Some(Value::String(s)) => s.clone(),
        _ => {
            w.err("model.kind", "required string field");
            return None;
        }
    };
    match kind.as_str() {
        "exact" => {
            w.check_unknown_keys(table, "model", &["kind"]);
            Some(ModelCfg::Exact)
        }
        "gaussian-mle" => {
            w.check_unknown_keys(table, "model", &["kind", "ridge"]);
            Some(ModelCfg::GaussianMle {
                ridge: w.f64_field(table, "ridge", "model", 1e-6),
            })
        }
        "gmm-em" => {
            w.check_unknown_keys(table, "model", &["kind", "k", "max_iters", "tol", "ridge"]);
            let k = w.usize_field(table, "k", "model", 0);
            if k == 0 {
                w.err("model.k", "component count k ≥ 1 is required");
            }
            Some(ModelCfg::GmmEm {
                k,
                max_iters: w.usize_field(table, "max_iters", "model", 200),
                tol: w.f64_field(table, "tol", "model", 1e-7),
                ridge: w.f64_field(table, "ridge", "model", 1e-6),
            })
        }
        "histogram" => {
            w.check_unknown_keys(table, "model", &["kind", "bins_per_dim", "lower", "upper"]);
            let bins = w.usize_field(table, "bins_per_dim", "model", 0);
            if bins == 0 {
                w.err("model.bins_per_dim", "must be ≥ 1");
            }
            let lower = float_array(w, table, "lower", "model");
            let upper = float_array(w, table, "upper", "model");
            Some(ModelCfg::Histogram {
                bins_per_dim: bins,
                lower: lower.unwrap_or_default(),
                upper: upper.unwrap_or_default(),
            })
        }
        "pixel-categorical" => {
            w.check_unknown_keys(table, "model", &["kind", "alpha", "categories"]);
            let alpha = w.f64_field(table, "alpha", "model", 1.0);
            if !(alpha > 0.0) {
                w.err("model.alpha", "smoothing must be positive");
            }
            let categories = w.usize_field(table, "categories", "model", 256);
            if categories == 0 {
                w.err("model.categories", "must be ≥ 1");
            }
            Some(ModelCfg::PixelCategorical { alpha, categories })
        }
        other => {
            w.err("model.kind", format!("unknown model kind {other:?}"));
            None
        }
    }
}

fn float_array(w: &mut Walker, table: &Table, key: &str, path: &str) -> Option<Vec<f64>> {
    match table.get(key) {
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Float(f) => out.push(*f),
                    Value::Integer(i) => out.push(*i as f64),
                    _ => {
                        w.err(&format!("{path}.{key}"), "must be an array of numbers");
                        return None;
                    }
                }
            }
            Some(out)
        }
        Some(_) => {
            w.err(&format!("{path}.{key}"), "must be an array of numbers");
            None
        }
        None => {
            w.err(&format!("{path}.{key}"), "required field is missing");
            None
        }
    }
}

fn parse_reference(w: &mut Walker, table: &Table) -> Option<ReferenceCfg> {
    let kind = match table.get("kind") {
        Some(Value::String(s)) => s.clone(),
        _ => {
            w.err("reference.kind", "required string field");
            return None;
        }
    };
    match kind.as_str() {
        "exact" => {
            w.check_unknown_keys(table, "reference", &["kind", "dist"]);
            let dist_table = match table.get("dist") {
                Some(Value::Table(t)) => t.clone(),
                _ => {
                    w.err("reference.dist", "exact references need a distribution table");
                    return None;
                }
            };
            match Value::Table(dist_table).try_into::<DistributionSpec>() {
                Ok(spec) => match spec.build() {
                    Ok(dist) => Some(ReferenceCfg::Exact { dist }),
                    Err(e) => {
                        w.err("reference.dist", e.to_string());
                        None
                    }
                },
                Err(e) => {
                    w.err("reference.dist", e.to_string());
                    None
                }
            }
        }
        "compressor-proxy" => {
            w.check_unknown_keys(table, "reference", &["kind", "codec", "level", "rows", "cols"]);
            let codec = w.string_field(table, "codec", "reference").unwrap_or_default();
            if codec.is_empty() {
                w.err("reference.codec", "required: \"png\" or \"deflate\"");
            }
            let level = w.usize_field(table, "level", "reference", 3) as u8;
            let rows = table.get("rows").map(|_| w.usize_field(table, "rows", "reference", 0));
            let cols = table.get("cols").map(|_| w.usize_field(table, "cols", "reference", 0));
            let shape = match (rows, cols) {
                (Some(r), Some(c)) => Some((r as u32, c as u32)),
                (None, None) => None,
                _ => {
                    w.err("reference", "rows and cols must be given together");
                    None
                }
            };
            Some(ReferenceCfg::Compressor {
                codec: CodecSpec {
                    identifier: codec,
                    level,
                    shape,
                },
            })
        }
        other => {
            w.err("reference.kind", format!("unknown reference kind {other:?}"));
            None
        }
    }
}

fn parse_detectors(w: &mut Walker, table: &Table) -> DetectorsCfg {
    let mut cfg = DetectorsCfg::default();
    for (name, value) in table {
        let sub = match value {
            Value::Table(t) => t.clone(),
            _ => {
                w.err(&format!("detectors.{name}"), "must be a table (may be empty)");
                continue;
            }
        };
        match name.as_str() {
            "likelihood" => {
                w.check_unknown_keys(&sub, "detectors.likelihood", &[]);
                cfg.likelihood = true;
            }
            "ratio" => {
                w.check_unknown_keys(&sub, "detectors.ratio", &[]);
                cfg.ratio = true;
            }
            "typicality" => {
                w.check_unknown_keys(&sub, "detectors.typicality", &["batch_size"]);
                let batch_size = w.usize_field(
                    &sub,
                    "batch_size",
                    "detectors.typicality",
                    crate::detectors::DEFAULT_TYPICALITY_BATCH,
                );
                if batch_size == 0 {
                    w.err("detectors.typicality.batch_size", "must be ≥ 1");
                }
                cfg.typicality = Some(TypicalityCfg { batch_size });
            }
            other => {
                w.err(
                    &format!("detectors.{other}"),
                    format!("unknown detector {other:?} (known: likelihood, ratio, typicality)"),
                );
            }
        }
    }
    cfg
}

fn parse_outputs(w: &mut Walker, table: &Table, id: &str) -> OutputsCfg {
    w.check_unknown_keys(table, "outputs", &["dir", "formats"]);
    let dir = w
        .string_field(table, "dir", "outputs")
        .map(PathBuf::from)
        .unwrap_or_else(|| default_outputs(id).dir);
    let formats = match table.get("formats") {
        None => default_outputs(id).formats,
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for item in items {
                match item.as_str() {
                    Some("json") => out.push(OutputFormat::Json),
                    Some("csv") => out.push(OutputFormat::Csv),
                    Some("svg") => out.push(OutputFormat::Svg),
                    _ => w.err(
                        "outputs.formats",
                        format!("unknown format {item} (known: json, csv, svg)"),
                    ),
                }
            }
            out
        }
        Some(_) => {
            w.err("outputs.formats", "must be an array of format names");
            default_outputs(id).formats
        }
    };
    OutputsCfg { dir, formats }
}

#[allow(clippy::too_many_arguments)]
fn validate_cross(
    w: &mut Walker,
    in_data: &DataSource,
    out_data: &DataSource,
    train_data: Option<&DataSource>,
    model: &ModelCfg,
    reference: Option<&ReferenceCfg>,
    reference_present: bool,
    detectors: &DetectorsCfg,
    samples: &SamplesCfg,
) {
    if in_data.dim() != out_data.dim() {
        w.err(
            "out_dist",
            format!(
                "dimension {} does not match in_dist dimension {}",
                out_data.dim(),
                in_data.dim()
            ),
        );
    }
    if in_data.measure() != out_data.measure() {
        w.err(
            "out_dist",
            format!(
                "measure {} does not match in_dist measure {}",
                out_data.measure(),
                in_data.measure()
            ),
        );
    }

    if matches!(model, ModelCfg::Exact) && !matches!(in_data, DataSource::Distribution(_)) {
        w.err(
            "model.kind",
            "an exact model wraps the in-distribution law, so in_dist must be a distribution",
        );
    }
    if model.is_fitted() && train_data.is_none() {
        match in_data {
            DataSource::Distribution(_) => {
                if samples.n_train < 2 {
                    w.err(
                        "samples.n_train",
                        "fitted models need n_train ≥ 2 when no train_data section is given",
                    );
                }
            }
            DataSource::Idx(_) => w.err(
                "train_data",
                "fitted models on idx-image data need an explicit train_data section",
            ),
        }
    }
    if let ModelCfg::GmmEm { k, .. } = model {
        if *k > 0 && train_data.is_none() && samples.n_train > 0 && samples.n_train < *k {
            w.err("samples.n_train", format!("need at least k = {k} training points"));
        }
    }
    if let ModelCfg::Histogram { lower, upper, .. } = model {
        if lower.len() != in_data.dim() || upper.len() != in_data.dim() {
            w.err(
                "model",
                format!(
                    "histogram bounds must have one entry per dimension ({})",
                    in_data.dim()
                ),
            );
        }
        if in_data.dim() > 3 {
            w.err("model.kind", "histogram models support at most 3 dimensions");
        }
    }
    match model {
        ModelCfg::PixelCategorical { .. } => {
            if in_data.measure() != crate::Measure::Counting {
                w.err("model.kind", "pixel-categorical needs counting-measure data");
            }
        }
        ModelCfg::Exact => {}
        _ => {
            if in_data.measure() != crate::Measure::Lebesgue {
                w.err("model.kind", "this model kind needs lebesgue-measure data");
            }
        }
    }

    if detectors.ratio && !reference_present {
        w.err(
            "detectors.ratio",
            "the ratio detector needs a [reference] section",
        );
    }
    if let Some(ReferenceCfg::Exact { dist }) = reference {
        if dist.dim() != in_data.dim() {
            w.err(
                "reference.dist",
                format!(
                    "dimension {} does not match data dimension {}",
                    dist.dim(),
                    in_data.dim()
                ),
            );
        }
    }
    if detectors.typicality.is_some() && train_data.is_none() && samples.n_train < 2 {
        w.err(
            "samples.n_train",
            "the typicality detector calibrates on training data: need n_train ≥ 2 or train_data",
        );
    }
    if let Some(t) = &detectors.typicality {
        if t.batch_size > 0 && samples.n_eval < t.batch_size {
            w.err(
                "samples.n_eval",
                format!(
                    "must cover at least one typicality batch of {}",
                    t.batch_size
                ),
            );
        }
    }
    if samples.n_eval == 0 {
        w.err("samples.n_eval", "must be ≥ 1");
    }
    if samples.n_pairs < 2 {
        w.err("samples.n_pairs", "contrast statistics need at least 2 pairs");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
id = "self-check"
seed = 1

[in_dist]
kind = "isotropic-gaussian"
dim = 1
variance = 1.0

[out_dist]
kind = "isotropic-gaussian"
dim = 1
variance = 1.0

[model]
kind = "exact"

[samples]
n_eval = 1000
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.id, "self-check");
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.samples.n_eval, 1000);
        assert!(matches!(cfg.in_data, DataSource::Distribution(_)));
    }

    #[test]
    fn missing_seed_is_reported() {
        let text = MINIMAL.replace("seed = 1\n", "");
        let errors = parse_config(&text).unwrap_err();
        assert!(
            errors.iter().any(|e| e.path == "seed" && e.message.contains("seed required")),
            "{errors:?}"
        );
    }

    #[test]
    fn unknown_detector_is_named() {
        let text = format!("{MINIMAL}\n[detectors.wavelet]\n");
        let errors = parse_config(&text).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert!(errors[0].message.contains("wavelet"), "{errors:?}");
    }

    #[test]
    fn unknown_top_level_field_is_named() {
        let text = format!("{MINIMAL}\nextra_field = 3\n");
        let errors = parse_config(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.path == "extra_field"), "{errors:?}");
    }

    #[test]
    fn multiple_errors_are_all_reported() {
        let text = r#"
schema_version = 1
id = "broken"

[in_dist]
kind = "isotropic-gaussian"
dim = 2
variance = 1.0

[out_dist]
kind = "isotropic-gaussian"
dim = 3
variance = 1.0

[model]
kind = "no-such-model"

[samples]
n_pairs = 1
"#;
        let errors = parse_config(text).unwrap_err();
        let paths: Vec<&str> = errors.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"seed"), "{errors:?}");
        assert!(paths.contains(&"model.kind"), "{errors:?}");
        assert!(paths.contains(&"out_dist"), "{errors:?}");
        assert!(paths.contains(&"samples.n_pairs"), "{errors:?}");
    }

    #[test]
    fn ratio_without_reference_is_rejected() {
        let text = format!("{MINIMAL}\n[detectors.ratio]\n");
        let errors = parse_config(&text).unwrap_err();
        assert!(errors.iter().any(|e| e.path == "detectors.ratio"), "{errors:?}");
    }

    #[test]
    fn idx_source_parses() {
        let text = r#"
schema_version = 1
id = "images"
seed = 7

[in_dist]
kind = "idx-image"
path = "data/fmnist/t10k-images-idx3-ubyte"
rows = 28
cols = 28
split = "test"

[out_dist]
kind = "idx-image"
path = "data/mnist/t10k-images-idx3-ubyte"
rows = 28
cols = 28
split = "test"

[train_data]
kind = "idx-image"
path = "data/fmnist/train-images-idx3-ubyte"
rows = 28
cols = 28
split = "train"

[model]
kind = "pixel-categorical"
alpha = 1.0
categories = 256
"#;
        let cfg = parse_config(text).unwrap();
        assert!(matches!(cfg.in_data, DataSource::Idx(_)));
        assert_eq!(cfg.in_data.dim(), 784);
        assert!(matches!(cfg.model, ModelCfg::PixelCategorical { .. }));
    }
}
