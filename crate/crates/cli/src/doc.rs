use std::path::{Path, PathBuf};

use fracuc::inference::EstimateOptions;
use fracuc::ssmodel::{ModelSpec, Params};
use serde::{Deserialize, Serialize};

use crate::coeffs::Approximation;
use crate::error::{CliError, CliResult};
use crate::ingest::DatasetInfo;

/// Provenance embedded in every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub software: String,
    pub version: String,
    /// Command line as invoked.
    pub command: Vec<String>,
    pub seed: Option<u64>,
    /// Starting points, seed and optimizer tolerances of the estimator.
    pub estimation: Option<EstimateOptions>,
    pub approximation: Option<Approximation>,
    /// Tolerance of the `y = trend + cycle` check on decompositions.
    pub identity_tolerance: Option<f64>,
    pub generator: Option<String>,
}

impl Metadata {
    pub fn current() -> Self {
        Self {
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            seed: None,
            estimation: None,
            approximation: None,
            identity_tolerance: None,
            generator: None,
        }
    }
}

/// Fields of a fit document needed to reuse the fit.
#[derive(Debug, Clone, Deserialize)]
pub struct FitCore {
    pub params: Params,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FitDocIn {
    pub dataset: DatasetInfo,
    pub fit: FitCore,
    pub metadata: Metadata,
}

/// Parameters for simulation: a fit document, or a bare `{params, spec}`.
#[derive(Debug, Clone)]
pub struct ParamSource {
    pub params: Params,
    pub spec: ModelSpec,
    pub dataset: Option<DatasetInfo>,
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_fit(path: &Path) -> CliResult<FitDocIn> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("{}: not a fit document: {e}", path.display())))
}

pub fn read_params(path: &Path) -> CliResult<ParamSource> {
    let text = read_text(path)?;
    if let Ok(doc) = serde_json::from_str::<FitDocIn>(&text) {
        return Ok(ParamSource {
            params: doc.fit.params,
            spec: doc.fit.spec,
            dataset: Some(doc.dataset),
        });
    }
    serde_json::from_str::<FitCore>(&text)
        .map(|c| ParamSource {
            params: c.params,
            spec: c.spec,
            dataset: None,
        })
        .map_err(|e| {
            CliError::Validation(format!(
                "{}: expected a fit document or an object with params and spec: {e}",
                path.display()
            ))
        })
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `dir/stem{suffix}` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy());
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}
