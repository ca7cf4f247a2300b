//! The end-to-end commands behind the `mammo` binary.

mod convert;
mod evaluate;
mod preprocess;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::classifiers::ClassifierError;
use crate::config::ConfigError;
use crate::dataset::DatasetError;
use crate::dicom::DicomError;
use crate::imageops::ImageError;
use crate::metrics::MetricsError;

pub use convert::{convert_dir, convert_file, Sidecar, DECODER_ENV};
pub use evaluate::{evaluate_artifact, load_artifact, predict, report, EvalSplit};
pub use preprocess::{preprocess_dir, preprocess_file};
pub use synth::{synth, SynthOptions, CORPUS_NEGATIVES, CORPUS_POSITIVES};
pub use train::{train, write_history, TrainOutcome, ARTIFACT_FILE, HISTORY_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dicom(#[from] DicomError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error("sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
    #[error("external decoder: {0}")]
    Decoder(String),
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }

    /// Whether the failure comes from the configuration rather than the data.
    pub fn is_usage_error(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

/// Per-file results of a batch command.
#[derive(Debug, Default)]
pub struct BatchSummary {
    pub written: Vec<PathBuf>,
    pub failed: Vec<(PathBuf, PipelineError)>,
}

impl BatchSummary {
    pub fn ok(&self) -> usize {
        self.written.len()
    }

    pub fn line(&self) -> String {
        format!("{} ok, {} failed", self.ok(), self.failed.len())
    }

    fn collect(results: Vec<(PathBuf, Result<PathBuf, PipelineError>)>) -> Self {
        let mut summary = BatchSummary::default();
        for (input, result) in results {
            match result {
                Ok(out) => summary.written.push(out),
                Err(e) => summary.failed.push((input, e)),
            }
        }
        summary
    }
}

/// Files in `dir` with the given extension (case-insensitive), sorted.
pub fn list_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(PipelineError::io(dir))? {
        let path = entry.map_err(PipelineError::io(dir))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(extension));
        if matches && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(PipelineError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(PipelineError::io(path))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}
