use std::path::{Path, PathBuf};

use super::train::examples_for;
use super::{sha256_file, PipelineError};
use crate::artifact::{decode, Artifact};
use crate::config::ConfigError;
use crate::dataset::{load_features, load_metadata, split_by_patient, Example};
use crate::metrics::{evaluate, EvalReport};

/// Which examples an artifact is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSplit {
    /// The held-out side of the training split, re-derived from provenance.
    #[default]
    Validation,
    /// Every example in the data files.
    All,
}

pub fn load_artifact(path: &Path) -> Result<Artifact, PipelineError> {
    let bytes = std::fs::read(path).map_err(PipelineError::io(path))?;
    Ok(decode(&bytes)?)
}

fn recorded_path(p: &Option<PathBuf>, name: &str) -> Result<PathBuf, PipelineError> {
    p.clone().ok_or_else(|| {
        ConfigError::Invalid(format!("artifact provenance has no data.{name}; pass it explicitly")).into()
    })
}

/// Data files to score on: explicit paths win; otherwise the recorded ones,
/// which must still match their training-time digests.
fn data_paths(artifact: &Artifact, data: Option<(&Path, &Path)>) -> Result<(PathBuf, PathBuf), PipelineError> {
    if let Some((m, f)) = data {
        return Ok((m.to_path_buf(), f.to_path_buf()));
    }
    let prov = &artifact.header.provenance;
    let meta = recorded_path(&prov.config.data.metadata, "metadata")?;
    let feat = recorded_path(&prov.config.data.features, "features")?;
    for (path, digest) in [(&meta, &prov.metadata_sha256), (&feat, &prov.features_sha256)] {
        if &sha256_file(path)? != digest {
            return Err(PipelineError::Data(format!(
                "{} changed since the model was trained",
                path.display()
            )));
        }
    }
    Ok((meta, feat))
}

fn scoring_examples(artifact: &Artifact, split: EvalSplit, data: Option<(&Path, &Path)>) -> Result<Vec<Example>, PipelineError> {
    let (meta, feat) = data_paths(artifact, data)?;
    let records = load_metadata(&meta)?;
    let features = load_features(&feat)?;
    let stats = artifact.header.age_stats;
    match split {
        EvalSplit::Validation => {
            let cfg = &artifact.header.provenance.config;
            let (_, val_recs) = split_by_patient(records, cfg.data.val_fraction, cfg.seed)?;
            Ok(examples_for(&val_recs, &features, Some(stats))?.0)
        }
        EvalSplit::All => Ok(examples_for(&records, &features, Some(stats))?.0),
    }
}

fn probabilities(artifact: &Artifact, examples: &[Example]) -> Result<Vec<f64>, PipelineError> {
    let rows: Vec<&[f64]> = examples.iter().map(|e| e.x.as_slice()).collect();
    Ok(artifact.model.predict_many(&rows)?)
}

/// Scores an artifact. The threshold defaults to the one in its run
/// configuration.
pub fn evaluate_artifact(
    artifact: &Artifact,
    split: EvalSplit,
    threshold: Option<f64>,
    data: Option<(&Path, &Path)>,
) -> Result<EvalReport, PipelineError> {
    let examples = scoring_examples(artifact, split, data)?;
    let probs = probabilities(artifact, &examples)?;
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let tau = threshold.unwrap_or(artifact.header.provenance.config.threshold);
    Ok(evaluate(&probs, &labels, tau)?)
}

/// `(image_id, probability)` for every image present in both files, in
/// feature-file order.
pub fn predict(artifact: &Artifact, metadata: &Path, features: &Path) -> Result<Vec<(String, f64)>, PipelineError> {
    let records = load_metadata(metadata)?;
    let table = load_features(features)?;
    let (examples, _) = examples_for(&records, &table, Some(artifact.header.age_stats))?;
    let probs = probabilities(artifact, &examples)?;
    Ok(examples.into_iter().map(|e| e.image_id).zip(probs).collect())
}

/// One validation report per artifact, named by model kind. Repeated kinds
/// get a `#k` suffix.
pub fn report(paths: &[PathBuf], threshold: Option<f64>) -> Result<Vec<(String, EvalReport)>, PipelineError> {
    let mut rows = Vec::with_capacity(paths.len());
    let mut seen: Vec<&'static str> = Vec::new();
    for path in paths {
        let artifact = load_artifact(path)?;
        let kind = artifact.header.kind.as_str();
        let repeats = seen.iter().filter(|&&k| k == kind).count();
        seen.push(kind);
        let name = if repeats == 0 { kind.to_string() } else { format!("{kind}#{}", repeats + 1) };
        rows.push((name, evaluate_artifact(&artifact, EvalSplit::Validation, threshold, None)?));
    }
    Ok(rows)
}
