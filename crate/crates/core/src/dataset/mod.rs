//! Labeled examples: metadata and feature ingestion, assembly into 1002-d
//! vectors, patient-grouped splitting and class-imbalance handling.

mod assemble;
mod io;
mod sampling;
mod split;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{assemble_examples, AgeStats};
pub use io::{
    load_features, load_metadata, write_features_bin, write_features_csv, write_metadata,
    FEATURE_MAGIC,
};
pub use sampling::{
    random_oversample, random_undersample, sbs_quotas, smote_interpolate, stratified_batches,
    ShuffledBatches, StratifiedBatches,
};
pub use split::{split_by_patient, PatientKeyed};

/// Width of the externally extracted image embedding.
pub const FEATURE_DIM: usize = 1000;
/// Image features plus normalized age and implant flag.
pub const EXAMPLE_DIM: usize = FEATURE_DIM + 2;
pub const AGE_INDEX: usize = FEATURE_DIM;
pub const IMPLANT_INDEX: usize = FEATURE_DIM + 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column}: bad value {value:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("image {image_id}: {width} features, expected {FEATURE_DIM}")]
    WidthMismatch { image_id: String, width: usize },
    #[error("duplicate image id {0}")]
    DuplicateImageId(String),
    #[error("malformed feature file: {0}")]
    BadFeatureFile(String),
    #[error("image {0} has features but no metadata")]
    UnmatchedImageId(String),
    #[error("need at least 2 patients to split, have {0}")]
    TooFewPatients(usize),
    #[error("fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("batch size {0} is below 2")]
    InvalidBatchSize(usize),
    #[error("resampling ratio {0} must be positive and finite")]
    InvalidRatio(f64),
    #[error("minority class has {have} members, need more than k = {k}")]
    TooFewMinority { have: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Laterality {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "MLO")]
    Mlo,
    #[serde(rename = "CC")]
    Cc,
}

impl Laterality {
    pub fn as_str(self) -> &'static str {
        match self {
            Laterality::L => "L",
            Laterality::R => "R",
        }
    }
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Mlo => "MLO",
            View::Cc => "CC",
        }
    }
}

/// One row of the per-image metadata table.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub patient_id: String,
    pub image_id: String,
    pub laterality: Laterality,
    pub view: View,
    pub age: Option<f64>,
    pub implant: bool,
    pub cancer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub values: Vec<f32>,
}

/// Externally computed image embeddings, one per image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(rows: Vec<FeatureRow>) -> Result<Self, DatasetError> {
        let mut seen = std::collections::HashSet::with_capacity(rows.len());
        for row in &rows {
            if row.values.len() != FEATURE_DIM {
                return Err(DatasetError::WidthMismatch {
                    image_id: row.image_id.clone(),
                    width: row.values.len(),
                });
            }
            if !seen.insert(row.image_id.as_str()) {
                return Err(DatasetError::DuplicateImageId(row.image_id.clone()));
            }
        }
        Ok(FeatureTable { rows })
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps only rows whose id satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> FeatureTable {
        FeatureTable {
            rows: self
                .rows
                .iter()
                .filter(|r| keep(&r.image_id))
                .cloned()
                .collect(),
        }
    }
}

/// Model input: `[f0..f999, normalized age, implant]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub label: bool,
    pub patient_id: String,
    pub image_id: String,
}

impl Example {
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// `(negatives, positives)`.
pub fn class_counts(examples: &[Example]) -> (usize, usize) {
    let pos = examples.iter().filter(|e| e.label).count();
    (examples.len() - pos, pos)
}
