//! Trainable models over the 1002-wide example vectors.

mod dnn;
mod logistic;
mod sketch;
mod svm;

use thiserror::Error;

use crate::dataset::{DatasetError, Example};
use crate::numcore::{Batch, NumError};

pub use dnn::{DnnRegime, Fusion, TwoBranchDnn, IMAGE_BRANCH_WIDTHS, META_DIM};
pub use logistic::{LogisticConfig, LogisticModel};
pub use sketch::{exact_kernel, TensorSketch};
pub use svm::{Calibration, SketchSvm, SvmConfig};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("input width {actual}, expected {expected}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("kernel degree must be at least 1, got {0}")]
    BadDegree(u32),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub(crate) fn check_width(x: &[f64], expected: usize) -> Result<(), ClassifierError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(ClassifierError::WidthMismatch {
            expected,
            actual: x.len(),
        })
    }
}

/// Rejects empty or single-class training data and inconsistent widths.
pub(crate) fn check_training_set(examples: &[Example], width: usize) -> Result<(), ClassifierError> {
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(ClassifierError::SingleClassDataset);
    }
    examples.iter().try_for_each(|e| check_width(&e.x, width))
}

/// Whole-set batch borrowing every example.
pub fn full_batch(examples: &[Example]) -> Result<Batch<'_>, NumError> {
    Batch::new(
        examples.iter().map(|e| e.x.as_slice()).collect(),
        examples.iter().map(Example::target).collect(),
    )
}

/// Batch made of the examples at `indices`.
pub fn index_batch<'a>(examples: &'a [Example], indices: &[usize]) -> Result<Batch<'a>, NumError> {
    Batch::new(
        indices.iter().map(|&i| examples[i].x.as_slice()).collect(),
        indices.iter().map(|&i| examples[i].target()).collect(),
    )
}

/// Any trained model.
#[derive(Debug, Clone)]
pub enum Classifier {
    Logistic(LogisticModel),
    Svm(SketchSvm),
    Dnn(TwoBranchDnn),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Logistic(_) => "logistic",
            Classifier::Svm(_) => "svm",
            Classifier::Dnn(_) => "dnn",
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        match self {
            Classifier::Logistic(m) => m.predict_proba(x),
            Classifier::Svm(m) => m.predict_proba(x),
            Classifier::Dnn(m) => m.predict_proba(x),
        }
    }

    /// Probabilities for many rows, in input order.
    pub fn predict_many(&self, xs: &[&[f64]]) -> Result<Vec<f64>, ClassifierError> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.predict_proba(x)).collect()
    }
}

#[cfg(test)]
pub(crate) mod testdata {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    use crate::dataset::Example;
    use crate::rng;

    /// Two Gaussian classes in `dim` dimensions whose means differ by
    /// `separation` along the first `informative` coordinates.
    pub fn gaussian_classes(
        n: usize,
        dim: usize,
        informative: usize,
        separation: f64,
        positive_rate: f64,
        seed: u64,
    ) -> Vec<Example> {
        let mut r = rng::stream(seed, 77);
        (0..n)
            .map(|i| {
                let label = r.random_bool(positive_rate);
                let shift = if label { separation / 2.0 } else { -separation / 2.0 };
                let x = (0..dim)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        if j < informative {
                            z + shift
                        } else {
                            z
                        }
                    })
                    .collect();
                Example {
                    x,
                    label,
                    patient_id: format!("p{i}"),
                    image_id: format!("i{i}"),
                }
            })
            .collect()
    }
}
