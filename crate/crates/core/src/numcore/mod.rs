//! Small dense-network numeric core: activations, weighted binary
//! cross-entropy, dense layers with hand-derived backpropagation, Adam and
//! a generic training loop.
//!
//! Everything is `f64`, row-major and single-threaded per model.

mod adam;
mod layer;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use layer::{Activation, DenseLayer, ForwardCache, GradientAt, LayerGradient, Sequential};
pub use train::{train_loop, Batch, LossHistory, StopRule, Trainable};
pub(crate) use layer::flatten_gradients;
pub(crate) use train::chunked_sum;

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum NumError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("forward cache does not match the current parameters")]
    StaleCache,
    #[error("shape mismatch between parameters and gradients")]
    ShapeMismatch,
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizer(String),
    #[error("class weights must be non-negative and not both zero")]
    InvalidClassWeights,
    #[error("empty batch")]
    EmptyBatch,
}

pub fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Class weights `(negative, positive)` for the cross-entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        negative: 1.0,
        positive: 1.0,
    };

    pub fn new(negative: f64, positive: f64) -> Result<Self, NumError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(negative) || !ok(positive) || (negative == 0.0 && positive == 0.0) {
            return Err(NumError::InvalidClassWeights);
        }
        Ok(ClassWeights { negative, positive })
    }

    /// `N / (2 · N_c)` per class.
    pub fn inverse_frequency(labels: impl IntoIterator<Item = bool>) -> Result<Self, NumError> {
        let (mut neg, mut pos) = (0usize, 0usize);
        for l in labels {
            if l {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if neg == 0 || pos == 0 {
            return Err(NumError::InvalidClassWeights);
        }
        let n = (neg + pos) as f64;
        ClassWeights::new(n / (2.0 * neg as f64), n / (2.0 * pos as f64))
    }

    pub fn for_target(&self, y: f64) -> f64 {
        y * self.positive + (1.0 - y) * self.negative
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights::UNIFORM
    }
}

/// Binary cross-entropy with optional class weights.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossSpec {
    pub class_weights: ClassWeights,
}

impl LossSpec {
    pub fn unweighted() -> Self {
        LossSpec::default()
    }

    pub fn weighted(class_weights: ClassWeights) -> Self {
        LossSpec { class_weights }
    }
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

/// `mean_i −[w₊ y log ŷ + w₋ (1−y) log(1−ŷ)]` with ŷ clamped.
pub fn bce_loss(y_hat: &[f64], y: &[f64], spec: &LossSpec) -> Result<f64, NumError> {
    if y_hat.len() != y.len() {
        return Err(NumError::LengthMismatch {
            left: y_hat.len(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(NumError::EmptyBatch);
    }
    let w = spec.class_weights;
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = clamp_probability(p);
            -(w.positive * t * p.ln() + w.negative * (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Derivative of one sample's contribution to [`bce_loss`] over a batch of
/// `n` with respect to ŷ. Zero where the clamp is active.
pub fn bce_grad(y_hat: f64, y: f64, n: usize, spec: &LossSpec) -> f64 {
    if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&y_hat) {
        return 0.0;
    }
    let w = spec.class_weights;
    -(w.positive * y / y_hat - w.negative * (1.0 - y) / (1.0 - y_hat)) / n as f64
}
