use serde::{Deserialize, Serialize};

use super::{check_training_set, check_width, full_batch, ClassifierError};
use crate::dataset::Example;
use crate::numcore::{
    chunked_sum, sigmoid_scalar, softplus, train_loop, AdamConfig, AdamState, Batch, ClassWeights,
    LossHistory, LossSpec, NumError, StopRule, Trainable,
};

/// Largest gradient component at which full-batch training is converged.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub class_weights: ClassWeights,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            c: 1.0,
            class_weights: ClassWeights::UNIFORM,
        }
    }
}

/// `P(y = 1 | x) = σ(w·x + w0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub w0: f64,
    pub config: LogisticConfig,
}

impl LogisticModel {
    pub fn zeros(dim: usize, config: LogisticConfig) -> Self {
        LogisticModel {
            w: vec![0.0; dim],
            w0: 0.0,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        check_width(x, self.dim())?;
        Ok(self.margin(x))
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.w0 + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        self.decision(x).map(sigmoid_scalar)
    }

    /// `C · Σ c_y · nll + ½‖w‖²`; the bias is not regularized.
    pub fn objective(&self, examples: &[Example]) -> f64 {
        let cw = self.config.class_weights;
        let data: f64 = examples
            .iter()
            .map(|e| {
                let z = self.margin(&e.x);
                cw.for_target(e.target()) * (softplus(z) - e.target() * z)
            })
            .sum();
        self.config.c * data + 0.5 * self.w.iter().map(|w| w * w).sum::<f64>()
    }

    /// Full-batch Adam on [`LogisticModel::objective`], stopping when the
    /// gradient ∞-norm drops below [`GRADIENT_TOLERANCE`] or after
    /// `stop.max_iters` steps. The recorded losses are the class-weighted
    /// mean cross-entropy without the penalty. If training ends above the
    /// objective of the zero model, the zero model is returned.
    pub fn train(
        examples: &[Example],
        config: LogisticConfig,
        adam: AdamConfig,
        stop: &StopRule,
        validation: Option<&[Example]>,
    ) -> Result<(LogisticModel, LossHistory), ClassifierError> {
        let dim = examples.first().map_or(0, |e| e.x.len());
        check_training_set(examples, dim)?;
        if !(config.c > 0.0 && config.c.is_finite()) {
            return Err(ClassifierError::InvalidHyperparameter(format!("C = {}", config.c)));
        }
        let batch = full_batch(examples)?;
        let val = validation.filter(|v| !v.is_empty()).map(full_batch).transpose()?;
        let spec = LossSpec::weighted(config.class_weights);
        let stop = StopRule {
            grad_tolerance: GRADIENT_TOLERANCE,
            ..*stop
        };
        let mut model = LogisticModel::zeros(dim, config);
        let mut state = AdamState::new(adam)?;
        let history = train_loop(
            &mut model,
            std::iter::repeat(batch),
            val.as_ref(),
            &spec,
            &mut state,
            &stop,
        )?;
        let zero = LogisticModel::zeros(dim, config);
        if model.objective(examples) > zero.objective(examples) {
            model = zero;
        }
        Ok((model, history))
    }
}

impl Trainable for LogisticModel {
    fn predict(&self, x: &[f64]) -> Result<f64, NumError> {
        if x.len() != self.dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(sigmoid_scalar(self.margin(x)))
    }

    /// Gradient of the full objective over `batch`; the returned loss is the
    /// weighted mean cross-entropy.
    fn loss_and_grad(&self, batch: &Batch, spec: &LossSpec) -> Result<(f64, Vec<Vec<f64>>), NumError> {
        let n = batch.len();
        let dim = self.dim();
        let c = self.config.c;
        let (data_loss, mut grads) = chunked_sum(n, |range| {
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            let mut loss = 0.0;
            for i in range {
                let x = batch.x[i];
                if x.len() != dim {
                    return Err(NumError::DimensionMismatch {
                        expected: dim,
                        actual: x.len(),
                    });
                }
                let y = batch.y[i];
                let weight = spec.class_weights.for_target(y);
                let z = self.margin(x);
                loss += weight * (softplus(z) - y * z);
                let r = c * weight * (sigmoid_scalar(z) - y);
                for (g, v) in gw.iter_mut().zip(x) {
                    *g += r * v;
                }
                gb += r;
            }
            Ok((loss, vec![gw, vec![gb]]))
        })?;
        for (g, w) in grads[0].iter_mut().zip(&self.w) {
            *g += w;
        }
        Ok((data_loss / n as f64, grads))
    }

    fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), std::slice::from_mut(&mut self.w0)]
    }
}
