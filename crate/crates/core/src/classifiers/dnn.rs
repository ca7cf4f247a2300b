use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_training_set, check_width, full_batch, index_batch, ClassifierError};
use crate::dataset::{stratified_batches, Example, ShuffledBatches, FEATURE_DIM};
use crate::numcore::{
    bce_grad, bce_loss, chunked_sum, flatten_gradients, sigmoid_scalar, train_loop, Activation,
    AdamConfig, AdamState, Batch, ClassWeights, GradientAt, LossHistory, LossSpec, NumError,
    Sequential, StopRule, Trainable,
};
use crate::rng;

/// Widths after the input of the image branch.
pub const IMAGE_BRANCH_WIDTHS: [usize; 3] = [100, 10, 1];
/// Age and implant flag.
pub const META_DIM: usize = 2;
const META_WIDTHS: [usize; 2] = [2, 1];

/// How the two branch logits `z_img` and `z_meta` become one probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// `σ((z_img + z_meta) / 2)`: a single output sigmoid.
    #[default]
    LogitMean,
    /// `(σ(z_img) + σ(z_meta)) / 2`.
    Mean,
    /// `σ((σ(z_img) + σ(z_meta)) / 2)`, confined to `(0.5, σ(1))`.
    MeanThenSigmoid,
}

impl Fusion {
    /// Returns `p` together with `∂p/∂z_img` and `∂p/∂z_meta`.
    fn apply(self, z_img: f64, z_meta: f64) -> (f64, f64, f64) {
        match self {
            Fusion::LogitMean => {
                let p = sigmoid_scalar((z_img + z_meta) / 2.0);
                let d = p * (1.0 - p) / 2.0;
                (p, d, d)
            }
            Fusion::Mean => {
                let (si, sm) = (sigmoid_scalar(z_img), sigmoid_scalar(z_meta));
                ((si + sm) / 2.0, si * (1.0 - si) / 2.0, sm * (1.0 - sm) / 2.0)
            }
            Fusion::MeanThenSigmoid => {
                let (si, sm) = (sigmoid_scalar(z_img), sigmoid_scalar(z_meta));
                let p = sigmoid_scalar((si + sm) / 2.0);
                let outer = p * (1.0 - p) / 2.0;
                (p, outer * si * (1.0 - si), outer * sm * (1.0 - sm))
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::LogitMean => "logit_mean",
            Fusion::Mean => "mean",
            Fusion::MeanThenSigmoid => "mean_then_sigmoid",
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fusion {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logit_mean" => Ok(Fusion::LogitMean),
            "mean" => Ok(Fusion::Mean),
            "mean_then_sigmoid" => Ok(Fusion::MeanThenSigmoid),
            other => Err(ClassifierError::InvalidHyperparameter(format!("fusion {other:?}"))),
        }
    }
}

/// Batch construction and loss weighting for [`TwoBranchDnn::train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DnnRegime {
    /// Uniformly shuffled batches with class-weighted cross-entropy.
    Shuffled { class_weights: ClassWeights },
    /// Stratified batches with unweighted cross-entropy.
    Stratified,
}

/// Image branch `n → 100 → 10 → 1` (ReLU, ReLU) and metadata branch
/// `2 → 2 → 1` (ReLU). Both branches emit a logit; [`Fusion`] combines them.
/// Input rows are `[image features…, age, implant]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBranchDnn {
    pub(crate) image: Sequential,
    pub(crate) meta: Sequential,
    fusion: Fusion,
}

fn image_dims(image_dim: usize) -> Vec<usize> {
    std::iter::once(image_dim).chain(IMAGE_BRANCH_WIDTHS).collect()
}

fn meta_dims() -> Vec<usize> {
    std::iter::once(META_DIM).chain(META_WIDTHS).collect()
}

const IMAGE_ACTS: [Activation; 3] = [Activation::Relu, Activation::Relu, Activation::Identity];
const META_ACTS: [Activation; 2] = [Activation::Relu, Activation::Identity];

impl TwoBranchDnn {
    /// Glorot-initialized network over 1000 image features.
    pub fn new(fusion: Fusion, seed: u64) -> Self {
        TwoBranchDnn::with_image_dim(FEATURE_DIM, fusion, seed)
    }

    /// Same architecture over a different number of image features.
    pub fn with_image_dim(image_dim: usize, fusion: Fusion, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::INIT);
        let image = Sequential::glorot(&image_dims(image_dim), &IMAGE_ACTS, &mut r)
            .expect("fixed architecture");
        let meta = Sequential::glorot(&meta_dims(), &META_ACTS, &mut r).expect("fixed architecture");
        TwoBranchDnn {
            image,
            meta,
            fusion,
        }
    }

    pub fn from_branches(image: Sequential, meta: Sequential, fusion: Fusion) -> Result<Self, ClassifierError> {
        let shape = |net: &Sequential| -> Vec<usize> {
            std::iter::once(net.input_dim())
                .chain(net.layers().iter().map(|l| l.out_dim()))
                .collect()
        };
        let acts = |net: &Sequential| -> Vec<Activation> {
            net.layers().iter().map(|l| l.activation()).collect()
        };
        if shape(&image)[1..] != IMAGE_BRANCH_WIDTHS[..]
            || acts(&image) != IMAGE_ACTS
            || shape(&meta) != meta_dims()
            || acts(&meta) != META_ACTS
        {
            return Err(ClassifierError::InvalidHyperparameter(
                "branch layers do not match the two-branch architecture".into(),
            ));
        }
        Ok(TwoBranchDnn {
            image,
            meta,
            fusion,
        })
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    pub fn image_branch(&self) -> &Sequential {
        &self.image
    }

    pub fn meta_branch(&self) -> &Sequential {
        &self.meta
    }

    pub fn image_dim(&self) -> usize {
        self.image.input_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.image_dim() + META_DIM
    }

    pub fn parameter_count(&self) -> usize {
        self.image.parameter_count() + self.meta.parameter_count()
    }

    /// Trainable parameters per dense layer, image branch first.
    pub fn layer_parameter_counts(&self) -> Vec<usize> {
        self.image
            .layers()
            .iter()
            .chain(self.meta.layers())
            .map(|l| l.parameter_count())
            .collect()
    }

    fn branch_logits(&self, x: &[f64]) -> Result<(f64, f64), NumError> {
        let split = self.image_dim();
        Ok((
            self.image.predict(&x[..split])?[0],
            self.meta.predict(&x[split..])?[0],
        ))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        check_width(x, self.input_dim())?;
        let (zi, zm) = self.branch_logits(x)?;
        Ok(self.fusion.apply(zi, zm).0)
    }

    /// Trains in place and returns the loss history. Validation losses use
    /// the same weighting as training.
    #[allow(clippy::too_many_arguments)]
    pub fn train(
        &mut self,
        examples: &[Example],
        validation: &[Example],
        regime: DnnRegime,
        adam: AdamConfig,
        stop: &StopRule,
        batch_size: usize,
        seed: u64,
    ) -> Result<LossHistory, ClassifierError> {
        check_training_set(examples, self.input_dim())?;
        validation
            .iter()
            .try_for_each(|e| check_width(&e.x, self.input_dim()))?;
        let val = if validation.is_empty() {
            None
        } else {
            Some(full_batch(validation)?)
        };
        let mut state = AdamState::new(adam)?;
        let history = match regime {
            DnnRegime::Shuffled { class_weights } => {
                let batches = ShuffledBatches::new(examples.len(), batch_size, seed)?
                    .map(|idx| index_batch(examples, &idx).expect("non-empty batch"));
                train_loop(
                    self,
                    batches,
                    val.as_ref(),
                    &LossSpec::weighted(class_weights),
                    &mut state,
                    stop,
                )?
            }
            DnnRegime::Stratified => {
                let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
                let batches = stratified_batches(&labels, batch_size, seed)?
                    .map(|idx| index_batch(examples, &idx).expect("non-empty batch"));
                train_loop(
                    self,
                    batches,
                    val.as_ref(),
                    &LossSpec::unweighted(),
                    &mut state,
                    stop,
                )?
            }
        };
        Ok(history)
    }
}

impl Trainable for TwoBranchDnn {
    fn predict(&self, x: &[f64]) -> Result<f64, NumError> {
        if x.len() != self.input_dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let (zi, zm) = self.branch_logits(x)?;
        Ok(self.fusion.apply(zi, zm).0)
    }

    fn loss_and_grad(&self, batch: &Batch, spec: &LossSpec) -> Result<(f64, Vec<Vec<f64>>), NumError> {
        let n = batch.len();
        let split = self.image_dim();
        chunked_sum(n, |range| {
            let mut gi = self.image.zero_gradients();
            let mut gm = self.meta.zero_gradients();
            let mut probs = Vec::with_capacity(range.len());
            for i in range.clone() {
                let x = batch.x[i];
                if x.len() != self.input_dim() {
                    return Err(NumError::DimensionMismatch {
                        expected: self.input_dim(),
                        actual: x.len(),
                    });
                }
                let ci = self.image.forward(&x[..split])?;
                let cm = self.meta.forward(&x[split..])?;
                let (p, dzi, dzm) = self.fusion.apply(ci.output()[0], cm.output()[0]);
                probs.push(p);
                let dp = bce_grad(p, batch.y[i], n, spec);
                self.image
                    .backward_accumulate(&ci, &[dp * dzi], GradientAt::Output, &mut gi, false)?;
                self.meta
                    .backward_accumulate(&cm, &[dp * dzm], GradientAt::Output, &mut gm, false)?;
            }
            let loss = bce_loss(&probs, &batch.y[range.clone()], spec)? * range.len() as f64 / n as f64;
            let mut grads = flatten_gradients(gi);
            grads.extend(flatten_gradients(gm));
            Ok((loss, grads))
        })
    }

    fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut groups = self.image.param_slices_mut();
        groups.extend(self.meta.param_slices_mut());
        groups
    }
}
