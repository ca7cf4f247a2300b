use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_set, check_width, ClassifierError, TensorSketch};
use crate::dataset::{stratified_batches, Example, ShuffledBatches, EXAMPLE_DIM};
use crate::numcore::{sigmoid_scalar, softplus, ClassWeights, LossHistory, StopRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Inverse regularization; `λ = 1 / (n·C)`.
    pub c: f64,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: u32,
    pub sketch_dim: usize,
    pub class_weights: ClassWeights,
    pub batch_size: usize,
    /// Draw stratified batches instead of uniformly shuffled ones.
    #[serde(default)]
    pub stratified: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: 1.0 / EXAMPLE_DIM as f64,
            coef0: 1.0,
            degree: 3,
            sketch_dim: 512,
            class_weights: ClassWeights::UNIFORM,
            batch_size: 64,
            stratified: false,
        }
    }
}

/// Logistic map from decision values to probabilities, `σ(a·f + c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub c: f64,
}

impl Calibration {
    pub fn apply(&self, decision: f64) -> f64 {
        sigmoid_scalar(self.a * decision + self.c)
    }

    /// Decision value mapped to 0.5.
    pub fn midpoint(&self) -> f64 {
        -self.c / self.a
    }

    /// Platt scaling: maximum likelihood fit against the smoothed targets
    /// `(N₊+1)/(N₊+2)` and `1/(N₋+2)`, by Newton's method with a
    /// backtracking line search.
    pub fn fit(decisions: &[f64], labels: &[bool]) -> Calibration {
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        let hi = (n_pos + 1.0) / (n_pos + 2.0);
        let lo = 1.0 / (n_neg + 2.0);
        let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
        let nll = |a: f64, c: f64| -> f64 {
            decisions
                .iter()
                .zip(&targets)
                .map(|(&f, &t)| {
                    let z = a * f + c;
                    softplus(z) - t * z
                })
                .sum()
        };
        let mut a = 0.0;
        let mut c = ((n_pos + 1.0) / (n_neg + 1.0)).ln();
        let mut value = nll(a, c);
        for _ in 0..100 {
            let (mut g_a, mut g_c, mut h_aa, mut h_ac, mut h_cc) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
            for (&f, &t) in decisions.iter().zip(&targets) {
                let p = sigmoid_scalar(a * f + c);
                let r = p - t;
                let w = p * (1.0 - p);
                g_a += r * f;
                g_c += r;
                h_aa += w * f * f;
                h_ac += w * f;
                h_cc += w;
            }
            if g_a.abs() < 1e-5 && g_c.abs() < 1e-5 {
                break;
            }
            let det = h_aa * h_cc - h_ac * h_ac;
            let da = -(h_cc * g_a - h_ac * g_c) / det;
            let dc = -(h_aa * g_c - h_ac * g_a) / det;
            let slope = g_a * da + g_c * dc;
            let mut step = 1.0;
            let mut improved = false;
            while step >= 1e-10 {
                let (na, nc) = (a + step * da, c + step * dc);
                let nv = nll(na, nc);
                if nv < value + 1e-4 * step * slope {
                    a = na;
                    c = nc;
                    value = nv;
                    improved = true;
                    break;
                }
                step /= 2.0;
            }
            if !improved {
                break;
            }
        }
        Calibration { a, c }
    }
}

/// Linear SVM on Tensor-Sketch features with a calibrated probability output.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSvm {
    pub sketch: TensorSketch,
    pub w: Vec<f64>,
    pub b: f64,
    pub lambda: f64,
    pub calibration: Calibration,
    pub config: SvmConfig,
}

fn labels_pm(examples: &[Example]) -> Vec<f64> {
    examples
        .iter()
        .map(|e| if e.label { 1.0 } else { -1.0 })
        .collect()
}

fn weighted_hinge(w: &[f64], b: f64, phi: &[Vec<f64>], y: &[f64], idx: &[usize], cw: &ClassWeights) -> f64 {
    idx.iter()
        .map(|&i| {
            let f = b + w.iter().zip(&phi[i]).map(|(a, v)| a * v).sum::<f64>();
            cw.for_target((y[i] + 1.0) / 2.0) * (1.0 - y[i] * f).max(0.0)
        })
        .sum::<f64>()
        / idx.len() as f64
}

impl SketchSvm {
    pub fn decision(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        let phi = self.sketch.transform(x)?;
        Ok(self.decision_sketched(&phi))
    }

    fn decision_sketched(&self, phi: &[f64]) -> f64 {
        self.b + self.w.iter().zip(phi).map(|(a, v)| a * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        self.decision(x).map(|f| self.calibration.apply(f))
    }

    /// Mini-batch Pegasos on the sketched inputs.
    ///
    /// Minimizes `λ/2·(‖w‖² + b²) + mean_i c_{y_i}·max(0, 1 − y_i(w·φ_i + b))`
    /// with step `1/(λt)`, projecting onto the ball of radius `√(c̄/λ)`
    /// where `c̄` is the mean example weight. The bias is handled as a
    /// constant feature. Training and validation losses are the mean
    /// weighted hinge; with a positive `stop.patience` training ends once
    /// the validation hinge stalls. Calibration is fitted on training
    /// decision values after the last step.
    pub fn train(
        examples: &[Example],
        config: SvmConfig,
        stop: &StopRule,
        validation: Option<&[Example]>,
        seed: u64,
    ) -> Result<(SketchSvm, LossHistory), ClassifierError> {
        let dim = examples.first().map_or(0, |e| e.x.len());
        check_training_set(examples, dim)?;
        if !(config.c > 0.0 && config.c.is_finite()) {
            return Err(ClassifierError::InvalidHyperparameter(format!("C = {}", config.c)));
        }
        let sketch = TensorSketch::new(
            dim,
            config.gamma,
            config.coef0,
            config.degree,
            config.sketch_dim,
            seed,
        )?;
        let transform_all = |set: &[Example]| -> Result<Vec<Vec<f64>>, ClassifierError> {
            set.par_iter().map(|e| sketch.transform(&e.x)).collect()
        };
        let phi = transform_all(examples)?;
        let y = labels_pm(examples);
        let val = match validation {
            Some(v) if !v.is_empty() => {
                v.iter().try_for_each(|e| check_width(&e.x, dim))?;
                Some((transform_all(v)?, labels_pm(v), (0..v.len()).collect::<Vec<_>>()))
            }
            _ => None,
        };

        let n = examples.len();
        let lambda = 1.0 / (n as f64 * config.c);
        let cw = config.class_weights;
        let weight = |yi: f64| cw.for_target((yi + 1.0) / 2.0);
        let mean_weight = y.iter().map(|&yi| weight(yi)).sum::<f64>() / n as f64;
        let radius = (mean_weight / lambda).sqrt();
        let d = config.sketch_dim;
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut history = LossHistory::default();
        let mut best = f64::INFINITY;
        let mut stale = 0usize;
        let eval_every = stop.eval_every.max(1);
        let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
        let batches: Box<dyn Iterator<Item = Vec<usize>>> = if config.stratified {
            Box::new(stratified_batches(&labels, config.batch_size, seed)?)
        } else {
            Box::new(ShuffledBatches::new(n, config.batch_size, seed)?)
        };

        for (t, batch) in batches.take(stop.max_iters).enumerate() {
            let t = t + 1;
            history
                .train
                .push(weighted_hinge(&w, b, &phi, &y, &batch, &cw));
            let eta = 1.0 / (lambda * t as f64);
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for &i in &batch {
                let f = b + w.iter().zip(&phi[i]).map(|(a, v)| a * v).sum::<f64>();
                if y[i] * f < 1.0 {
                    let s = weight(y[i]) * y[i];
                    for (g, v) in gw.iter_mut().zip(&phi[i]) {
                        *g += s * v;
                    }
                    gb += s;
                }
            }
            let shrink = 1.0 - eta * lambda;
            let k = batch.len() as f64;
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj = shrink * *wj + eta / k * gj;
            }
            b = shrink * b + eta / k * gb;
            let norm = (w.iter().map(|v| v * v).sum::<f64>() + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
                b *= s;
            }

            if let Some((vphi, vy, vidx)) = &val {
                if t % eval_every == 0 {
                    let v = weighted_hinge(&w, b, vphi, vy, vidx, &cw);
                    history.validation.push((t, v));
                    if v < best - stop.min_delta {
                        best = v;
                        stale = 0;
                    } else {
                        stale += 1;
                        if stop.patience > 0 && stale >= stop.patience {
                            break;
                        }
                    }
                }
            }
        }

        let mut model = SketchSvm {
            sketch,
            w,
            b,
            lambda,
            calibration: Calibration { a: 1.0, c: 0.0 },
            config,
        };
        let decisions: Vec<f64> = phi.iter().map(|p| model.decision_sketched(p)).collect();
        model.calibration = Calibration::fit(&decisions, &labels);
        Ok((model, history))
    }

    /// Mean weighted hinge over `examples`.
    pub fn hinge_loss(&self, examples: &[Example]) -> Result<f64, ClassifierError> {
        let phi: Vec<Vec<f64>> = examples
            .iter()
            .map(|e| self.sketch.transform(&e.x))
            .collect::<Result<_, _>>()?;
        let y = labels_pm(examples);
        let idx: Vec<usize> = (0..examples.len()).collect();
        Ok(weighted_hinge(&self.w, self.b, &phi, &y, &idx, &self.config.class_weights))
    }
}
