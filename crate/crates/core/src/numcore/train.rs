use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bce_loss, AdamState, LossSpec, NumError};

/// Borrowed mini-batch: feature rows and 0/1 targets.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub x: Vec<&'a [f64]>,
    pub y: Vec<f64>,
}

impl<'a> Batch<'a> {
    pub fn new(x: Vec<&'a [f64]>, y: Vec<f64>) -> Result<Self, NumError> {
        if x.len() != y.len() {
            return Err(NumError::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.is_empty() {
            return Err(NumError::EmptyBatch);
        }
        Ok(Batch { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Rows per parallel work unit. Fixed so the summation order, and with it
/// every floating-point result, does not depend on the thread count.
pub(crate) const CHUNK: usize = 32;

/// Sums per-chunk `(loss, gradient)` pairs in chunk order.
pub(crate) fn chunked_sum<F>(n: usize, f: F) -> Result<(f64, Vec<Vec<f64>>), NumError>
where
    F: Fn(std::ops::Range<usize>) -> Result<(f64, Vec<Vec<f64>>), NumError> + Sync,
{
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s| f(s..(s + CHUNK).min(n)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut iter = parts.into_iter();
    let (mut loss, mut grad) = iter.next().ok_or(NumError::EmptyBatch)?;
    for (l, g) in iter {
        loss += l;
        for (acc, part) in grad.iter_mut().zip(g) {
            for (a, b) in acc.iter_mut().zip(part) {
                *a += b;
            }
        }
    }
    Ok((loss, grad))
}

/// A model that can be fitted by [`train_loop`].
pub trait Trainable: Sync {
    /// Positive-class probability for one row.
    fn predict(&self, x: &[f64]) -> Result<f64, NumError>;

    /// Mean batch loss and its gradient, grouped like [`Trainable::param_groups_mut`].
    fn loss_and_grad(&self, batch: &Batch, spec: &LossSpec) -> Result<(f64, Vec<Vec<f64>>), NumError>;

    fn param_groups_mut(&mut self) -> Vec<&mut [f64]>;

    /// Mean loss over a batch. Rows are scored in parallel only when the
    /// batch spans more than one chunk; either way the sum runs in row order.
    fn loss(&self, batch: &Batch, spec: &LossSpec) -> Result<f64, NumError> {
        let probs = if batch.x.len() > CHUNK {
            batch
                .x
                .par_iter()
                .map(|x| self.predict(x))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            batch
                .x
                .iter()
                .map(|x| self.predict(x))
                .collect::<Result<Vec<_>, _>>()?
        };
        bce_loss(&probs, &batch.y, spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    /// Validation evaluations without improvement before stopping; 0 disables.
    pub patience: usize,
    pub min_delta: f64,
    /// Iterations between validation evaluations.
    pub eval_every: usize,
    /// Stop once the gradient's largest component falls below this; 0 disables.
    pub grad_tolerance: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iters: 1000,
            patience: 0,
            min_delta: 0.0,
            eval_every: 10,
            grad_tolerance: 0.0,
        }
    }
}

/// Training loss per executed iteration and `(iteration, loss)` pairs for
/// every validation evaluation. Iterations are counted from 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<(usize, f64)>,
}

impl LossHistory {
    pub fn iterations(&self) -> usize {
        self.train.len()
    }
}

/// Runs one Adam step per batch drawn from `batches`.
///
/// The recorded training loss is the batch loss before that iteration's
/// update. Stops after `stop.max_iters` iterations, when the iterator runs
/// dry, when the gradient ∞-norm drops below `stop.grad_tolerance`, or once
/// `stop.patience` consecutive validation evaluations fail to improve on the
/// best loss by more than `stop.min_delta`.
pub fn train_loop<'a, M, I>(
    model: &mut M,
    batches: I,
    validation: Option<&Batch>,
    spec: &LossSpec,
    adam: &mut AdamState,
    stop: &StopRule,
) -> Result<LossHistory, NumError>
where
    M: Trainable + ?Sized,
    I: IntoIterator<Item = Batch<'a>>,
{
    let mut history = LossHistory::default();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let eval_every = stop.eval_every.max(1);
    for (i, batch) in batches.into_iter().take(stop.max_iters).enumerate() {
        let (loss, grads) = model.loss_and_grad(&batch, spec)?;
        history.train.push(loss);
        if stop.grad_tolerance > 0.0 && max_abs(&grads) < stop.grad_tolerance {
            break;
        }
        adam.step(model.param_groups_mut(), &grads)?;
        let iteration = i + 1;
        if let Some(val) = validation {
            if iteration % eval_every == 0 {
                let v = model.loss(val, spec)?;
                history.validation.push((iteration, v));
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
    Ok(history)
}

fn max_abs(groups: &[Vec<f64>]) -> f64 {
    groups.iter().flatten().fold(0.0, |m, g| m.max(g.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{
        bce_grad, layer::flatten_gradients, Activation, AdamConfig, GradientAt, Sequential,
    };
    use crate::rng;
    use rand::Rng;

    /// Single-output sigmoid network.
    struct Net(Sequential);

    impl Trainable for Net {
        fn predict(&self, x: &[f64]) -> Result<f64, NumError> {
            Ok(self.0.predict(x)?[0])
        }

        fn loss_and_grad(
            &self,
            batch: &Batch,
            spec: &LossSpec,
        ) -> Result<(f64, Vec<Vec<f64>>), NumError> {
            let n = batch.len();
            chunked_sum(n, |range| {
                let mut grads = self.0.zero_gradients();
                let mut probs = Vec::new();
                for i in range.clone() {
                    let cache = self.0.forward(batch.x[i])?;
                    let p = cache.output()[0];
                    probs.push(p);
                    let d = bce_grad(p, batch.y[i], n, spec);
                    self.0
                        .backward_accumulate(&cache, &[d], GradientAt::Output, &mut grads, false)?;
                }
                let loss = bce_loss(&probs, &batch.y[range.clone()], spec)? * range.len() as f64
                    / n as f64;
                Ok((loss, flatten_gradients(grads)))
            })
        }

        fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
            self.0.param_slices_mut()
        }
    }

    fn toy_set(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        // uniform on [-3, 3]² minus a band of half-width 1 around x + y = 0
        let mut r = rng::stream(seed, 0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < n {
            let p: [f64; 2] = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
            let s = p[0] + p[1];
            if s.abs() < 1.0 {
                continue;
            }
            xs.push(p.to_vec());
            ys.push(if s > 0.0 { 1.0 } else { 0.0 });
        }
        (xs, ys)
    }

    fn toy_net() -> Net {
        let mut r = rng::stream(5, rng::INIT);
        Net(Sequential::glorot(&[2, 4, 1], &[Activation::Relu, Activation::Sigmoid], &mut r).unwrap())
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (xs, ys) = toy_set(1, 200);
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys.clone()).unwrap();
        let mut net = toy_net();
        let mut adam = AdamState::new(AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        })
        .unwrap();
        let stop = StopRule {
            max_iters: 1000,
            ..StopRule::default()
        };
        let spec = LossSpec::unweighted();
        let history = train_loop(
            &mut net,
            std::iter::repeat(batch.clone()),
            None,
            &spec,
            &mut adam,
            &stop,
        )
        .unwrap();
        assert_eq!(history.iterations(), 1000);
        assert!(net.loss(&batch, &spec).unwrap() < 0.1);

        // window means over 50 iterations never increase
        let means: Vec<f64> = history
            .train
            .chunks(50)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        for pair in means.windows(2) {
            assert!(pair[1] <= pair[0], "{means:?}");
        }
    }

    #[test]
    fn zero_iterations_leave_model_unchanged() {
        let (xs, ys) = toy_set(2, 10);
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
        let mut net = toy_net();
        let before = net.0.layers().to_vec();
        let mut adam = AdamState::new(AdamConfig::default()).unwrap();
        let stop = StopRule {
            max_iters: 0,
            ..StopRule::default()
        };
        let h = train_loop(
            &mut net,
            std::iter::repeat(batch),
            None,
            &LossSpec::unweighted(),
            &mut adam,
            &stop,
        )
        .unwrap();
        assert_eq!(h.iterations(), 0);
        assert_eq!(net.0.layers(), before.as_slice());
    }

    #[test]
    fn patience_stops_early_and_validation_is_periodic() {
        let (xs, ys) = toy_set(3, 40);
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
        let mut net = toy_net();
        // a learning rate this small cannot move the validation loss by 1.0
        let mut adam = AdamState::new(AdamConfig {
            learning_rate: 1e-9,
            ..AdamConfig::default()
        })
        .unwrap();
        let stop = StopRule {
            max_iters: 500,
            patience: 3,
            min_delta: 1.0,
            eval_every: 10,
            grad_tolerance: 0.0,
        };
        let h = train_loop(
            &mut net,
            std::iter::repeat(batch.clone()),
            Some(&batch),
            &LossSpec::unweighted(),
            &mut adam,
            &stop,
        )
        .unwrap();
        // first evaluation sets the best, the next three are stale
        assert_eq!(h.iterations(), 40);
        let at: Vec<usize> = h.validation.iter().map(|v| v.0).collect();
        assert_eq!(at, vec![10, 20, 30, 40]);
    }

    #[test]
    fn chunked_sum_is_independent_of_thread_count() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 1e-3).collect();
        let f = |r: std::ops::Range<usize>| Ok((values[r.clone()].iter().sum::<f64>(), vec![values[r].to_vec()[..1].to_vec()]));
        let a = chunked_sum(values.len(), f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| chunked_sum(values.len(), f)).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }
}
