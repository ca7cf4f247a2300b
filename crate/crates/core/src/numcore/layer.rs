use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid_scalar, NumError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid_scalar(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map followed by an activation. Weights are `out × in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights in `±√(6/(in+out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self, NumError> {
        if weights.len() != in_dim * out_dim {
            return Err(NumError::DimensionMismatch {
                expected: in_dim * out_dim,
                actual: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(NumError::DimensionMismatch {
                expected: out_dim,
                actual: bias.len(),
            });
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn parameter_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }

    /// Returns `(pre_activation, output)`.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let a = z.iter().map(|&v| self.activation.apply(v)).collect();
        (z, a)
    }
}

/// Parameter gradient for one [`DenseLayer`], same layout as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGradient {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGradient {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &LayerGradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// Where the upstream gradient handed to [`Sequential::backward`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientAt {
    /// Gradient with respect to the network output.
    Output,
    /// Gradient with respect to the last layer's pre-activation. Used when the
    /// caller folds the final activation into its loss.
    PreActivation,
}

/// Activations retained by [`Sequential::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pre-activation of the final layer.
    pub fn last_pre_activation(&self) -> &[f64] {
        self.pre_activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// A chain of dense layers.
///
/// Every mutable access to the parameters bumps an internal version so a
/// [`ForwardCache`] from before the change is rejected as stale.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<DenseLayer>,
    version: u64,
}

impl Sequential {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NumError> {
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NumError::DimensionMismatch {
                    expected: pair[0].out_dim,
                    actual: pair[1].in_dim,
                });
            }
        }
        Ok(Sequential { layers, version: 0 })
    }

    /// Glorot-initialised network with layer widths `dims[0] → dims[1] → …`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self, NumError> {
        if dims.len() != activations.len() + 1 {
            return Err(NumError::DimensionMismatch {
                expected: dims.len().saturating_sub(1),
                actual: activations.len(),
            });
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &act)| DenseLayer::glorot(d[0], d[1], act, rng))
            .collect();
        Sequential::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    /// Weight and bias slices of every layer in order, for the optimizer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn zero_gradients(&self) -> Vec<LayerGradient> {
        self.layers.iter().map(LayerGradient::zeros_like).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache, NumError> {
        if x.len() != self.input_dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let (z, a) = layer.forward(activations.last().expect("input pushed"));
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            version: self.version,
            activations,
            pre_activations,
        })
    }

    /// Output only, without keeping a cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NumError> {
        if x.len() != self.input_dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut current = x.to_vec();
        for layer in &self.layers {
            current = layer.forward(&current).1;
        }
        Ok(current)
    }

    /// Adds the parameter gradients for `upstream` into `grads` and returns
    /// the gradient with respect to the input when `want_input` is set.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        at: GradientAt,
        grads: &mut [LayerGradient],
        want_input: bool,
    ) -> Result<Option<Vec<f64>>, NumError> {
        if cache.version != self.version || cache.pre_activations.len() != self.layers.len() {
            return Err(NumError::StaleCache);
        }
        if upstream.len() != self.output_dim() {
            return Err(NumError::DimensionMismatch {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if grads.len() != self.layers.len() {
            return Err(NumError::ShapeMismatch);
        }
        let last = self.layers.len().saturating_sub(1);
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[l];
            let a = &cache.activations[l + 1];
            if !(l == last && at == GradientAt::PreActivation) {
                for (d, (&zi, &ai)) in delta.iter_mut().zip(z.iter().zip(a)) {
                    *d *= layer.activation.derivative(zi, ai);
                }
            }
            let input = &cache.activations[l];
            let g = &mut grads[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += d * x;
                }
            }
            if l == 0 && !want_input {
                return Ok(None);
            }
            let mut next = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (n, &w) in next.iter_mut().zip(row) {
                    *n += w * d;
                }
            }
            delta = next;
        }
        Ok(Some(delta))
    }

    /// Fresh parameter gradients for `upstream`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        at: GradientAt,
    ) -> Result<Vec<LayerGradient>, NumError> {
        let mut grads = self.zero_gradients();
        self.backward_accumulate(cache, upstream, at, &mut grads, false)?;
        Ok(grads)
    }
}

/// Flattens gradients into the order of [`Sequential::param_slices_mut`].
pub(crate) fn flatten_gradients(grads: Vec<LayerGradient>) -> Vec<Vec<f64>> {
    grads
        .into_iter()
        .flat_map(|g| [g.weights, g.bias])
        .collect()
}
