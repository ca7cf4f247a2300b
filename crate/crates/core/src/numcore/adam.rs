use serde::{Deserialize, Serialize};

use super::NumError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NumError> {
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.beta1) || !beta_ok(self.beta2) {
            return Err(NumError::InvalidOptimizer("betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(NumError::InvalidOptimizer("epsilon must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(NumError::InvalidOptimizer("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moments for a list of parameter groups.
///
/// The moment buffers take their shape from the first step; later steps must
/// present the same group lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self, NumError> {
        config.validate()?;
        Ok(AdamState {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected first and second moments after the latest step.
    pub fn corrected_moments(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let c1 = 1.0 - self.config.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.config.beta2.powi(self.t as i32);
        let scale = |groups: &[Vec<f64>], c: f64| -> Vec<Vec<f64>> {
            groups
                .iter()
                .map(|g| g.iter().map(|x| x / c).collect())
                .collect()
        };
        (scale(&self.m, c1), scale(&self.v, c2))
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) -> Result<(), NumError> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(NumError::ShapeMismatch);
        }
        if self.t == 0 {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len()
            || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(NumError::ShapeMismatch);
        }
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
