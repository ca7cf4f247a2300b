use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{check_width, ClassifierError};
use crate::rng;

/// Mersenne prime `2^61 − 1`, the modulus of the universal hash family.
const PRIME: u64 = (1 << 61) - 1;

/// `((a·i + b) mod p)` with `a ∈ [1, p)`, `b ∈ [0, p)`: pairwise independent.
#[derive(Debug, Clone, Copy, PartialEq)]
struct UniversalHash {
    a: u64,
    b: u64,
}

impl UniversalHash {
    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        UniversalHash {
            a: rng.random_range(1..PRIME),
            b: rng.random_range(0..PRIME),
        }
    }

    fn eval(self, i: u64) -> u64 {
        ((u128::from(self.a) * u128::from(i) + u128::from(self.b)) % u128::from(PRIME)) as u64
    }
}

/// `(γ x·z + c0)^d`.
pub fn exact_kernel(x: &[f64], z: &[f64], gamma: f64, coef0: f64, degree: u32) -> f64 {
    let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
    (gamma * dot + coef0).powi(degree as i32)
}

/// Tensor Sketch feature map for the polynomial kernel `(γ x·z + c0)^d`.
///
/// The input is rescaled and augmented to `[√γ·x, √c0]`, count-sketched
/// once per degree with independent bucket and sign hashes, and the `d`
/// sketches are multiplied in the frequency domain, which is a circular
/// convolution in feature space. `E[φ(x)·φ(z)]` equals the kernel.
///
/// The map is fully determined by its parameters and `seed`.
#[derive(Clone)]
pub struct TensorSketch {
    input_dim: usize,
    gamma: f64,
    coef0: f64,
    degree: u32,
    dim: usize,
    seed: u64,
    /// `degree × (input_dim + 1)` bucket indices.
    buckets: Vec<Vec<usize>>,
    signs: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TensorSketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorSketch")
            .field("input_dim", &self.input_dim)
            .field("gamma", &self.gamma)
            .field("coef0", &self.coef0)
            .field("degree", &self.degree)
            .field("dim", &self.dim)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl PartialEq for TensorSketch {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim
            && self.gamma == other.gamma
            && self.coef0 == other.coef0
            && self.degree == other.degree
            && self.dim == other.dim
            && self.seed == other.seed
    }
}

impl TensorSketch {
    pub fn new(
        input_dim: usize,
        gamma: f64,
        coef0: f64,
        degree: u32,
        dim: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        if degree < 1 {
            return Err(ClassifierError::BadDegree(degree));
        }
        if dim < 1 {
            return Err(ClassifierError::InvalidHyperparameter(
                "sketch dimension must be at least 1".into(),
            ));
        }
        if !(gamma > 0.0 && gamma.is_finite()) || !(coef0 >= 0.0 && coef0.is_finite()) {
            return Err(ClassifierError::InvalidHyperparameter(format!(
                "gamma = {gamma}, coef0 = {coef0}"
            )));
        }
        let mut r = rng::stream(seed, rng::SKETCH);
        let mut buckets = Vec::with_capacity(degree as usize);
        let mut signs = Vec::with_capacity(degree as usize);
        for _ in 0..degree {
            let h = UniversalHash::draw(&mut r);
            let s = UniversalHash::draw(&mut r);
            buckets.push(
                (0..=input_dim as u64)
                    .map(|i| (h.eval(i) % dim as u64) as usize)
                    .collect(),
            );
            signs.push(
                (0..=input_dim as u64)
                    .map(|i| if s.eval(i) & 1 == 0 { 1.0 } else { -1.0 })
                    .collect(),
            );
        }
        let mut planner = FftPlanner::new();
        Ok(TensorSketch {
            input_dim,
            gamma,
            coef0,
            degree,
            dim,
            seed,
            buckets,
            signs,
            fft: planner.plan_fft_forward(dim),
            ifft: planner.plan_fft_inverse(dim),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn coef0(&self) -> f64 {
        self.coef0
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn count_sketch(&self, level: usize, augmented: &[f64]) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::new(0.0, 0.0); self.dim];
        for ((&v, &b), &s) in augmented
            .iter()
            .zip(&self.buckets[level])
            .zip(&self.signs[level])
        {
            out[b].re += s * v;
        }
        out
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        check_width(x, self.input_dim)?;
        let scale = self.gamma.sqrt();
        let augmented: Vec<f64> = x
            .iter()
            .map(|v| scale * v)
            .chain(std::iter::once(self.coef0.sqrt()))
            .collect();
        if self.degree == 1 {
            return Ok(self.count_sketch(0, &augmented).iter().map(|c| c.re).collect());
        }
        let mut product = self.count_sketch(0, &augmented);
        self.fft.process(&mut product);
        for level in 1..self.degree as usize {
            let mut cs = self.count_sketch(level, &augmented);
            self.fft.process(&mut cs);
            for (p, c) in product.iter_mut().zip(&cs) {
                *p *= c;
            }
        }
        self.ifft.process(&mut product);
        let norm = self.dim as f64;
        Ok(product.iter().map(|c| c.re / norm).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn mc_estimate(x: &[f64], z: &[f64], gamma: f64, c0: f64, d: u32, dim: usize, seeds: u64) -> f64 {
        (0..seeds)
            .map(|s| {
                let ts = TensorSketch::new(x.len(), gamma, c0, d, dim, 1000 + s).unwrap();
                dot(&ts.transform(x).unwrap(), &ts.transform(z).unwrap())
            })
            .sum::<f64>()
            / seeds as f64
    }

    /// Outer-product expansion of the degree-`d` polynomial kernel. Shares no
    /// code with the sketch.
    fn explicit_feature_kernel(x: &[f64], z: &[f64], gamma: f64, c0: f64, d: u32) -> f64 {
        let aug = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|a| a * gamma.sqrt()).chain([c0.sqrt()]).collect()
        };
        let (xa, za) = (aug(x), aug(z));
        let mut fx = vec![1.0];
        let mut fz = vec![1.0];
        for _ in 0..d {
            fx = fx.iter().flat_map(|p| xa.iter().map(move |q| p * q)).collect();
            fz = fz.iter().flat_map(|p| za.iter().map(move |q| p * q)).collect();
        }
        dot(&fx, &fz)
    }

    #[test]
    fn exact_kernel_matches_expansion() {
        let mut r = rng::stream(3, 0);
        for d in 1..=3 {
            let x: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut r)).collect();
            let z: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut r)).collect();
            let k = exact_kernel(&x, &z, 0.7, 1.3, d);
            let e = explicit_feature_kernel(&x, &z, 0.7, 1.3, d);
            assert!((k - e).abs() <= 1e-12 * e.abs().max(1.0), "{k} vs {e}");
        }
    }

    #[test]
    fn unit_vector_self_kernel() {
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        let est = mc_estimate(&e1, &e1, 1.0, 0.0, 2, 512, 200);
        assert!((est - 1.0).abs() < 0.05, "{est}");
    }

    #[test]
    fn orthogonal_vectors_estimate_zero() {
        let mut x = vec![0.0; 8];
        let mut z = vec![0.0; 8];
        x[0] = 1.0;
        z[1] = 1.0;
        let est = mc_estimate(&x, &z, 1.0, 0.0, 2, 512, 200);
        assert!(est.abs() < 0.05, "{est}");
    }

    #[test]
    fn degree_one_without_offset_is_linear() {
        let ts = TensorSketch::new(3, 1.0, 0.0, 1, 16, 4).unwrap();
        let x = [1.0, 2.0, 3.0];
        let z = [-0.5, 0.25, 4.0];
        let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let lhs = ts.transform(&sum).unwrap();
        let rhs: Vec<f64> = ts
            .transform(&x)
            .unwrap()
            .iter()
            .zip(ts.transform(&z).unwrap())
            .map(|(a, b)| a + b)
            .collect();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_map() {
        let a = TensorSketch::new(5, 0.5, 1.0, 3, 64, 11).unwrap();
        let b = TensorSketch::new(5, 0.5, 1.0, 3, 64, 11).unwrap();
        let x = [0.1, -0.2, 0.3, 0.4, -0.5];
        assert_eq!(a.transform(&x).unwrap(), b.transform(&x).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn bad_parameters() {
        assert!(matches!(
            TensorSketch::new(3, 1.0, 1.0, 0, 8, 0),
            Err(ClassifierError::BadDegree(0))
        ));
        assert!(TensorSketch::new(3, 1.0, 1.0, 2, 0, 0).is_err());
        assert!(TensorSketch::new(3, -1.0, 1.0, 2, 8, 0).is_err());
        let ts = TensorSketch::new(3, 1.0, 1.0, 2, 8, 0).unwrap();
        assert!(matches!(
            ts.transform(&[1.0]),
            Err(ClassifierError::WidthMismatch { expected: 3, actual: 1 })
        ));
    }
}
