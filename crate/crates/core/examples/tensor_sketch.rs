// Compare the Tensor-Sketch feature map with the exact polynomial kernel.
//
// `cargo run --release --example tensor_sketch`

use std::error::Error;

use mammoscreen::classifiers::{exact_kernel, TensorSketch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn unit(dim: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *r)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (dim, gamma, coef0, degree) = (64, 1.0, 1.0, 3);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let x = unit(dim, &mut r);
    let z = unit(dim, &mut r);
    let exact = exact_kernel(&x, &z, gamma, coef0, degree);
    println!("exact kernel {exact:.4}");
    // each seed is one unbiased estimate; its spread shrinks as D grows
    let seeds = 400;
    for sketch_dim in [64, 256, 1024, 4096] {
        let estimates = (0..seeds)
            .map(|seed| {
                let ts = TensorSketch::new(dim, gamma, coef0, degree, sketch_dim, seed)?;
                let (a, b) = (ts.transform(&x)?, ts.transform(&z)?);
                Ok(a.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>())
            })
            .collect::<Result<Vec<f64>, Box<dyn Error>>>()?;
        let mean = estimates.iter().sum::<f64>() / seeds as f64;
        let var = estimates.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        println!(
            "D = {sketch_dim:4}: one sketch has sd {:.3}; mean of {seeds} is {mean:.4} ± {:.4}",
            var.sqrt(),
            (var / seeds as f64).sqrt()
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
