// The two-branch network: layer sizes and the three fusion rules.
//
// `cargo run --example dnn_fusion`

use std::error::Error;

use mammoscreen::classifiers::{Fusion, TwoBranchDnn};
use mammoscreen::dataset::EXAMPLE_DIM;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let net = TwoBranchDnn::new(Fusion::default(), 0);
    println!(
        "{} parameters, per layer {:?}",
        net.parameter_count(),
        net.layer_parameter_counts()
    );
    let x: Vec<f64> = (0..EXAMPLE_DIM).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
    for fusion in [Fusion::LogitMean, Fusion::Mean, Fusion::MeanThenSigmoid] {
        let net = TwoBranchDnn::new(fusion, 0);
        println!("{:>17}: p = {:.4}", fusion.as_str(), net.predict_proba(&x)?);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
