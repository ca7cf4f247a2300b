// Probabilistic F1 next to thresholded metrics.
//
// `cargo run --example metrics`

use std::error::Error;

use mammoscreen::metrics::{evaluate, p_f1};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let probs = [0.9, 0.6, 0.4, 0.1, 0.2, 0.3];
    let labels = [true, true, true, false, false, false];
    let report = evaluate(&probs, &labels, 0.5)?;
    println!(
        "pF1 {:.3} (pP {:.3}, pR {:.3}); F1@0.5 {:.3}; AUROC {:?}",
        report.pf1, report.p_precision, report.p_recall, report.f1, report.auroc
    );

    // confident and right scores higher than hedged and right
    let hedged = p_f1(&[0.6, 0.6, 0.4, 0.4], &[true, true, false, false])?;
    let sure = p_f1(&[0.99, 0.99, 0.01, 0.01], &[true, true, false, false])?;
    println!("hedged pF1 {hedged:.3}, confident pF1 {sure:.3}");
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
