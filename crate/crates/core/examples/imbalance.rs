// Class-balanced batching and SMOTE on a 2% positive set.
//
// `cargo run --example imbalance`

use std::error::Error;

use mammoscreen::dataset::{class_counts, sbs_quotas, smote_interpolate, stratified_batches, Example};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let examples: Vec<Example> = (0..1000)
        .map(|i| Example {
            x: vec![i as f64, (i % 7) as f64],
            label: i % 50 == 0,
            patient_id: format!("p{i}"),
            image_id: format!("i{i}"),
        })
        .collect();
    let (neg, pos) = class_counts(&examples);
    println!("{neg} negatives, {pos} positives");

    let [q_neg, q_pos] = sbs_quotas(64, [neg, pos]);
    println!("batch of 64 draws {q_neg} negatives and {q_pos} positives");
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let batch = stratified_batches(&labels, 64, 5)?.next().expect("endless");
    let drawn = batch.iter().filter(|&&i| labels[i]).count();
    println!("first batch holds {drawn} positives");

    let synthetic = smote_interpolate(&examples, 5, 30, 5)?;
    println!(
        "SMOTE made {} new positives, first at {:?}",
        synthetic.len(),
        synthetic[0].x
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
