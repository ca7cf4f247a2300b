// Write a small seeded corpus and read it back.
//
// `cargo run --example synth_corpus`

use std::error::Error;

use mammoscreen::dataset::{load_features, load_metadata};
use mammoscreen::pipeline::{synth, SynthOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let opts = SynthOptions::with_corpus_ratio(800, 2.0, 7);
    let (meta, feats) = synth(&opts, dir.path())?;

    let records = load_metadata(&meta)?;
    let table = load_features(&feats)?;
    let positives = records.iter().filter(|r| r.cancer).count();
    let patients: std::collections::BTreeSet<_> = records.iter().map(|r| &r.patient_id).collect();
    println!(
        "{} images from {} patients, {positives} positive, {} feature rows",
        records.len(),
        patients.len(),
        table.len()
    );
    let first = &records[0];
    println!(
        "{} {} {}-{} age {:?} implant {}",
        first.image_id,
        first.patient_id,
        first.laterality.as_str(),
        first.view.as_str(),
        first.age,
        first.implant
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
