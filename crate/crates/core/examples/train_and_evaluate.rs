// Train all three model kinds on a synthetic corpus, then compare them on
// the held-out patients.
//
// `cargo run --release --example train_and_evaluate`

use std::error::Error;

use mammoscreen::config::RunConfig;
use mammoscreen::metrics::compare_reports;
use mammoscreen::pipeline::{report, synth, train, SynthOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let (meta, feats) = synth(&SynthOptions::with_corpus_ratio(2000, 2.0, 3), dir.path())?;

    let mut artifacts = Vec::new();
    for model in ["logistic", "svm", "dnn"] {
        let out = dir.path().join(model);
        let toml = format!(
            "seed = 3\nmodel = \"{model}\"\n\n[data]\nmetadata = {:?}\nfeatures = {:?}\noutput = {:?}\n",
            meta, feats, out
        );
        let config = RunConfig::from_toml_str(&toml, &[])?;
        let outcome = train(&config)?;
        println!(
            "{model}: {} iterations, {} train / {} validation images",
            outcome.iterations, outcome.train_examples, outcome.validation_examples
        );
        artifacts.push(outcome.artifact);
    }

    let rows = report(&artifacts, None)?;
    compare_reports(&rows, std::io::stdout())?;
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
