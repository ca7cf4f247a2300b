//! `mammo`: command-line front end of the screening pipeline.
//!
//! Exit codes: 0 success, 1 partial or runtime failure, 2 usage or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mammoscreen::config::RunConfig;
use mammoscreen::metrics::compare_reports;
use mammoscreen::pipeline::{self, BatchSummary, EvalSplit, PipelineError, SynthOptions, DECODER_ENV};

#[derive(Parser)]
#[command(name = "mammo", version, about = "Screening mammography pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of DICOM files to graymaps with JSON sidecars.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Run configuration supplying `external_decoder`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JPEG 2000 decoder command with {input} and {output} placeholders.
        /// Overrides the environment and the configuration.
        #[arg(long)]
        decoder: Option<String>,
    },
    /// Normalize, orient and resize converted graymaps to 512×512.
    Preprocess { input: PathBuf, output: PathBuf },
    /// Write a seeded synthetic corpus (metadata.csv, features.bin).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5470)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value_t = 100)]
        informative: usize,
        /// Positive images; by default the screening corpus rate.
        #[arg(long)]
        positives: Option<usize>,
    },
    /// Train the configured model; writes model.mmdl and history.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a configuration key, e.g. `--set optimizer.max_iters=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score an artifact on its held-out split (or on all data).
    Evaluate {
        artifact: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// Score every example instead of the validation split.
        #[arg(long)]
        all: bool,
        #[arg(long, requires = "features")]
        metadata: Option<PathBuf>,
        #[arg(long, requires = "metadata")]
        features: Option<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `image_id,probability` for every image.
    Predict {
        artifact: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare artifacts on their validation splits.
    Report {
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, PipelineError> {
    Ok(match out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn finish_batch(summary: &BatchSummary) -> ExitCode {
    for (input, err) in &summary.failed {
        eprintln!("failed {}: {err}", input.display());
    }
    println!("{}", summary.line());
    if summary.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn decoder(flag: Option<String>, config: Option<&Path>) -> Result<Option<String>, PipelineError> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(cmd) = std::env::var(DECODER_ENV) {
        if !cmd.is_empty() {
            return Ok(Some(cmd));
        }
    }
    match config {
        Some(path) => Ok(RunConfig::load(path, &[])?.external_decoder),
        None => Ok(None),
    }
}

fn run(command: Command) -> Result<ExitCode, PipelineError> {
    match command {
        Command::Convert {
            input,
            output,
            config,
            decoder: flag,
        } => {
            let decoder = decoder(flag, config.as_deref())?;
            let summary = pipeline::convert_dir(&input, &output, decoder.as_deref())?;
            Ok(finish_batch(&summary))
        }
        Command::Preprocess { input, output } => Ok(finish_batch(&pipeline::preprocess_dir(&input, &output)?)),
        Command::Synth {
            out,
            seed,
            n,
            separation,
            informative,
            positives,
        } => {
            let mut opts = SynthOptions::with_corpus_ratio(n, separation, seed);
            opts.informative = informative;
            if let Some(p) = positives {
                opts.positives = p;
            }
            let (meta, feat) = pipeline::synth(&opts, &out)?;
            println!(
                "{} images, {} positive: {} {}",
                opts.n,
                opts.positives,
                meta.display(),
                feat.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { config, overrides } => {
            let config = RunConfig::load(&config, &overrides)?;
            let outcome = pipeline::train(&config)?;
            println!(
                "{} iterations on {} examples ({} held out): {}",
                outcome.iterations,
                outcome.train_examples,
                outcome.validation_examples,
                outcome.artifact.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            artifact,
            threshold,
            all,
            metadata,
            features,
            out,
        } => {
            let a = pipeline::load_artifact(&artifact)?;
            let split = if all { EvalSplit::All } else { EvalSplit::Validation };
            let data = metadata.as_deref().zip(features.as_deref());
            let report = pipeline::evaluate_artifact(&a, split, threshold, data)?;
            compare_reports(&[(a.header.kind.as_str().to_string(), report)], sink(&out)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict {
            artifact,
            metadata,
            features,
            out,
        } => {
            let a = pipeline::load_artifact(&artifact)?;
            let rows = pipeline::predict(&a, &metadata, &features)?;
            let mut csv = csv::Writer::from_writer(sink(&out)?);
            csv.write_record(["image_id", "probability"])?;
            for (id, p) in rows {
                csv.write_record([id, p.to_string()])?;
            }
            csv.flush().map_err(|e| PipelineError::Data(e.to_string()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report {
            artifacts,
            threshold,
            out,
        } => {
            let rows = pipeline::report(&artifacts, threshold)?;
            compare_reports(&rows, sink(&out)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
