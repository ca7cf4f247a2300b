use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{create_dir, PipelineError};
use crate::dataset::{
    write_features_bin, write_metadata, CaseRecord, FeatureRow, FeatureTable, Laterality, View,
    FEATURE_DIM,
};
use crate::rng;

/// Positive and negative image counts of the full screening corpus.
pub const CORPUS_POSITIVES: usize = 1158;
pub const CORPUS_NEGATIVES: usize = 53_548;

const IMAGES_PER_PATIENT: usize = 4;
const MISSING_AGE_RATE: f64 = 0.02;
const IMPLANT_RATE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub n: usize,
    /// Difference of the class means along each informative coordinate.
    pub separation: f64,
    /// Leading feature coordinates that carry the class signal.
    pub informative: usize,
    pub positives: usize,
    pub seed: u64,
}

impl SynthOptions {
    /// `n` images at the corpus positive rate, `round(n · 1158 / 54706)`.
    pub fn with_corpus_ratio(n: usize, separation: f64, seed: u64) -> Self {
        let total = (CORPUS_POSITIVES + CORPUS_NEGATIVES) as f64;
        SynthOptions {
            n,
            separation,
            informative: 100,
            positives: (n as f64 * CORPUS_POSITIVES as f64 / total).round() as usize,
            seed,
        }
    }
}

/// Writes `metadata.csv` and `features.bin` to `out_dir`.
///
/// Patients own four images (left and right breast, MLO and CC). Cancer is
/// assigned per breast, so positives come in MLO/CC pairs; an odd count puts
/// one lone positive MLO image on an extra breast. Features are unit
/// Gaussians whose first `informative` coordinates are shifted by
/// `±separation/2`. Age and implant status do not depend on the label.
pub fn synth(opts: &SynthOptions, out_dir: &Path) -> Result<(PathBuf, PathBuf), PipelineError> {
    if opts.informative > FEATURE_DIM {
        return Err(PipelineError::Data(format!(
            "{} informative features, at most {FEATURE_DIM}",
            opts.informative
        )));
    }
    if opts.positives > opts.n {
        return Err(PipelineError::Data(format!(
            "{} positives among {} images",
            opts.positives, opts.n
        )));
    }
    let mut r = rng::stream(opts.seed, rng::SYNTH);

    // breasts with both views present, in image order
    let full_breasts: Vec<usize> = (0..opts.n.div_ceil(2)).filter(|b| 2 * b + 1 < opts.n).collect();
    let pairs = opts.positives / 2;
    let lone = opts.positives % 2;
    if pairs + lone > full_breasts.len() {
        return Err(PipelineError::Data("too many positives for the breast count".into()));
    }
    let mut cancer = vec![false; opts.n];
    let chosen = index::sample(&mut r, full_breasts.len(), pairs + lone).into_vec();
    for (k, &pick) in chosen.iter().enumerate() {
        let first = 2 * full_breasts[pick];
        cancer[first] = true;
        if k < pairs {
            cancer[first + 1] = true;
        }
    }

    let n_patients = opts.n.div_ceil(IMAGES_PER_PATIENT);
    let patients: Vec<(Option<f64>, bool)> = (0..n_patients)
        .map(|_| {
            let age = r.random_range(40..=89);
            let missing = r.random_bool(MISSING_AGE_RATE);
            let implant = r.random_bool(IMPLANT_RATE);
            ((!missing).then_some(f64::from(age)), implant)
        })
        .collect();

    let width = 3.max(opts.n.to_string().len());
    let mut records = Vec::with_capacity(opts.n);
    let mut rows = Vec::with_capacity(opts.n);
    for i in 0..opts.n {
        let patient = i / IMAGES_PER_PATIENT;
        let slot = i % IMAGES_PER_PATIENT;
        let image_id = format!("img{i:0width$}");
        let (age, implant) = patients[patient];
        records.push(CaseRecord {
            patient_id: format!("pt{patient:0width$}"),
            image_id: image_id.clone(),
            laterality: if slot < 2 { Laterality::L } else { Laterality::R },
            view: if slot.is_multiple_of(2) { View::Mlo } else { View::Cc },
            age,
            implant,
            cancer: cancer[i],
        });
        let shift = if cancer[i] { opts.separation / 2.0 } else { -opts.separation / 2.0 };
        let values = (0..FEATURE_DIM)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut r);
                (if j < opts.informative { z + shift } else { z }) as f32
            })
            .collect();
        rows.push(FeatureRow { image_id, values });
    }

    create_dir(out_dir)?;
    let meta_path = out_dir.join("metadata.csv");
    let feat_path = out_dir.join("features.bin");
    write_metadata(&meta_path, &records)?;
    write_features_bin(&feat_path, &FeatureTable::new(rows)?)?;
    Ok((meta_path, feat_path))
}
