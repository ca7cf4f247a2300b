use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;

use super::{create_dir, sha256_file, write_file, PipelineError};
use crate::artifact::{encode, ArtifactInfo, Provenance};
use crate::classifiers::{Classifier, DnnRegime, LogisticModel, SketchSvm, TwoBranchDnn};
use crate::config::{ImbalanceMode, ModelKind, RunConfig};
use crate::dataset::{
    assemble_examples, load_features, load_metadata, random_oversample, random_undersample,
    smote_interpolate, split_by_patient, AgeStats, CaseRecord, Example, FeatureTable,
};
use crate::numcore::{ClassWeights, LossHistory};

pub const ARTIFACT_FILE: &str = "model.mmdl";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug)]
pub struct TrainOutcome {
    pub artifact: PathBuf,
    pub history: PathBuf,
    pub iterations: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
}

/// Train and validation examples as every command derives them: records
/// split by patient with the run seed, age range fitted on the train side.
pub(crate) struct SplitData {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub age_stats: AgeStats,
}

pub(crate) fn examples_for(records: &[CaseRecord], features: &FeatureTable, stats: Option<AgeStats>) -> Result<(Vec<Example>, AgeStats), PipelineError> {
    let ids: HashSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    let table = features.filter(|id| ids.contains(id));
    Ok(assemble_examples(records, &table, stats)?)
}

pub(crate) fn split_data(
    records: Vec<CaseRecord>,
    features: &FeatureTable,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitData, PipelineError> {
    let (train_recs, val_recs) = split_by_patient(records, val_fraction, seed)?;
    let (train, age_stats) = examples_for(&train_recs, features, None)?;
    let (validation, _) = examples_for(&val_recs, features, Some(age_stats))?;
    Ok(SplitData {
        train,
        validation,
        age_stats,
    })
}

/// Applies a resampling mode; class weights are handled by the caller.
fn resample(config: &RunConfig, train: Vec<Example>) -> Result<Vec<Example>, PipelineError> {
    let imb = &config.imbalance;
    Ok(match imb.mode {
        ImbalanceMode::Undersample => random_undersample(&train, imb.ratio, config.seed)?,
        ImbalanceMode::Oversample => random_oversample(&train, imb.ratio, config.seed)?,
        ImbalanceMode::Smote => {
            let pos = train.iter().filter(|e| e.label).count();
            let (minority, majority) = if 2 * pos <= train.len() {
                (pos, train.len() - pos)
            } else {
                (train.len() - pos, pos)
            };
            let n_new = imb.smote_new.unwrap_or_else(|| {
                ((imb.ratio * majority as f64).round() as usize).saturating_sub(minority)
            });
            let extra = smote_interpolate(&train, imb.smote_k, n_new, config.seed)?;
            let mut all = train;
            all.extend(extra);
            all
        }
        ImbalanceMode::None | ImbalanceMode::ClassWeights | ImbalanceMode::Sbs => train,
    })
}

fn class_weights(config: &RunConfig, train: &[Example]) -> Result<ClassWeights, PipelineError> {
    Ok(match (config.imbalance.mode, config.imbalance.class_weights) {
        (ImbalanceMode::ClassWeights, Some([n, p])) => {
            ClassWeights::new(n, p).map_err(crate::classifiers::ClassifierError::from)?
        }
        (ImbalanceMode::ClassWeights, None) => ClassWeights::inverse_frequency(train.iter().map(|e| e.label))
            .map_err(crate::classifiers::ClassifierError::from)?,
        _ => ClassWeights::UNIFORM,
    })
}

/// `iteration,train_loss,val_loss`, one row per executed iteration; the
/// validation column is empty where no evaluation happened.
pub fn write_history(history: &LossHistory, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "iteration,train_loss,val_loss")?;
    let mut val = history.validation.iter().peekable();
    for (i, loss) in history.train.iter().enumerate() {
        let iteration = i + 1;
        write!(out, "{iteration},{loss},")?;
        if let Some((_, v)) = val.next_if(|(t, _)| *t == iteration) {
            write!(out, "{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Trains the configured model and writes the artifact and loss history to
/// the output directory.
pub fn train(config: &RunConfig) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    let meta_path = config.require(&config.data.metadata, "metadata")?;
    let feat_path = config.require(&config.data.features, "features")?;
    let out_dir = config.require(&config.data.output, "output")?;

    let records = load_metadata(meta_path)?;
    let features = load_features(feat_path)?;
    let provenance = Provenance {
        config: config.provenance_echo(),
        metadata_sha256: sha256_file(meta_path)?,
        features_sha256: sha256_file(feat_path)?,
    };
    let data = split_data(records, &features, config.data.val_fraction, config.seed)?;
    if data.validation.is_empty() || data.train.is_empty() {
        return Err(PipelineError::Data("split left one side without examples".into()));
    }
    let train_set = resample(config, data.train)?;
    let weights = class_weights(config, &train_set)?;
    let adam = config.optimizer.adam();
    let stop = config.optimizer.stop_rule();
    let val = data.validation.as_slice();

    let (model, history) = match config.model {
        ModelKind::Logistic => {
            let (m, h) = LogisticModel::train(&train_set, config.logistic_config(weights), adam, &stop, Some(val))?;
            (Classifier::Logistic(m), h)
        }
        ModelKind::Svm => {
            let (m, h) = SketchSvm::train(&train_set, config.svm_config(weights), &stop, Some(val), config.seed)?;
            (Classifier::Svm(m), h)
        }
        ModelKind::Dnn => {
            let regime = if config.imbalance.mode == ImbalanceMode::Sbs {
                DnnRegime::Stratified
            } else {
                DnnRegime::Shuffled { class_weights: weights }
            };
            let mut m = TwoBranchDnn::new(config.dnn.fusion, config.seed);
            let h = m.train(
                &train_set,
                val,
                regime,
                adam,
                &stop,
                config.optimizer.batch_size,
                config.seed,
            )?;
            (Classifier::Dnn(m), h)
        }
    };

    create_dir(out_dir)?;
    let info = ArtifactInfo {
        seed: config.seed,
        iterations: history.train.len(),
        age_stats: data.age_stats,
        provenance,
    };
    let artifact = out_dir.join(ARTIFACT_FILE);
    write_file(&artifact, &encode(&model, &info))?;
    let mut csv = Vec::new();
    write_history(&history, &mut csv).expect("writing to memory");
    let history_path = out_dir.join(HISTORY_FILE);
    write_file(&history_path, &csv)?;
    Ok(TrainOutcome {
        artifact,
        history: history_path,
        iterations: history.train.len(),
        train_examples: train_set.len(),
        validation_examples: val.len(),
    })
}
