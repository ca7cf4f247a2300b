//! Run configuration: a TOML document with a fixed schema plus `key=value`
//! overrides. Unknown keys are rejected and `seed` is mandatory.
//!
//! ```toml
//! seed = 7
//! model = "dnn"            # logistic | svm | dnn
//! threshold = 0.5
//!
//! [data]
//! metadata = "synth/metadata.csv"
//! features = "synth/features.bin"
//! output = "runs/dnn"
//! val_fraction = 0.2
//!
//! [imbalance]
//! mode = "class_weights"   # none | class_weights | sbs | undersample | oversample | smote
//!
//! [optimizer]
//! learning_rate = 0.0003
//! max_iters = 1000
//!
//! [dnn]
//! fusion = "logit_mean"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{Fusion, LogisticConfig, SvmConfig};
use crate::dataset::EXAMPLE_DIM;
use crate::numcore::{AdamConfig, ClassWeights, StopRule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("conflicting settings: {0}")]
    Conflict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Logistic,
    Svm,
    Dnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Svm => "svm",
            ModelKind::Dnn => "dnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceMode {
    None,
    #[default]
    ClassWeights,
    Sbs,
    Undersample,
    Oversample,
    Smote,
}

impl ImbalanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ImbalanceMode::None => "none",
            ImbalanceMode::ClassWeights => "class_weights",
            ImbalanceMode::Sbs => "sbs",
            ImbalanceMode::Undersample => "undersample",
            ImbalanceMode::Oversample => "oversample",
            ImbalanceMode::Smote => "smote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub metadata: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

fn default_val_fraction() -> f64 {
    0.2
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            metadata: None,
            features: None,
            output: None,
            val_fraction: default_val_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceConfig {
    #[serde(default)]
    pub mode: ImbalanceMode,
    /// Target minority/majority ratio for the resampling modes.
    #[serde(default = "one")]
    pub ratio: f64,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    /// Synthetic examples to add; by default enough to reach `ratio`.
    #[serde(default)]
    pub smote_new: Option<usize>,
    /// `[negative, positive]`; inverse class frequency when absent.
    #[serde(default)]
    pub class_weights: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

fn default_smote_k() -> usize {
    5
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        ImbalanceConfig {
            mode: ImbalanceMode::default(),
            ratio: 1.0,
            smote_k: default_smote_k(),
            smote_new: None,
            class_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub eval_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let stop = StopRule::default();
        OptimizerConfig {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 64,
            max_iters: stop.max_iters,
            patience: stop.patience,
            min_delta: stop.min_delta,
            eval_every: stop.eval_every,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            max_iters: self.max_iters,
            patience: self.patience,
            min_delta: self.min_delta,
            eval_every: self.eval_every,
            grad_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticSection {
    pub c: f64,
}

impl Default for LogisticSection {
    fn default() -> Self {
        LogisticSection { c: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmSection {
    pub c: f64,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: u32,
    pub sketch_dim: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmConfig::default();
        SvmSection {
            c: d.c,
            gamma: 1.0 / EXAMPLE_DIM as f64,
            coef0: d.coef0,
            degree: d.degree,
            sketch_dim: d.sketch_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnnSection {
    pub fusion: Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Command template with `{input}` and `{output}` placeholders.
    #[serde(default)]
    pub external_decoder: Option<String>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub imbalance: ImbalanceConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub logistic: LogisticSection,
    #[serde(default)]
    pub svm: SvmSection,
    #[serde(default)]
    pub dnn: DnnSection,
}

fn default_threshold() -> f64 {
    0.5
}

/// Sets `dotted.key = value` in `table`. The value is read as a TOML value
/// and falls back to a plain string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut current = table;
    for part in parts {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses a document, applies overrides in order and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = table.try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.threshold) {
            return invalid(format!("threshold {} outside [0, 1]", self.threshold));
        }
        let f = self.data.val_fraction;
        if !(f > 0.0 && f < 1.0) {
            return invalid(format!("data.val_fraction {f} outside (0, 1)"));
        }
        let imb = &self.imbalance;
        if imb.class_weights.is_some() && imb.mode != ImbalanceMode::ClassWeights {
            return Err(ConfigError::Conflict(format!(
                "imbalance.class_weights is set but imbalance.mode is {}",
                imb.mode.as_str()
            )));
        }
        if let Some([n, p]) = imb.class_weights {
            ClassWeights::new(n, p).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if imb.mode == ImbalanceMode::Sbs && self.model == ModelKind::Logistic {
            return Err(ConfigError::Conflict(
                "stratified batches need a mini-batch model; logistic regression is full-batch".into(),
            ));
        }
        if !(imb.ratio > 0.0 && imb.ratio.is_finite()) {
            return invalid(format!("imbalance.ratio {}", imb.ratio));
        }
        if imb.mode == ImbalanceMode::Smote && imb.smote_k == 0 {
            return invalid("imbalance.smote_k must be positive".into());
        }
        self.optimizer
            .adam()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.optimizer.batch_size < 2 {
            return invalid("optimizer.batch_size must be at least 2".into());
        }
        if self.optimizer.eval_every == 0 {
            return invalid("optimizer.eval_every must be positive".into());
        }
        for (name, c) in [("logistic.c", self.logistic.c), ("svm.c", self.svm.c)] {
            if !(c > 0.0 && c.is_finite()) {
                return invalid(format!("{name} must be positive"));
            }
        }
        let s = &self.svm;
        if s.degree < 1 || s.sketch_dim < 1 || !(s.gamma > 0.0) || !(s.coef0 >= 0.0) {
            return invalid("svm needs degree ≥ 1, sketch_dim ≥ 1, gamma > 0, coef0 ≥ 0".into());
        }
        Ok(())
    }

    pub fn logistic_config(&self, class_weights: ClassWeights) -> LogisticConfig {
        LogisticConfig {
            c: self.logistic.c,
            class_weights,
        }
    }

    pub fn svm_config(&self, class_weights: ClassWeights) -> SvmConfig {
        SvmConfig {
            c: self.svm.c,
            gamma: self.svm.gamma,
            coef0: self.svm.coef0,
            degree: self.svm.degree,
            sketch_dim: self.svm.sketch_dim,
            class_weights,
            batch_size: self.optimizer.batch_size,
            stratified: self.imbalance.mode == ImbalanceMode::Sbs,
        }
    }

    /// Copy with the output directory removed, as recorded in artifacts.
    pub fn provenance_echo(&self) -> RunConfig {
        let mut echo = self.clone();
        echo.data.output = None;
        echo
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, ConfigError> {
        field
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid(format!("data.{name} is required")))
    }
}
