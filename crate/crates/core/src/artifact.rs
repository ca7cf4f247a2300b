//! Binary model artifacts.
//!
//! Layout (all integers little endian):
//!
//! | bytes          | content                                  |
//! |----------------|------------------------------------------|
//! | 4              | magic `MMDL`                             |
//! | 4              | format version, `u32`                    |
//! | 4              | header length `h`, `u32`                 |
//! | `h`            | JSON header                              |
//! | 0..3           | zero padding to a multiple of 4          |
//! | rest           | parameter blob, `f32` values             |
//!
//! The header lists named sections of the blob by element offset and count.
//! See `docs/artifact-format.md` for the section names per model kind.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    Calibration, Classifier, ClassifierError, Fusion, LogisticConfig, LogisticModel, SketchSvm,
    SvmConfig, TensorSketch, TwoBranchDnn,
};
use crate::config::{ModelKind, RunConfig};
use crate::dataset::AgeStats;
use crate::numcore::{DenseLayer, NumError, Sequential};

pub const MAGIC: &[u8; 4] = b"MMDL";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 12;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("not a model artifact")]
    BadMagic,
    #[error("artifact format version {found}, this build reads {FORMAT_VERSION}")]
    ArtifactVersionMismatch { found: u32 },
    #[error("artifact truncated")]
    Truncated,
    #[error("artifact header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("section {name}: {reason}")]
    Section { name: String, reason: String },
    #[error("artifact header declares a {declared} model but holds {actual} parameters")]
    KindMismatch { declared: &'static str, actual: &'static str },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Everything needed to rebuild a model besides its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Logistic {
        config: LogisticConfig,
    },
    Svm {
        config: SvmConfig,
        input_dim: usize,
        sketch_seed: u64,
        lambda: f64,
    },
    Dnn {
        fusion: Fusion,
        image_dim: usize,
    },
}

impl Hyperparameters {
    fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Logistic { .. } => ModelKind::Logistic,
            Hyperparameters::Svm { .. } => ModelKind::Svm,
            Hyperparameters::Dnn { .. } => ModelKind::Dnn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    /// Element offset into the blob.
    pub offset: usize,
    pub count: usize,
}

/// Where a model came from: the run configuration (without the output
/// directory) and digests of the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: RunConfig,
    pub metadata_sha256: String,
    pub features_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub kind: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub iterations: usize,
    pub age_stats: AgeStats,
    pub sections: Vec<Section>,
    pub provenance: Provenance,
}

/// A decoded artifact.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub header: ArtifactHeader,
    pub model: Classifier,
}

/// Header fields supplied by the caller; kind, hyperparameters and sections
/// are derived from the model.
#[derive(Debug, Clone)]
pub struct ArtifactInfo {
    pub seed: u64,
    pub iterations: usize,
    pub age_stats: AgeStats,
    pub provenance: Provenance,
}

struct BlobWriter {
    values: Vec<f32>,
    sections: Vec<Section>,
}

impl BlobWriter {
    fn push(&mut self, name: impl Into<String>, data: &[f64]) {
        self.sections.push(Section {
            name: name.into(),
            offset: self.values.len(),
            count: data.len(),
        });
        self.values.extend(data.iter().map(|&v| v as f32));
    }
}

fn push_branch(blob: &mut BlobWriter, prefix: &str, net: &Sequential) {
    for (l, layer) in net.layers().iter().enumerate() {
        blob.push(format!("{prefix}.{l}.weights"), layer.weights());
        blob.push(format!("{prefix}.{l}.bias"), layer.bias());
    }
}

/// Serializes a model. Parameters are stored as `f32`.
pub fn encode(model: &Classifier, info: &ArtifactInfo) -> Vec<u8> {
    let mut blob = BlobWriter {
        values: Vec::new(),
        sections: Vec::new(),
    };
    let hyperparameters = match model {
        Classifier::Logistic(m) => {
            blob.push("w", &m.w);
            blob.push("w0", &[m.w0]);
            Hyperparameters::Logistic { config: m.config }
        }
        Classifier::Svm(m) => {
            blob.push("w", &m.w);
            blob.push("b", &[m.b]);
            blob.push("calibration", &[m.calibration.a, m.calibration.c]);
            Hyperparameters::Svm {
                config: m.config,
                input_dim: m.sketch.input_dim(),
                sketch_seed: m.sketch.seed(),
                lambda: m.lambda,
            }
        }
        Classifier::Dnn(m) => {
            push_branch(&mut blob, "image", m.image_branch());
            push_branch(&mut blob, "meta", m.meta_branch());
            Hyperparameters::Dnn {
                fusion: m.fusion(),
                image_dim: m.image_dim(),
            }
        }
    };
    let header = ArtifactHeader {
        kind: hyperparameters.kind(),
        hyperparameters,
        seed: info.seed,
        iterations: info.iterations,
        age_stats: info.age_stats,
        sections: blob.sections,
        provenance: info.provenance.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + 3 + 4 * blob.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.resize(out.len().next_multiple_of(4), 0);
    for v in blob.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct BlobReader<'a> {
    blob: &'a [u8],
    sections: &'a [Section],
}

impl BlobReader<'_> {
    fn get(&self, name: &str, expected: usize) -> Result<Vec<f64>, ArtifactError> {
        let fail = |reason: String| ArtifactError::Section {
            name: name.to_string(),
            reason,
        };
        let s = self
            .sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| fail("missing".into()))?;
        if s.count != expected {
            return Err(fail(format!("{} values, expected {expected}", s.count)));
        }
        let start = s.offset.checked_mul(4).ok_or_else(|| fail("offset overflows".into()))?;
        let end = s
            .count
            .checked_mul(4)
            .and_then(|n| n.checked_add(start))
            .filter(|&end| end <= self.blob.len())
            .ok_or_else(|| fail("extends past the end of the artifact".into()))?;
        Ok(self.blob[start..end]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect())
    }

    fn branch(&self, prefix: &str, template: &Sequential) -> Result<Sequential, ArtifactError> {
        let layers = template
            .layers()
            .iter()
            .enumerate()
            .map(|(l, t)| {
                let w = self.get(&format!("{prefix}.{l}.weights"), t.weights().len())?;
                let b = self.get(&format!("{prefix}.{l}.bias"), t.bias().len())?;
                Ok(DenseLayer::from_parts(t.in_dim(), t.out_dim(), w, b, t.activation())?)
            })
            .collect::<Result<Vec<_>, ArtifactError>>()?;
        Ok(Sequential::new(layers)?)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, ArtifactError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(ArtifactError::Truncated)
}

/// Parses an artifact and rebuilds its model.
pub fn decode(bytes: &[u8]) -> Result<Artifact, ArtifactError> {
    if bytes.len() < 4 {
        return Err(ArtifactError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    let version = read_u32(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(ArtifactError::ArtifactVersionMismatch { found: version });
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_end = PREAMBLE.checked_add(header_len).ok_or(ArtifactError::Truncated)?;
    let json = bytes.get(PREAMBLE..header_end).ok_or(ArtifactError::Truncated)?;
    let header: ArtifactHeader = serde_json::from_slice(json)?;
    let blob_start = header_end.next_multiple_of(4);
    let blob = bytes.get(blob_start..).ok_or(ArtifactError::Truncated)?;
    if blob.len() % 4 != 0 {
        return Err(ArtifactError::Truncated);
    }
    if header.kind != header.hyperparameters.kind() {
        return Err(ArtifactError::KindMismatch {
            declared: header.kind.as_str(),
            actual: header.hyperparameters.kind().as_str(),
        });
    }
    let reader = BlobReader {
        blob,
        sections: &header.sections,
    };
    let model = match &header.hyperparameters {
        Hyperparameters::Logistic { config } => {
            let w0 = reader.get("w0", 1)?[0];
            let n = reader
                .sections
                .iter()
                .find(|s| s.name == "w")
                .map_or(0, |s| s.count);
            Classifier::Logistic(LogisticModel {
                w: reader.get("w", n)?,
                w0,
                config: *config,
            })
        }
        Hyperparameters::Svm {
            config,
            input_dim,
            sketch_seed,
            lambda,
        } => {
            let sketch = TensorSketch::new(
                *input_dim,
                config.gamma,
                config.coef0,
                config.degree,
                config.sketch_dim,
                *sketch_seed,
            )?;
            let cal = reader.get("calibration", 2)?;
            Classifier::Svm(SketchSvm {
                sketch,
                w: reader.get("w", config.sketch_dim)?,
                b: reader.get("b", 1)?[0],
                lambda: *lambda,
                calibration: Calibration { a: cal[0], c: cal[1] },
                config: *config,
            })
        }
        Hyperparameters::Dnn { fusion, image_dim } => {
            let template = TwoBranchDnn::with_image_dim(*image_dim, *fusion, 0);
            let image = reader.branch("image", template.image_branch())?;
            let meta = reader.branch("meta", template.meta_branch())?;
            Classifier::Dnn(TwoBranchDnn::from_branches(image, meta, *fusion)?)
        }
    };
    Ok(Artifact { header, model })
}
