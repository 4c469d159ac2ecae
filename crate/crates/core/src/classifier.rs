//! What the evaluation harness needs from a trained model, and the
//! versioned JSON envelope models are stored in.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FeatureValue;
use crate::table::DecisionTableModel;
use crate::tree::DecisionTreeModel;

pub const MODEL_FORMAT: &str = "dfp-model";
pub const MODEL_VERSION: u32 = 1;

/// Class probabilities aligned with the model's class list.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub probabilities: Vec<f64>,
}

impl ClassDistribution {
    /// Normalize non-negative weights; an all-zero input stays all-zero.
    pub fn normalized(mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in &mut weights {
                *w /= total;
            }
        }
        ClassDistribution { probabilities: weights }
    }

    pub fn point(n_classes: usize, class: usize) -> Self {
        let mut probabilities = vec![0.0; n_classes];
        probabilities[class] = 1.0;
        ClassDistribution { probabilities }
    }

    /// Index of the most probable class; ties go to the lowest index, which
    /// is the lexicographically first class.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("vector has {got} values, model expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("dataset schema does not match the model's schema")]
    SchemaMismatch,
}

/// A trained model that maps schema-aligned vectors to class probabilities.
pub trait Classifier {
    fn kind(&self) -> ModelKind;
    fn schema(&self) -> &[String];
    fn schema_fingerprint(&self) -> &str;
    fn classes(&self) -> &[String];
    fn distribution(&self, values: &[FeatureValue]) -> Result<ClassDistribution, ClassifyError>;

    /// Most probable class label.
    fn predict(&self, values: &[FeatureValue]) -> Result<&str, ClassifyError> {
        let d = self.distribution(values)?;
        Ok(&self.classes()[d.argmax()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    J48,
    Dtable,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::J48 => "j48",
            ModelKind::Dtable => "dtable",
        })
    }
}

impl Classifier for DecisionTreeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::J48
    }

    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn distribution(&self, values: &[FeatureValue]) -> Result<ClassDistribution, ClassifyError> {
        self.classify(values)
    }
}

impl Classifier for DecisionTableModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Dtable
    }

    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn distribution(&self, values: &[FeatureValue]) -> Result<ClassDistribution, ClassifyError> {
        self.classify(values)
    }
}

/// Either kind of trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Model {
    J48(DecisionTreeModel),
    Dtable(DecisionTableModel),
}

impl Model {
    pub fn as_classifier(&self) -> &dyn Classifier {
        match self {
            Model::J48(m) => m,
            Model::Dtable(m) => m,
        }
    }
}

/// How the training rows were drawn, so evaluation can hold out the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub dataset: String,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
    pub train_instances: usize,
    /// SHA-256 of the data file the model was trained from.
    pub data_sha256: String,
    /// Features kept by `--top-k`, if it was used.
    pub selected_features: Option<Vec<String>>,
}

/// The on-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingInfo>,
    #[serde(flatten)]
    pub model: Model,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a model document (format `{0}`)")]
    Format(String),
    #[error("unsupported model version {found} (supported: {MODEL_VERSION})")]
    Version { found: u32 },
    #[error("malformed model document at line {line}, column {column}: {msg}")]
    Malformed { line: usize, column: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelEnvelope {
    pub fn new(model: Model, training: Option<TrainingInfo>) -> Self {
        ModelEnvelope {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            training,
            model,
        }
    }
}

pub fn save_model<W: Write>(envelope: &ModelEnvelope, mut sink: W) -> Result<(), ModelIoError> {
    serde_json::to_writer_pretty(&mut sink, envelope).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn malformed(e: serde_json::Error) -> ModelIoError {
    ModelIoError::Malformed {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    }
}

pub fn load_model<R: Read>(mut source: R) -> Result<ModelEnvelope, ModelIoError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    // check the header fields before committing to the full layout
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(&text).map_err(malformed)?;
    if header.format != MODEL_FORMAT {
        return Err(ModelIoError::Format(header.format));
    }
    if header.version != MODEL_VERSION {
        return Err(ModelIoError::Version { found: header.version });
    }
    serde_json::from_str(&text).map_err(malformed)
}
