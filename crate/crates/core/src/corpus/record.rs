use serde::{Deserialize, Serialize};
use std::fmt;

/// Which run of an explainer produced a record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Explanation of the unmodified input.
    Original,
    /// Explanation of a perturbed input; the tag names the perturbation strategy.
    Perturbed(String),
    /// Explanation from a checkpoint trained with the given random seed.
    Seed(i64),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Original => f.write_str("original"),
            Variant::Perturbed(tag) => write!(f, "perturbed({tag})"),
            Variant::Seed(n) => write!(f, "seed({n})"),
        }
    }
}

/// One explanation: per-token saliency for one instance under one model,
/// method, and variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaliencyRecord {
    pub instance_id: String,
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub variant: Variant,
    pub predicted_label: String,
    /// Label the attribution explains.
    pub target_label: String,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    /// Model confidence for `target_label`; used to pick the runner-up class
    /// for contrastivity when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_score: Option<f64>,
}

/// Uniqueness key of a [`SaliencyRecord`] within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub dataset: String,
    pub model: String,
    pub method: String,
    pub instance_id: String,
    pub variant: Variant,
    pub target_label: String,
}

impl SaliencyRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            method: self.method.clone(),
            instance_id: self.instance_id.clone(),
            variant: self.variant.clone(),
            target_label: self.target_label.clone(),
        }
    }

    pub fn cell(&self) -> CellKey {
        CellKey::new(&self.dataset, &self.model, &self.method)
    }

    /// True when this record explains the label the model predicted.
    pub fn explains_prediction(&self) -> bool {
        self.target_label == self.predicted_label
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}/{}",
            self.dataset, self.model, self.method, self.instance_id, self.variant, self.target_label
        )
    }
}

/// One report cell: a method evaluated on one model over one dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub model: String,
    pub method: String,
}

impl CellKey {
    pub fn new(dataset: &str, model: &str, method: &str) -> Self {
        Self {
            dataset: dataset.to_string(),
            model: model.to_string(),
            method: method.to_string(),
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.method, self.model, self.dataset)
    }
}

/// Human-ordered list of the tokens most important to the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRationale {
    pub instance_id: String,
    pub dataset: String,
    /// Most important first.
    pub ranked_tokens: Vec<String>,
}

/// Per-token attention mass, either per layer or already averaged across layers.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionWeights {
    /// L rows of T nonnegative values.
    Layers(Vec<Vec<f64>>),
    /// T values, averaged upstream.
    Averaged(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub instance_id: String,
    pub model: String,
    pub seed: i64,
    pub weights: AttentionWeights,
}

impl AttentionRecord {
    /// Token count T.
    pub fn token_count(&self) -> usize {
        match &self.weights {
            AttentionWeights::Layers(rows) => rows.first().map_or(0, Vec::len),
            AttentionWeights::Averaged(v) => v.len(),
        }
    }
}

/// Serialized form of [`AttentionRecord`]: exactly one of `layers` and
/// `avg_attention` is present.
#[derive(Debug, Serialize)]
pub(crate) struct AttentionWire<'a> {
    pub instance_id: &'a str,
    pub model: &'a str,
    pub seed: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<&'a Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_attention: Option<&'a Vec<f64>>,
}

impl AttentionRecord {
    pub(crate) fn wire(&self) -> AttentionWire<'_> {
        let (layers, avg_attention) = match &self.weights {
            AttentionWeights::Layers(rows) => (Some(rows), None),
            AttentionWeights::Averaged(v) => (None, Some(v)),
        };
        AttentionWire {
            instance_id: &self.instance_id,
            model: &self.model,
            seed: self.seed,
            layers,
            avg_attention,
        }
    }
}
