//! Line-delimited JSON readers and writers for the interchange files.
//!
//! Every reader exists in two forms: a strict `parse_*` that rejects the whole
//! file on the first violation, and a `validate_*` that keeps going and
//! collects one [`Diagnostic`] per bad line.

use super::normalize::TokenNormalizer;
use super::record::{AttentionRecord, AttentionWeights, HumanRationale, RecordKey, SaliencyRecord, Variant};
use serde::Deserialize;
use serde_json::Value;
use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// What was wrong with one line.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("length mismatch: {tokens} tokens, {scores} scores")]
    LengthMismatch { tokens: usize, scores: usize },
    #[error("empty token list")]
    EmptyTokens,
    #[error("non-finite score at index {index}")]
    NonFiniteScore { index: usize },
    #[error("non-finite target_score")]
    NonFiniteTargetScore,
    #[error("unknown variant tag {0}")]
    UnknownVariant(String),
    #[error("duplicate record key {0}")]
    DuplicateKey(String),
    #[error("empty ranking")]
    EmptyRanking,
    #[error("duplicate token {0:?} after normalization")]
    DuplicateToken(String),
    #[error("ragged layers: row {row} has {found} values, expected {expected}")]
    RaggedLayers { row: usize, expected: usize, found: usize },
    #[error("both layers and avg_attention present")]
    BothAttentionForms,
    #[error("neither layers nor avg_attention present")]
    NoAttentionForm,
    #[error("empty attention vector")]
    EmptyAttention,
    #[error("attention weight at layer {layer}, token {token} is negative or non-finite")]
    InvalidAttention { layer: usize, token: usize },
    #[error("header line must be the first record")]
    MisplacedHeader,
    #[error("attention has {attention} tokens but explanation {explanation} has {tokens}")]
    TokenCountMismatch { attention: usize, explanation: String, tokens: usize },
}

/// A problem at a specific `file:line`.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct Diagnostic {
    pub path: String,
    /// 1-based; 0 when the problem concerns the file as a whole.
    pub line: usize,
    pub kind: RecordError,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path, self.line, self.kind)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(#[from] Diagnostic),
}

pub(crate) fn read_file(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Rewrites bare `NaN`, `Infinity` and `-Infinity` literals (outside strings)
/// into quoted strings so the line still parses and the value can be rejected
/// with a precise message.
fn quote_non_finite(line: &str) -> Cow<'_, str> {
    if !line.contains("NaN") && !line.contains("Infinity") {
        return Cow::Borrowed(line);
    }
    let mut out = String::with_capacity(line.len() + 8);
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        let literal = ["-Infinity", "Infinity", "NaN"].into_iter().find(|lit| rest.starts_with(lit));
        match literal {
            Some(lit) => {
                out.push('"');
                out.push_str(lit);
                out.push('"');
                rest = &rest[lit.len()..];
            }
            None => {
                if c == '"' {
                    in_string = true;
                }
                out.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    Cow::Owned(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Number(f64),
    Other(serde::de::IgnoredAny),
}

impl RawNumber {
    fn finite(&self) -> Option<f64> {
        match self {
            RawNumber::Number(v) if v.is_finite() => Some(*v),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct RawSaliency {
    instance_id: String,
    dataset: String,
    model: String,
    method: String,
    variant: Value,
    predicted_label: String,
    target_label: String,
    tokens: Vec<String>,
    scores: Vec<RawNumber>,
    #[serde(default)]
    target_score: Option<RawNumber>,
}

fn parse_variant(value: &Value) -> Result<Variant, RecordError> {
    match value {
        Value::String(s) if s == "original" => Ok(Variant::Original),
        Value::Object(map) if map.len() == 1 => {
            let (tag, inner) = map.iter().next().expect("len checked");
            match (tag.as_str(), inner) {
                ("perturbed", Value::String(t)) if !t.is_empty() => Ok(Variant::Perturbed(t.clone())),
                ("seed", Value::Number(n)) if n.as_i64().is_some() => Ok(Variant::Seed(n.as_i64().unwrap())),
                _ => Err(RecordError::UnknownVariant(value.to_string())),
            }
        }
        _ => Err(RecordError::UnknownVariant(value.to_string())),
    }
}

fn json_error(e: serde_json::Error) -> RecordError {
    RecordError::Json(e.to_string())
}

/// Parses and checks one explanation line (without the cross-line duplicate check).
pub fn parse_saliency_line(line: &str) -> Result<SaliencyRecord, RecordError> {
    let raw: RawSaliency = serde_json::from_str(&quote_non_finite(line)).map_err(json_error)?;
    let variant = parse_variant(&raw.variant)?;
    if raw.tokens.len() != raw.scores.len() {
        return Err(RecordError::LengthMismatch {
            tokens: raw.tokens.len(),
            scores: raw.scores.len(),
        });
    }
    if raw.tokens.is_empty() {
        return Err(RecordError::EmptyTokens);
    }
    let scores = raw
        .scores
        .iter()
        .enumerate()
        .map(|(index, s)| s.finite().ok_or(RecordError::NonFiniteScore { index }))
        .collect::<Result<Vec<_>, _>>()?;
    let target_score = match raw.target_score {
        None => None,
        Some(s) => Some(s.finite().ok_or(RecordError::NonFiniteTargetScore)?),
    };
    Ok(SaliencyRecord {
        instance_id: raw.instance_id,
        dataset: raw.dataset,
        model: raw.model,
        method: raw.method,
        variant,
        predicted_label: raw.predicted_label,
        target_label: raw.target_label,
        tokens: raw.tokens,
        scores,
        target_score,
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads explanation records, collecting a diagnostic per bad line. Records
/// returned are only the valid, non-duplicate ones.
pub fn validate_saliency_str(text: &str, path: &str) -> (Vec<SaliencyRecord>, Vec<Diagnostic>) {
    let mut seen: HashSet<RecordKey> = HashSet::new();
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (line, content) in lines(text) {
        let result = parse_saliency_line(content).and_then(|rec| {
            if seen.insert(rec.key()) {
                Ok(rec)
            } else {
                Err(RecordError::DuplicateKey(rec.key().to_string()))
            }
        });
        match result {
            Ok(rec) => records.push(rec),
            Err(kind) => diagnostics.push(Diagnostic {
                path: path.to_string(),
                line,
                kind,
            }),
        }
    }
    (records, diagnostics)
}

/// Strict explanation parser: the first bad line fails the whole file.
pub fn parse_saliency_str(text: &str, path: &str) -> Result<Vec<SaliencyRecord>, Diagnostic> {
    let mut seen: HashSet<RecordKey> = HashSet::new();
    let mut records = Vec::new();
    for (line, content) in lines(text) {
        let diag = |kind| Diagnostic {
            path: path.to_string(),
            line,
            kind,
        };
        let rec = parse_saliency_line(content).map_err(diag)?;
        if !seen.insert(rec.key()) {
            return Err(diag(RecordError::DuplicateKey(rec.key().to_string())));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn parse_saliency(path: &Path) -> Result<Vec<SaliencyRecord>, CorpusError> {
    let text = read_file(path)?;
    Ok(parse_saliency_str(&text, &path.display().to_string())?)
}

#[derive(Deserialize)]
struct RawRationale {
    instance_id: String,
    dataset: String,
    ranked_tokens: Vec<String>,
}

pub fn parse_rationale_line(line: &str, normalizer: &TokenNormalizer) -> Result<HumanRationale, RecordError> {
    let raw: RawRationale = serde_json::from_str(line).map_err(json_error)?;
    if raw.ranked_tokens.is_empty() {
        return Err(RecordError::EmptyRanking);
    }
    let mut seen = HashSet::new();
    for token in &raw.ranked_tokens {
        let norm = normalizer.normalize(token);
        if !seen.insert(norm.clone()) {
            return Err(RecordError::DuplicateToken(norm));
        }
    }
    Ok(HumanRationale {
        instance_id: raw.instance_id,
        dataset: raw.dataset,
        ranked_tokens: raw.ranked_tokens,
    })
}

pub fn validate_rationales_str(
    text: &str,
    path: &str,
    normalizer: &TokenNormalizer,
) -> (Vec<HumanRationale>, Vec<Diagnostic>) {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (line, content) in lines(text) {
        match parse_rationale_line(content, normalizer) {
            Ok(r) => records.push(r),
            Err(kind) => diagnostics.push(Diagnostic {
                path: path.to_string(),
                line,
                kind,
            }),
        }
    }
    (records, diagnostics)
}

pub fn parse_rationales_str(
    text: &str,
    path: &str,
    normalizer: &TokenNormalizer,
) -> Result<Vec<HumanRationale>, Diagnostic> {
    lines(text)
        .map(|(line, content)| {
            parse_rationale_line(content, normalizer).map_err(|kind| Diagnostic {
                path: path.to_string(),
                line,
                kind,
            })
        })
        .collect()
}

pub fn parse_rationales(path: &Path, normalizer: &TokenNormalizer) -> Result<Vec<HumanRationale>, CorpusError> {
    let text = read_file(path)?;
    Ok(parse_rationales_str(&text, &path.display().to_string(), normalizer)?)
}

#[derive(Deserialize)]
struct RawAttention {
    instance_id: String,
    model: String,
    seed: i64,
    #[serde(default)]
    layers: Option<Vec<Vec<RawNumber>>>,
    #[serde(default)]
    avg_attention: Option<Vec<RawNumber>>,
}

fn check_attention_row(row: &[RawNumber], layer: usize) -> Result<Vec<f64>, RecordError> {
    row.iter()
        .enumerate()
        .map(|(token, v)| {
            v.finite()
                .filter(|x| *x >= 0.0)
                .ok_or(RecordError::InvalidAttention { layer, token })
        })
        .collect()
}

/// Parsed attention line: either the optional file header or a record.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionLine {
    Header(BTreeMap<String, String>),
    Record(AttentionRecord),
}

pub fn parse_attention_line(line: &str) -> Result<AttentionLine, RecordError> {
    let line = quote_non_finite(line);
    let value: Value = serde_json::from_str(&line).map_err(json_error)?;
    if let Some(header) = value.get("header") {
        let Value::Object(map) = header else {
            return Err(RecordError::Json("header must be an object".into()));
        };
        let fields = map
            .iter()
            .map(|(k, v)| {
                let text = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), text)
            })
            .collect();
        return Ok(AttentionLine::Header(fields));
    }
    let raw: RawAttention = serde_json::from_value(value).map_err(json_error)?;
    let weights = match (raw.layers, raw.avg_attention) {
        (Some(_), Some(_)) => return Err(RecordError::BothAttentionForms),
        (None, None) => return Err(RecordError::NoAttentionForm),
        (Some(layers), None) => {
            let expected = layers.first().map_or(0, Vec::len);
            if expected == 0 {
                return Err(RecordError::EmptyAttention);
            }
            let mut rows = Vec::with_capacity(layers.len());
            for (i, row) in layers.iter().enumerate() {
                if row.len() != expected {
                    return Err(RecordError::RaggedLayers {
                        row: i,
                        expected,
                        found: row.len(),
                    });
                }
                rows.push(check_attention_row(row, i)?);
            }
            AttentionWeights::Layers(rows)
        }
        (None, Some(avg)) => {
            if avg.is_empty() {
                return Err(RecordError::EmptyAttention);
            }
            AttentionWeights::Averaged(check_attention_row(&avg, 0)?)
        }
    };
    Ok(AttentionLine::Record(AttentionRecord {
        instance_id: raw.instance_id,
        model: raw.model,
        seed: raw.seed,
        weights,
    }))
}

/// Contents of an `attention.jsonl` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionFile {
    /// Free-form upstream metadata, e.g. the head/row reduction used.
    pub header: BTreeMap<String, String>,
    pub records: Vec<AttentionRecord>,
    /// 1-based source line of each record, parallel to `records`.
    pub lines: Vec<usize>,
}

fn read_attention(text: &str, path: &str, strict: bool) -> (AttentionFile, Vec<Diagnostic>) {
    let mut file = AttentionFile::default();
    let mut diagnostics = Vec::new();
    let mut first = true;
    for (line, content) in lines(text) {
        let result = parse_attention_line(content).and_then(|parsed| match parsed {
            AttentionLine::Header(_) if !first => Err(RecordError::MisplacedHeader),
            other => Ok(other),
        });
        first = false;
        match result {
            Ok(AttentionLine::Header(h)) => file.header = h,
            Ok(AttentionLine::Record(r)) => {
                file.records.push(r);
                file.lines.push(line);
            }
            Err(kind) => {
                diagnostics.push(Diagnostic {
                    path: path.to_string(),
                    line,
                    kind,
                });
                if strict {
                    break;
                }
            }
        }
    }
    (file, diagnostics)
}

pub fn validate_attention_str(text: &str, path: &str) -> (AttentionFile, Vec<Diagnostic>) {
    read_attention(text, path, false)
}

pub fn parse_attention_str(text: &str, path: &str) -> Result<AttentionFile, Diagnostic> {
    let (file, mut diags) = read_attention(text, path, true);
    match diags.pop() {
        Some(d) => Err(d),
        None => Ok(file),
    }
}

pub fn parse_attention(path: &Path) -> Result<AttentionFile, CorpusError> {
    let text = read_file(path)?;
    Ok(parse_attention_str(&text, &path.display().to_string())?)
}

/// Serializes records one per line. Floats use shortest round-trip formatting.
pub fn write_saliency(records: &[SaliencyRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_rationales(rationales: &[HumanRationale]) -> String {
    let mut out = String::new();
    for r in rationales {
        out.push_str(&serde_json::to_string(r).expect("rationales serialize"));
        out.push('\n');
    }
    out
}

pub fn write_attention(file: &AttentionFile) -> String {
    let mut out = String::new();
    if !file.header.is_empty() {
        let header = serde_json::json!({ "header": file.header });
        out.push_str(&header.to_string());
        out.push('\n');
    }
    for r in &file.records {
        out.push_str(&serde_json::to_string(&r.wire()).expect("attention serializes"));
        out.push('\n');
    }
    out
}
