//! Contrastivity: KL divergence between the feature-importance distributions
//! an explainer assigns to two different classes of the same input.
//!
//! Scores are turned into distributions by `p_i = (|s_i| + ε) / Σ_j (|s_j| + ε)`,
//! which keeps every entry strictly positive so the divergence stays finite.

use crate::corpus::{CellKey, CorpusIndex};
use crate::stats::ordered_mean;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastMode {
    /// KL between the target-class and contrast-class attributions.
    #[default]
    PerClass,
    /// KL between the positive and negative parts of one signed attribution.
    SignSplit,
}

impl fmt::Display for ContrastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContrastMode::PerClass => "per_class",
            ContrastMode::SignSplit => "sign_split",
        })
    }
}

impl FromStr for ContrastMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_class" => Ok(ContrastMode::PerClass),
            "sign_split" => Ok(ContrastMode::SignSplit),
            other => Err(format!("unknown contrastivity mode {other:?} (expected per_class|sign_split)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    /// Natural log, result in nats.
    #[default]
    #[serde(rename = "e")]
    Natural,
    #[serde(rename = "2")]
    Two,
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Natural => "e",
            LogBase::Two => "2",
        })
    }
}

impl FromStr for LogBase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e" | "natural" | "nats" => Ok(LogBase::Natural),
            "2" | "bits" => Ok(LogBase::Two),
            other => Err(format!("unknown log base {other:?} (expected e|2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContrastivityError {
    #[error("empty score vector")]
    Empty,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no KL values to aggregate")]
    NoInstances,
}

/// Strictly positive probability vector summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceDistribution {
    pub probs: Vec<f64>,
    /// Set when the input carried no mass and the uniform fallback was used.
    pub uniform_fallback: bool,
}

pub fn to_distribution(scores: &[f64], epsilon: f64) -> Result<ImportanceDistribution, ContrastivityError> {
    if scores.is_empty() {
        return Err(ContrastivityError::Empty);
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ContrastivityError::BadEpsilon(epsilon));
    }
    if scores.iter().all(|&s| s == 0.0) {
        log::warn!("all-zero importance vector; using uniform distribution");
        let u = 1.0 / scores.len() as f64;
        return Ok(ImportanceDistribution {
            probs: vec![u; scores.len()],
            uniform_fallback: true,
        });
    }
    let smoothed: Vec<f64> = scores.iter().map(|s| s.abs() + epsilon).collect();
    let total: f64 = smoothed.iter().sum();
    Ok(ImportanceDistribution {
        probs: smoothed.into_iter().map(|v| v / total).collect(),
        uniform_fallback: false,
    })
}

/// `Σ p_i · log(p_i / q_i)`.
pub fn kl_divergence(
    p: &ImportanceDistribution,
    q: &ImportanceDistribution,
    base: LogBase,
) -> Result<f64, ContrastivityError> {
    if p.probs.len() != q.probs.len() {
        return Err(ContrastivityError::LengthMismatch(p.probs.len(), q.probs.len()));
    }
    let nats: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    let value = match base {
        LogBase::Natural => nats,
        LogBase::Two => nats / std::f64::consts::LN_2,
    };
    // Gibbs' inequality; rounding can leave a tiny negative residue
    Ok(value.max(0.0))
}

/// Target and contrast sides for one instance, as score vectors.
#[derive(Debug, Clone, Copy)]
pub struct ContrastInput<'a> {
    pub target: &'a [f64],
    /// Contrast-class scores in per-class mode; `None` in sign-split mode.
    pub contrast: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceContrast {
    pub kl: f64,
    pub warnings: Vec<String>,
}

pub fn instance_contrastivity(
    input: ContrastInput<'_>,
    mode: ContrastMode,
    epsilon: f64,
    base: LogBase,
) -> Result<InstanceContrast, ContrastivityError> {
    let mut warnings = Vec::new();
    let (p, q) = match (mode, input.contrast) {
        (ContrastMode::PerClass, Some(contrast)) => (to_distribution(input.target, epsilon)?, to_distribution(contrast, epsilon)?),
        _ => {
            let pos: Vec<f64> = input.target.iter().map(|s| s.max(0.0)).collect();
            let neg: Vec<f64> = input.target.iter().map(|s| (-s).max(0.0)).collect();
            (to_distribution(&pos, epsilon)?, to_distribution(&neg, epsilon)?)
        }
    };
    if p.uniform_fallback {
        warnings.push("target side carries no importance mass; used uniform distribution".to_string());
    }
    if q.uniform_fallback {
        warnings.push("contrast side carries no importance mass; used uniform distribution".to_string());
    }
    Ok(InstanceContrast {
        kl: kl_divergence(&p, &q, base)?,
        warnings,
    })
}

pub fn aggregate_contrastivity(values: &[f64]) -> Result<f64, ContrastivityError> {
    ordered_mean(values).ok_or(ContrastivityError::NoInstances)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastivityResult {
    pub per_instance: BTreeMap<String, f64>,
    pub mean_kl: f64,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

pub fn evaluate(index: &CorpusIndex, mode: ContrastMode, epsilon: f64, base: LogBase) -> BTreeMap<CellKey, ContrastivityResult> {
    let computed: Vec<(usize, Result<InstanceContrast, ContrastivityError>)> = index
        .contrast_items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let target = &index.records[item.target].scores;
            let contrast = item.contrast.map(|c| index.records[c].scores.as_slice());
            let input = ContrastInput { target, contrast };
            (i, instance_contrastivity(input, mode, epsilon, base))
        })
        .collect();

    let mut grouped: BTreeMap<CellKey, (BTreeMap<String, f64>, Vec<String>)> = BTreeMap::new();
    for (i, outcome) in computed {
        let item = &index.contrast_items[i];
        let entry = grouped.entry(item.cell.clone()).or_default();
        match outcome {
            Ok(c) => {
                entry.0.insert(item.instance_id.clone(), c.kl);
                entry.1.extend(c.warnings.into_iter().map(|w| format!("{}: {w}", item.instance_id)));
            }
            Err(e) => entry.1.push(format!("{}: skipped: {e}", item.instance_id)),
        }
    }
    grouped
        .into_iter()
        .filter(|(_, (per_instance, _))| !per_instance.is_empty())
        .map(|(cell, (per_instance, warnings))| {
            let values: Vec<f64> = per_instance.values().copied().collect();
            let mean_kl = aggregate_contrastivity(&values).expect("nonempty");
            (
                cell,
                ContrastivityResult {
                    per_instance,
                    mean_kl,
                    warnings,
                },
            )
        })
        .collect()
}
