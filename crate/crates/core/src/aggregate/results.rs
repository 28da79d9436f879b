//! Saved results: the JSONL report is also the format `report` re-renders from.
//!
//! One object per line, tagged by `kind`: a single `metadata` line, then
//! `cell`, `skip`, `warning`, and (derived, ignored on load) `discrepancy`
//! lines.

use super::{CellScores, Discrepancy, MetricTable, MetricWeights, WeightsError, REFERENCE_TOLERANCE};
use crate::corpus::{CellKey, SkipEntry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Stored cws values must match a recomputation to this tolerance.
pub const RECOMPUTE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Invalid { path: String, line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Metadata {
        weights: MetricWeights,
        metadata: BTreeMap<String, String>,
    },
    Cell {
        #[serde(flatten)]
        cell: CellKey,
        #[serde(flatten)]
        scores: CellScores,
    },
    Skip(SkipEntry),
    Warning {
        message: String,
    },
    Discrepancy(Discrepancy),
}

fn push_line(out: &mut String, line: &Line) {
    // serialization of these plain types cannot fail
    out.push_str(&serde_json::to_string(line).expect("serializable line"));
    out.push('\n');
}

/// Serializes a table; deterministic for a fixed table.
pub fn write_results(table: &MetricTable) -> String {
    let mut out = String::new();
    push_line(
        &mut out,
        &Line::Metadata {
            weights: table.weights,
            metadata: table.metadata.clone(),
        },
    );
    for (cell, scores) in &table.cells {
        push_line(
            &mut out,
            &Line::Cell {
                cell: cell.clone(),
                scores: scores.clone(),
            },
        );
    }
    for d in table.discrepancies(REFERENCE_TOLERANCE) {
        push_line(&mut out, &Line::Discrepancy(d));
    }
    for s in &table.skips {
        push_line(&mut out, &Line::Skip(s.clone()));
    }
    for w in &table.warnings {
        push_line(&mut out, &Line::Warning { message: w.clone() });
    }
    out
}

/// Reads a results file back. Cells without a stored cws get one computed;
/// a stored cws that disagrees with its inputs is an error.
pub fn load_results_str(text: &str, path: &str) -> Result<MetricTable, ResultsError> {
    let invalid = |line: usize, message: String| ResultsError::Invalid {
        path: path.to_string(),
        line,
        message,
    };
    let mut table = MetricTable::default();
    let mut seen_metadata = false;
    let mut cells: Vec<(usize, CellKey, CellScores)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| invalid(n, e.to_string()))?;
        match line {
            Line::Metadata { weights, metadata } => {
                if seen_metadata {
                    return Err(invalid(n, "second metadata line".into()));
                }
                weights.validate().map_err(|e: WeightsError| invalid(n, e.to_string()))?;
                seen_metadata = true;
                table.weights = weights;
                table.metadata = metadata;
            }
            Line::Cell { cell, scores } => cells.push((n, cell, scores)),
            Line::Skip(s) => table.skips.push(s),
            Line::Warning { message } => table.warnings.push(message),
            Line::Discrepancy(_) => {}
        }
    }
    if !seen_metadata {
        // bare cell files (hand-written fixtures) use equal weights
        table.weights = MetricWeights::EQUAL;
    }
    for (n, cell, mut scores) in cells {
        let stored = scores.cws;
        scores.recompute_cws(&table.weights).map_err(|e| invalid(n, e.to_string()))?;
        match (stored, scores.cws) {
            (Some(s), Some(c)) if (s - c).abs() > RECOMPUTE_TOLERANCE => {
                return Err(invalid(n, format!("stored cws {s} does not match recomputed {c} for {cell}")));
            }
            (Some(_), None) => return Err(invalid(n, format!("cws given for {cell} but an input metric is missing"))),
            _ => {}
        }
        if table.cells.insert(cell.clone(), scores).is_some() {
            return Err(invalid(n, format!("duplicate cell {cell}")));
        }
    }
    Ok(table)
}

pub fn load_results(path: &Path) -> Result<MetricTable, ResultsError> {
    let text = std::fs::read_to_string(path).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_results_str(&text, &path.display().to_string())
}
