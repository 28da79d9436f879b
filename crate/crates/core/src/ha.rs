//! Human-reasoning agreement: rank-exact average precision between an
//! explanation's token ranking and a human rationale, and its mean over a cell.
//!
//! `rel(k)` is 1 only when both lists hold the same token *at rank k*; a token
//! that appears elsewhere in the human list does not count. `n` is the length
//! of the human rationale, and XAI rankings shorter than `n` contribute
//! `rel = 0` at the missing ranks.

use crate::corpus::{CellKey, CorpusIndex};
use crate::ranking::{rank_tokens, RankBy};
use crate::stats::ordered_mean;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HaError {
    #[error("human ranking is empty")]
    EmptyHumanRanking,
    #[error("rank {k} outside 1..={n}")]
    RankOutOfRange { k: usize, n: usize },
    #[error("no average precision values to aggregate")]
    NoInstances,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaResult {
    pub per_instance: BTreeMap<String, f64>,
    pub map_score: f64,
    pub n_evaluated: usize,
}

/// 1 when rank `k` (1-based) holds the same token in both lists. Both lists
/// must already be normalized.
pub fn rank_relevance<S: AsRef<str>, T: AsRef<str>>(xai_rank: &[S], human_rank: &[T], k: usize) -> Result<u8, HaError> {
    if k == 0 || k > human_rank.len() {
        return Err(HaError::RankOutOfRange { k, n: human_rank.len() });
    }
    Ok(match xai_rank.get(k - 1) {
        Some(tok) if tok.as_ref() == human_rank[k - 1].as_ref() => 1,
        _ => 0,
    })
}

/// `AP = Σ_k P(k)·rel(k) / n` with `P(k)` the fraction of ranks `1..=k` that match.
pub fn average_precision<S: AsRef<str>, T: AsRef<str>>(xai_rank: &[S], human_rank: &[T]) -> Result<f64, HaError> {
    let n = human_rank.len();
    if n == 0 {
        return Err(HaError::EmptyHumanRanking);
    }
    let mut matched = 0usize;
    let mut total = 0.0;
    for k in 1..=n {
        let rel = rank_relevance(xai_rank, human_rank, k)?;
        matched += rel as usize;
        let precision = matched as f64 / k as f64;
        total += precision * rel as f64;
    }
    Ok(total / n as f64)
}

/// Mean of per-instance AP values, summed in the order given.
pub fn mean_average_precision(aps: &[f64]) -> Result<f64, HaError> {
    ordered_mean(aps).ok_or(HaError::NoInstances)
}

/// HA for every cell with at least one (explanation, rationale) pair.
pub fn evaluate(index: &CorpusIndex, rank_by: RankBy) -> BTreeMap<CellKey, HaResult> {
    let normalizer = index.normalizer;
    let scored: Vec<(&CellKey, &str, f64)> = index
        .ha_items
        .par_iter()
        .map(|item| {
            let record = &index.records[item.record];
            let rationale = &index.rationales[&item.rationale];
            let human = normalizer.normalize_all(&rationale.ranked_tokens);
            let ranked = rank_tokens(record, &normalizer, rank_by);
            let ap = average_precision(&ranked.ordered_tokens, &human).expect("rationales are nonempty by construction");
            (&item.cell, item.instance_id.as_str(), ap)
        })
        .collect();

    let mut per_cell: BTreeMap<CellKey, BTreeMap<String, f64>> = BTreeMap::new();
    for (cell, instance, ap) in scored {
        per_cell.entry(cell.clone()).or_default().insert(instance.to_string(), ap);
    }
    per_cell
        .into_iter()
        .map(|(cell, per_instance)| {
            let aps: Vec<f64> = per_instance.values().copied().collect();
            let map_score = mean_average_precision(&aps).expect("cell has at least one item");
            let result = HaResult {
                n_evaluated: aps.len(),
                per_instance,
                map_score,
            };
            (cell, result)
        })
        .collect()
}
