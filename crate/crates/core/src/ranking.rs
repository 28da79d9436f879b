//! Deterministic token rankings from saliency scores.

use crate::corpus::{SaliencyRecord, TokenNormalizer};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Which value a token is ranked by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    /// Signed score; strongly negative evidence ranks last.
    #[default]
    Raw,
    /// Magnitude of the score.
    Abs,
}

impl fmt::Display for RankBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankBy::Raw => "raw",
            RankBy::Abs => "abs",
        })
    }
}

impl FromStr for RankBy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(RankBy::Raw),
            "abs" => Ok(RankBy::Abs),
            other => Err(format!("unknown rank_by {other:?} (expected raw|abs)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankingError {
    #[error("truncation length must be at least 1")]
    ZeroLength,
}

/// Token positions sorted by descending score; equal scores keep their
/// original relative order.
pub fn argsort_descending(scores: &[f64], rank_by: RankBy) -> Vec<usize> {
    let key = |i: usize| match rank_by {
        RankBy::Raw => scores[i],
        RankBy::Abs => scores[i].abs(),
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so ties stay in position order
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    order
}

/// Tokens of one explanation, most salient first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedExplanation<'a> {
    /// Normalized tokens, rank 1 first.
    pub ordered_tokens: Vec<String>,
    pub source: &'a SaliencyRecord,
}

impl RankedExplanation<'_> {
    pub fn instance_id(&self) -> &str {
        &self.source.instance_id
    }

    pub fn len(&self) -> usize {
        self.ordered_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_tokens.is_empty()
    }
}

pub fn rank_tokens<'a>(record: &'a SaliencyRecord, normalizer: &TokenNormalizer, rank_by: RankBy) -> RankedExplanation<'a> {
    let ordered_tokens = argsort_descending(&record.scores, rank_by)
        .into_iter()
        .map(|i| normalizer.normalize(&record.tokens[i]))
        .collect();
    RankedExplanation {
        ordered_tokens,
        source: record,
    }
}

/// The first `min(n, len)` ranked tokens. Callers treat ranks beyond the
/// returned slice as non-matching.
pub fn truncate_to<'r>(ranked: &'r RankedExplanation<'_>, n: usize) -> Result<&'r [String], RankingError> {
    if n == 0 {
        return Err(RankingError::ZeroLength);
    }
    Ok(&ranked.ordered_tokens[..n.min(ranked.len())])
}
