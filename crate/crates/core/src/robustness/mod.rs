//! Robustness: how far saliency scores drift when the input is perturbed.
//!
//! For each token `k` of the original explanation `X`, `rel(k)` says whether
//! the token survives in the perturbed explanation `X'`, and
//! `d(k) = |X[k] - X'[k]·rel(k)|`. An instance's AD is the mean of `d(k)` over
//! the `K` original tokens; a cell's MAD is the mean AD. Lower is better.

mod perturb;

pub use perturb::{
    generate_perturbations, Lexicon, PerturbError, PerturbationSpec, PerturbedInput, Perturber, Strategy,
};

use crate::corpus::{CellKey, CorpusIndex, SaliencyRecord, TokenNormalizer};
use crate::stats::ordered_mean;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RobustnessError {
    #[error("original explanation has no tokens")]
    EmptyOriginal,
    #[error("no average differences to aggregate")]
    NoPairs,
}

/// One original token matched (or not) against the perturbed explanation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedToken {
    pub rel: u8,
    pub original_score: f64,
    /// Score of the matched perturbed token; `None` when `rel == 0`.
    pub perturbed_score: Option<f64>,
}

/// Greedy in-order alignment: each original token takes the first perturbed
/// token with the same normalized text that has not been taken yet.
pub fn align_tokens(original: &SaliencyRecord, perturbed: &SaliencyRecord, normalizer: &TokenNormalizer) -> Vec<AlignedToken> {
    let pert_tokens = normalizer.normalize_all(&perturbed.tokens);
    let mut consumed = vec![false; pert_tokens.len()];
    original
        .tokens
        .iter()
        .zip(&original.scores)
        .map(|(tok, &score)| {
            let norm = normalizer.normalize(tok);
            let hit = pert_tokens
                .iter()
                .enumerate()
                .position(|(j, p)| !consumed[j] && *p == norm);
            match hit {
                Some(j) => {
                    consumed[j] = true;
                    AlignedToken {
                        rel: 1,
                        original_score: score,
                        perturbed_score: Some(perturbed.scores[j]),
                    }
                }
                None => AlignedToken {
                    rel: 0,
                    original_score: score,
                    perturbed_score: None,
                },
            }
        })
        .collect()
}

/// `d = |orig - pert·rel|`.
pub fn element_diff(orig_score: f64, pert_score: f64, rel: u8) -> f64 {
    (orig_score - pert_score * rel as f64).abs()
}

pub fn average_difference(aligned: &[AlignedToken]) -> Result<f64, RobustnessError> {
    if aligned.is_empty() {
        return Err(RobustnessError::EmptyOriginal);
    }
    let total: f64 = aligned
        .iter()
        .map(|a| element_diff(a.original_score, a.perturbed_score.unwrap_or(0.0), a.rel))
        .sum();
    Ok(total / aligned.len() as f64)
}

pub fn mean_average_difference(ads: &[f64]) -> Result<f64, RobustnessError> {
    ordered_mean(ads).ok_or(RobustnessError::NoPairs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessResult {
    pub per_instance: BTreeMap<String, f64>,
    pub mad: f64,
    pub n_pairs: usize,
}

/// MAD per cell and perturbation strategy. Strategies are never pooled.
pub fn evaluate(index: &CorpusIndex) -> BTreeMap<CellKey, BTreeMap<String, RobustnessResult>> {
    let normalizer = index.normalizer;
    let ads: Vec<(usize, f64)> = index
        .robustness_pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let aligned = align_tokens(&index.records[pair.original], &index.records[pair.perturbed], &normalizer);
            (i, average_difference(&aligned).expect("records have at least one token"))
        })
        .collect();

    let mut grouped: BTreeMap<CellKey, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
    for (i, ad) in ads {
        let pair = &index.robustness_pairs[i];
        grouped
            .entry(pair.cell.clone())
            .or_default()
            .entry(pair.strategy.clone())
            .or_default()
            .insert(pair.instance_id.clone(), ad);
    }
    grouped
        .into_iter()
        .map(|(cell, by_strategy)| {
            let results = by_strategy
                .into_iter()
                .map(|(strategy, per_instance)| {
                    let values: Vec<f64> = per_instance.values().copied().collect();
                    let mad = mean_average_difference(&values).expect("nonempty group");
                    (
                        strategy,
                        RobustnessResult {
                            n_pairs: values.len(),
                            per_instance,
                            mad,
                        },
                    )
                })
                .collect();
            (cell, results)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Variant;
    use proptest::prelude::*;

    fn rec(tokens: &[&str], scores: &[f64], variant: Variant) -> SaliencyRecord {
        SaliencyRecord {
            instance_id: "i".into(),
            dataset: "d".into(),
            model: "m".into(),
            method: "x".into(),
            variant,
            predicted_label: "pos".into(),
            target_label: "pos".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            scores: scores.to_vec(),
            target_score: None,
        }
    }

    fn rels(orig: &[&str], pert: &[&str]) -> Vec<u8> {
        let o = rec(orig, &vec![0.0; orig.len()], Variant::Original);
        let p = rec(pert, &vec![0.0; pert.len()], Variant::Perturbed("t".into()));
        align_tokens(&o, &p, &TokenNormalizer::default()).iter().map(|a| a.rel).collect()
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(rels(&["a", "b", "c"], &["a", "b"]), [1, 1, 0]);
        assert_eq!(rels(&["a", "a"], &["a"]), [1, 0]);
        assert_eq!(rels(&["a", "b", "a"], &["b", "a", "a"]), [1, 1, 1]);
        assert_eq!(rels(&["x", "y"], &["x", "y"]), [1, 1]);
    }

    #[test]
    fn duplicate_matching_takes_first_unconsumed() {
        let o = rec(&["a", "a"], &[0.5, 0.2], Variant::Original);
        let p = rec(&["a", "a"], &[0.1, 0.3], Variant::Perturbed("t".into()));
        let aligned = align_tokens(&o, &p, &TokenNormalizer::default());
        assert_eq!(aligned[0].perturbed_score, Some(0.1));
        assert_eq!(aligned[1].perturbed_score, Some(0.3));
    }

    #[test]
    fn element_diff_examples() {
        assert!((element_diff(0.5, 0.4, 1) - 0.1).abs() < 1e-15);
        assert_eq!(element_diff(0.3, 123.0, 0), 0.3);
        assert_eq!(element_diff(0.7, 0.7, 1), 0.0);
    }

    #[test]
    fn ad_example() {
        let o = rec(&["a", "b", "c"], &[0.5, 0.3, 0.2], Variant::Original);
        let p = rec(&["a", "b"], &[0.45, 0.35], Variant::Perturbed("remove".into()));
        let aligned = align_tokens(&o, &p, &TokenNormalizer::default());
        // d = [0.05, 0.05, 0.2]
        let ad = average_difference(&aligned).unwrap();
        assert!((ad - 0.1).abs() < 1e-15, "{ad}");
        assert_eq!(average_difference(&align_tokens(&o, &o, &TokenNormalizer::default())).unwrap(), 0.0);
    }

    #[test]
    fn all_removed_is_mean_abs() {
        let o = rec(&["a", "b"], &[0.5, -0.3], Variant::Original);
        let p = rec(&["z"], &[9.0], Variant::Perturbed("t".into()));
        let ad = average_difference(&align_tokens(&o, &p, &TokenNormalizer::default())).unwrap();
        assert!((ad - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mean_average_difference(&[0.1]).unwrap(), 0.1);
        assert!((mean_average_difference(&[0.0, 0.2]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mean_average_difference(&[]), Err(RobustnessError::NoPairs));
        assert_eq!(average_difference(&[]), Err(RobustnessError::EmptyOriginal));
    }

    proptest! {
        #[test]
        fn ad_nonnegative_and_scale_equivariant(
            scores in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..16),
            drop in prop::collection::vec(any::<bool>(), 16),
            // powers of two keep the scaling exact
            exp in -8i32..8,
        ) {
            let tokens: Vec<String> = (0..scores.len()).map(|i| format!("w{i}")).collect();
            let keep: Vec<usize> = (0..scores.len()).filter(|&i| !drop[i]).collect();
            let c = 2f64.powi(exp);
            let build = |scale: f64| {
                let o = SaliencyRecord {
                    tokens: tokens.clone(),
                    scores: scores.iter().map(|s| s.0 * scale).collect(),
                    ..rec(&["a"], &[0.0], Variant::Original)
                };
                let p = SaliencyRecord {
                    tokens: keep.iter().map(|&i| tokens[i].clone()).collect(),
                    scores: keep.iter().map(|&i| scores[i].1 * scale).collect(),
                    ..rec(&["a"], &[0.0], Variant::Perturbed("t".into()))
                };
                average_difference(&align_tokens(&o, &p, &TokenNormalizer::default())).unwrap()
            };
            let base = build(1.0);
            prop_assert!(base >= 0.0);
            prop_assert_eq!(build(c), base * c);
        }

        #[test]
        fn ad_zero_iff_identical(scores in prop::collection::vec(-5.0f64..5.0, 1..10), bump in 0usize..10) {
            let tokens: Vec<String> = (0..scores.len()).map(|i| format!("w{i}")).collect();
            let o = SaliencyRecord { tokens: tokens.clone(), scores: scores.clone(), ..rec(&["a"], &[0.0], Variant::Original) };
            prop_assert_eq!(average_difference(&align_tokens(&o, &o, &TokenNormalizer::default())).unwrap(), 0.0);
            let mut changed = scores.clone();
            let i = bump % changed.len();
            changed[i] += 0.5;
            let p = SaliencyRecord { tokens, scores: changed, ..rec(&["a"], &[0.0], Variant::Perturbed("t".into())) };
            prop_assert!(average_difference(&align_tokens(&o, &p, &TokenNormalizer::default())).unwrap() > 0.0);
        }
    }
}
