//! Consistency across two checkpoints of the same architecture trained with
//! different seeds.
//!
//! Per instance, the layer-averaged attention vectors of the two models give a
//! distance `D_A` and their explanation scores give `D_E`. The cell score is
//! Spearman's ρ between the `D_A` and `D_E` sequences over instances.

use crate::corpus::{AttentionRecord, AttentionWeights, CellKey, CorpusIndex, SaliencyRecord};
use crate::stats::{average_ranks, pearson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMeasure {
    #[default]
    Cosine,
    Euclidean,
}

impl fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMeasure::Cosine => "cosine",
            DistanceMeasure::Euclidean => "euclidean",
        })
    }
}

impl FromStr for DistanceMeasure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(DistanceMeasure::Cosine),
            "euclidean" => Ok(DistanceMeasure::Euclidean),
            other => Err(format!("unknown distance {other:?} (expected cosine|euclidean)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cosine distance undefined for two zero vectors")]
    BothZero,
    #[error("explanations tokenize the input differently")]
    TokenMismatch,
    #[error("need at least 2 instances, have {0}")]
    TooFewInstances(usize),
    #[error("{0} distances are all identical; correlation undefined")]
    ZeroVariance(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionSummary {
    pub instance_id: String,
    pub model: String,
    pub seed: i64,
    pub avg_attention: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distances {
    pub d_attention: f64,
    pub d_explanation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistancePair {
    pub instance_id: String,
    pub d_attention: f64,
    pub d_explanation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyResult {
    pub rho: f64,
    pub n_instances: usize,
    pub pairs: Vec<DistancePair>,
}

/// Element-wise mean over layers; pre-averaged records pass through.
pub fn average_attention(record: &AttentionRecord) -> AttentionSummary {
    let avg_attention = match &record.weights {
        AttentionWeights::Averaged(v) => v.clone(),
        AttentionWeights::Layers(rows) => {
            let t = rows.first().map_or(0, Vec::len);
            let mut sum = vec![0.0; t];
            for row in rows {
                for (acc, v) in sum.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let layers = rows.len() as f64;
            sum.into_iter().map(|s| s / layers).collect()
        }
    };
    AttentionSummary {
        instance_id: record.instance_id.clone(),
        model: record.model.clone(),
        seed: record.seed,
        avg_attention,
    }
}

/// Cosine distance `1 - cos(u, v)` or Euclidean distance. With cosine, a
/// single zero vector yields distance 1 (logged).
pub fn vector_distance(u: &[f64], v: &[f64], measure: DistanceMeasure) -> Result<f64, ConsistencyError> {
    if u.len() != v.len() {
        return Err(ConsistencyError::LengthMismatch(u.len(), v.len()));
    }
    match measure {
        DistanceMeasure::Euclidean => Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()),
        DistanceMeasure::Cosine => {
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
            match (nu == 0.0, nv == 0.0) {
                (true, true) => Err(ConsistencyError::BothZero),
                (true, false) | (false, true) => {
                    log::warn!("cosine distance with a zero vector; using 1");
                    Ok(1.0)
                }
                (false, false) => Ok((1.0 - dot / (nu * nv)).max(0.0)),
            }
        }
    }
}

pub fn explanation_distance(
    e_a: &SaliencyRecord,
    e_b: &SaliencyRecord,
    measure: DistanceMeasure,
    normalizer: &crate::corpus::TokenNormalizer,
) -> Result<f64, ConsistencyError> {
    if e_a.tokens.len() != e_b.tokens.len() {
        return Err(ConsistencyError::TokenMismatch);
    }
    let same = e_a
        .tokens
        .iter()
        .zip(&e_b.tokens)
        .all(|(a, b)| normalizer.normalize(a) == normalizer.normalize(b));
    if !same {
        return Err(ConsistencyError::TokenMismatch);
    }
    vector_distance(&e_a.scores, &e_b.scores, measure)
}

/// Spearman's ρ as the Pearson correlation of average ranks.
pub fn spearman_rho(pairs: &[DistancePair]) -> Result<f64, ConsistencyError> {
    if pairs.len() < 2 {
        return Err(ConsistencyError::TooFewInstances(pairs.len()));
    }
    let da: Vec<f64> = pairs.iter().map(|p| p.d_attention).collect();
    let de: Vec<f64> = pairs.iter().map(|p| p.d_explanation).collect();
    if da.iter().all(|&x| x == da[0]) {
        return Err(ConsistencyError::ZeroVariance("attention"));
    }
    if de.iter().all(|&x| x == de[0]) {
        return Err(ConsistencyError::ZeroVariance("explanation"));
    }
    pearson(&average_ranks(&da), &average_ranks(&de)).ok_or(ConsistencyError::ZeroVariance("rank"))
}

/// Per-cell outcome: the result, or why ρ is undefined, plus per-instance
/// problems that dropped instances.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConsistency {
    pub result: Result<ConsistencyResult, ConsistencyError>,
    pub dropped: Vec<(String, ConsistencyError)>,
}

pub fn evaluate(index: &CorpusIndex, measure: DistanceMeasure) -> BTreeMap<CellKey, CellConsistency> {
    let normalizer = index.normalizer;
    let computed: Vec<(usize, Result<Distances, ConsistencyError>)> = index
        .seed_pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let att = |seed| {
                let key = (pair.instance_id.clone(), pair.cell.model.clone(), seed);
                average_attention(&index.attention[&key])
            };
            let (a, b) = (att(pair.seed_a), att(pair.seed_b));
            let distances = vector_distance(&a.avg_attention, &b.avg_attention, measure).and_then(|d_attention| {
                let d_explanation =
                    explanation_distance(&index.records[pair.record_a], &index.records[pair.record_b], measure, &normalizer)?;
                Ok(Distances {
                    d_attention,
                    d_explanation,
                })
            });
            (i, distances)
        })
        .collect();

    let mut grouped: BTreeMap<CellKey, (Vec<DistancePair>, Vec<(String, ConsistencyError)>)> = BTreeMap::new();
    for (i, outcome) in computed {
        let pair = &index.seed_pairs[i];
        let entry = grouped.entry(pair.cell.clone()).or_default();
        match outcome {
            Ok(d) => entry.0.push(DistancePair {
                instance_id: pair.instance_id.clone(),
                d_attention: d.d_attention,
                d_explanation: d.d_explanation,
            }),
            Err(e) => entry.1.push((pair.instance_id.clone(), e)),
        }
    }
    grouped
        .into_iter()
        .map(|(cell, (mut pairs, dropped))| {
            pairs.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
            let result = spearman_rho(&pairs).map(|rho| ConsistencyResult {
                rho,
                n_instances: pairs.len(),
                pairs,
            });
            (cell, CellConsistency { result, dropped })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dp(pairs: &[(f64, f64)]) -> Vec<DistancePair> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, e))| DistancePair {
                instance_id: format!("i{i:04}"),
                d_attention: a,
                d_explanation: e,
            })
            .collect()
    }

    fn layers(rows: Vec<Vec<f64>>) -> AttentionRecord {
        AttentionRecord {
            instance_id: "i".into(),
            model: "m".into(),
            seed: 1,
            weights: AttentionWeights::Layers(rows),
        }
    }

    #[test]
    fn layer_average() {
        let avg = average_attention(&layers(vec![vec![0.2, 0.8], vec![0.4, 0.6]])).avg_attention;
        assert!((avg[0] - 0.3).abs() < 1e-15 && (avg[1] - 0.7).abs() < 1e-15);
        assert_eq!(average_attention(&layers(vec![vec![0.1, 0.9]])).avg_attention, [0.1, 0.9]);
        let pre = AttentionRecord {
            weights: AttentionWeights::Averaged(vec![0.3, 0.7]),
            ..layers(vec![])
        };
        assert_eq!(average_attention(&pre).avg_attention, [0.3, 0.7]);
    }

    #[test]
    fn distances() {
        let u = [0.3, 0.5, 0.2];
        assert!(vector_distance(&u, &u, DistanceMeasure::Cosine).unwrap() < 1e-12);
        assert_eq!(vector_distance(&[1.0, 0.0], &[0.0, 1.0], DistanceMeasure::Cosine).unwrap(), 1.0);
        let d = vector_distance(&[1.0, 1.0], &[1.0, 0.0], DistanceMeasure::Cosine).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.29289).abs() < 1e-5);
        let e = vector_distance(&[1.0, 0.0], &[0.0, 1.0], DistanceMeasure::Euclidean).unwrap();
        assert!((e - 2f64.sqrt()).abs() < 1e-15 && (e - 1.41421).abs() < 1e-5);
        assert_eq!(vector_distance(&[0.0, 0.0], &[1.0, 2.0], DistanceMeasure::Cosine).unwrap(), 1.0);
        assert_eq!(vector_distance(&[0.0], &[0.0], DistanceMeasure::Cosine), Err(ConsistencyError::BothZero));
        assert_eq!(vector_distance(&[0.0], &[0.0, 1.0], DistanceMeasure::Euclidean), Err(ConsistencyError::LengthMismatch(1, 2)));
    }

    #[test]
    fn explanation_distance_requires_same_tokens() {
        let base = SaliencyRecord {
            instance_id: "i".into(),
            dataset: "d".into(),
            model: "m".into(),
            method: "x".into(),
            variant: crate::corpus::Variant::Seed(1),
            predicted_label: "p".into(),
            target_label: "p".into(),
            tokens: vec!["a".into(), "b".into()],
            scores: vec![1.0, 0.0],
            target_score: None,
        };
        let other = SaliencyRecord {
            scores: vec![0.0, 1.0],
            ..base.clone()
        };
        let n = crate::corpus::TokenNormalizer::default();
        assert_eq!(explanation_distance(&base, &base, DistanceMeasure::Euclidean, &n).unwrap(), 0.0);
        let d = explanation_distance(&base, &other, DistanceMeasure::Euclidean, &n).unwrap();
        assert!((d - 1.41421).abs() < 1e-5);
        let retok = SaliencyRecord {
            tokens: vec!["a".into(), "c".into()],
            ..base.clone()
        };
        assert_eq!(explanation_distance(&base, &retok, DistanceMeasure::Cosine, &n), Err(ConsistencyError::TokenMismatch));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman_rho(&dp(&[(0.1, 0.3), (0.4, 0.9), (0.2, 0.5)])).unwrap(), 1.0);
        assert_eq!(spearman_rho(&dp(&[(0.1, 0.9), (0.2, 0.5), (0.3, 0.1)])).unwrap(), -1.0);
        let tied = spearman_rho(&dp(&[(0.1, 0.5), (0.1, 0.3), (0.2, 0.9)])).unwrap();
        // ranks [1.5,1.5,3] vs [2,1,3]: 1.5 / sqrt(1.5 * 2)
        assert!((tied - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((tied - 0.86603).abs() < 1e-5);
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(spearman_rho(&dp(&[(0.1, 0.2)])), Err(ConsistencyError::TooFewInstances(1)));
        assert_eq!(
            spearman_rho(&dp(&[(0.1, 0.2), (0.1, 0.3)])),
            Err(ConsistencyError::ZeroVariance("attention"))
        );
        assert_eq!(
            spearman_rho(&dp(&[(0.1, 0.2), (0.2, 0.2)])),
            Err(ConsistencyError::ZeroVariance("explanation"))
        );
    }

    proptest! {
        #[test]
        fn rho_bounded_and_monotone_invariant(
            pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 3..40),
        ) {
            let pairs = dp(&pts);
            if let Ok(rho) = spearman_rho(&pairs) {
                prop_assert!((-1.0..=1.0).contains(&rho));
                // strictly increasing transforms, applied independently
                let moved = dp(&pts.iter().map(|&(a, e)| (a.exp(), e * e * e + 2.0)).collect::<Vec<_>>());
                prop_assert_eq!(spearman_rho(&moved).unwrap(), rho);
            }
        }

        #[test]
        fn identical_layers_average_exactly(row in prop::collection::vec(0.0f64..1.0, 1..10), l in 1usize..8) {
            let rec = layers(vec![row.clone(); l]);
            // sums of identical values divided by their count can round; powers of two cannot
            if l.is_power_of_two() {
                prop_assert_eq!(average_attention(&rec).avg_attention, row);
            } else {
                for (a, b) in average_attention(&rec).avg_attention.iter().zip(&row) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }

        #[test]
        fn distance_symmetric(u in prop::collection::vec(0.0f64..1.0, 4), v in prop::collection::vec(0.0f64..1.0, 4)) {
            for m in [DistanceMeasure::Cosine, DistanceMeasure::Euclidean] {
                if let (Ok(x), Ok(y)) = (vector_distance(&u, &v, m), vector_distance(&v, &u, m)) {
                    prop_assert_eq!(x, y);
                    prop_assert!(x >= 0.0);
                }
            }
        }
    }
}
