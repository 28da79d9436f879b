use super::normalize::TokenNormalizer;
use super::record::{AttentionRecord, CellKey, HumanRationale, SaliencyRecord, Variant};
use crate::config::Metric;
use crate::contrastivity::ContrastMode;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct IndexConfig {
    pub normalizer: TokenNormalizer,
    /// Skip entries are only recorded for metrics in this set.
    pub metrics: BTreeSet<Metric>,
    pub contrast_mode: ContrastMode,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            normalizer: TokenNormalizer::default(),
            metrics: Metric::ALL.into_iter().collect(),
            contrast_mode: ContrastMode::PerClass,
        }
    }
}

/// An instance that could not be evaluated for one metric.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkipEntry {
    pub metric: Metric,
    #[serde(flatten)]
    pub cell: CellKey,
    pub instance_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaItem {
    pub cell: CellKey,
    pub instance_id: String,
    pub record: usize,
    pub rationale: (String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobustnessPair {
    pub cell: CellKey,
    pub instance_id: String,
    pub strategy: String,
    pub original: usize,
    pub perturbed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPair {
    pub cell: CellKey,
    pub instance_id: String,
    pub seed_a: i64,
    pub seed_b: i64,
    pub record_a: usize,
    pub record_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastItem {
    pub cell: CellKey,
    pub instance_id: String,
    pub target: usize,
    /// Present in per-class mode.
    pub contrast: Option<usize>,
}

/// How the contrast class was chosen for per-class contrastivity.
pub const PAIRING_RUNNER_UP: &str = "runner_up_by_target_score";
pub const PAIRING_LEXICOGRAPHIC: &str = "first_other_label_lexicographic";

/// Immutable, sorted view of a corpus with every metric's units of work
/// materialized. Safe to share across threads.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    /// Sorted by (dataset, model, method, instance_id, variant, target_label).
    pub records: Vec<SaliencyRecord>,
    pub cells: BTreeMap<CellKey, Vec<usize>>,
    /// Keyed by (dataset, instance_id).
    pub rationales: BTreeMap<(String, String), HumanRationale>,
    /// Keyed by (instance_id, model, seed).
    pub attention: BTreeMap<(String, String, i64), AttentionRecord>,
    pub ha_items: Vec<HaItem>,
    pub robustness_pairs: Vec<RobustnessPair>,
    pub seed_pairs: Vec<SeedPair>,
    pub contrast_items: Vec<ContrastItem>,
    pub contrast_pairing: BTreeSet<&'static str>,
    pub skips: Vec<SkipEntry>,
    pub normalizer: TokenNormalizer,
}

/// Picks the record that explains the predicted label, or the only one.
fn primary(records: &[SaliencyRecord], candidates: &[usize]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .find(|&i| records[i].explains_prediction())
        .or(match candidates {
            [only] => Some(*only),
            _ => None,
        })
}

struct Builder<'a> {
    cfg: &'a IndexConfig,
    skips: Vec<SkipEntry>,
}

impl Builder<'_> {
    fn skip(&mut self, metric: Metric, cell: &CellKey, instance: &str, reason: impl Into<String>) {
        if self.cfg.metrics.contains(&metric) {
            self.skips.push(SkipEntry {
                metric,
                cell: cell.clone(),
                instance_id: instance.to_string(),
                reason: reason.into(),
            });
        }
    }
}

/// Builds the index. Input order does not matter; missing partners end up in
/// [`CorpusIndex::skips`] instead of failing the build.
pub fn build_index(
    mut records: Vec<SaliencyRecord>,
    rationales: Vec<HumanRationale>,
    attentions: Vec<AttentionRecord>,
    cfg: &IndexConfig,
) -> CorpusIndex {
    let mut b = Builder { cfg, skips: Vec::new() };

    records.sort_by(|x, y| x.key().cmp(&y.key()));
    let mut deduped: Vec<SaliencyRecord> = Vec::with_capacity(records.len());
    for r in records {
        if deduped.last().is_some_and(|last| last.key() == r.key()) {
            for m in Metric::ALL {
                b.skip(m, &r.cell(), &r.instance_id, format!("duplicate record {} ignored", r.key()));
            }
            continue;
        }
        deduped.push(r);
    }
    let records = deduped;

    let mut rationale_map = BTreeMap::new();
    let mut rationales = rationales;
    rationales.sort_by(|a, b| (&a.dataset, &a.instance_id, &a.ranked_tokens).cmp(&(&b.dataset, &b.instance_id, &b.ranked_tokens)));
    for r in rationales {
        rationale_map.entry((r.dataset.clone(), r.instance_id.clone())).or_insert(r);
    }

    let mut attention_map = BTreeMap::new();
    let mut attentions = attentions;
    attentions.sort_by(|a, b| (&a.instance_id, &a.model, a.seed).cmp(&(&b.instance_id, &b.model, b.seed)));
    for a in attentions {
        attention_map.entry((a.instance_id.clone(), a.model.clone(), a.seed)).or_insert(a);
    }

    let mut cells: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    let mut groups: BTreeMap<(CellKey, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        cells.entry(r.cell()).or_default().push(i);
        groups.entry((r.cell(), r.instance_id.clone())).or_default().push(i);
    }

    let mut index = CorpusIndex {
        normalizer: cfg.normalizer,
        ..CorpusIndex::default()
    };

    for ((cell, instance), members) in &groups {
        let mut originals = Vec::new();
        let mut perturbed: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut seeded: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for &i in members {
            match &records[i].variant {
                Variant::Original => originals.push(i),
                Variant::Perturbed(tag) => perturbed.entry(tag.as_str()).or_default().push(i),
                Variant::Seed(n) => seeded.entry(*n).or_default().push(i),
            }
        }
        let original = primary(&records, &originals);
        if original.is_none() && !originals.is_empty() {
            for m in [Metric::Ha, Metric::Robustness, Metric::Contrastivity] {
                b.skip(m, cell, instance, "no original record explains the predicted label");
            }
        }

        // human agreement
        match original {
            Some(o) => {
                let key = (cell.dataset.clone(), instance.clone());
                if rationale_map.contains_key(&key) {
                    index.ha_items.push(HaItem {
                        cell: cell.clone(),
                        instance_id: instance.clone(),
                        record: o,
                        rationale: key,
                    });
                } else {
                    b.skip(Metric::Ha, cell, instance, "no human rationale");
                }
            }
            None if originals.is_empty() => b.skip(Metric::Ha, cell, instance, "no original record"),
            None => {}
        }

        // robustness
        match original {
            Some(_) if perturbed.is_empty() => b.skip(Metric::Robustness, cell, instance, "no perturbed partner"),
            Some(o) => {
                let target = &records[o].target_label;
                for (tag, cands) in &perturbed {
                    match cands.iter().copied().find(|&p| &records[p].target_label == target) {
                        Some(p) => index.robustness_pairs.push(RobustnessPair {
                            cell: cell.clone(),
                            instance_id: instance.clone(),
                            strategy: tag.to_string(),
                            original: o,
                            perturbed: p,
                        }),
                        None => b.skip(
                            Metric::Robustness,
                            cell,
                            instance,
                            format!("perturbed({tag}) has no record for target label {target}"),
                        ),
                    }
                }
            }
            None if originals.is_empty() && !perturbed.is_empty() => {
                b.skip(Metric::Robustness, cell, instance, "perturbed record without original")
            }
            None => {}
        }

        // consistency
        {
            let seeds: Vec<i64> = seeded.keys().copied().collect();
            if seeds.len() < 2 {
                b.skip(Metric::Consistency, cell, instance, "fewer than two seed variants");
            } else {
                let (seed_a, seed_b) = (seeds[0], seeds[1]);
                if seeds.len() > 2 {
                    b.skip(
                        Metric::Consistency,
                        cell,
                        instance,
                        format!("seeds {:?} ignored; pairing {seed_a} with {seed_b}", &seeds[2..]),
                    );
                }
                let rec_a = primary(&records, &seeded[&seed_a]);
                let rec_b = rec_a.and_then(|a| {
                    seeded[&seed_b]
                        .iter()
                        .copied()
                        .find(|&i| records[i].target_label == records[a].target_label)
                });
                match (rec_a, rec_b) {
                    (Some(a), Some(bb)) => {
                        let missing: Vec<i64> = [seed_a, seed_b]
                            .into_iter()
                            .filter(|s| !attention_map.contains_key(&(instance.clone(), cell.model.clone(), *s)))
                            .collect();
                        let t_a = records[a].tokens.len();
                        let mismatch = [seed_a, seed_b].into_iter().find_map(|s| {
                            attention_map
                                .get(&(instance.clone(), cell.model.clone(), s))
                                .filter(|att| att.token_count() != t_a)
                                .map(|att| (s, att.token_count()))
                        });
                        if !missing.is_empty() {
                            b.skip(
                                Metric::Consistency,
                                cell,
                                instance,
                                format!("no attention for seed(s) {missing:?}"),
                            );
                        } else if let Some((s, t)) = mismatch {
                            b.skip(
                                Metric::Consistency,
                                cell,
                                instance,
                                format!("attention for seed {s} has {t} tokens, explanation has {t_a}"),
                            );
                        } else {
                            index.seed_pairs.push(SeedPair {
                                cell: cell.clone(),
                                instance_id: instance.clone(),
                                seed_a,
                                seed_b,
                                record_a: a,
                                record_b: bb,
                            });
                        }
                    }
                    _ => b.skip(
                        Metric::Consistency,
                        cell,
                        instance,
                        format!("seeds {seed_a} and {seed_b} do not explain a common target label"),
                    ),
                }
            }
        }

        // contrastivity
        match (original, cfg.contrast_mode) {
            (Some(o), ContrastMode::SignSplit) => index.contrast_items.push(ContrastItem {
                cell: cell.clone(),
                instance_id: instance.clone(),
                target: o,
                contrast: None,
            }),
            (Some(o), ContrastMode::PerClass) => {
                let target = &records[o];
                let others: Vec<usize> = originals
                    .iter()
                    .copied()
                    .filter(|&i| records[i].target_label != target.target_label)
                    .collect();
                let scored = !others.is_empty() && others.iter().all(|&i| records[i].target_score.is_some());
                let chosen = if scored {
                    index.contrast_pairing.insert(PAIRING_RUNNER_UP);
                    // max_by keeps the last maximum; reversing makes label order win ties
                    others.iter().rev().copied().max_by(|&x, &y| {
                        records[x].target_score.unwrap().total_cmp(&records[y].target_score.unwrap())
                    })
                } else {
                    if !others.is_empty() {
                        index.contrast_pairing.insert(PAIRING_LEXICOGRAPHIC);
                    }
                    others.first().copied()
                };
                match chosen {
                    Some(c) if records[c].tokens.len() == target.tokens.len() => {
                        index.contrast_items.push(ContrastItem {
                            cell: cell.clone(),
                            instance_id: instance.clone(),
                            target: o,
                            contrast: Some(c),
                        })
                    }
                    Some(c) => b.skip(
                        Metric::Contrastivity,
                        cell,
                        instance,
                        format!(
                            "contrast record for {} has {} tokens, target has {}",
                            records[c].target_label,
                            records[c].tokens.len(),
                            target.tokens.len()
                        ),
                    ),
                    None => b.skip(Metric::Contrastivity, cell, instance, "no contrast-class record"),
                }
            }
            (None, _) if originals.is_empty() => b.skip(Metric::Contrastivity, cell, instance, "no original record"),
            (None, _) => {}
        }
    }

    b.skips.sort();
    b.skips.dedup();
    index.records = records;
    index.cells = cells;
    index.rationales = rationale_map;
    index.attention = attention_map;
    index.skips = b.skips;
    index
}
