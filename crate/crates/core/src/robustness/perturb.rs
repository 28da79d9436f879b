//! Text perturbations that produce the `X'` inputs handed to external explainers.

use crate::corpus::{SaliencyRecord, TokenNormalizer};
use crate::ranking::{argsort_descending, RankBy};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} must be smaller than the token count {tokens}")]
    KTooLarge { k: usize, tokens: usize },
    #[error("rate {0} outside (0, 1]")]
    BadRate(f64),
    #[error("{text} text tokens but saliency record has {scores} scores")]
    LengthMismatch { text: usize, scores: usize },
    #[error("cannot read lexicon {path}: {source}")]
    Lexicon {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon {path}:{line}: expected two columns")]
    LexiconLine { path: String, line: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Replace the k most salient tokens with the mask token.
    MaskTopK(usize),
    /// Delete the k least salient tokens.
    RemoveBottomK(usize),
    /// Swap a seeded random `rate` fraction of tokens for lexicon synonyms.
    SynonymReplace { lexicon_file: PathBuf, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub strategy: Strategy,
    pub seed: u64,
    pub mask_token: String,
}

impl PerturbationSpec {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        Self {
            strategy,
            seed,
            mask_token: "[MASK]".to_string(),
        }
    }

    /// Tag used for the `strategy` field and the perturbed record variant.
    pub fn tag(&self) -> String {
        match &self.strategy {
            Strategy::MaskTopK(k) => format!("mask_top_k:{k}"),
            Strategy::RemoveBottomK(k) => format!("remove_bottom_k:{k}"),
            Strategy::SynonymReplace { rate, .. } => format!("synonym_replace:{rate}"),
        }
    }

    fn check(&self) -> Result<(), PerturbError> {
        match &self.strategy {
            Strategy::MaskTopK(0) | Strategy::RemoveBottomK(0) => Err(PerturbError::ZeroK),
            Strategy::SynonymReplace { rate, .. } if !(*rate > 0.0 && *rate <= 1.0) => Err(PerturbError::BadRate(*rate)),
            _ => Ok(()),
        }
    }
}

/// Word → synonyms, from a two-column text file (`word synonym` per line,
/// `#` starts a comment). A word may appear on several lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn parse(text: &str, path: &str, normalizer: &TokenNormalizer) -> Result<Self, PerturbError> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            match (cols.next(), cols.next(), cols.next()) {
                (Some(word), Some(syn), None) => entries.entry(normalizer.normalize(word)).or_default().push(syn.to_string()),
                _ => {
                    return Err(PerturbError::LexiconLine {
                        path: path.to_string(),
                        line: i + 1,
                    })
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path, normalizer: &TokenNormalizer) -> Result<Self, PerturbError> {
        let text = std::fs::read_to_string(path).map_err(|source| PerturbError::Lexicon {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string(), normalizer)
    }

    pub fn synonyms(&self, normalized: &str) -> Option<&[String]> {
        self.entries.get(normalized).map(Vec::as_slice)
    }
}

/// One line of `perturbed_inputs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedInput {
    pub instance_id: String,
    pub strategy: String,
    pub seed: u64,
    pub tokens: Vec<String>,
    /// Tokens the synonym strategy wanted to replace but found no entry for.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// FNV-1a, used to derive a per-instance stream from the run seed.
fn instance_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// A spec with its lexicon loaded, reusable across instances.
#[derive(Debug, Clone)]
pub struct Perturber {
    spec: PerturbationSpec,
    lexicon: Option<Lexicon>,
    normalizer: TokenNormalizer,
}

impl Perturber {
    pub fn new(spec: PerturbationSpec, normalizer: TokenNormalizer) -> Result<Self, PerturbError> {
        spec.check()?;
        let lexicon = match &spec.strategy {
            Strategy::SynonymReplace { lexicon_file, .. } => Some(Lexicon::from_file(lexicon_file, &normalizer)?),
            _ => None,
        };
        Ok(Self {
            spec,
            lexicon,
            normalizer,
        })
    }

    pub fn with_lexicon(spec: PerturbationSpec, lexicon: Lexicon, normalizer: TokenNormalizer) -> Result<Self, PerturbError> {
        spec.check()?;
        Ok(Self {
            spec,
            lexicon: Some(lexicon),
            normalizer,
        })
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }

    /// Perturbs `text_tokens` using the saliency of the matching explanation.
    /// Output depends only on the inputs, the seed, and the instance id.
    pub fn generate(&self, text_tokens: &[String], saliency: &SaliencyRecord) -> Result<PerturbedInput, PerturbError> {
        if text_tokens.len() != saliency.scores.len() {
            return Err(PerturbError::LengthMismatch {
                text: text_tokens.len(),
                scores: saliency.scores.len(),
            });
        }
        let n = text_tokens.len();
        let mut warnings = Vec::new();
        let tokens = match &self.spec.strategy {
            Strategy::MaskTopK(k) | Strategy::RemoveBottomK(k) if *k >= n => {
                return Err(PerturbError::KTooLarge { k: *k, tokens: n })
            }
            Strategy::MaskTopK(k) => {
                let order = argsort_descending(&saliency.scores, RankBy::Raw);
                let mut out = text_tokens.to_vec();
                for &i in &order[..*k] {
                    out[i] = self.spec.mask_token.clone();
                }
                out
            }
            Strategy::RemoveBottomK(k) => {
                let order = argsort_descending(&saliency.scores, RankBy::Raw);
                let mut removed = vec![false; n];
                for &i in &order[n - k..] {
                    removed[i] = true;
                }
                text_tokens
                    .iter()
                    .zip(removed)
                    .filter(|(_, r)| !r)
                    .map(|(t, _)| t.clone())
                    .collect()
            }
            Strategy::SynonymReplace { rate, .. } => {
                let lexicon = self.lexicon.as_ref().expect("synonym strategy always carries a lexicon");
                let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ instance_hash(&saliency.instance_id));
                let count = ((rate * n as f64).round() as usize).clamp(1, n);
                let mut positions: Vec<usize> = (0..n).collect();
                positions.shuffle(&mut rng);
                positions.truncate(count);
                positions.sort_unstable();
                let mut out = text_tokens.to_vec();
                for i in positions {
                    let norm = self.normalizer.normalize(&text_tokens[i]);
                    match lexicon.synonyms(&norm) {
                        Some(syns) => out[i] = syns.choose(&mut rng).expect("entries are nonempty").clone(),
                        None => warnings.push(format!(
                            "{}: token {:?} at position {i} not in lexicon",
                            saliency.instance_id, text_tokens[i]
                        )),
                    }
                }
                out
            }
        };
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(PerturbedInput {
            instance_id: saliency.instance_id.clone(),
            strategy: self.spec.tag(),
            seed: self.spec.seed,
            tokens,
            warnings,
        })
    }
}

pub fn generate_perturbations(
    text_tokens: &[String],
    saliency: &SaliencyRecord,
    spec: &PerturbationSpec,
) -> Result<PerturbedInput, PerturbError> {
    Perturber::new(spec.clone(), TokenNormalizer::default())?.generate(text_tokens, saliency)
}
