//! Synthetic corpora whose metric values are known in closed form.
//!
//! Every generator is a pure function of its [`SynthConfig`].

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

use crate::corpus::{
    write_attention, write_rationales, write_saliency, AttentionFile, AttentionRecord, AttentionWeights, HumanRationale,
    SaliencyRecord, Variant,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const SYNTH_DATASET: &str = "synth";
pub const SYNTH_MODEL: &str = "synth-model";
/// Perturbation tag used by the robustness generator.
pub const GAUSSIAN_STRATEGY: &str = "gaussian_noise";
/// Constant filling tokens past the first two in the consistency generator.
const TAIL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Ha,
    Robustness,
    Consistency,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Ha => "ha",
            SynthKind::Robustness => "robustness",
            SynthKind::Consistency => "consistency",
        })
    }
}

impl FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ha" => Ok(SynthKind::Ha),
            "robustness" => Ok(SynthKind::Robustness),
            "consistency" => Ok(SynthKind::Consistency),
            other => Err(format!("unknown synth kind {other:?} (expected ha, robustness, consistency)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_instances: usize,
    pub tokens_per_instance: usize,
    /// swap_rate for HA, noise_sigma for robustness, coupling_noise for consistency.
    pub knob: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, n_instances: usize, tokens_per_instance: usize, knob: f64) -> Self {
        Self {
            seed,
            n_instances,
            tokens_per_instance,
            knob,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("n_instances must be at least 1")]
    NoInstances,
    #[error("tokens_per_instance must be at least 2")]
    TooFewTokens,
    #[error("{name} = {value} is outside {range}")]
    KnobOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

fn check(cfg: &SynthConfig, name: &'static str, ok: bool, range: &'static str) -> Result<(), SynthError> {
    if cfg.n_instances == 0 {
        return Err(SynthError::NoInstances);
    }
    if cfg.tokens_per_instance < 2 {
        return Err(SynthError::TooFewTokens);
    }
    if !ok || !cfg.knob.is_finite() {
        return Err(SynthError::KnobOutOfRange {
            name,
            value: cfg.knob,
            range,
        });
    }
    Ok(())
}

/// Generated corpus, ready to write as the standard interchange files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthCorpus {
    pub explanations: Vec<SaliencyRecord>,
    pub rationales: Vec<HumanRationale>,
    pub attention: Option<AttentionFile>,
}

impl SynthCorpus {
    /// Writes `explanations.jsonl`, plus `rationales.jsonl` and
    /// `attention.jsonl` when present. Returns the written paths.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, text: String| -> std::io::Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text)?;
            written.push(p);
            Ok(())
        };
        put("explanations.jsonl", write_saliency(&self.explanations))?;
        if !self.rationales.is_empty() {
            put("rationales.jsonl", write_rationales(&self.rationales))?;
        }
        if let Some(att) = &self.attention {
            put("attention.jsonl", write_attention(att))?;
        }
        Ok(written)
    }
}

pub fn generate(kind: SynthKind, cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    match kind {
        SynthKind::Ha => gen_ha_corpus(cfg),
        SynthKind::Robustness => gen_robustness_corpus(cfg),
        SynthKind::Consistency => gen_consistency_corpus(cfg, false),
    }
}

fn instance_id(i: usize) -> String {
    format!("s{i:06}")
}

fn tokens(t: usize) -> Vec<String> {
    (0..t).map(|j| format!("tok{j}")).collect()
}

fn record(instance: &str, method: &str, variant: Variant, tokens: Vec<String>, scores: Vec<f64>) -> SaliencyRecord {
    SaliencyRecord {
        instance_id: instance.to_string(),
        dataset: SYNTH_DATASET.to_string(),
        model: SYNTH_MODEL.to_string(),
        method: method.to_string(),
        variant,
        predicted_label: "pos".to_string(),
        target_label: "pos".to_string(),
        tokens,
        scores,
        target_score: None,
    }
}

/// Human rationales are random orders of all T tokens. The explanation ranks
/// tokens in the human order with each disjoint adjacent pair (ranks 1-2,
/// 3-4, ...) swapped with probability `swap_rate`; saliency at rank r is
/// `(T - r) / T`.
pub fn gen_ha_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    check(cfg, "swap_rate", (0.0..=1.0).contains(&cfg.knob), "[0, 1]")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t = cfg.tokens_per_instance;
    let text = tokens(t);
    let mut corpus = SynthCorpus::default();
    for i in 0..cfg.n_instances {
        let id = instance_id(i);
        let mut human: Vec<usize> = (0..t).collect();
        human.shuffle(&mut rng);
        let mut xai = human.clone();
        for pair in xai.chunks_mut(2) {
            // draw for every pair so the stream does not depend on the rate
            let u: f64 = rng.random();
            if pair.len() == 2 && u < cfg.knob {
                pair.swap(0, 1);
            }
        }
        let mut scores = vec![0.0; t];
        for (r, &tok) in xai.iter().enumerate() {
            scores[tok] = (t - r) as f64 / t as f64;
        }
        corpus.rationales.push(HumanRationale {
            instance_id: id.clone(),
            dataset: SYNTH_DATASET.to_string(),
            ranked_tokens: human.iter().map(|&j| text[j].clone()).collect(),
        });
        corpus.explanations.push(record(&id, "synth-ha", Variant::Original, text.clone(), scores));
    }
    Ok(corpus)
}

/// Original saliencies are uniform on [-1, 1]; the perturbed copy adds
/// independent Gaussian(0, σ) noise over identical tokens, so every token has
/// rel = 1 and the expected MAD is `σ·√(2/π)`. σ = 0 gives identical copies.
pub fn gen_robustness_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    check(cfg, "noise_sigma", cfg.knob >= 0.0, "[0, inf)")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.knob).expect("sigma checked");
    let text = tokens(cfg.tokens_per_instance);
    let mut corpus = SynthCorpus::default();
    for i in 0..cfg.n_instances {
        let id = instance_id(i);
        let original: Vec<f64> = (0..text.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let perturbed: Vec<f64> = original.iter().map(|o| o + noise.sample(&mut rng)).collect();
        corpus
            .explanations
            .push(record(&id, "synth-robustness", Variant::Original, text.clone(), original));
        corpus.explanations.push(record(
            &id,
            "synth-robustness",
            Variant::Perturbed(GAUSSIAN_STRATEGY.to_string()),
            text.clone(),
            perturbed,
        ));
    }
    Ok(corpus)
}

/// `[1, 0, c, ..]` against `[cos a, sin a, c, ..]`; both cosine and Euclidean
/// distance between them are strictly increasing in `a` on [0, π].
fn rotated_pair(angle: f64, t: usize) -> (Vec<f64>, Vec<f64>) {
    let mut base = vec![TAIL; t];
    let mut turned = vec![TAIL; t];
    base[0] = 1.0;
    base[1] = 0.0;
    turned[0] = angle.cos();
    turned[1] = angle.sin();
    (base, turned)
}

/// Two seeds (1 and 2) per instance. Attention angles θ are a shuffled grid
/// in (0, π/2); explanation angles are φ = θ, φ = π/2 − θ when `antitone`, and
/// φ = θ + Gaussian(0, coupling_noise) clamped to [0, π] otherwise. D_A and
/// D_E are then strictly increasing in θ and φ respectively, so noiseless
/// runs give ρ = 1 and antitone runs ρ = −1.
pub fn gen_consistency_corpus(cfg: &SynthConfig, antitone: bool) -> Result<SynthCorpus, SynthError> {
    check(cfg, "coupling_noise", cfg.knob >= 0.0, "[0, inf)")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.knob).expect("noise checked");
    let t = cfg.tokens_per_instance;
    let n = cfg.n_instances;
    let text = tokens(t);
    let mut thetas: Vec<f64> = (0..n).map(|i| FRAC_PI_2 * (i + 1) as f64 / (n + 1) as f64).collect();
    thetas.shuffle(&mut rng);

    let mut corpus = SynthCorpus::default();
    let mut attention = AttentionFile {
        header: BTreeMap::from([("generator".to_string(), "synth-consistency".to_string())]),
        ..AttentionFile::default()
    };
    for (i, &theta) in thetas.iter().enumerate() {
        let id = instance_id(i);
        let phi = if antitone {
            FRAC_PI_2 - theta
        } else if cfg.knob > 0.0 {
            (theta + noise.sample(&mut rng)).clamp(0.0, std::f64::consts::PI)
        } else {
            theta
        };
        let (att_a, att_b) = rotated_pair(theta, t);
        let (exp_a, exp_b) = rotated_pair(phi, t);
        for (seed, att, exp) in [(1, att_a, exp_a), (2, att_b, exp_b)] {
            corpus
                .explanations
                .push(record(&id, "synth-consistency", Variant::Seed(seed), text.clone(), exp));
            attention.records.push(AttentionRecord {
                instance_id: id.clone(),
                model: SYNTH_MODEL.to_string(),
                seed,
                weights: AttentionWeights::Layers(vec![att.clone(), att]),
            });
            attention.lines.push(attention.records.len() + 1);
        }
    }
    corpus.attention = Some(attention);
    Ok(corpus)
}
