//! Evaluation engine for explainability methods on text classifiers.
//!
//! The engine reads interchange files of token-saliency explanations, human
//! rationales, and attention summaries, pairs them into units of work, and
//! scores each (dataset, model, method) cell on four metrics:
//!
//! - [`ha`]: human-reasoning agreement, rank-exact average precision and MAP
//! - [`robustness`]: relevance-gated saliency drift under input perturbation (AD / MAD)
//! - [`consistency`]: Spearman correlation between attention and explanation distances
//!   across differently-seeded model pairs
//! - [`contrastivity`]: KL divergence between per-class importance distributions
//!
//! [`aggregate`] folds the four into a combined weighted score and renders
//! report tables. [`pipeline`] wires everything together for a full run.

pub mod aggregate;
pub mod config;
pub mod consistency;
pub mod contrastivity;
pub mod corpus;
pub mod ha;
pub mod pipeline;
pub mod ranking;
pub mod robustness;
pub mod stats;
pub mod synth;

pub use aggregate::{combined_weighted_score, CellScores, MetricTable, MetricWeights, ReportFormat};
pub use config::RunConfig;
pub use corpus::{
    AttentionRecord, CellKey, CorpusIndex, HumanRationale, SaliencyRecord, TokenNormalizer, Variant,
};
pub use pipeline::{evaluate, evaluate_corpus, Evaluation};
