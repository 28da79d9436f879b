//! Interchange record types, JSONL readers, and the pairing index every
//! metric consumes.

mod index;
pub mod jsonl;
mod normalize;
mod record;
pub mod validate;

pub use index::{
    build_index, ContrastItem, CorpusIndex, HaItem, IndexConfig, RobustnessPair, SeedPair, SkipEntry,
    PAIRING_LEXICOGRAPHIC, PAIRING_RUNNER_UP,
};
pub use jsonl::{
    parse_attention, parse_attention_str, parse_rationales, parse_rationales_str, parse_saliency, parse_saliency_str,
    write_attention, write_rationales, write_saliency, AttentionFile, CorpusError, Diagnostic, RecordError,
};
pub use normalize::TokenNormalizer;
pub use record::{AttentionRecord, AttentionWeights, CellKey, HumanRationale, RecordKey, SaliencyRecord, Variant};
