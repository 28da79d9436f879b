//! Whole-corpus schema check used by `xaieval validate`.

use super::jsonl::{
    validate_attention_str, validate_rationales_str, validate_saliency_str, Diagnostic, RecordError,
};
use super::normalize::TokenNormalizer;
use super::record::Variant;
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct CorpusPaths<'a> {
    pub explanations: Option<&'a Path>,
    pub rationales: Option<&'a Path>,
    pub attention: Option<&'a Path>,
}

/// Outcome of reading a file for validation: its text, or a diagnostic.
fn load(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}:0: cannot read: {e}", path.display()))
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    /// Files that could not be read at all.
    pub unreadable: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty() && self.unreadable.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.diagnostics.len() + self.unreadable.len()
    }

    /// One line per problem, files in argument order, lines ascending.
    pub fn lines(&self) -> Vec<String> {
        self.unreadable
            .iter()
            .cloned()
            .chain(self.diagnostics.iter().map(ToString::to_string))
            .collect()
    }
}

/// Lists every schema violation across the given files, plus attention
/// records whose token count disagrees with the seed explanation for the same
/// instance and model.
pub fn validate_corpus(paths: &CorpusPaths<'_>, normalizer: &TokenNormalizer) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seed_lengths: HashMap<(String, String, i64), (usize, String)> = HashMap::new();

    if let Some(p) = paths.explanations {
        match load(p) {
            Ok(text) => {
                let (records, diags) = validate_saliency_str(&text, &p.display().to_string());
                report.diagnostics.extend(diags);
                for r in records {
                    if let Variant::Seed(s) = r.variant {
                        let label = format!("{}/{}/{}", r.instance_id, r.model, r.variant);
                        seed_lengths
                            .entry((r.instance_id.clone(), r.model.clone(), s))
                            .or_insert((r.tokens.len(), label));
                    }
                }
            }
            Err(e) => report.unreadable.push(e),
        }
    }
    if let Some(p) = paths.rationales {
        match load(p) {
            Ok(text) => report
                .diagnostics
                .extend(validate_rationales_str(&text, &p.display().to_string(), normalizer).1),
            Err(e) => report.unreadable.push(e),
        }
    }
    if let Some(p) = paths.attention {
        match load(p) {
            Ok(text) => {
                let name = p.display().to_string();
                let (file, mut diags) = validate_attention_str(&text, &name);
                for (rec, &line) in file.records.iter().zip(&file.lines) {
                    let key = (rec.instance_id.clone(), rec.model.clone(), rec.seed);
                    if let Some((tokens, label)) = seed_lengths.get(&key) {
                        if *tokens != rec.token_count() {
                            diags.push(Diagnostic {
                                path: name.clone(),
                                line,
                                kind: RecordError::TokenCountMismatch {
                                    attention: rec.token_count(),
                                    explanation: label.clone(),
                                    tokens: *tokens,
                                },
                            });
                        }
                    }
                }
                diags.sort_by_key(|d| d.line);
                report.diagnostics.extend(diags);
            }
            Err(e) => report.unreadable.push(e),
        }
    }
    report
}
