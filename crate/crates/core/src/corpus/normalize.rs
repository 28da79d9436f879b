use serde::{Deserialize, Serialize};

/// Canonicalizes token strings before they are compared across humans and
/// tokenizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenNormalizer {
    pub lowercase: bool,
    pub strip_outer_punctuation: bool,
}

impl Default for TokenNormalizer {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_outer_punctuation: true,
        }
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{2013}' | '\u{2014}' | '\u{00AB}' | '\u{00BB}'
        )
}

impl TokenNormalizer {
    /// Identity normalizer.
    pub fn exact() -> Self {
        Self {
            lowercase: false,
            strip_outer_punctuation: false,
        }
    }

    /// Normalizes one token. A token made only of punctuation is kept as is
    /// (lowercased) rather than collapsed to the empty string.
    pub fn normalize(&self, token: &str) -> String {
        let mut out = token;
        if self.strip_outer_punctuation {
            let stripped = token.trim_matches(is_punctuation);
            if !stripped.is_empty() {
                out = stripped;
            }
        }
        if self.lowercase {
            out.to_lowercase()
        } else {
            out.to_string()
        }
    }

    pub fn normalize_all<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens.iter().map(|t| self.normalize(t.as_ref())).collect()
    }
}
