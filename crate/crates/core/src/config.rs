//! Run configuration: defaults, `key = value` config files, validation, and
//! the snapshot embedded in report metadata.

use crate::aggregate::{MetricWeights, ReportFormat, WeightsError};
use crate::consistency::DistanceMeasure;
use crate::contrastivity::{ContrastMode, LogBase, DEFAULT_EPSILON};
use crate::corpus::TokenNormalizer;
use crate::ranking::RankBy;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ha,
    Robustness,
    Consistency,
    Contrastivity,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Ha, Metric::Robustness, Metric::Consistency, Metric::Contrastivity];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ha => "ha",
            Metric::Robustness => "robustness",
            Metric::Consistency => "consistency",
            Metric::Contrastivity => "contrastivity",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ha" => Ok(Metric::Ha),
            "robustness" | "r" => Ok(Metric::Robustness),
            "consistency" | "cn" => Ok(Metric::Consistency),
            "contrastivity" | "ct" => Ok(Metric::Contrastivity),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("{role} file not found: {path}")]
    MissingFile { role: &'static str, path: PathBuf },
    #[error("{0} input is required for the selected metrics")]
    MissingInput(&'static str),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Everything a run depends on. Flags override config-file values, which
/// override the defaults below.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub explanations: Option<PathBuf>,
    pub rationales: Option<PathBuf>,
    pub attention: Option<PathBuf>,
    pub metrics: BTreeSet<Metric>,
    pub normalizer: TokenNormalizer,
    pub distance: DistanceMeasure,
    pub epsilon: f64,
    pub log_base: LogBase,
    pub rank_by: RankBy,
    pub contrast_mode: ContrastMode,
    /// Which perturbation strategy feeds R in the CWS. `None` picks the only
    /// strategy present, and leaves R undefined when there are several.
    pub robustness_strategy: Option<String>,
    pub weights: MetricWeights,
    /// `None` infers the format from the output extension.
    pub format: Option<ReportFormat>,
    pub out: Option<PathBuf>,
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            explanations: None,
            rationales: None,
            attention: None,
            metrics: Metric::ALL.into_iter().collect(),
            normalizer: TokenNormalizer::default(),
            distance: DistanceMeasure::default(),
            epsilon: DEFAULT_EPSILON,
            log_base: LogBase::default(),
            rank_by: RankBy::default(),
            contrast_mode: ContrastMode::default(),
            robustness_strategy: None,
            weights: MetricWeights::EQUAL,
            format: None,
            out: None,
            parallelism: 1,
            seed: 0,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_with<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys match the long CLI flags with
    /// `-` and `_` interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "explanations" => self.explanations = Some(value.into()),
            "rationales" => self.rationales = Some(value.into()),
            "attention" => self.attention = Some(value.into()),
            "metrics" => {
                let metrics = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse::<Metric>().map_err(|e| bad(&key, value, e)))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                if metrics.is_empty() {
                    return Err(bad(&key, value, "no metrics selected"));
                }
                self.metrics = metrics;
            }
            "lowercase" => self.normalizer.lowercase = parse_bool(&key, value)?,
            "strip_punctuation" => self.normalizer.strip_outer_punctuation = parse_bool(&key, value)?,
            "distance" => self.distance = parse_with(&key, value)?,
            "epsilon" => {
                let eps: f64 = parse_with(&key, value)?;
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(bad(&key, value, "must be positive"));
                }
                self.epsilon = eps;
            }
            "log_base" => self.log_base = parse_with(&key, value)?,
            "rank_by" => self.rank_by = parse_with(&key, value)?,
            "contrast_mode" => self.contrast_mode = parse_with(&key, value)?,
            "robustness_strategy" => self.robustness_strategy = Some(value.to_string()),
            "weights" => self.weights = value.parse()?,
            "format" => self.format = Some(parse_with(&key, value)?),
            "out" => self.out = Some(value.into()),
            "parallelism" => {
                let n: usize = parse_with(&key, value)?;
                if n == 0 {
                    return Err(ConfigError::Parallelism);
                }
                self.parallelism = n;
            }
            "seed" => self.seed = parse_with(&key, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and `#` comments are ignored.
    pub fn apply_config_str(&mut self, text: &str, path: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                path: path.to_string(),
                line: i + 1,
            })?;
            let value = value.trim().trim_matches('"');
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_config_str(&text, &path.display().to_string())
    }

    /// Explicit format, else inferred from the output extension, else markdown.
    pub fn effective_format(&self) -> ReportFormat {
        self.format
            .or_else(|| self.out.as_deref().and_then(ReportFormat::from_extension))
            .unwrap_or(ReportFormat::Markdown)
    }

    /// Checks weights, parallelism, and that every input the selected
    /// metrics need is given and exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.weights.validate()?;
        if self.parallelism == 0 {
            return Err(ConfigError::Parallelism);
        }
        let needs = [
            ("explanations", &self.explanations, true),
            ("rationales", &self.rationales, self.metrics.contains(&Metric::Ha)),
            ("attention", &self.attention, self.metrics.contains(&Metric::Consistency)),
        ];
        for (role, path, required) in needs {
            match path {
                Some(p) if !p.is_file() => return Err(ConfigError::MissingFile { role, path: p.clone() }),
                None if required => return Err(ConfigError::MissingInput(role)),
                _ => {}
            }
        }
        Ok(())
    }

    /// Effective configuration as report metadata.
    ///
    /// Parallelism and output location are left out so reports are
    /// byte-identical across `--parallelism` values and output paths.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let metrics: Vec<&str> = self.metrics.iter().map(|m| m.name()).collect();
        let entries = [
            ("config.explanations", path(&self.explanations)),
            ("config.rationales", path(&self.rationales)),
            ("config.attention", path(&self.attention)),
            ("config.metrics", metrics.join(",")),
            ("config.lowercase", self.normalizer.lowercase.to_string()),
            ("config.strip_punctuation", self.normalizer.strip_outer_punctuation.to_string()),
            ("config.distance", self.distance.to_string()),
            ("config.epsilon", format!("{:e}", self.epsilon)),
            ("config.log_base", self.log_base.to_string()),
            ("config.rank_by", self.rank_by.to_string()),
            ("config.tie_break", "position".to_string()),
            ("config.contrast_mode", self.contrast_mode.to_string()),
            (
                "config.robustness_strategy",
                self.robustness_strategy.clone().unwrap_or_else(|| "auto".to_string()),
            ),
            ("config.weights", self.weights.to_string()),
            ("config.seed", self.seed.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
