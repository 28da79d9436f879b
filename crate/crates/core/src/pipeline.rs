//! Full runs: load, index, score, and assemble the report table.

use crate::aggregate::{CellScores, MetricTable, WeightsError};
use crate::config::{ConfigError, Metric, RunConfig};
use crate::consistency::{self, CellConsistency};
use crate::contrastivity::{self, ContrastivityResult};
use crate::corpus::jsonl::{validate_attention_str, validate_rationales_str, validate_saliency_str};
use crate::corpus::{
    build_index, AttentionFile, CellKey, CorpusIndex, Diagnostic, HumanRationale, IndexConfig, SaliencyRecord,
    SkipEntry,
};
use crate::ha::{self, HaResult};
use crate::robustness::{self, RobustnessResult};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{} invalid input line(s)", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Results of one run: the report table plus the per-metric details it was
/// built from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub table: MetricTable,
    pub ha: BTreeMap<CellKey, HaResult>,
    pub robustness: BTreeMap<CellKey, BTreeMap<String, RobustnessResult>>,
    pub consistency: BTreeMap<CellKey, CellConsistency>,
    pub contrastivity: BTreeMap<CellKey, ContrastivityResult>,
}

impl Evaluation {
    pub fn skips(&self) -> &[SkipEntry] {
        &self.table.skips
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

type Loaded = (Vec<SaliencyRecord>, Vec<HumanRationale>, AttentionFile);

/// Reads the three inputs concurrently and collects every schema problem.
fn load(cfg: &RunConfig) -> Result<Loaded, PipelineError> {
    let explanations = || -> Result<(Vec<SaliencyRecord>, Vec<Diagnostic>), PipelineError> {
        match &cfg.explanations {
            Some(p) => Ok(validate_saliency_str(&read(p)?, &p.display().to_string())),
            None => Ok(Default::default()),
        }
    };
    let rationales = || -> Result<(Vec<HumanRationale>, Vec<Diagnostic>), PipelineError> {
        match &cfg.rationales {
            Some(p) if cfg.metrics.contains(&Metric::Ha) => {
                Ok(validate_rationales_str(&read(p)?, &p.display().to_string(), &cfg.normalizer))
            }
            _ => Ok(Default::default()),
        }
    };
    let attention = || -> Result<(AttentionFile, Vec<Diagnostic>), PipelineError> {
        match &cfg.attention {
            Some(p) if cfg.metrics.contains(&Metric::Consistency) => {
                Ok(validate_attention_str(&read(p)?, &p.display().to_string()))
            }
            _ => Ok(Default::default()),
        }
    };
    let (e, (r, a)) = rayon::join(explanations, || rayon::join(rationales, attention));
    let ((records, mut diags), (rationales, d_r), (attention, d_a)) = (e?, r?, a?);
    diags.extend(d_r);
    diags.extend(d_a);
    if !diags.is_empty() {
        return Err(PipelineError::Invalid(diags));
    }
    Ok((records, rationales, attention))
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Validates the config, loads its inputs, and evaluates them.
pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation, PipelineError> {
    cfg.validate()?;
    let pool = pool(cfg)?;
    pool.install(|| {
        let (records, rationales, attention) = load(cfg)?;
        Ok(run(records, rationales, attention, cfg))
    })
}

/// Evaluates in-memory records. Input paths in `cfg` are ignored except as
/// metadata.
pub fn evaluate_corpus(
    records: Vec<SaliencyRecord>,
    rationales: Vec<HumanRationale>,
    attention: AttentionFile,
    cfg: &RunConfig,
) -> Result<Evaluation, PipelineError> {
    cfg.weights.validate()?;
    let pool = pool(cfg)?;
    Ok(pool.install(|| run(records, rationales, attention, cfg)))
}

fn run(records: Vec<SaliencyRecord>, rationales: Vec<HumanRationale>, attention: AttentionFile, cfg: &RunConfig) -> Evaluation {
    let index_cfg = IndexConfig {
        normalizer: cfg.normalizer,
        metrics: cfg.metrics.clone(),
        contrast_mode: cfg.contrast_mode,
    };
    let header = attention.header.clone();
    let index = build_index(records, rationales, attention.records, &index_cfg);
    let wants = |m: Metric| cfg.metrics.contains(&m);

    let ha = if wants(Metric::Ha) {
        ha::evaluate(&index, cfg.rank_by)
    } else {
        BTreeMap::new()
    };
    let robustness = if wants(Metric::Robustness) {
        robustness::evaluate(&index)
    } else {
        BTreeMap::new()
    };
    let consistency = if wants(Metric::Consistency) {
        consistency::evaluate(&index, cfg.distance)
    } else {
        BTreeMap::new()
    };
    let contrastivity = if wants(Metric::Contrastivity) {
        contrastivity::evaluate(&index, cfg.contrast_mode, cfg.epsilon, cfg.log_base)
    } else {
        BTreeMap::new()
    };

    let table = assemble(&index, cfg, &header, &ha, &robustness, &consistency, &contrastivity);
    Evaluation {
        table,
        ha,
        robustness,
        consistency,
        contrastivity,
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    index: &CorpusIndex,
    cfg: &RunConfig,
    header: &BTreeMap<String, String>,
    ha: &BTreeMap<CellKey, HaResult>,
    robustness: &BTreeMap<CellKey, BTreeMap<String, RobustnessResult>>,
    consistency: &BTreeMap<CellKey, CellConsistency>,
    contrastivity: &BTreeMap<CellKey, ContrastivityResult>,
) -> MetricTable {
    let mut table = MetricTable::new(cfg.weights);
    table.metadata = cfg.snapshot();
    for (k, v) in header {
        table.metadata.insert(format!("attention.{k}"), v.clone());
    }
    if cfg.metrics.contains(&Metric::Contrastivity) {
        let pairing: Vec<&str> = index.contrast_pairing.iter().copied().collect();
        table.metadata.insert(
            "contrastivity.pairing".to_string(),
            if pairing.is_empty() {
                cfg.contrast_mode.to_string()
            } else {
                pairing.join(",")
            },
        );
    }
    let mut skips = index.skips.clone();

    for cell in index.cells.keys() {
        let mut s = CellScores {
            ha: ha.get(cell).map(|r| r.map_score),
            ct: contrastivity.get(cell).map(|r| r.mean_kl),
            ..Default::default()
        };
        if let Some(by_strategy) = robustness.get(cell) {
            s.robustness_by_strategy = by_strategy.iter().map(|(k, v)| (k.clone(), v.mad)).collect();
            s.r = match &cfg.robustness_strategy {
                Some(chosen) => {
                    let r = s.robustness_by_strategy.get(chosen).copied();
                    if r.is_none() {
                        table
                            .warnings
                            .push(format!("{cell}: robustness strategy {chosen:?} not present; R undefined"));
                    }
                    r
                }
                None if s.robustness_by_strategy.len() == 1 => s.robustness_by_strategy.values().next().copied(),
                None => {
                    let names: Vec<&str> = s.robustness_by_strategy.keys().map(String::as_str).collect();
                    table.warnings.push(format!(
                        "{cell}: several perturbation strategies ({}); R undefined until robustness_strategy is set",
                        names.join(", ")
                    ));
                    None
                }
            };
        }
        if let Some(c) = consistency.get(cell) {
            for (instance, err) in &c.dropped {
                skips.push(SkipEntry {
                    metric: Metric::Consistency,
                    cell: cell.clone(),
                    instance_id: instance.clone(),
                    reason: err.to_string(),
                });
            }
            match &c.result {
                Ok(r) => s.cn = Some(r.rho),
                Err(e) => table
                    .warnings
                    .push(format!("{cell}: consistency undefined ({e}); excluded from CWS")),
            }
        }
        if let Some(r) = contrastivity.get(cell) {
            table.warnings.extend(r.warnings.iter().map(|w| format!("{cell}: {w}")));
        }
        for m in &cfg.metrics {
            let missing = match m {
                Metric::Ha => s.ha.is_none(),
                Metric::Robustness => s.r.is_none() && s.robustness_by_strategy.is_empty(),
                Metric::Consistency => s.cn.is_none() && !consistency.contains_key(cell),
                Metric::Contrastivity => s.ct.is_none(),
            };
            if missing {
                table.warnings.push(format!("{cell}: no instances evaluated for {m}"));
            }
        }
        s.recompute_cws(&cfg.weights).expect("weights validated");
        table.cells.insert(cell.clone(), s);
    }
    skips.sort();
    skips.dedup();
    table.skips = skips;
    table
}
