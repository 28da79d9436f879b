//! Combined weighted score and report tables.
//!
//! `CWS = w_ha·HA + w_cn·Cn + w_ct·Ct + w_r·(1 − R)`. Robustness is flipped so
//! every term is higher-is-better; consistency enters raw, negative values
//! included.

mod render;
mod results;

pub use render::{render_report, render_token_heatmap, ReportError, ReportFormat};
pub use results::{load_results, load_results_str, write_results, ResultsError};

use crate::corpus::{CellKey, SkipEntry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Tolerance for the weight simplex constraint.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Absolute difference above which a recomputed CWS disagrees with a
/// reference value carried by the input.
pub const REFERENCE_TOLERANCE: f64 = 0.0005;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weights must sum to 1 (got {0})")]
    NotNormalized(f64),
    #[error("weight {0} is negative or not finite")]
    Negative(&'static str),
    #[error("cannot parse weights {0:?}: expected ha=..,cn=..,ct=..,r=..")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w_ha: f64,
    pub w_cn: f64,
    pub w_ct: f64,
    pub w_r: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self::EQUAL
    }
}

impl MetricWeights {
    pub const EQUAL: Self = Self {
        w_ha: 0.25,
        w_cn: 0.25,
        w_ct: 0.25,
        w_r: 0.25,
    };

    pub fn new(w_ha: f64, w_cn: f64, w_ct: f64, w_r: f64) -> Result<Self, WeightsError> {
        let w = Self { w_ha, w_cn, w_ct, w_r };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        for (name, v) in [("ha", self.w_ha), ("cn", self.w_cn), ("ct", self.w_ct), ("r", self.w_r)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(WeightsError::Negative(name));
            }
        }
        let sum = self.w_ha + self.w_cn + self.w_ct + self.w_r;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(WeightsError::NotNormalized(sum));
        }
        Ok(())
    }
}

impl fmt::Display for MetricWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ha={},cn={},ct={},r={}", self.w_ha, self.w_cn, self.w_ct, self.w_r)
    }
}

impl FromStr for MetricWeights {
    type Err = WeightsError;

    /// Parses `ha=0.25,cn=0.25,ct=0.25,r=0.25`; every key is required.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || WeightsError::Syntax(s.to_string());
        let mut slots: [Option<f64>; 4] = [None; 4];
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(syntax)?;
            let slot = match key.trim() {
                "ha" => 0,
                "cn" => 1,
                "ct" => 2,
                "r" => 3,
                _ => return Err(syntax()),
            };
            if slots[slot].is_some() {
                return Err(syntax());
            }
            slots[slot] = Some(value.trim().parse().map_err(|_| syntax())?);
        }
        match slots {
            [Some(ha), Some(cn), Some(ct), Some(r)] => Self::new(ha, cn, ct, r),
            _ => Err(syntax()),
        }
    }
}

/// Weighted sum with robustness flipped. Consistency is used raw.
pub fn combined_weighted_score(ha: f64, r: f64, cn: f64, ct: f64, w: &MetricWeights) -> Result<f64, WeightsError> {
    w.validate()?;
    Ok(w.w_ha * ha + w.w_cn * cn + w.w_ct * ct + w.w_r * (1.0 - r))
}

/// Scores of one report cell. Metrics that were not computed (or are
/// undefined) are `None`, and so is CWS unless all four are present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub ha: Option<f64>,
    #[serde(rename = "robustness")]
    pub r: Option<f64>,
    #[serde(rename = "consistency")]
    pub cn: Option<f64>,
    #[serde(rename = "contrastivity")]
    pub ct: Option<f64>,
    pub cws: Option<f64>,
    /// MAD per perturbation strategy; `r` is one of these.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub robustness_by_strategy: BTreeMap<String, f64>,
    /// Externally reported CWS to cross-check against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_cws: Option<f64>,
    /// Expected outcome of the cross-check, when the input declares one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconcilable: Option<bool>,
    /// Alternative reading of the consistency value, when the source is ambiguous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency_alt: Option<f64>,
}

impl CellScores {
    pub fn recompute_cws(&mut self, w: &MetricWeights) -> Result<(), WeightsError> {
        self.cws = match (self.ha, self.r, self.cn, self.ct) {
            (Some(ha), Some(r), Some(cn), Some(ct)) => Some(combined_weighted_score(ha, r, cn, ct, w)?),
            _ => None,
        };
        Ok(())
    }
}

/// A cell whose recomputed CWS disagrees with its reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub cell: CellKey,
    pub reference: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub cells: BTreeMap<CellKey, CellScores>,
    pub weights: MetricWeights,
    /// Effective configuration and provenance of the run.
    pub metadata: BTreeMap<String, String>,
    pub skips: Vec<SkipEntry>,
    pub warnings: Vec<String>,
}

impl MetricTable {
    pub fn new(weights: MetricWeights) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }

    /// Recomputes every cell's CWS from its stored inputs.
    pub fn recompute(&mut self) -> Result<(), WeightsError> {
        let w = self.weights;
        self.cells.values_mut().try_for_each(|c| c.recompute_cws(&w))
    }

    /// Cells whose CWS differs from `reference_cws` by more than `tolerance`.
    pub fn discrepancies(&self, tolerance: f64) -> Vec<Discrepancy> {
        self.cells
            .iter()
            .filter_map(|(cell, s)| match (s.cws, s.reference_cws) {
                (Some(recomputed), Some(reference)) if (recomputed - reference).abs() > tolerance => Some(Discrepancy {
                    cell: cell.clone(),
                    reference,
                    recomputed,
                }),
                _ => None,
            })
            .collect()
    }

    /// Cells whose cross-check outcome contradicts their `reconcilable` marking.
    pub fn marking_conflicts(&self, tolerance: f64) -> Vec<CellKey> {
        self.cells
            .iter()
            .filter_map(|(cell, s)| {
                let (cws, reference, expected) = (s.cws?, s.reference_cws?, s.reconcilable?);
                (((cws - reference).abs() <= tolerance) != expected).then(|| cell.clone())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cws(ha: f64, r: f64, cn: f64, ct: f64) -> f64 {
        combined_weighted_score(ha, r, cn, ct, &MetricWeights::EQUAL).unwrap()
    }

    #[test]
    fn published_cross_checks() {
        assert!((cws(0.8774, 0.0056, 0.9665, 0.7065) - 0.8862).abs() <= 0.0005);
        assert!((cws(0.4135, 0.0356, 0.9002, 0.6449) - 0.7308).abs() <= 0.0005);
        assert!((cws(0.1437, 0.0237, -0.9593, 0.5689) - 0.1824).abs() <= 0.0005);
        assert_eq!(cws(1.0, 0.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn weight_parsing() {
        let w: MetricWeights = "ha=0.25,cn=0.25,ct=0.25,r=0.25".parse().unwrap();
        assert_eq!(w, MetricWeights::EQUAL);
        let w: MetricWeights = "r=0.1, ha=0.4,ct=0.2,cn=0.3".parse().unwrap();
        assert_eq!(w.w_r, 0.1);
        let err = "ha=0.5,cn=0.5,ct=0.5,r=0.5".parse::<MetricWeights>().unwrap_err();
        assert_eq!(err, WeightsError::NotNormalized(2.0));
        assert!(err.to_string().contains("weights must sum to 1"));
        assert!(matches!("ha=0.5,cn=0.5".parse::<MetricWeights>(), Err(WeightsError::Syntax(_))));
        assert!(matches!("ha=1.5,cn=-0.5,ct=0,r=0".parse::<MetricWeights>(), Err(WeightsError::Negative("cn"))));
        assert!(matches!("ha=x,cn=0,ct=0,r=1".parse::<MetricWeights>(), Err(WeightsError::Syntax(_))));
    }

    #[test]
    fn missing_metric_leaves_cws_empty() {
        let mut c = CellScores {
            ha: Some(0.5),
            r: Some(0.1),
            cn: None,
            ct: Some(0.3),
            ..Default::default()
        };
        c.recompute_cws(&MetricWeights::EQUAL).unwrap();
        assert_eq!(c.cws, None);
    }

    proptest! {
        #[test]
        fn equal_weight_closed_form(x in -1.0f64..1.0) {
            prop_assert!((cws(x, x, x, x) - (0.5 * x + 0.25)).abs() < 1e-15);
        }

        #[test]
        fn monotone_in_ha_and_r(
            ha in 0.0f64..1.0, r in 0.0f64..1.0, cn in -1.0f64..1.0, ct in 0.0f64..2.0, dx in 1e-6f64..0.5,
            raw in prop::array::uniform4(0.01f64..1.0),
        ) {
            let total: f64 = raw.iter().sum();
            let w = MetricWeights { w_ha: raw[0] / total, w_cn: raw[1] / total, w_ct: raw[2] / total, w_r: 1.0 - (raw[0] + raw[1] + raw[2]) / total };
            let base = combined_weighted_score(ha, r, cn, ct, &w).unwrap();
            prop_assert!(combined_weighted_score(ha + dx, r, cn, ct, &w).unwrap() > base);
            prop_assert!(combined_weighted_score(ha, r + dx, cn, ct, &w).unwrap() < base);
            // affine: equal steps give equal increments
            let step1 = combined_weighted_score(ha + dx, r, cn, ct, &w).unwrap() - base;
            let step2 = combined_weighted_score(ha + 2.0 * dx, r, cn, ct, &w).unwrap() - base;
            prop_assert!((step2 - 2.0 * step1).abs() < 1e-12);
        }
    }
}
