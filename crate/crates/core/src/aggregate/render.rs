//! Report rendering. Every format is a pure function of the table.

use super::results::write_results;
use super::{MetricTable, REFERENCE_TOLERANCE};
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Jsonl,
    HtmlHeatmap,
}

impl ReportFormat {
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "md" | "markdown" => Some(Self::Markdown),
            "jsonl" => Some(Self::Jsonl),
            "html" | "htm" => Some(Self::HtmlHeatmap),
            _ => None,
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Markdown => "markdown",
            Self::Jsonl => "jsonl",
            Self::HtmlHeatmap => "html_heatmap",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "jsonl" => Ok(Self::Jsonl),
            "html_heatmap" | "html" => Ok(Self::HtmlHeatmap),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format {0:?} (expected csv, markdown, jsonl, html_heatmap)")]
    UnknownFormat(String),
    #[error("report table is empty")]
    EmptyTable,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const CSV_HEADER: [&str; 8] = [
    "dataset",
    "model",
    "method",
    "ha",
    "robustness",
    "consistency",
    "contrastivity",
    "cws",
];

pub fn render_report(table: &MetricTable, format: ReportFormat) -> Result<String, ReportError> {
    if table.cells.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    match format {
        ReportFormat::Csv => render_csv(table),
        ReportFormat::Markdown => Ok(render_markdown(table)),
        ReportFormat::Jsonl => Ok(write_results(table)),
        ReportFormat::HtmlHeatmap => Ok(render_html(table)),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".to_string())
}

fn render_csv(table: &MetricTable) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for (cell, s) in &table.cells {
        w.write_record([
            cell.dataset.clone(),
            cell.model.clone(),
            cell.method.clone(),
            opt(s.ha),
            opt(s.r),
            opt(s.cn),
            opt(s.ct),
            opt(s.cws),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn render_markdown(table: &MetricTable) -> String {
    let mut out = String::new();
    let discrepancies = table.discrepancies(REFERENCE_TOLERANCE);

    out.push_str("# XAI evaluation report\n\n");
    out.push_str("Higher is better for every column except R, where lower is better.\n\n");
    out.push_str("| dataset | model | method | HA ↑ | R ↓ | Cn ↑ | Ct ↑ | CWS ↑ |\n");
    out.push_str("|---|---|---|---:|---:|---:|---:|---:|\n");
    for (cell, s) in &table.cells {
        let mut cws = fixed(s.cws);
        if let Some(i) = discrepancies.iter().position(|d| &d.cell == cell) {
            let _ = write!(cws, " [^d{}]", i + 1);
        }
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            md_escape(&cell.dataset),
            md_escape(&cell.model),
            md_escape(&cell.method),
            fixed(s.ha),
            fixed(s.r),
            fixed(s.cn),
            fixed(s.ct),
            cws
        );
    }

    let strategies: Vec<_> = table
        .cells
        .iter()
        .flat_map(|(cell, s)| s.robustness_by_strategy.iter().map(move |(k, v)| (cell, k, v)))
        .collect();
    if !strategies.is_empty() {
        out.push_str("\n## Robustness by perturbation strategy\n\n");
        out.push_str("| cell | strategy | MAD ↓ |\n|---|---|---:|\n");
        for (cell, strategy, mad) in strategies {
            let _ = writeln!(out, "| {} | {} | {:.4} |", md_escape(&cell.to_string()), md_escape(strategy), mad);
        }
    }

    if !discrepancies.is_empty() {
        out.push_str("\n## Reference discrepancies\n\n");
        let _ = writeln!(
            out,
            "{} cell(s) differ from their reference CWS by more than {REFERENCE_TOLERANCE}.\n",
            discrepancies.len()
        );
        for (i, d) in discrepancies.iter().enumerate() {
            let _ = writeln!(
                out,
                "[^d{}]: {}: reference {:.4}, recomputed {:.4} (difference {:+.4}).",
                i + 1,
                d.cell,
                d.reference,
                d.recomputed,
                d.recomputed - d.reference
            );
        }
    }

    out.push_str("\n## Notes\n\n");
    let _ = writeln!(out, "- CWS weights: {}. R enters as 1 − R; Cn enters unclamped.", table.weights);
    out.push_str(
        "- HA: average precision divides by n, the length of the human rationale (relevant words), \
         not by the number of retrieved words.\n",
    );
    for (cell, s) in &table.cells {
        if let Some(alt) = s.consistency_alt {
            let _ = writeln!(out, "- {cell}: Cn has an alternative reading {alt}; the table uses {}.", fixed(s.cn));
        }
    }

    if !table.metadata.is_empty() {
        out.push_str("\n## Run metadata\n\n");
        for (k, v) in &table.metadata {
            let _ = writeln!(out, "- `{k}`: {}", if v.is_empty() { "(none)" } else { v });
        }
    }

    out.push_str("\n## Skipped instances\n\n");
    if table.skips.is_empty() {
        out.push_str("None.\n");
    } else {
        out.push_str("| metric | cell | instance | reason |\n|---|---|---|---|\n");
        for s in &table.skips {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                s.metric,
                md_escape(&s.cell.to_string()),
                md_escape(&s.instance_id),
                md_escape(&s.reason)
            );
        }
    }

    out.push_str("\n## Warnings\n\n");
    if table.warnings.is_empty() {
        out.push_str("None.\n");
    } else {
        for w in &table.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Background for a value at `t` in [0, 1] of its column range (1 = best).
fn shade(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    // white to green
    let r = (255.0 - 155.0 * t).round() as u8;
    let b = (255.0 - 155.0 * t).round() as u8;
    format!("rgb({r},255,{b})")
}

fn render_html(table: &MetricTable) -> String {
    type Getter = fn(&super::CellScores) -> Option<f64>;
    let columns: [(&str, Getter, bool); 5] = [
        ("HA ↑", |s| s.ha, true),
        ("R ↓", |s| s.r, false),
        ("Cn ↑", |s| s.cn, true),
        ("Ct ↑", |s| s.ct, true),
        ("CWS ↑", |s| s.cws, true),
    ];
    let ranges: Vec<Option<(f64, f64)>> = columns
        .iter()
        .map(|(_, get, _)| {
            table.cells.values().filter_map(get).fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
            })
        })
        .collect();

    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>XAI evaluation report</title>\n");
    out.push_str("<style>table{border-collapse:collapse;font-family:sans-serif}td,th{border:1px solid #ccc;padding:4px 8px}td.num{text-align:right}</style>\n");
    out.push_str("</head>\n<body>\n<h1>XAI evaluation report</h1>\n");
    out.push_str("<p>Darker means better within the column. R is lower-is-better.</p>\n<table>\n<tr><th>dataset</th><th>model</th><th>method</th>");
    for (name, _, _) in &columns {
        let _ = write!(out, "<th>{name}</th>");
    }
    out.push_str("</tr>\n");
    for (cell, s) in &table.cells {
        let _ = write!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{}</td>",
            html_escape(&cell.dataset),
            html_escape(&cell.model),
            html_escape(&cell.method)
        );
        for ((_, get, higher_better), range) in columns.iter().zip(&ranges) {
            match (get(s), range) {
                (Some(v), Some((lo, hi))) => {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
                    let t = if *higher_better { t } else { 1.0 - t };
                    let _ = write!(out, "<td class=\"num\" style=\"background:{}\">{v:.4}</td>", shade(t));
                }
                _ => out.push_str("<td class=\"num\">n/a</td>"),
            }
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    if !table.skips.is_empty() || !table.warnings.is_empty() {
        let _ = writeln!(
            out,
            "<p>{} skipped instance(s), {} warning(s). See the markdown or jsonl report for details.</p>",
            table.skips.len(),
            table.warnings.len()
        );
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// One explanation as colored token spans: red for positive saliency, blue
/// for negative, opacity proportional to |score| over the largest |score|.
pub fn render_token_heatmap(tokens: &[String], scores: &[f64]) -> String {
    let max = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let mut out = String::from("<div class=\"token-heatmap\">");
    for (tok, &s) in tokens.iter().zip(scores) {
        let alpha = if max > 0.0 { s.abs() / max } else { 0.0 };
        let rgb = if s >= 0.0 { "220,40,40" } else { "40,80,220" };
        let _ = write!(
            out,
            "<span title=\"{s}\" style=\"background:rgba({rgb},{alpha:.3})\">{}</span> ",
            html_escape(tok)
        );
    }
    out.push_str("</div>\n");
    out
}
