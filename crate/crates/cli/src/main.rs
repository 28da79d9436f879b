//! `xaieval`: validate corpora, score explanations, and render reports.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use xaieval_core::aggregate::{load_results, render_report, ReportFormat};
use xaieval_core::config::{ConfigError, Metric, RunConfig};
use xaieval_core::corpus::validate::{validate_corpus, CorpusPaths};
use xaieval_core::corpus::{parse_saliency, CorpusError, SaliencyRecord, SkipEntry, Variant};
use xaieval_core::pipeline::{evaluate, PipelineError};
use xaieval_core::robustness::{PerturbationSpec, Perturber, Strategy};
use xaieval_core::synth::{self, SynthConfig, SynthKind};

#[derive(Parser)]
#[command(name = "xaieval", version, about = "Score token-saliency explanations on four metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check corpus files and list every schema problem with file:line.
    Validate(ValidateArgs),
    /// Human-reasoning agreement (MAP) only.
    Ha(RunArgs),
    /// Robustness (MAD per perturbation strategy) only.
    Robustness(RunArgs),
    /// Consistency (Spearman rho across seeds) only.
    Consistency(RunArgs),
    /// Contrastivity (KL between class importance distributions) only.
    Contrastivity(RunArgs),
    /// All four metrics plus the combined weighted score.
    Evaluate(RunArgs),
    /// Write a synthetic corpus with known metric values.
    Synth(SynthArgs),
    /// Re-render saved jsonl results in another format or with new weights.
    Report(ReportArgs),
    /// Emit perturbed_inputs.jsonl for an external explainer.
    Perturb(PerturbArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    explanations: Option<PathBuf>,
    #[arg(long)]
    rationales: Option<PathBuf>,
    #[arg(long)]
    attention: Option<PathBuf>,
    /// Keep token case when normalizing rationales.
    #[arg(long)]
    no_lowercase: bool,
    #[arg(long)]
    no_strip_punctuation: bool,
}

#[derive(Args, Default)]
struct RunArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    explanations: Option<PathBuf>,
    #[arg(long)]
    rationales: Option<PathBuf>,
    #[arg(long)]
    attention: Option<PathBuf>,
    /// Comma-separated subset of ha,robustness,consistency,contrastivity (evaluate only).
    #[arg(long)]
    metrics: Option<String>,
    /// Keep token case when matching.
    #[arg(long)]
    no_lowercase: bool,
    /// Keep leading and trailing punctuation when matching.
    #[arg(long)]
    no_strip_punctuation: bool,
    /// cosine or euclidean.
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// e or 2.
    #[arg(long)]
    log_base: Option<String>,
    /// raw or abs.
    #[arg(long)]
    rank_by: Option<String>,
    /// per_class or sign_split.
    #[arg(long)]
    contrast_mode: Option<String>,
    /// Perturbation strategy whose MAD feeds the combined score.
    #[arg(long)]
    robustness_strategy: Option<String>,
    /// e.g. ha=0.25,cn=0.25,ct=0.25,r=0.25
    #[arg(long)]
    weights: Option<String>,
    /// csv, markdown, jsonl, or html_heatmap; defaults from the --out extension.
    #[arg(long)]
    format: Option<String>,
    /// Report path, or `-` for stdout.
    #[arg(long)]
    out: Option<String>,
    /// Skip report path; defaults to the report path with `.skips.jsonl`.
    #[arg(long)]
    skips: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n_instances: usize,
    #[arg(long, default_value_t = 10)]
    tokens: usize,
    /// swap_rate (ha, default 0.1), noise_sigma (robustness, default 0.1),
    /// or coupling_noise (consistency, default 0).
    #[arg(long)]
    knob: Option<f64>,
    /// Consistency only: make explanation distance decrease with attention distance.
    #[arg(long)]
    antitone: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results file written with --format jsonl.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: String,
    /// Recompute the combined score with these weights.
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    explanations: PathBuf,
    /// mask_top_k:K, remove_bottom_k:K, or synonym_replace:RATE
    #[arg(long)]
    strategy: String,
    /// Two-column synonym file, required by synonym_replace.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "[MASK]")]
    mask_token: String,
    /// Restrict to one model when the file holds several.
    #[arg(long)]
    model: Option<String>,
    /// Restrict to one method when the file holds several.
    #[arg(long)]
    method: Option<String>,
    /// Output path, or `-` for stdout.
    #[arg(long)]
    out: String,
}

/// Failure classes, mapped to exit codes 2 and 1.
enum Failure {
    Usage(String),
    Invalid(Vec<String>),
    Internal(anyhow::Error),
    /// Exit 2; the details were already printed.
    Reported,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn color_enabled() -> bool {
    std::env::var_os("XAIEVAL_NO_COLOR").is_none() && std::io::stderr().is_terminal()
}

fn paint(text: &str, code: &str) -> String {
    if color_enabled() {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error"))
        .write_style(if color_enabled() {
            env_logger::WriteStyle::Auto
        } else {
            env_logger::WriteStyle::Never
        })
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Ha(a) => cmd_run(a, Some(Metric::Ha)),
        Command::Robustness(a) => cmd_run(a, Some(Metric::Robustness)),
        Command::Consistency(a) => cmd_run(a, Some(Metric::Consistency)),
        Command::Contrastivity(a) => cmd_run(a, Some(Metric::Contrastivity)),
        Command::Evaluate(a) => cmd_run(a, None),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(a),
        Command::Perturb(a) => cmd_perturb(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{} {msg}", paint("error:", "31"));
            ExitCode::from(2)
        }
        Err(Failure::Invalid(lines)) => {
            for l in &lines {
                eprintln!("{l}");
            }
            eprintln!("{} {} error(s)", paint("error:", "31"), lines.len());
            ExitCode::from(2)
        }
        Err(Failure::Reported) => ExitCode::from(2),
        Err(Failure::Internal(e)) => {
            eprintln!("{} {e:#}", paint("internal error:", "31"));
            ExitCode::from(1)
        }
    }
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    if a.explanations.is_none() && a.rationales.is_none() && a.attention.is_none() {
        return Err(Failure::Usage("nothing to validate; pass --explanations, --rationales, or --attention".into()));
    }
    let mut normalizer = xaieval_core::TokenNormalizer::default();
    normalizer.lowercase = !a.no_lowercase;
    normalizer.strip_outer_punctuation = !a.no_strip_punctuation;
    let paths = CorpusPaths {
        explanations: a.explanations.as_deref(),
        rationales: a.rationales.as_deref(),
        attention: a.attention.as_deref(),
    };
    let report = validate_corpus(&paths, &normalizer);
    let mut stdout = std::io::stdout().lock();
    for line in report.lines() {
        writeln!(stdout, "{line}").map_err(|e| Failure::Internal(e.into()))?;
    }
    writeln!(stdout, "{} errors", report.error_count()).map_err(|e| Failure::Internal(e.into()))?;
    if report.is_clean() {
        Ok(())
    } else {
        Err(Failure::Reported)
    }
}

fn build_config(a: &RunArgs, only: Option<Metric>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &a.config {
        cfg.apply_config_file(p)?;
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags = [
        ("explanations", path(&a.explanations)),
        ("rationales", path(&a.rationales)),
        ("attention", path(&a.attention)),
        ("metrics", a.metrics.clone()),
        ("distance", a.distance.clone()),
        ("epsilon", a.epsilon.clone()),
        ("log_base", a.log_base.clone()),
        ("rank_by", a.rank_by.clone()),
        ("contrast_mode", a.contrast_mode.clone()),
        ("robustness_strategy", a.robustness_strategy.clone()),
        ("weights", a.weights.clone()),
        ("format", a.format.clone()),
        ("out", a.out.clone()),
        ("parallelism", a.parallelism.clone()),
        ("seed", a.seed.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if a.no_lowercase {
        cfg.normalizer.lowercase = false;
    }
    if a.no_strip_punctuation {
        cfg.normalizer.strip_outer_punctuation = false;
    }
    if let Some(m) = only {
        if a.metrics.is_some() {
            return Err(Failure::Usage(format!("--metrics is only accepted by evaluate, not {m}")));
        }
        cfg.metrics = [m].into_iter().collect();
    }
    Ok(cfg)
}

/// Writes to a path, or stdout for `-`.
fn emit(out: &str, text: &str) -> Result<(), Failure> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(text.as_bytes())
            .and_then(|_| stdout.flush())
            .context("writing to stdout")?;
    } else {
        let p = Path::new(out);
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(p, text).with_context(|| format!("writing {out}"))?;
    }
    Ok(())
}

fn skips_path(a: &RunArgs, out: &str) -> PathBuf {
    if let Some(p) = &a.skips {
        return p.clone();
    }
    if out == "-" {
        return PathBuf::from("xaieval.skips.jsonl");
    }
    let p = Path::new(out);
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}.skips.jsonl"))
}

fn write_skips(path: &Path, skips: &[SkipEntry]) -> Result<(), Failure> {
    let mut text = String::new();
    for s in skips {
        text.push_str(&serde_line(s));
    }
    emit(&path.display().to_string(), &text)
}

fn serde_line<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn cmd_run(a: RunArgs, only: Option<Metric>) -> Result<(), Failure> {
    let cfg = build_config(&a, only)?;
    let out = cfg
        .out
        .as_ref()
        .map(|p| p.display().to_string())
        .ok_or_else(|| Failure::Usage("no report path; pass --out PATH (or --out - for stdout)".into()))?;
    let evaluation = match evaluate(&cfg) {
        Ok(e) => e,
        Err(PipelineError::Invalid(diags)) => return Err(Failure::Invalid(diags.iter().map(ToString::to_string).collect())),
        Err(PipelineError::Config(e)) => return Err(e.into()),
        Err(PipelineError::Weights(e)) => return Err(Failure::Usage(e.to_string())),
        Err(e @ PipelineError::Io { .. }) => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(Failure::Internal(e.into())),
    };
    let table = &evaluation.table;
    for w in &table.warnings {
        log::warn!("{w}");
    }
    let skips = skips_path(&a, &out);
    write_skips(&skips, &table.skips)?;
    if table.cells.is_empty() {
        return Err(Failure::Usage("no (dataset, model, method) cells in the input".into()));
    }
    let text = render_report(table, cfg.effective_format()).map_err(|e| Failure::Internal(e.into()))?;
    emit(&out, &text)?;
    if out != "-" {
        eprintln!(
            "wrote {out} ({} cell(s), {} skipped instance(s), {} warning(s))",
            table.cells.len(),
            table.skips.len(),
            table.warnings.len()
        );
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let kind: SynthKind = a.kind.parse().map_err(Failure::Usage)?;
    let knob = a.knob.unwrap_or(match kind {
        SynthKind::Ha => 0.1,
        SynthKind::Robustness => 0.1,
        SynthKind::Consistency => 0.0,
    });
    let cfg = SynthConfig::new(a.seed, a.n_instances, a.tokens, knob);
    let corpus = match kind {
        SynthKind::Consistency => synth::gen_consistency_corpus(&cfg, a.antitone),
        _ if a.antitone => return Err(Failure::Usage("--antitone only applies to --kind consistency".into())),
        k => synth::generate(k, &cfg),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let written = corpus
        .write_to(&a.out)
        .with_context(|| format!("writing corpus to {}", a.out.display()))?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    if !a.results.is_file() {
        return Err(Failure::Usage(format!("results file not found: {}", a.results.display())));
    }
    let mut table = load_results(&a.results).map_err(|e| Failure::Invalid(vec![e.to_string()]))?;
    if let Some(w) = &a.weights {
        table.weights = w.parse().map_err(|e: xaieval_core::aggregate::WeightsError| Failure::Usage(e.to_string()))?;
        table.metadata.insert("config.weights".into(), table.weights.to_string());
        table.recompute().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let format = match &a.format {
        Some(f) => f.parse().map_err(|e: xaieval_core::aggregate::ReportError| Failure::Usage(e.to_string()))?,
        None => ReportFormat::from_extension(Path::new(&a.out)).unwrap_or(ReportFormat::Markdown),
    };
    let text = render_report(&table, format).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(&a.out, &text)
}

fn parse_strategy(tag: &str, lexicon: Option<&Path>) -> Result<Strategy, String> {
    let (name, arg) = tag
        .split_once(':')
        .ok_or_else(|| format!("strategy {tag:?} must look like name:value"))?;
    let k = || arg.parse::<usize>().map_err(|_| format!("bad k in {tag:?}"));
    match name {
        "mask_top_k" => Ok(Strategy::MaskTopK(k()?)),
        "remove_bottom_k" => Ok(Strategy::RemoveBottomK(k()?)),
        "synonym_replace" => Ok(Strategy::SynonymReplace {
            lexicon_file: lexicon
                .ok_or("synonym_replace needs --lexicon")?
                .to_path_buf(),
            rate: arg.parse().map_err(|_| format!("bad rate in {tag:?}"))?,
        }),
        other => Err(format!("unknown strategy {other:?}")),
    }
}

fn cmd_perturb(a: PerturbArgs) -> Result<(), Failure> {
    let strategy = parse_strategy(&a.strategy, a.lexicon.as_deref()).map_err(Failure::Usage)?;
    let mut spec = PerturbationSpec::new(strategy, a.seed);
    spec.mask_token = a.mask_token.clone();
    let perturber = Perturber::new(spec, Default::default()).map_err(|e| Failure::Usage(e.to_string()))?;
    let records = match parse_saliency(&a.explanations) {
        Ok(r) => r,
        Err(CorpusError::Io { path, source }) => return Err(Failure::Usage(format!("cannot read {path}: {source}"))),
        Err(CorpusError::Invalid(d)) => return Err(Failure::Invalid(vec![d.to_string()])),
    };
    let mut chosen: Vec<&SaliencyRecord> = records
        .iter()
        .filter(|r| r.variant == Variant::Original && r.explains_prediction())
        .filter(|r| a.model.as_ref().is_none_or(|m| &r.model == m))
        .filter(|r| a.method.as_ref().is_none_or(|m| &r.method == m))
        .collect();
    chosen.sort_by(|x, y| x.key().cmp(&y.key()));
    let cells: std::collections::BTreeSet<_> = chosen.iter().map(|r| r.cell()).collect();
    if cells.len() > 1 {
        return Err(Failure::Usage(format!(
            "{} (dataset, model, method) cells in input; narrow with --model/--method",
            cells.len()
        )));
    }
    let mut text = String::new();
    for r in chosen {
        let p = perturber
            .generate(&r.tokens, r)
            .map_err(|e| Failure::Usage(format!("{}: {e}", r.instance_id)))?;
        text.push_str(&serde_line(&p));
    }
    emit(&a.out, &text)
}
