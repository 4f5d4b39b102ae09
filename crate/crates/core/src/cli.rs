//! Command-line front end: `generate`, `analyze` and `mock-serve`.
//!
//! Exit codes: 0 success, 1 fatal error, 2 batch finished with per-item
//! failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    class_distribution, classify_examples, correlation_report, error_class_contingency,
    error_type_regressions, format_class_table, format_correlation_table,
    format_regression_table, labels_of, rating_regressions, ErrorOutcome, GroupBy,
};
use crate::backends::{
    cached, HttpLm, HttpNli, LmBackend, MockServer, NliBackend, NliTable, NoNli, SamplingParams,
    ScriptedLm,
};
use crate::corpus::{load_corpus, DEFAULT_MIN_AGREEMENT};
use crate::nli::{Strategy, StrategyKind};
use crate::pipeline::{format_summary, run_batch, summarize, GridCell, PipelineConfig};
use crate::records::{load_prompts, results_jsonl, traces_jsonl};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "entail-guard", version, about = "NLI-filtered text generation and annotation analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate continuations for every prompt under every strategy × top-p cell.
    Generate(GenerateArgs),
    /// Statistics over an annotated corpus.
    Analyze(AnalyzeArgs),
    /// Serve the completion and NLI endpoints from a fixture file.
    MockServe(MockServeArgs),
}

#[derive(Debug, Args)]
pub struct NliSource {
    /// Base URL of an NLI server exposing POST /nli.
    #[arg(long, conflicts_with = "mock_nli")]
    pub nli_endpoint: Option<String>,
    /// Table-driven NLI fixture (JSON) used instead of a server.
    #[arg(long)]
    pub mock_nli: Option<PathBuf>,
    /// JSON cache of NLI results; read before and written after the run.
    #[arg(long)]
    pub nli_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Prompts JSONL, one {"id", "prompt"} object per line.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Comma-separated strategies: control, neu, ent, con.
    #[arg(long, value_delimiter = ',', default_value = "control,neu,ent,con")]
    pub strategies: Vec<String>,
    /// Comma-separated nucleus-sampling values.
    #[arg(long = "top-p", value_delimiter = ',', default_value = "0.4,0.96")]
    pub top_p: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Base URL of a completion server exposing POST /v1/completions.
    #[arg(long, conflicts_with = "mock_script")]
    pub lm_endpoint: Option<String>,
    /// Scripted LM fixture (JSON) used instead of a server.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[command(flatten)]
    pub nli: NliSource,
    /// Results JSONL to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
    /// Also write per-candidate traces to `<output>.trace.jsonl`.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 0.85)]
    pub neutral_threshold: f64,
    #[arg(long, default_value_t = 128)]
    pub proposal_budget: u32,
    #[arg(long, default_value_t = 256)]
    pub control_budget: u32,
    #[arg(long, default_value_t = 7)]
    pub max_consecutive_failures: u32,
    #[arg(long, default_value_t = 256)]
    pub success_min_chars: u32,
    #[arg(long, default_value_t = 3)]
    pub success_min_sentences: u32,
    #[arg(long, default_value_t = 2)]
    pub restart_min_sentences: u32,
    #[arg(long, default_value_t = 2)]
    pub max_runs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Report {
    /// NLI class breakdown per group.
    Distribution,
    /// Error type × NLI class contingency.
    Errors,
    /// Spearman correlations of error proportions with class probabilities.
    Correlations,
    /// Holistic-rating and per-error-type regressions against the baseline.
    Ratings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    #[value(name = "top_p")]
    TopP,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    Count,
    Proportion,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub report: Report,
    /// Annotated corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub nli: NliSource,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "top_p")]
    pub group_by: GroupArg,
    /// Minimum annotator agreement for a span to count (inclusive).
    #[arg(long, default_value_t = DEFAULT_MIN_AGREEMENT)]
    pub min_agreement: f64,
    /// Reference level for regressions.
    #[arg(long, default_value = "CONTROL")]
    pub baseline: String,
    /// Outcome for the per-error-type regressions.
    #[arg(long, value_enum, default_value = "count")]
    pub error_outcome: OutcomeArg,
}

#[derive(Debug, Args)]
pub struct MockServeArgs {
    /// Fixture JSON: {"lm": <script>, "nli": <table>}.
    #[arg(long)]
    pub fixture: PathBuf,
    #[arg(long, default_value_t = 8099)]
    pub port: u16,
}

struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_FATAL
                }
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a, out, err),
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::MockServe(a) => cmd_mock_serve(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(Fatal(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_FATAL
        }
    }
}

fn build_nli(src: &NliSource) -> Result<Option<Box<dyn NliBackend>>, Fatal> {
    if let Some(url) = &src.nli_endpoint {
        return Ok(Some(Box::new(HttpNli::new(url))));
    }
    if let Some(path) = &src.mock_nli {
        return Ok(Some(Box::new(NliTable::from_path(path)?)));
    }
    Ok(None)
}

fn ensure_writable(path: &Path, force: bool) -> Result<(), Fatal> {
    if path.exists() && !force {
        return Err(Fatal(format!(
            "{} already exists (use --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

pub fn trace_path(output: &Path) -> PathBuf {
    output.with_extension("trace.jsonl")
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Fatal> {
    let kinds = a
        .strategies
        .iter()
        .map(|s| s.parse::<StrategyKind>())
        .collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() || a.top_p.is_empty() {
        return Err(Fatal("need at least one strategy and one --top-p value".into()));
    }
    let needs_nli = kinds.iter().any(|k| *k != StrategyKind::Control);

    let lm: Box<dyn LmBackend> = match (&a.lm_endpoint, &a.mock_script) {
        (Some(url), _) => Box::new(HttpLm::new(url)),
        (None, Some(path)) => Box::new(ScriptedLm::from_path(path)?),
        (None, None) => {
            return Err(Fatal(
                "usage: one of --lm-endpoint or --mock-script is required".into(),
            ))
        }
    };
    let inner = match build_nli(&a.nli)? {
        Some(b) => b,
        None if needs_nli => {
            return Err(Fatal(
                "usage: a non-control strategy needs --nli-endpoint or --mock-nli".into(),
            ))
        }
        None => Box::new(NoNli),
    };
    let nli = cached(inner);
    if let Some(cache) = &a.nli.nli_cache {
        nli.load_file(cache)?;
    }

    ensure_writable(&a.output, a.force)?;
    if a.trace {
        ensure_writable(&trace_path(&a.output), a.force)?;
    }
    let prompts = load_prompts(&a.prompts)?;

    let mut grid = Vec::new();
    for &top_p in &a.top_p {
        for &kind in &kinds {
            grid.push(GridCell {
                strategy: Strategy::new(kind, a.neutral_threshold)?,
                top_p,
            });
        }
    }
    let config = PipelineConfig {
        strategy: grid[0].strategy,
        params: SamplingParams {
            top_p: grid[0].top_p,
            temperature: a.temperature,
            max_total_tokens: a.proposal_budget,
            seed: Some(a.seed),
        },
        proposal_budget_tokens: a.proposal_budget,
        control_budget_tokens: a.control_budget,
        max_consecutive_failures: a.max_consecutive_failures,
        success_min_chars: a.success_min_chars,
        success_min_sentences: a.success_min_sentences,
        restart_min_sentences: a.restart_min_sentences,
        max_runs: a.max_runs,
    };

    let report = run_batch(&lm, &nli, &prompts, &grid, &config, a.workers)?;

    std::fs::write(&a.output, results_jsonl(&report))?;
    if a.trace {
        std::fs::write(trace_path(&a.output), traces_jsonl(&report))?;
    }
    if let Some(cache) = &a.nli.nli_cache {
        nli.save_file(cache)?;
    }

    write!(out, "{}", format_summary(&summarize(&report)))?;
    let failures = report.failures();
    for item in report.items.iter() {
        if let Err(e) = &item.outcome {
            writeln!(
                err,
                "failed: prompt {} ({} p={}): {e}",
                item.prompt_id, item.condition.strategy, item.condition.top_p
            )?;
        }
    }
    if failures > 0 {
        writeln!(err, "{failures} of {} items failed", report.items.len())?;
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Fatal> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32, Fatal> {
    let corpus = load_corpus(&a.corpus)?;
    let group_by = match a.group_by {
        GroupArg::TopP => GroupBy::TopP,
        GroupArg::None => GroupBy::None,
    };

    if a.report == Report::Ratings {
        let outcome = match a.error_outcome {
            OutcomeArg::Count => ErrorOutcome::Count,
            OutcomeArg::Proportion => ErrorOutcome::Proportion,
        };
        let holistic = rating_regressions(&corpus, group_by, &a.baseline)?;
        let by_error =
            error_type_regressions(&corpus, group_by, &a.baseline, a.min_agreement, outcome)?;
        let text = match a.format {
            Format::Json => to_json(&serde_json::json!({
                "holistic": holistic,
                "error_types": by_error,
            }))?,
            Format::Table => format!(
                "{}\n{}",
                format_regression_table(&holistic),
                format_regression_table(&by_error)
            ),
        };
        out.write_all(text.as_bytes())?;
        return Ok(EXIT_OK);
    }

    let inner: Box<dyn NliBackend> = match build_nli(&a.nli)? {
        Some(b) => b,
        None if a.nli.nli_cache.is_some() => Box::new(NoNli),
        None => {
            return Err(Fatal(
                "usage: this report needs --nli-endpoint, --mock-nli or --nli-cache".into(),
            ))
        }
    };
    let nli = cached(inner);
    if let Some(cache) = &a.nli.nli_cache {
        nli.load_file(cache)?;
    }
    let dists = classify_examples(&nli, &corpus)?;
    if let Some(cache) = &a.nli.nli_cache {
        nli.save_file(cache)?;
    }
    let labels = labels_of(&dists);

    let text = match a.report {
        Report::Distribution => {
            let rows = class_distribution(&labels, &corpus, group_by)?;
            match a.format {
                Format::Json => to_json(&rows)?,
                Format::Table => format_class_table(&rows),
            }
        }
        Report::Errors => {
            let rows = error_class_contingency(&labels, &corpus, group_by, a.min_agreement)?;
            match a.format {
                Format::Json => to_json(&rows)?,
                Format::Table => format_class_table(&rows),
            }
        }
        Report::Correlations => {
            let rows = correlation_report(&dists, &corpus, group_by, a.min_agreement)?;
            match a.format {
                Format::Json => to_json(&rows)?,
                Format::Table => format_correlation_table(&rows),
            }
        }
        Report::Ratings => unreachable!("handled above"),
    };
    out.write_all(text.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_mock_serve(a: &MockServeArgs, out: &mut dyn Write) -> Result<i32, Fatal> {
    let server = MockServer::start_from_file(&a.fixture, a.port)?;
    writeln!(out, "mock server listening on {}", server.base_url())?;
    out.flush()?;
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    rt.block_on(tokio::signal::ctrl_c())?;
    server.shutdown()?;
    writeln!(out, "mock server stopped")?;
    Ok(EXIT_OK)
}
