//! The filtered generation loop.
//!
//! Each attempt asks the language model for a continuation of the prompt
//! plus everything accepted so far, splits the reply into sentences and
//! checks every candidate against each prompt sentence and each accepted
//! sentence. The first failing check rejects the candidate and discards the
//! rest of that reply. A run stops on the length criterion or after too many
//! consecutive attempts without an acceptance; short runs are restarted
//! from the bare prompt.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    lm_complete, new_token_budget, BackendError, CompletionRequest, LmBackend, NliBackend,
    NliRequest, SamplingParams,
};
use crate::nli::{NliDistribution, Strategy, StrategyKind};
use crate::segment::{split_sentences, Sentence};
use crate::util::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub strategy: Strategy,
    pub params: SamplingParams,
    /// Total budget per proposal, counting the original prompt.
    pub proposal_budget_tokens: u32,
    /// Total budget for the single vanilla call, counting the prompt.
    pub control_budget_tokens: u32,
    pub max_consecutive_failures: u32,
    pub success_min_chars: u32,
    pub success_min_sentences: u32,
    pub restart_min_sentences: u32,
    pub max_runs: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::neu(),
            params: SamplingParams::default(),
            proposal_budget_tokens: 128,
            control_budget_tokens: 256,
            max_consecutive_failures: 7,
            success_min_chars: 256,
            success_min_sentences: 3,
            restart_min_sentences: 2,
            max_runs: 2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let knobs = [
            ("proposal_budget_tokens", self.proposal_budget_tokens),
            ("control_budget_tokens", self.control_budget_tokens),
            ("max_consecutive_failures", self.max_consecutive_failures),
            ("success_min_chars", self.success_min_chars),
            ("success_min_sentences", self.success_min_sentences),
            ("restart_min_sentences", self.restart_min_sentences),
            ("max_runs", self.max_runs),
        ];
        for (name, value) in knobs {
            if value == 0 {
                return Err(PipelineError::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        self.params
            .validate()
            .map_err(|e| PipelineError::InvalidInput(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PremiseOrigin {
    Prompt,
    Continuation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub premise_text: String,
    pub premise_origin: PremiseOrigin,
    pub distribution: NliDistribution,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Accepted,
    Rejected,
    DiscardedAfterReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub run_index: u32,
    pub attempt_index: u32,
    pub candidate: Sentence,
    pub checks: Vec<Check>,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    SuccessLength,
    ConsecutiveFailures,
    EmptyAfterRestarts,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::SuccessLength => "SUCCESS_LENGTH",
            StopReason::ConsecutiveFailures => "CONSECUTIVE_FAILURES",
            StopReason::EmptyAfterRestarts => "EMPTY_AFTER_RESTARTS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub strategy: StrategyKind,
    pub top_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub prompt: String,
    pub accepted: Vec<String>,
    pub continuation_text: String,
    pub stop_reason: StopReason,
    pub runs_used: u32,
    pub attempts_per_run: Vec<u32>,
    pub condition: Condition,
    pub seed: Option<u64>,
    pub trace: GenerationTrace,
}

impl GenerationResult {
    pub fn lm_calls(&self) -> u32 {
        self.attempts_per_run.iter().sum()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backend failure: {source}")]
    Backend {
        #[source]
        source: BackendError,
        partial_trace: GenerationTrace,
    },
}

impl PipelineError {
    pub fn partial_trace(&self) -> Option<&GenerationTrace> {
        match self {
            PipelineError::Backend { partial_trace, .. } => Some(partial_trace),
            PipelineError::InvalidInput(_) => None,
        }
    }
}

fn check_prompt(prompt: &str) -> Result<(), PipelineError> {
    if prompt.trim().is_empty() {
        return Err(PipelineError::InvalidInput("prompt is empty".into()));
    }
    Ok(())
}

/// Vanilla sampling: one call under the control budget, every sentence kept.
pub fn generate_vanilla(
    lm: &dyn LmBackend,
    prompt: &str,
    params: &SamplingParams,
) -> Result<GenerationResult, PipelineError> {
    check_prompt(prompt)?;
    let response = lm_complete(lm, prompt, params).map_err(|source| PipelineError::Backend {
        source,
        partial_trace: GenerationTrace::default(),
    })?;
    let sentences = split_sentences(&response.text);
    let accepted: Vec<String> = sentences.iter().map(|s| s.text.clone()).collect();
    let events = sentences
        .into_iter()
        .map(|candidate| TraceEvent {
            run_index: 0,
            attempt_index: 0,
            candidate,
            checks: Vec::new(),
            decision: Decision::Accepted,
            note: None,
        })
        .collect();
    Ok(GenerationResult {
        prompt: prompt.to_string(),
        continuation_text: accepted.join(" "),
        accepted,
        stop_reason: StopReason::SuccessLength,
        runs_used: 1,
        attempts_per_run: vec![1],
        condition: Condition {
            strategy: StrategyKind::Control,
            top_p: params.top_p,
        },
        seed: params.seed,
        trace: GenerationTrace { events },
    })
}

struct Run {
    accepted: Vec<String>,
    attempts: u32,
    stop: StopReason,
}

struct FilterLoop<'a> {
    lm: &'a dyn LmBackend,
    nli: &'a dyn NliBackend,
    prompt: &'a str,
    config: &'a PipelineConfig,
    prompt_sentences: Vec<String>,
    prompt_tokens: Option<u32>,
    attempts_total: u64,
    events: Vec<TraceEvent>,
}

impl FilterLoop<'_> {
    fn succeeded(&self, accepted: &[String]) -> bool {
        let chars = accepted.iter().map(|s| s.chars().count()).sum::<usize>()
            + accepted.len().saturating_sub(1);
        chars > self.config.success_min_chars as usize
            && accepted.len() >= self.config.success_min_sentences as usize
    }

    fn propose(&mut self, accepted: &[String]) -> Result<String, BackendError> {
        let full_prompt = if accepted.is_empty() {
            self.prompt.to_string()
        } else {
            format!("{} {}", self.prompt.trim_end(), accepted.join(" "))
        };
        let max_tokens = new_token_budget(
            self.prompt,
            self.config.proposal_budget_tokens,
            self.prompt_tokens,
        )?;
        let params = &self.config.params;
        let seed = params.seed.map(|s| s.wrapping_add(self.attempts_total));
        self.attempts_total += 1;
        let response = self.lm.complete(&CompletionRequest {
            prompt: full_prompt,
            max_tokens,
            top_p: params.top_p,
            temperature: params.temperature,
            seed,
        })?;
        if accepted.is_empty() && response.prompt_tokens.is_some() {
            self.prompt_tokens = response.prompt_tokens;
        }
        Ok(response.text)
    }

    /// Runs premise checks for one candidate, stopping at the first failure.
    fn check(&self, candidate: &str, accepted: &[String]) -> Result<Vec<Check>, BackendError> {
        let premises = self
            .prompt_sentences
            .iter()
            .map(|p| (p, PremiseOrigin::Prompt))
            .chain(accepted.iter().map(|p| (p, PremiseOrigin::Continuation)));
        let mut checks = Vec::new();
        for (premise, origin) in premises {
            let distribution = self.nli.classify(&NliRequest::new(premise, candidate)?)?;
            let passed = self.config.strategy.accepts(&distribution);
            checks.push(Check {
                premise_text: premise.clone(),
                premise_origin: origin,
                distribution,
                passed,
            });
            if !passed {
                break;
            }
        }
        Ok(checks)
    }

    fn run(&mut self, run_index: u32) -> Result<Run, BackendError> {
        let mut accepted: Vec<String> = Vec::new();
        let mut failures = 0;
        let mut attempts = 0;
        loop {
            if failures >= self.config.max_consecutive_failures {
                return Ok(Run {
                    accepted,
                    attempts,
                    stop: StopReason::ConsecutiveFailures,
                });
            }
            let attempt_index = attempts;
            attempts += 1;
            let text = self.propose(&accepted)?;

            let mut any_accepted = false;
            let mut rejected = false;
            for candidate in split_sentences(&text) {
                let event = |candidate, checks, decision, note: Option<&str>| TraceEvent {
                    run_index,
                    attempt_index,
                    candidate,
                    checks,
                    decision,
                    note: note.map(str::to_string),
                };
                if rejected {
                    self.events
                        .push(event(candidate, Vec::new(), Decision::DiscardedAfterReject, None));
                    continue;
                }
                if !candidate.terminated {
                    self.events.push(event(
                        candidate,
                        Vec::new(),
                        Decision::DiscardedAfterReject,
                        Some("unterminated trailing fragment"),
                    ));
                    continue;
                }
                let checks = self.check(&candidate.text, &accepted)?;
                if checks.iter().all(|c| c.passed) {
                    accepted.push(candidate.text.clone());
                    any_accepted = true;
                    self.events.push(event(candidate, checks, Decision::Accepted, None));
                    if self.succeeded(&accepted) {
                        return Ok(Run {
                            accepted,
                            attempts,
                            stop: StopReason::SuccessLength,
                        });
                    }
                } else {
                    rejected = true;
                    self.events.push(event(candidate, checks, Decision::Rejected, None));
                }
            }
            if any_accepted {
                failures = 0;
            } else {
                failures += 1;
            }
        }
    }
}

/// NLI-filtered generation under a non-control strategy.
pub fn generate_filtered(
    lm: &dyn LmBackend,
    nli: &dyn NliBackend,
    prompt: &str,
    config: &PipelineConfig,
) -> Result<GenerationResult, PipelineError> {
    check_prompt(prompt)?;
    config.validate()?;
    if config.strategy.kind() == StrategyKind::Control {
        return Err(PipelineError::InvalidInput(
            "CONTROL has no filter; use generate_vanilla".into(),
        ));
    }

    let mut state = FilterLoop {
        lm,
        nli,
        prompt,
        config,
        prompt_sentences: split_sentences(prompt).into_iter().map(|s| s.text).collect(),
        prompt_tokens: None,
        attempts_total: 0,
        events: Vec::new(),
    };

    let mut runs: Vec<Run> = Vec::new();
    for run_index in 0..config.max_runs {
        let run = match state.run(run_index) {
            Ok(run) => run,
            Err(source) => {
                return Err(PipelineError::Backend {
                    source,
                    partial_trace: GenerationTrace {
                        events: state.events,
                    },
                })
            }
        };
        let short = run.accepted.len() < config.restart_min_sentences as usize;
        runs.push(run);
        if !short {
            break;
        }
    }

    let attempts_per_run = runs.iter().map(|r| r.attempts).collect();
    let runs_used = runs.len() as u32;
    // Most sentences wins; ties go to the later run.
    let best = runs
        .into_iter()
        .rev()
        .max_by_key(|r| r.accepted.len())
        .expect("at least one run");
    let stop_reason = if best.accepted.is_empty() {
        StopReason::EmptyAfterRestarts
    } else {
        best.stop
    };
    Ok(GenerationResult {
        prompt: prompt.to_string(),
        continuation_text: best.accepted.join(" "),
        accepted: best.accepted,
        stop_reason,
        runs_used,
        attempts_per_run,
        condition: Condition {
            strategy: config.strategy.kind(),
            top_p: config.params.top_p,
        },
        seed: config.params.seed,
        trace: GenerationTrace {
            events: state.events,
        },
    })
}

/// Dispatches to vanilla or filtered generation by strategy.
pub fn generate(
    lm: &dyn LmBackend,
    nli: &dyn NliBackend,
    prompt: &str,
    config: &PipelineConfig,
) -> Result<GenerationResult, PipelineError> {
    if config.strategy.kind() == StrategyKind::Control {
        config.validate()?;
        let params = SamplingParams {
            max_total_tokens: config.control_budget_tokens,
            ..config.params
        };
        generate_vanilla(lm, prompt, &params)
    } else {
        generate_filtered(lm, nli, prompt, config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub strategy: Strategy,
    pub top_p: f64,
}

/// Per-cell seed: `base + mix(prompt_index, cell_index)`.
pub fn derive_cell_seed(base: u64, prompt_index: usize, cell_index: usize) -> u64 {
    base.wrapping_add(mix64(((prompt_index as u64) << 32) ^ cell_index as u64))
}

/// Configuration actually used for one grid cell.
pub fn cell_config(config: &PipelineConfig, cell: &GridCell, seed: u64) -> PipelineConfig {
    PipelineConfig {
        strategy: cell.strategy,
        params: SamplingParams {
            top_p: cell.top_p,
            seed: Some(seed),
            ..config.params
        },
        ..*config
    }
}

#[derive(Debug)]
pub struct BatchItem {
    pub prompt_index: usize,
    pub prompt_id: String,
    pub cell_index: usize,
    pub condition: Condition,
    pub seed: u64,
    pub outcome: Result<GenerationResult, PipelineError>,
}

#[derive(Debug, Default)]
pub struct BatchReport {
    /// Prompt-major, grid-minor.
    pub items: Vec<BatchItem>,
}

impl BatchReport {
    pub fn failures(&self) -> usize {
        self.items.iter().filter(|i| i.outcome.is_err()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = (&BatchItem, &GenerationResult)> {
        self.items
            .iter()
            .filter_map(|i| i.outcome.as_ref().ok().map(|r| (i, r)))
    }
}

/// Runs every prompt under every grid cell on up to `workers` threads.
/// Item failures are collected rather than aborting the batch.
pub fn run_batch(
    lm: &dyn LmBackend,
    nli: &dyn NliBackend,
    prompts: &[PromptRecord],
    grid: &[GridCell],
    config: &PipelineConfig,
    workers: usize,
) -> Result<BatchReport, PipelineError> {
    if prompts.is_empty() {
        return Err(PipelineError::InvalidInput("no prompts".into()));
    }
    if grid.is_empty() {
        return Err(PipelineError::InvalidInput("empty condition grid".into()));
    }
    config.validate()?;

    let base = config.params.seed.unwrap_or(0);
    let total = prompts.len() * grid.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BatchItem>>> = Mutex::new((0..total).map(|_| None).collect());

    let work = || loop {
        let job = next.fetch_add(1, Ordering::Relaxed);
        if job >= total {
            break;
        }
        let (pi, ci) = (job / grid.len(), job % grid.len());
        let cell = &grid[ci];
        let seed = derive_cell_seed(base, pi, ci);
        let cfg = cell_config(config, cell, seed);
        let outcome = generate(lm, nli, &prompts[pi].prompt, &cfg);
        if let Err(e) = &outcome {
            log::warn!("prompt {} cell {ci} failed: {e}", prompts[pi].id);
        }
        let item = BatchItem {
            prompt_index: pi,
            prompt_id: prompts[pi].id.clone(),
            cell_index: ci,
            condition: Condition {
                strategy: cell.strategy.kind(),
                top_p: cell.top_p,
            },
            seed,
            outcome,
        };
        slots.lock().unwrap()[job] = Some(item);
    };

    let workers = workers.clamp(1, total);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let items = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every job slot is filled"))
        .collect();
    Ok(BatchReport { items })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub strategy: StrategyKind,
    pub top_p: f64,
    pub n: usize,
    pub failures: usize,
    pub mean_sentences: f64,
    pub mean_attempts: f64,
    pub stop_reasons: BTreeMap<StopReason, usize>,
}

pub fn summarize(report: &BatchReport) -> Vec<ConditionSummary> {
    let mut by_cell: BTreeMap<usize, ConditionSummary> = BTreeMap::new();
    for item in &report.items {
        let row = by_cell.entry(item.cell_index).or_insert_with(|| ConditionSummary {
            strategy: item.condition.strategy,
            top_p: item.condition.top_p,
            n: 0,
            failures: 0,
            mean_sentences: 0.0,
            mean_attempts: 0.0,
            stop_reasons: BTreeMap::new(),
        });
        match &item.outcome {
            Ok(r) => {
                row.n += 1;
                row.mean_sentences += r.accepted.len() as f64;
                row.mean_attempts += f64::from(r.lm_calls());
                *row.stop_reasons.entry(r.stop_reason).or_default() += 1;
            }
            Err(_) => row.failures += 1,
        }
    }
    by_cell
        .into_values()
        .map(|mut row| {
            if row.n > 0 {
                row.mean_sentences /= row.n as f64;
                row.mean_attempts /= row.n as f64;
            }
            row
        })
        .collect()
}

pub fn format_summary(rows: &[ConditionSummary]) -> String {
    let mut out = format!(
        "{:<9} {:>5} {:>4} {:>6} {:>10} {:>9}  {}\n",
        "strategy", "top_p", "n", "failed", "sentences", "attempts", "stop reasons"
    );
    for r in rows {
        let reasons: Vec<String> = r
            .stop_reasons
            .iter()
            .map(|(k, v)| format!("{}={v}", k.as_str()))
            .collect();
        out.push_str(&format!(
            "{:<9} {:>5} {:>4} {:>6} {:>10.2} {:>9.2}  {}\n",
            r.strategy.as_str(),
            r.top_p,
            r.n,
            r.failures,
            r.mean_sentences,
            r.mean_attempts,
            reasons.join(" ")
        ));
    }
    out
}
