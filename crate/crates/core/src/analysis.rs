//! Corpus-level statistics: NLI class breakdowns, error-type contingency,
//! rank correlations and dummy-coded regressions against the control.
//!
//! Breakdowns use argmax labels; correlations use the raw class
//! probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, NliBackend, NliRequest};
use crate::corpus::{
    error_char_proportion, error_span_count, qualifying_spans, AnnotatedExample, ErrorType,
};
use crate::nli::{NliDistribution, NliLabel};
use crate::stats::{ols_regress, spearman, RegressionResult, StatsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("example {id}: {source}")]
    Backend {
        id: String,
        #[source]
        source: BackendError,
    },
    #[error("example {id}: {message}")]
    InvalidExample { id: String, message: String },
    #[error("example {id}: missing `{field}`")]
    MissingField { id: String, field: &'static str },
    #[error("no NLI label for example {0}")]
    MissingLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    #[default]
    TopP,
    None,
}

/// Whole-prompt premise, whole-generation hypothesis: one NLI call per example.
pub fn classify_examples(
    nli: &dyn NliBackend,
    corpus: &[AnnotatedExample],
) -> Result<BTreeMap<String, NliDistribution>, AnalysisError> {
    let mut out = BTreeMap::new();
    for ex in corpus {
        let invalid = |message: &str| AnalysisError::InvalidExample {
            id: ex.id.clone(),
            message: message.to_string(),
        };
        if ex.prompt.trim().is_empty() {
            return Err(invalid("empty prompt"));
        }
        if ex.generation.trim().is_empty() {
            return Err(invalid("empty generation"));
        }
        let req = NliRequest::new(&ex.prompt, &ex.generation).map_err(|source| {
            AnalysisError::Backend {
                id: ex.id.clone(),
                source,
            }
        })?;
        let d = nli.classify(&req).map_err(|source| AnalysisError::Backend {
            id: ex.id.clone(),
            source,
        })?;
        out.insert(ex.id.clone(), d);
    }
    Ok(out)
}

pub fn labels_of(dists: &BTreeMap<String, NliDistribution>) -> BTreeMap<String, NliLabel> {
    dists.iter().map(|(id, d)| (id.clone(), d.label())).collect()
}

/// One bucket of examples, keyed by `top_p` (`None` when not grouping).
pub type ExampleGroup<'a> = (Option<f64>, Vec<&'a AnnotatedExample>);

/// Examples bucketed by `top_p` (ascending); `None` key when not grouping.
pub fn group_examples(
    corpus: &[AnnotatedExample],
    group_by: GroupBy,
) -> Result<Vec<ExampleGroup<'_>>, AnalysisError> {
    match group_by {
        GroupBy::None => Ok(vec![(None, corpus.iter().collect())]),
        GroupBy::TopP => {
            let mut groups: Vec<(Option<f64>, Vec<&AnnotatedExample>)> = Vec::new();
            for ex in corpus {
                let p = ex.condition.top_p.ok_or_else(|| AnalysisError::MissingField {
                    id: ex.id.clone(),
                    field: "condition.top_p",
                })?;
                match groups.iter_mut().find(|(k, _)| *k == Some(p)) {
                    Some((_, members)) => members.push(ex),
                    None => groups.push((Some(p), vec![ex])),
                }
            }
            groups.sort_by(|a, b| a.0.unwrap_or(0.0).total_cmp(&b.0.unwrap_or(0.0)));
            Ok(groups)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistributionRow {
    pub top_p: Option<f64>,
    /// `All`, `CO`, or an error-type code.
    pub row: String,
    pub n: usize,
    pub percent_con: f64,
    pub percent_ent: f64,
    pub percent_neu: f64,
    pub empty: bool,
}

impl ClassDistributionRow {
    fn from_labels(top_p: Option<f64>, row: &str, labels: &[NliLabel]) -> Self {
        let n = labels.len();
        let pct = |target: NliLabel| {
            if n == 0 {
                0.0
            } else {
                100.0 * labels.iter().filter(|&&l| l == target).count() as f64 / n as f64
            }
        };
        Self {
            top_p,
            row: row.to_string(),
            n,
            percent_con: pct(NliLabel::Contradiction),
            percent_ent: pct(NliLabel::Entailment),
            percent_neu: pct(NliLabel::Neutral),
            empty: n == 0,
        }
    }

    pub fn percent(&self, label: NliLabel) -> f64 {
        match label {
            NliLabel::Contradiction => self.percent_con,
            NliLabel::Entailment => self.percent_ent,
            NliLabel::Neutral => self.percent_neu,
        }
    }
}

fn label_for(labels: &BTreeMap<String, NliLabel>, id: &str) -> Result<NliLabel, AnalysisError> {
    labels
        .get(id)
        .copied()
        .ok_or_else(|| AnalysisError::MissingLabel(id.to_string()))
}

/// Percentage of examples per argmax label, one `All` row per group.
pub fn class_distribution(
    labels: &BTreeMap<String, NliLabel>,
    corpus: &[AnnotatedExample],
    group_by: GroupBy,
) -> Result<Vec<ClassDistributionRow>, AnalysisError> {
    group_examples(corpus, group_by)?
        .into_iter()
        .map(|(key, members)| {
            let ls = members
                .iter()
                .map(|ex| label_for(labels, &ex.id))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ClassDistributionRow::from_labels(key, "All", &ls))
        })
        .collect()
}

/// Per group: `All` (examples), `CO` (examples without qualifying spans),
/// then one row per error type counting qualifying spans, each span
/// labelled with its example's class.
pub fn error_class_contingency(
    labels: &BTreeMap<String, NliLabel>,
    corpus: &[AnnotatedExample],
    group_by: GroupBy,
    min_agreement: f64,
) -> Result<Vec<ClassDistributionRow>, AnalysisError> {
    let mut rows = Vec::new();
    for (key, members) in group_examples(corpus, group_by)? {
        let mut all = Vec::new();
        let mut correct = Vec::new();
        let mut by_type: BTreeMap<ErrorType, Vec<NliLabel>> = BTreeMap::new();
        for ex in &members {
            let label = label_for(labels, &ex.id)?;
            all.push(label);
            let spans = qualifying_spans(ex, min_agreement);
            if spans.is_empty() {
                correct.push(label);
            }
            for span in spans {
                by_type.entry(span.error_type).or_default().push(label);
            }
        }
        rows.push(ClassDistributionRow::from_labels(key, "All", &all));
        rows.push(ClassDistributionRow::from_labels(key, "CO", &correct));
        for et in ErrorType::ALL {
            let ls = by_type.remove(&et).unwrap_or_default();
            rows.push(ClassDistributionRow::from_labels(key, et.code(), &ls));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub top_p: Option<f64>,
    pub error_type: ErrorType,
    pub nli_class: NliLabel,
    /// Absent when undefined (zero variance or fewer than two examples).
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Spearman correlation between each error type's character proportion and
/// each class probability, per group.
pub fn correlation_report(
    dists: &BTreeMap<String, NliDistribution>,
    corpus: &[AnnotatedExample],
    group_by: GroupBy,
    min_agreement: f64,
) -> Result<Vec<CorrelationResult>, AnalysisError> {
    let mut out = Vec::new();
    for (key, members) in group_examples(corpus, group_by)? {
        let probs = members
            .iter()
            .map(|ex| {
                dists
                    .get(&ex.id)
                    .copied()
                    .ok_or_else(|| AnalysisError::MissingLabel(ex.id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for et in ErrorType::ALL {
            let x: Vec<f64> = members
                .iter()
                .map(|ex| error_char_proportion(ex, et, min_agreement))
                .collect();
            for class in [NliLabel::Contradiction, NliLabel::Entailment, NliLabel::Neutral] {
                let y: Vec<f64> = probs.iter().map(|d| d.probability(class)).collect();
                let (rho, p_value, note) = match spearman(&x, &y) {
                    Ok(r) => (Some(r.rho), Some(r.p_value), None),
                    Err(StatsError::ZeroVariance) => {
                        (None, None, Some("undefined: zero variance".to_string()))
                    }
                    Err(e) => (None, None, Some(format!("undefined: {e}"))),
                };
                out.push(CorrelationResult {
                    top_p: key,
                    error_type: et,
                    nli_class: class,
                    rho,
                    p_value,
                    n: x.len(),
                    note,
                });
            }
        }
    }
    Ok(out)
}

/// Outcome for the per-error-type regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorOutcome {
    /// Number of qualifying spans of the type.
    #[default]
    Count,
    /// Character proportion covered by qualifying spans of the type.
    Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRegression {
    pub top_p: Option<f64>,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn regress_group(
    top_p: Option<f64>,
    outcome: &str,
    y: &[f64],
    labels: &[&str],
    baseline: &str,
) -> GroupRegression {
    match ols_regress(outcome, y, labels, baseline) {
        Ok(r) => GroupRegression {
            top_p,
            outcome: outcome.to_string(),
            regression: Some(r),
            error: None,
        },
        Err(e) => GroupRegression {
            top_p,
            outcome: outcome.to_string(),
            regression: None,
            error: Some(e.to_string()),
        },
    }
}

/// Mean holistic rating regressed on strategy, per group. Examples without
/// ratings are skipped.
pub fn rating_regressions(
    corpus: &[AnnotatedExample],
    group_by: GroupBy,
    baseline: &str,
) -> Result<Vec<GroupRegression>, AnalysisError> {
    Ok(group_examples(corpus, group_by)?
        .into_iter()
        .map(|(key, members)| {
            let rated: Vec<(&str, f64)> = members
                .iter()
                .filter_map(|ex| ex.mean_rating().map(|r| (ex.condition.strategy.as_str(), r)))
                .collect();
            let labels: Vec<&str> = rated.iter().map(|(l, _)| *l).collect();
            let y: Vec<f64> = rated.iter().map(|(_, r)| *r).collect();
            regress_group(key, "holistic_rating", &y, &labels, baseline)
        })
        .collect())
}

/// One regression per (group, error type).
pub fn error_type_regressions(
    corpus: &[AnnotatedExample],
    group_by: GroupBy,
    baseline: &str,
    min_agreement: f64,
    outcome: ErrorOutcome,
) -> Result<Vec<GroupRegression>, AnalysisError> {
    let mut out = Vec::new();
    for (key, members) in group_examples(corpus, group_by)? {
        let labels: Vec<&str> = members.iter().map(|ex| ex.condition.strategy.as_str()).collect();
        for et in ErrorType::ALL {
            let y: Vec<f64> = members
                .iter()
                .map(|ex| match outcome {
                    ErrorOutcome::Count => error_span_count(ex, et, min_agreement) as f64,
                    ErrorOutcome::Proportion => error_char_proportion(ex, et, min_agreement),
                })
                .collect();
            let name = match outcome {
                ErrorOutcome::Count => format!("{}_span_count", et.code()),
                ErrorOutcome::Proportion => format!("{}_char_proportion", et.code()),
            };
            out.push(regress_group(key, &name, &y, &labels, baseline));
        }
    }
    Ok(out)
}

fn group_heading(top_p: Option<f64>) -> String {
    match top_p {
        Some(p) => format!("p = {p}"),
        None => "all".to_string(),
    }
}

/// Rows down the side, `CON ENT NEU` per group across the top.
pub fn format_class_table(rows: &[ClassDistributionRow]) -> String {
    let mut groups: Vec<Option<f64>> = Vec::new();
    let mut row_names: Vec<&str> = Vec::new();
    for r in rows {
        if !groups.contains(&r.top_p) {
            groups.push(r.top_p);
        }
        if !row_names.contains(&r.row.as_str()) {
            row_names.push(&r.row);
        }
    }
    const CELL: usize = 22;
    let mut out = String::new();
    let _ = write!(out, "{:<5}", "");
    for g in &groups {
        let _ = write!(out, " | {:^CELL$}", group_heading(*g));
    }
    out.push('\n');
    let _ = write!(out, "{:<5}", "");
    for _ in &groups {
        let _ = write!(out, " | {:>6} {:>7} {:>7}", "CON", "ENT", "NEU");
    }
    out.push('\n');
    for name in row_names {
        let _ = write!(out, "{name:<5}");
        for g in &groups {
            match rows.iter().find(|r| r.top_p == *g && r.row == name) {
                Some(r) if r.empty => {
                    let _ = write!(out, " | {:^CELL$}", "(none)");
                }
                Some(r) => {
                    let _ = write!(
                        out,
                        " | {:>6.2} {:>7.2} {:>7.2}",
                        r.percent_con, r.percent_ent, r.percent_neu
                    );
                }
                None => {
                    let _ = write!(out, " | {:^CELL$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn format_correlation_table(results: &[CorrelationResult]) -> String {
    let mut out = format!(
        "{:<8} {:<5} {:<5} {:>4} {:>8} {:>8}\n",
        "group", "error", "class", "n", "rho", "p"
    );
    for r in results {
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "{:<8} {:<5} {:<5} {:>4} {:>8} {:>8}{}",
            r.top_p.map_or_else(|| "all".to_string(), |p| p.to_string()),
            r.error_type.code(),
            r.nli_class.short(),
            r.n,
            num(r.rho),
            num(r.p_value),
            r.note.as_deref().map(|n| format!("  {n}")).unwrap_or_default()
        );
    }
    out
}

pub fn format_regression_table(regressions: &[GroupRegression]) -> String {
    let mut out = String::new();
    for g in regressions {
        let _ = writeln!(out, "[{}] outcome: {}", group_heading(g.top_p), g.outcome);
        match (&g.regression, &g.error) {
            (Some(r), _) => {
                let _ = writeln!(
                    out,
                    "  n = {}, df = {}, R^2 = {}, baseline = {}",
                    r.n,
                    r.df_residual,
                    r.r_squared.map_or_else(|| "-".to_string(), |v| format!("{v:.4}")),
                    r.baseline
                );
                let _ = writeln!(
                    out,
                    "  {:<12} {:>9} {:>9} {:>9} {:>9}",
                    "term", "beta", "se", "t", "p"
                );
                for c in &r.coefficients {
                    let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
                    let _ = writeln!(
                        out,
                        "  {:<12} {:>9.4} {:>9.4} {:>9} {:>9}",
                        c.name,
                        c.beta,
                        c.std_error,
                        num(c.t_stat),
                        num(c.p_value)
                    );
                }
            }
            (None, Some(e)) => {
                let _ = writeln!(out, "  not estimable: {e}");
            }
            (None, None) => {}
        }
    }
    out
}
