//! Annotated generation corpora: JSONL loading, validation and span
//! measurements.
//!
//! One record per line:
//!
//! ```json
//! {"schema": "entail-guard/corpus-v1", "id": "a1", "prompt": "...", "generation": "...",
//!  "condition": {"strategy": "NEU", "top_p": 0.4},
//!  "spans": [{"type": "RD", "start": 10, "end": 30, "agreement": 0.5}],
//!  "ratings": [4, 5]}
//! ```
//!
//! Span offsets count characters of `generation`; `agreement` is the
//! fraction of annotators who marked that span.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORPUS_SCHEMA: &str = "entail-guard/corpus-v1";

/// Default span agreement threshold (inclusive).
pub const DEFAULT_MIN_AGREEMENT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid `{field}`: {message}")]
    Invalid {
        line: usize,
        field: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    #[serde(rename = "OP")]
    OffPrompt,
    #[serde(rename = "SC")]
    SelfContradiction,
    #[serde(rename = "IN", alias = "IC")]
    Incoherent,
    #[serde(rename = "RD")]
    Redundant,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] = [
        ErrorType::OffPrompt,
        ErrorType::SelfContradiction,
        ErrorType::Incoherent,
        ErrorType::Redundant,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            ErrorType::OffPrompt => "OP",
            ErrorType::SelfContradiction => "SC",
            ErrorType::Incoherent => "IN",
            ErrorType::Redundant => "RD",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSpan {
    #[serde(rename = "type")]
    pub error_type: ErrorType,
    #[serde(rename = "start")]
    pub char_start: usize,
    #[serde(rename = "end")]
    pub char_end: usize,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCondition {
    /// Strategy (CONTROL / NEU / ENT / CON) or a source-model tag.
    pub strategy: String,
    #[serde(default)]
    pub top_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub id: String,
    pub prompt: String,
    pub generation: String,
    pub condition: ExampleCondition,
    #[serde(default)]
    pub spans: Vec<AnnotatedSpan>,
    #[serde(default)]
    pub ratings: Vec<u8>,
}

impl AnnotatedExample {
    pub fn generation_chars(&self) -> usize {
        self.generation.chars().count()
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            return None;
        }
        let sum: f64 = self.ratings.iter().map(|&r| f64::from(r)).sum();
        Some(sum / self.ratings.len() as f64)
    }

    /// No qualifying error spans at this threshold.
    pub fn is_correct(&self, min_agreement: f64) -> bool {
        qualifying_spans(self, min_agreement).is_empty()
    }

    fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let invalid = |field: String, message: String| CorpusError::Invalid {
            line,
            field,
            message,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id".into(), "must not be empty".into()));
        }
        let len = self.generation_chars();
        for (i, span) in self.spans.iter().enumerate() {
            if span.char_start >= span.char_end {
                return Err(invalid(
                    format!("spans[{i}]"),
                    format!("start {} must be below end {}", span.char_start, span.char_end),
                ));
            }
            if span.char_end > len {
                return Err(invalid(
                    format!("spans[{i}].end"),
                    format!("{} exceeds generation length {len}", span.char_end),
                ));
            }
            if !(span.agreement > 0.0 && span.agreement <= 1.0) {
                return Err(invalid(
                    format!("spans[{i}].agreement"),
                    format!("{} is outside (0, 1]", span.agreement),
                ));
            }
        }
        if let Some(r) = self.ratings.iter().find(|r| !(1..=5).contains(*r)) {
            return Err(invalid("ratings".into(), format!("{r} is outside 1..=5")));
        }
        if let Some(p) = self.condition.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(invalid("condition.top_p".into(), format!("{p} is outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema: String,
    #[serde(flatten)]
    example: AnnotatedExample,
}

pub fn parse_corpus(text: &str) -> Result<Vec<AnnotatedExample>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.schema != CORPUS_SCHEMA {
            return Err(CorpusError::Invalid {
                line,
                field: "schema".into(),
                message: format!("expected {CORPUS_SCHEMA:?}, found {:?}", record.schema),
            });
        }
        record.example.validate(line)?;
        if !seen.insert(record.example.id.clone()) {
            return Err(CorpusError::Invalid {
                line,
                field: "id".into(),
                message: format!("duplicate id {:?}", record.example.id),
            });
        }
        out.push(record.example);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedExample>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

/// Canonical JSONL (aliases normalized, one record per line).
pub fn corpus_to_jsonl(examples: &[AnnotatedExample]) -> String {
    let mut out = String::new();
    for example in examples {
        let record = Record {
            schema: CORPUS_SCHEMA.to_string(),
            example: example.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("corpus records serialize"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(examples: &[AnnotatedExample], path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, corpus_to_jsonl(examples))
}

/// Spans marked by at least `min_agreement` of annotators.
pub fn qualifying_spans(example: &AnnotatedExample, min_agreement: f64) -> Vec<&AnnotatedSpan> {
    example
        .spans
        .iter()
        .filter(|s| s.agreement >= min_agreement)
        .collect()
}

/// Fraction of generation characters covered by qualifying spans of one
/// type, with overlapping spans merged.
pub fn error_char_proportion(
    example: &AnnotatedExample,
    error_type: ErrorType,
    min_agreement: f64,
) -> f64 {
    let len = example.generation_chars();
    if len == 0 {
        return 0.0;
    }
    let mut intervals: Vec<(usize, usize)> = qualifying_spans(example, min_agreement)
        .into_iter()
        .filter(|s| s.error_type == error_type)
        .map(|s| (s.char_start, s.char_end))
        .collect();
    intervals.sort_unstable();
    let mut covered = 0;
    let mut current: Option<(usize, usize)> = None;
    for (start, end) in intervals {
        match current {
            Some((s, e)) if start <= e => current = Some((s, e.max(end))),
            Some((s, e)) => {
                covered += e - s;
                current = Some((start, end));
            }
            None => current = Some((start, end)),
        }
    }
    if let Some((s, e)) = current {
        covered += e - s;
    }
    covered as f64 / len as f64
}

/// Number of qualifying spans of one type.
pub fn error_span_count(example: &AnnotatedExample, error_type: ErrorType, min_agreement: f64) -> usize {
    qualifying_spans(example, min_agreement)
        .into_iter()
        .filter(|s| s.error_type == error_type)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(len: usize, spans: Vec<(ErrorType, usize, usize, f64)>) -> AnnotatedExample {
        AnnotatedExample {
            id: "x".into(),
            prompt: "P.".into(),
            generation: "g".repeat(len),
            condition: ExampleCondition {
                strategy: "CONTROL".into(),
                top_p: Some(0.4),
            },
            spans: spans
                .into_iter()
                .map(|(t, s, e, a)| AnnotatedSpan {
                    error_type: t,
                    char_start: s,
                    char_end: e,
                    agreement: a,
                })
                .collect(),
            ratings: vec![],
        }
    }

    fn line(spans: &str, extra: &str) -> String {
        format!(
            r#"{{"schema":"entail-guard/corpus-v1","id":"e1","prompt":"P.","generation":"0123456789","condition":{{"strategy":"NEU","top_p":0.4}},"spans":{spans}{extra}}}"#
        )
    }

    #[test]
    fn threshold_is_inclusive() {
        let ex = example(
            100,
            vec![
                (ErrorType::Redundant, 0, 5, 0.5),
                (ErrorType::Redundant, 5, 9, 0.49),
                (ErrorType::OffPrompt, 9, 20, 1.0),
            ],
        );
        let kept: Vec<f64> = qualifying_spans(&ex, 0.5).iter().map(|s| s.agreement).collect();
        assert_eq!(kept, [0.5, 1.0]);
        assert_eq!(qualifying_spans(&ex, 0.0).len(), 3);
        assert!(qualifying_spans(&example(10, vec![]), 0.5).is_empty());
    }

    #[test]
    fn overlapping_spans_merge() {
        let ex = example(
            100,
            vec![(ErrorType::Redundant, 10, 30, 1.0), (ErrorType::Redundant, 20, 40, 1.0)],
        );
        assert!((error_char_proportion(&ex, ErrorType::Redundant, 0.5) - 0.30).abs() < 1e-15);
        assert_eq!(error_char_proportion(&ex, ErrorType::OffPrompt, 0.5), 0.0);
        let whole = example(100, vec![(ErrorType::Incoherent, 0, 100, 1.0)]);
        assert_eq!(error_char_proportion(&whole, ErrorType::Incoherent, 0.5), 1.0);
    }

    #[test]
    fn empty_generation_has_zero_proportion() {
        assert_eq!(error_char_proportion(&example(0, vec![]), ErrorType::Redundant, 0.5), 0.0);
    }

    #[test]
    fn ic_alias_canonicalizes() {
        let text = line(r#"[{"type":"IC","start":0,"end":3,"agreement":1.0}]"#, "");
        let corpus = parse_corpus(&text).unwrap();
        assert_eq!(corpus[0].spans[0].error_type, ErrorType::Incoherent);
        assert!(corpus_to_jsonl(&corpus).contains(r#""type":"IN""#));
    }

    #[test]
    fn span_past_end_names_field_and_line() {
        let good = line("[]", "");
        let bad = line(r#"[{"type":"RD","start":2,"end":11,"agreement":1.0}]"#, "");
        let err = parse_corpus(&format!("{good}\n{}", bad.replace("e1", "e2"))).unwrap_err();
        match err {
            CorpusError::Invalid { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "spans[0].end");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn other_validation_failures() {
        let bad_rating = line("[]", r#","ratings":[6]"#);
        assert!(matches!(parse_corpus(&bad_rating), Err(CorpusError::Invalid { field, .. }) if field == "ratings"));
        let zero_agree = line(r#"[{"type":"RD","start":0,"end":1,"agreement":0.0}]"#, "");
        assert!(parse_corpus(&zero_agree).is_err());
        let dup = format!("{}\n{}", line("[]", ""), line("[]", ""));
        assert!(matches!(parse_corpus(&dup), Err(CorpusError::Invalid { field, .. }) if field == "id"));
        assert!(matches!(parse_corpus("{not json"), Err(CorpusError::Parse { line: 1, .. })));
        let wrong_schema = line("[]", "").replace("corpus-v1", "corpus-v9");
        assert!(parse_corpus(&wrong_schema).is_err());
    }

    #[test]
    fn mean_rating() {
        let mut ex = example(5, vec![]);
        assert_eq!(ex.mean_rating(), None);
        ex.ratings = vec![3, 4];
        assert_eq!(ex.mean_rating(), Some(3.5));
    }
}
