//! JSONL files written and read by the generation front end.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{
    BatchReport, Condition, GenerationResult, GenerationTrace, PromptRecord, StopReason,
};

pub const RESULT_SCHEMA: &str = "entail-guard/result-v1";
pub const TRACE_SCHEMA: &str = "entail-guard/trace-v1";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("no prompts in file")]
    Empty,
}

/// One line of the results file. The trace lives in the sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: String,
    pub id: String,
    pub condition: Condition,
    pub seed: Option<u64>,
    pub prompt: String,
    pub accepted: Vec<String>,
    pub continuation_text: String,
    pub stop_reason: StopReason,
    pub runs_used: u32,
    pub attempts_per_run: Vec<u32>,
}

impl ResultRecord {
    pub fn new(id: &str, result: &GenerationResult) -> Self {
        Self {
            schema: RESULT_SCHEMA.to_string(),
            id: id.to_string(),
            condition: result.condition,
            seed: result.seed,
            prompt: result.prompt.clone(),
            accepted: result.accepted.clone(),
            continuation_text: result.continuation_text.clone(),
            stop_reason: result.stop_reason,
            runs_used: result.runs_used,
            attempts_per_run: result.attempts_per_run.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema: String,
    pub id: String,
    pub condition: Condition,
    pub trace: GenerationTrace,
}

/// Successful items in batch order, one JSON object per line.
pub fn results_jsonl(report: &BatchReport) -> String {
    let mut out = String::new();
    for (item, result) in report.successes() {
        let line = serde_json::to_string(&ResultRecord::new(&item.prompt_id, result))
            .expect("result records serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn traces_jsonl(report: &BatchReport) -> String {
    let mut out = String::new();
    for (item, result) in report.successes() {
        let record = TraceRecord {
            schema: TRACE_SCHEMA.to_string(),
            id: item.prompt_id.clone(),
            condition: result.condition,
            trace: result.trace.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRecord>, RecordError> {
    parse_lines(text, |r: &ResultRecord| {
        (r.schema != RESULT_SCHEMA).then(|| format!("unexpected schema {:?}", r.schema))
    })
}

/// `{"id": ..., "prompt": ...}` per line; ids must be unique and prompts non-blank.
pub fn parse_prompts(text: &str) -> Result<Vec<PromptRecord>, RecordError> {
    let mut seen = std::collections::HashSet::new();
    let prompts = parse_lines(text, |p: &PromptRecord| {
        if p.prompt.trim().is_empty() {
            Some(format!("prompt {:?} is empty", p.id))
        } else if !seen.insert(p.id.clone()) {
            Some(format!("duplicate id {:?}", p.id))
        } else {
            None
        }
    })?;
    if prompts.is_empty() {
        return Err(RecordError::Empty);
    }
    Ok(prompts)
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptRecord>, RecordError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_prompts(&text)
}

fn parse_lines<T, F>(text: &str, mut check: F) -> Result<Vec<T>, RecordError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T) -> Option<String>,
{
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let value: T = serde_json::from_str(raw).map_err(|e| RecordError::Line {
            line,
            message: e.to_string(),
        })?;
        if let Some(message) = check(&value) {
            return Err(RecordError::Line { line, message });
        }
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompts_parse_with_line_numbers() {
        let ok = "{\"id\":\"a\",\"prompt\":\"Hi.\"}\n\n{\"id\":\"b\",\"prompt\":\"Yo.\"}\n";
        assert_eq!(parse_prompts(ok).unwrap().len(), 2);
        let bad = "{\"id\":\"a\",\"prompt\":\"Hi.\"}\n{\"id\":\"a\",\"prompt\":\"Yo.\"}\n";
        assert!(matches!(parse_prompts(bad), Err(RecordError::Line { line: 2, .. })));
        assert!(matches!(parse_prompts("\n"), Err(RecordError::Empty)));
        assert!(matches!(parse_prompts("{"), Err(RecordError::Line { line: 1, .. })));
    }
}
