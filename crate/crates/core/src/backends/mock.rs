//! Deterministic in-process backends driven by JSON fixtures.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    estimate_tokens, BackendError, CompletionRequest, CompletionResponse, LmBackend, NliBackend,
    NliRequest,
};
use crate::nli::NliDistribution;
use crate::util::{fnv1a, mix64};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptSelect {
    /// `continuations[seed % len]`; a missing seed reads as 0.
    #[default]
    Seed,
    /// Index from a stable hash of the prompt mixed with the seed.
    PromptHash,
}

/// LM fixture: `{"continuations": [...], "select": "seed" | "prompt_hash"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmScript {
    pub continuations: Vec<String>,
    #[serde(default)]
    pub select: ScriptSelect,
}

/// Scripted language model. The reply is a pure function of the script,
/// the prompt and the seed, so repeated runs are byte-identical.
#[derive(Debug, Clone)]
pub struct ScriptedLm {
    script: LmScript,
}

impl ScriptedLm {
    pub fn new<S: Into<String>>(continuations: impl IntoIterator<Item = S>) -> Self {
        Self::from_script(LmScript {
            continuations: continuations.into_iter().map(Into::into).collect(),
            select: ScriptSelect::Seed,
        })
    }

    pub fn from_script(script: LmScript) -> Self {
        Self { script }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| {
            BackendError::InvalidRequest(format!("cannot read {}: {e}", path.display()))
        })?;
        let script: LmScript = serde_json::from_str(&raw).map_err(|e| {
            BackendError::InvalidRequest(format!("bad LM script {}: {e}", path.display()))
        })?;
        Ok(Self::from_script(script))
    }

    pub fn script(&self) -> &LmScript {
        &self.script
    }

    fn pick(&self, prompt: &str, seed: Option<u64>) -> &str {
        let items = &self.script.continuations;
        if items.is_empty() {
            return "";
        }
        let seed = seed.unwrap_or(0);
        let idx = match self.script.select {
            ScriptSelect::Seed => seed % items.len() as u64,
            ScriptSelect::PromptHash => mix64(fnv1a(prompt.as_bytes()) ^ seed) % items.len() as u64,
        };
        &items[idx as usize]
    }
}

impl LmBackend for ScriptedLm {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let text = self.pick(&req.prompt, req.seed).to_string();
        Ok(CompletionResponse {
            prompt_tokens: Some(estimate_tokens(&req.prompt)),
            completion_tokens: Some(estimate_tokens(&text)),
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub premise: String,
    pub hypothesis: String,
    #[serde(flatten)]
    pub distribution: NliDistribution,
}

/// Substring rule; every present condition must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis_contains: Option<String>,
    pub distribution: NliDistribution,
}

impl RuleEntry {
    fn matches(&self, premise: &str, hypothesis: &str) -> bool {
        self.premise_contains
            .as_deref()
            .is_none_or(|needle| premise.contains(needle))
            && self
                .hypothesis_contains
                .as_deref()
                .is_none_or(|needle| hypothesis.contains(needle))
    }
}

/// Table-driven NLI fixture. Lookup order: exact pair, the `identical`
/// rule (premise equals hypothesis), substring rules in file order, then
/// `default`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NliTable {
    #[serde(default)]
    pub pairs: Vec<PairEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identical: Option<NliDistribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<RuleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<NliDistribution>,
    #[serde(skip)]
    index: HashMap<(String, String), usize>,
}

impl NliTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_pair(mut self, premise: &str, hypothesis: &str, d: NliDistribution) -> Self {
        self.pairs.push(PairEntry {
            premise: premise.trim().to_string(),
            hypothesis: hypothesis.trim().to_string(),
            distribution: d,
        });
        self.reindex();
        self
    }

    pub fn with_identical(mut self, d: NliDistribution) -> Self {
        self.identical = Some(d);
        self
    }

    pub fn with_rule(
        mut self,
        premise_contains: Option<&str>,
        hypothesis_contains: Option<&str>,
        d: NliDistribution,
    ) -> Self {
        self.rules.push(RuleEntry {
            premise_contains: premise_contains.map(str::to_string),
            hypothesis_contains: hypothesis_contains.map(str::to_string),
            distribution: d,
        });
        self
    }

    pub fn with_default(mut self, d: NliDistribution) -> Self {
        self.default = Some(d);
        self
    }

    /// A table that answers every pair with `d`.
    pub fn constant(d: NliDistribution) -> Self {
        Self::new().with_default(d)
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        let mut table: NliTable = serde_json::from_str(raw)?;
        table.reindex();
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| {
            BackendError::InvalidRequest(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&raw).map_err(|e| {
            BackendError::InvalidRequest(format!("bad NLI table {}: {e}", path.display()))
        })
    }

    /// Rebuilds the pair index; needed after editing `pairs` directly.
    /// Later duplicates override earlier ones.
    pub fn reindex(&mut self) {
        self.index = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.premise.trim().to_string(), p.hypothesis.trim().to_string()), i))
            .collect();
    }

    pub fn lookup(&self, premise: &str, hypothesis: &str) -> Option<NliDistribution> {
        let (premise, hypothesis) = (premise.trim(), hypothesis.trim());
        if let Some(&i) = self
            .index
            .get(&(premise.to_string(), hypothesis.to_string()))
        {
            return Some(self.pairs[i].distribution);
        }
        if premise == hypothesis {
            if let Some(d) = self.identical {
                return Some(d);
            }
        }
        self.rules
            .iter()
            .find(|r| r.matches(premise, hypothesis))
            .map(|r| r.distribution)
            .or(self.default)
    }
}

impl NliBackend for NliTable {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        self.lookup(&req.premise, &req.hypothesis).ok_or_else(|| {
            BackendError::NotFound(format!(
                "no NLI entry for premise {:?} / hypothesis {:?}",
                req.premise, req.hypothesis
            ))
        })
    }
}

/// Backend that knows nothing; pairs must come from a cache.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoNli;

impl NliBackend for NoNli {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        Err(BackendError::NotFound(format!(
            "no NLI backend configured and pair not cached: premise {:?} / hypothesis {:?}",
            req.premise, req.hypothesis
        )))
    }
}
