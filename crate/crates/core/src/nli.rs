//! NLI probability triples, argmax labels and the acceptance strategies
//! applied to candidate sentences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Allowed deviation of a distribution's sum from 1 before construction fails.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Sums closer to 1 than this are floating-point rounding and are kept as given.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NliError {
    #[error("probability `{field}` = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE}")]
    BadSum { sum: f64 },
    #[error("neutral threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("unknown strategy `{0}` (expected one of control, ent, con, neu)")]
    UnknownStrategy(String),
}

/// Probability triple for a premise/hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NliDistribution {
    contradiction: f64,
    neutral: f64,
    entailment: f64,
}

impl NliDistribution {
    pub fn new(contradiction: f64, neutral: f64, entailment: f64) -> Result<Self, NliError> {
        for (field, value) in [
            ("contradiction", contradiction),
            ("neutral", neutral),
            ("entailment", entailment),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(NliError::OutOfRange { field, value });
            }
        }
        let sum = contradiction + neutral + entailment;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(NliError::BadSum { sum });
        }
        if (sum - 1.0).abs() <= ROUNDING_SLACK {
            return Ok(Self {
                contradiction,
                neutral,
                entailment,
            });
        }
        Ok(Self {
            contradiction: contradiction / sum,
            neutral: neutral / sum,
            entailment: entailment / sum,
        })
    }

    pub fn contradiction(&self) -> f64 {
        self.contradiction
    }

    pub fn neutral(&self) -> f64 {
        self.neutral
    }

    pub fn entailment(&self) -> f64 {
        self.entailment
    }

    pub fn probability(&self, label: NliLabel) -> f64 {
        match label {
            NliLabel::Contradiction => self.contradiction,
            NliLabel::Neutral => self.neutral,
            NliLabel::Entailment => self.entailment,
        }
    }

    /// Argmax class. Ties go to the earliest label in
    /// CONTRADICTION, NEUTRAL, ENTAILMENT order.
    pub fn label(&self) -> NliLabel {
        let mut best = NliLabel::Contradiction;
        for label in [NliLabel::Neutral, NliLabel::Entailment] {
            if self.probability(label) > self.probability(best) {
                best = label;
            }
        }
        best
    }
}

#[derive(Deserialize)]
struct RawDistribution {
    contradiction: f64,
    neutral: f64,
    entailment: f64,
}

impl<'de> Deserialize<'de> for NliDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawDistribution::deserialize(deserializer)?;
        NliDistribution::new(raw.contradiction, raw.neutral, raw.entailment)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NliLabel {
    Contradiction,
    Neutral,
    Entailment,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Contradiction, NliLabel::Neutral, NliLabel::Entailment];

    /// Three-letter column heading (CON / NEU / ENT).
    pub fn short(&self) -> &'static str {
        match self {
            NliLabel::Contradiction => "CON",
            NliLabel::Neutral => "NEU",
            NliLabel::Entailment => "ENT",
        }
    }
}

pub fn label_of(d: &NliDistribution) -> NliLabel {
    d.label()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    Control,
    Ent,
    Con,
    Neu,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Control => "CONTROL",
            StrategyKind::Ent => "ENT",
            StrategyKind::Con => "CON",
            StrategyKind::Neu => "NEU",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = NliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CONTROL" => Ok(StrategyKind::Control),
            "ENT" => Ok(StrategyKind::Ent),
            "CON" => Ok(StrategyKind::Con),
            "NEU" => Ok(StrategyKind::Neu),
            _ => Err(NliError::UnknownStrategy(s.to_string())),
        }
    }
}

pub const DEFAULT_NEUTRAL_THRESHOLD: f64 = 0.85;

/// Acceptance predicate over an [`NliDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    kind: StrategyKind,
    neutral_threshold: f64,
}

impl Strategy {
    pub fn new(kind: StrategyKind, neutral_threshold: f64) -> Result<Self, NliError> {
        if !(0.0..=1.0).contains(&neutral_threshold) {
            return Err(NliError::BadThreshold(neutral_threshold));
        }
        Ok(Self {
            kind,
            neutral_threshold,
        })
    }

    pub fn of(kind: StrategyKind) -> Self {
        Self {
            kind,
            neutral_threshold: DEFAULT_NEUTRAL_THRESHOLD,
        }
    }

    pub fn control() -> Self {
        Self::of(StrategyKind::Control)
    }

    pub fn ent() -> Self {
        Self::of(StrategyKind::Ent)
    }

    pub fn con() -> Self {
        Self::of(StrategyKind::Con)
    }

    pub fn neu() -> Self {
        Self::of(StrategyKind::Neu)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn neutral_threshold(&self) -> f64 {
        self.neutral_threshold
    }

    pub fn accepts(&self, d: &NliDistribution) -> bool {
        match self.kind {
            StrategyKind::Control => true,
            StrategyKind::Ent => d.entailment > d.contradiction,
            StrategyKind::Con => d.contradiction > d.entailment,
            StrategyKind::Neu => d.neutral > self.neutral_threshold,
        }
    }
}

pub fn accepts(strategy: &Strategy, d: &NliDistribution) -> bool {
    strategy.accepts(d)
}
