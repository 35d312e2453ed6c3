//! Derivation-relation formalism: rule metadata, case pairs, verdicts, and
//! the derivation-capability score (DCS).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tasks::TaskInput;

/// The eight task families the harness evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Choice,
    Logic,
    Sentiment,
    TableQa,
    GraphPath,
    MathIntegral,
    ImageCount,
    SpaceWalk,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::Choice,
        TaskId::Logic,
        TaskId::Sentiment,
        TaskId::TableQa,
        TaskId::GraphPath,
        TaskId::MathIntegral,
        TaskId::ImageCount,
        TaskId::SpaceWalk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Choice => "choice",
            TaskId::Logic => "logic",
            TaskId::Sentiment => "sentiment",
            TaskId::TableQa => "table_qa",
            TaskId::GraphPath => "graph_path",
            TaskId::MathIntegral => "math_integral",
            TaskId::ImageCount => "image_count",
            TaskId::SpaceWalk => "space_walk",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = DrError;

    fn from_str(s: &str) -> Result<Self, DrError> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| DrError::UnknownTask(s.to_string()))
    }
}

/// Kind of derivation rule: identity (output unchanged), general (domain
/// independent, e.g. a symmetry), or task-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DrType {
    Id,
    Ge,
    Ts,
}

impl DrType {
    pub fn as_str(self) -> &'static str {
        match self {
            DrType::Id => "ID",
            DrType::Ge => "GE",
            DrType::Ts => "TS",
        }
    }
}

impl fmt::Display for DrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metadata for one shipped derivation rule. The `transform_ref` and
/// `relation_ref` name the registered functions realizing `T` and `R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationRule {
    pub rule_id: String,
    pub task: TaskId,
    pub dr_type: DrType,
    pub description: String,
    pub transform_ref: String,
    pub relation_ref: String,
}

/// Rule-specific ground-truth hints recorded at generation time (premise
/// count, explained option, integral delta, walk start, ...). Relations
/// consume these instead of re-deriving them from the inputs.
pub type OracleMeta = BTreeMap<String, String>;

/// Fetch a required key from oracle metadata.
pub fn meta_str<'m>(meta: &'m OracleMeta, key: &str) -> Result<&'m str, DrError> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| DrError::MissingMeta { key: key.to_string() })
}

/// Fetch a required integer key from oracle metadata.
pub fn meta_i64(meta: &OracleMeta, key: &str) -> Result<i64, DrError> {
    let raw = meta_str(meta, key)?;
    raw.parse().map_err(|_| DrError::BadMeta {
        key: key.to_string(),
        value: raw.to_string(),
    })
}

/// One evaluation unit: a base input and its transformed counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePair {
    pub case_id: String,
    pub rule_id: String,
    /// Position in the generation sequence. Indexes below the demo-pool size
    /// are reserved for strategy demonstrations and never scored.
    pub index: u32,
    pub base_input: TaskInput,
    pub transformed_input: TaskInput,
    pub oracle_meta: OracleMeta,
    /// Seed the pair was generated from; kept for exact reproduction.
    pub seed: u64,
}

/// Outcome of checking one case pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    UnparseableRound1,
    UnparseableRound2,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::UnparseableRound1 => "unparseable_round1",
            VerdictStatus::UnparseableRound2 => "unparseable_round2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub rule_id: String,
    pub status: VerdictStatus,
}

/// Per-rule derivation-capability score. `gamma = passes / total`, where
/// unparseable rounds count against the score (they sit in the denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcsReport {
    pub rule_id: String,
    pub passes: u64,
    pub total: u64,
    pub gamma: f64,
}

/// Errors from the rule formalism and the metric.
#[derive(Debug, thiserror::Error)]
pub enum DrError {
    #[error("unknown task id: {0}")]
    UnknownTask(String),
    #[error("unknown rule id: {0}")]
    UnknownRule(String),
    #[error("no verdicts to score")]
    EmptyVerdicts,
    #[error("verdicts mix rule ids: {first} and {other}")]
    MixedRuleIds { first: String, other: String },
    #[error("rule {rule_id} expects {expected} outputs")]
    OutputShape { rule_id: String, expected: TaskId },
    #[error("oracle metadata missing key {key}")]
    MissingMeta { key: String },
    #[error("oracle metadata key {key} holds unusable value {value:?}")]
    BadMeta { key: String, value: String },
    #[error("no answers to take a majority over")]
    EmptyAnswerSet,
}

/// Compute the DCS over the verdicts of a single rule.
///
/// All verdicts must carry the same rule id; an empty slice is an error, not
/// a score of zero, so accidental empty runs cannot masquerade as results.
pub fn compute_dcs(verdicts: &[Verdict]) -> Result<DcsReport, DrError> {
    let first = verdicts.first().ok_or(DrError::EmptyVerdicts)?;
    if let Some(other) = verdicts.iter().find(|v| v.rule_id != first.rule_id) {
        return Err(DrError::MixedRuleIds {
            first: first.rule_id.clone(),
            other: other.rule_id.clone(),
        });
    }
    let total = verdicts.len() as u64;
    let passes = verdicts
        .iter()
        .filter(|v| v.status == VerdictStatus::Pass)
        .count() as u64;
    Ok(DcsReport {
        rule_id: first.rule_id.clone(),
        passes,
        total,
        gamma: passes as f64 / total as f64,
    })
}

/// Most frequent answer; ties resolve to the lexicographically smallest so
/// repeated sampling stays deterministic.
pub fn majority_answer<'a>(answers: &'a [String]) -> Result<&'a str, DrError> {
    if answers.is_empty() {
        return Err(DrError::EmptyAnswerSet);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(a.as_str()).or_default() += 1;
    }
    // BTreeMap iterates keys in order, so the first maximum is the smallest.
    let mut best: (&str, usize) = ("", 0);
    for (answer, n) in counts {
        if n > best.1 {
            best = (answer, n);
        }
    }
    Ok(best.0)
}
