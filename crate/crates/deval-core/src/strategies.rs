//! Prompt-engineering strategies injected into the system prompt, plus the
//! demonstration machinery for the one-shot and few-shot variants.

use serde::{Deserialize, Serialize};

/// The six strategies under evaluation, plus the unmodified baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    None,
    Dp,
    Cot,
    Sb,
    Os,
    Fs,
    An,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::None,
        StrategyId::Dp,
        StrategyId::Cot,
        StrategyId::Sb,
        StrategyId::Os,
        StrategyId::Fs,
        StrategyId::An,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::None => "none",
            StrategyId::Dp => "dp",
            StrategyId::Cot => "cot",
            StrategyId::Sb => "sb",
            StrategyId::Os => "os",
            StrategyId::Fs => "fs",
            StrategyId::An => "an",
        }
    }

    /// How many demonstration pairs this strategy consumes.
    pub fn demo_count(self) -> usize {
        match self {
            StrategyId::Os => 1,
            StrategyId::Fs => 5,
            _ => 0,
        }
    }
}

impl std::fmt::Display for StrategyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyId {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("unknown strategy: {0}")]
    UnknownStrategy(String),
    #[error("strategy {strategy} takes {expected} demo pairs, got {got}")]
    WrongDemoCount { strategy: StrategyId, expected: usize, got: usize },
}

/// One demonstration dialogue: a base question and its answer, then the
/// transformed question and its answer, all in task-canonical text form.
/// Demonstration answers come from the task oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoPair {
    /// Id of the reserved case this demo was rendered from, so scored-case
    /// disjointness can be checked.
    pub case_id: String,
    pub base_question: String,
    pub base_answer: String,
    pub transformed_question: String,
    pub transformed_answer: String,
}

const DP_TEXT: &str = "For the second question, you need to: (1) first explain what change \
has occurred in the input compared to the first question; (2) explain what kind of change \
in output should result from this change in input in the context of this task; (3) apply \
this output change to your original answer to the first question in order to solve the \
second question.";

const COT_TEXT: &str = "For each problem, you need to provide your thought process.";

const SB_TEXT: &str =
    "For each problem, you need to first explain the fundamental principles involved in \
solving it.";

const AN_TEXT: &str = "For each problem, you need to first present three related but not \
identical problems, along with a description of each problem and its solution.";

fn render_demo(demo: &DemoPair) -> String {
    format!(
        "Q: {}\nA: {}\nQ': {}\nA': {}",
        demo.base_question, demo.base_answer, demo.transformed_question, demo.transformed_answer
    )
}

/// The system-prompt suffix for a strategy. Text strategies become a
/// parenthetical appended after the task instruction; os/fs render their
/// demonstration dialogues inside the same parenthetical.
pub fn strategy_suffix(s: StrategyId, demos: &[DemoPair]) -> Result<String, StrategyError> {
    let expected = s.demo_count();
    if demos.len() != expected {
        return Err(StrategyError::WrongDemoCount { strategy: s, expected, got: demos.len() });
    }
    let body = match s {
        StrategyId::None => return Ok(String::new()),
        StrategyId::Dp => DP_TEXT.to_string(),
        StrategyId::Cot => COT_TEXT.to_string(),
        StrategyId::Sb => SB_TEXT.to_string(),
        StrategyId::An => AN_TEXT.to_string(),
        StrategyId::Os | StrategyId::Fs => {
            demos.iter().map(render_demo).collect::<Vec<_>>().join("\n\n")
        }
    };
    Ok(format!(" ({body})"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(i: usize) -> DemoPair {
        DemoPair {
            case_id: format!("b4.1-{i:04}"),
            base_question: format!("base question {i}"),
            base_answer: "2 -> 6 -> 3 -> 5".to_string(),
            transformed_question: format!("transformed question {i}"),
            transformed_answer: "5 -> 3 -> 6 -> 2".to_string(),
        }
    }

    #[test]
    fn none_yields_an_empty_suffix() {
        assert_eq!(strategy_suffix(StrategyId::None, &[]).unwrap(), "");
    }

    #[test]
    fn text_strategies_wrap_their_sentence_in_a_parenthetical() {
        let suffix = strategy_suffix(StrategyId::Dp, &[]).unwrap();
        assert!(suffix.starts_with(" (For the second question, you need to: (1) first explain"));
        assert!(suffix.ends_with("second question.)"));
        let cot = strategy_suffix(StrategyId::Cot, &[]).unwrap();
        assert_eq!(cot, " (For each problem, you need to provide your thought process.)");
        let sb = strategy_suffix(StrategyId::Sb, &[]).unwrap();
        assert!(sb.contains("fundamental principles"));
        let an = strategy_suffix(StrategyId::An, &[]).unwrap();
        assert!(an.contains("three related but not identical problems"));
    }

    #[test]
    fn demo_counts_are_enforced() {
        let one = [demo(0)];
        let five: Vec<_> = (0..5).map(demo).collect();
        assert!(strategy_suffix(StrategyId::Os, &one).is_ok());
        assert!(strategy_suffix(StrategyId::Fs, &five).is_ok());
        for (s, demos) in [
            (StrategyId::Os, &five[..]),
            (StrategyId::Fs, &one[..]),
            (StrategyId::Fs, &[][..]),
            (StrategyId::Cot, &one[..]),
        ] {
            let err = strategy_suffix(s, demos).unwrap_err();
            assert!(matches!(err, StrategyError::WrongDemoCount { .. }), "{s} accepted {demos:?}");
        }
    }

    #[test]
    fn few_shot_renders_five_dialogue_blocks() {
        let five: Vec<_> = (0..5).map(demo).collect();
        let suffix = strategy_suffix(StrategyId::Fs, &five).unwrap();
        assert_eq!(suffix.matches("Q: ").count(), 5);
        assert_eq!(suffix.matches("Q': ").count(), 5);
        assert_eq!(suffix.matches("A: ").count(), 5);
        assert!(suffix.contains("Q: base question 0\nA: 2 -> 6 -> 3 -> 5\nQ': transformed question 0"));
        assert!(suffix.starts_with(" ("));
        assert!(suffix.ends_with(')'));
    }

    #[test]
    fn suffix_is_deterministic() {
        let one = [demo(3)];
        let a = strategy_suffix(StrategyId::Os, &one).unwrap();
        let b = strategy_suffix(StrategyId::Os, &one).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strategy_ids_round_trip() {
        for s in StrategyId::ALL {
            assert_eq!(s.as_str().parse::<StrategyId>().unwrap(), s);
        }
        assert!("best-of-n".parse::<StrategyId>().is_err());
    }
}
