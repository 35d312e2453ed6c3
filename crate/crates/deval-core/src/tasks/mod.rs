//! Task families: structured inputs, seeded generators, input transforms,
//! output relations, and exact reference solvers.
//!
//! Every family exposes the same surface: a typed input, a canonical user
//! message rendering (`user_text`), a prompt parser that inverts it, a solver
//! producing the ground-truth output, and the transform/relation pairs used
//! by the shipped derivation rules. The solvers are what make the harness
//! self-checking: they answer generated prompts exactly, so any rule can be
//! closed end-to-end without a live model.

pub mod choice;
pub mod corpus;
pub mod graph;
pub mod integral;
pub mod logic;
pub mod scene;
pub mod sentence;
pub mod table;
pub mod walk;

use serde::{Deserialize, Serialize};

use crate::dr::TaskId;

pub use choice::{ChoiceInput, Explanation};
pub use graph::GraphInput;
pub use integral::{Basis, IntegralInput, Term};
pub use logic::LogicInput;
pub use scene::{Facing, Glyph, SceneImage};
pub use sentence::SentenceInput;
pub use table::TableInput;
pub use walk::{Direction, Move, WalkInput};

/// Tagged union over the task families' structured inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskInput {
    Choice(ChoiceInput),
    Logic(LogicInput),
    Sentiment(SentenceInput),
    TableQa(TableInput),
    GraphPath(GraphInput),
    MathIntegral(IntegralInput),
    ImageCount(SceneImage),
    SpaceWalk(WalkInput),
}

impl TaskInput {
    pub fn task(&self) -> TaskId {
        match self {
            TaskInput::Choice(_) => TaskId::Choice,
            TaskInput::Logic(_) => TaskId::Logic,
            TaskInput::Sentiment(_) => TaskId::Sentiment,
            TaskInput::TableQa(_) => TaskId::TableQa,
            TaskInput::GraphPath(_) => TaskId::GraphPath,
            TaskInput::MathIntegral(_) => TaskId::MathIntegral,
            TaskInput::ImageCount(_) => TaskId::ImageCount,
            TaskInput::SpaceWalk(_) => TaskId::SpaceWalk,
        }
    }
}

/// Tagged union over parsed answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskOutput {
    /// Choice: a single option letter A-E.
    Letter { letter: char },
    /// Logic: premise indexes in introduction order, conclusion index last.
    Proof { indexes: Vec<u32> },
    /// Sentiment and table QA: a free-form label, compared normalized.
    Label { text: String },
    /// Graph: the node sequence from start to end.
    Path { nodes: Vec<u32> },
    /// Math: the integral evaluated and rounded down.
    Integer { value: i64 },
    /// Image: glyph counts by facing.
    Counts { left: u32, right: u32 },
    /// Space walk: final position on the 20-point circle.
    Position { position: u8 },
}

impl TaskOutput {
    /// Whether this output has the shape the task's answers take.
    pub fn matches_task(&self, task: TaskId) -> bool {
        matches!(
            (task, self),
            (TaskId::Choice, TaskOutput::Letter { .. })
                | (TaskId::Logic, TaskOutput::Proof { .. })
                | (TaskId::Sentiment, TaskOutput::Label { .. })
                | (TaskId::TableQa, TaskOutput::Label { .. })
                | (TaskId::GraphPath, TaskOutput::Path { .. })
                | (TaskId::MathIntegral, TaskOutput::Integer { .. })
                | (TaskId::ImageCount, TaskOutput::Counts { .. })
                | (TaskId::SpaceWalk, TaskOutput::Position { .. })
        )
    }
}

/// Canonical answer text for an output, the inverse of the answer grammar.
pub fn render_answer(output: &TaskOutput) -> String {
    match output {
        TaskOutput::Letter { letter } => letter.to_string(),
        TaskOutput::Proof { indexes } => indexes
            .iter()
            .map(|i| format!("({i})"))
            .collect::<Vec<_>>()
            .join(", "),
        TaskOutput::Label { text } => text.clone(),
        TaskOutput::Path { nodes } => nodes
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" -> "),
        TaskOutput::Integer { value } => value.to_string(),
        TaskOutput::Counts { left, right } => format!("left:{left} right:{right}"),
        TaskOutput::Position { position } => position.to_string(),
    }
}

/// Canonical user-message text for an input. Scenes have no text form (their
/// payload is the image); they render as a size placeholder for demo prompts.
pub fn user_text(input: &TaskInput) -> String {
    match input {
        TaskInput::Choice(c) => choice::user_text(c),
        TaskInput::Logic(l) => logic::user_text(l),
        TaskInput::Sentiment(s) => sentence::user_text(s),
        TaskInput::TableQa(t) => table::user_text(t),
        TaskInput::GraphPath(g) => graph::user_text(g),
        TaskInput::MathIntegral(i) => integral::user_text(i),
        TaskInput::ImageCount(img) => format!("[image {}x{}]", img.width, img.height),
        TaskInput::SpaceWalk(w) => walk::user_text(w),
    }
}

/// Ground-truth output for an input, via the matching reference solver.
pub fn solve_input(input: &TaskInput) -> Result<TaskOutput, TaskError> {
    Ok(match input {
        TaskInput::Choice(c) => TaskOutput::Letter { letter: choice::solve(c)? },
        TaskInput::Logic(l) => TaskOutput::Proof { indexes: logic::solve(l)? },
        TaskInput::Sentiment(s) => TaskOutput::Label { text: sentence::solve(s)? },
        TaskInput::TableQa(t) => TaskOutput::Label { text: table::solve(t)? },
        TaskInput::GraphPath(g) => TaskOutput::Path { nodes: graph::find_path(g)? },
        TaskInput::MathIntegral(i) => {
            TaskOutput::Integer { value: integral::reference_integral(i)? }
        }
        TaskInput::ImageCount(img) => {
            let (left, right) = scene::count_glyphs(img);
            TaskOutput::Counts { left, right }
        }
        TaskInput::SpaceWalk(w) => TaskOutput::Position { position: walk::simulate_walk(w) },
    })
}

/// Recover a task input from its rendered user-message text by sniffing the
/// fixed prompt markers. Scenes never land here — their payload travels as an
/// image, not text. Sentiment has no marker of its own and is tried last.
pub fn parse_rendered_text(text: &str) -> Result<TaskInput, TaskError> {
    let head = text.trim_start();
    if head.starts_with("Premises:") {
        return logic::parse_user_text(text).map(TaskInput::Logic);
    }
    if head.starts_with("The tree:") {
        return graph::parse_user_text(text).map(TaskInput::GraphPath);
    }
    if head.starts_with("The function is:") {
        return integral::parse_user_text(text).map(TaskInput::MathIntegral);
    }
    if head.starts_with("You start at position") {
        return walk::parse_user_text(text).map(TaskInput::SpaceWalk);
    }
    if head.starts_with("Question:") {
        if head.contains("\nTable:") {
            return table::parse_user_text(text).map(TaskInput::TableQa);
        }
        if head.contains("\nOptions:") {
            return choice::parse_user_text(text).map(TaskInput::Choice);
        }
    }
    if head.contains('\n') {
        return sentence::parse_user_text(text).map(TaskInput::Sentiment);
    }
    Err(TaskError::UnrecognizedPrompt(head.chars().take(60).collect()))
}

/// Trim and casefold, the normalization behind label comparisons.
pub fn normalize_label(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// Shared relation for the identity rules: labels are equal once normalized.
pub fn relate_identical_label(y1: &str, y2: &str) -> bool {
    normalize_label(y1) == normalize_label(y2)
}

/// Failures while solving or parsing task content.
#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("prompt not recognized as any task form: {0}")]
    UnrecognizedPrompt(String),
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("no path between {start} and {end}")]
    NoPath { start: u32, end: u32 },
    #[error("no applicable option: {0}")]
    Unsolvable(String),
    #[error("invalid image: {0}")]
    BadImage(String),
}

/// Precondition failures while generating or transforming cases. These are
/// resample signals during case construction, not hard faults.
#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("rule {rule} needs {constraint}")]
    Precondition { rule: &'static str, constraint: &'static str },
    #[error("could not place {left}+{right} glyphs after {attempts} attempts")]
    Placement { left: u32, right: u32, attempts: u32 },
    #[error("gave up resampling for {rule} after {attempts} attempts")]
    ResampleExhausted { rule: String, attempts: u32 },
    #[error("corpus record unusable: {0}")]
    Corpus(String),
    #[error("rule {rule} expects {expected} inputs")]
    TaskMismatch { rule: &'static str, expected: TaskId },
}
