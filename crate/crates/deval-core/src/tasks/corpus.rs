//! Offline corpus ingestion: normalized one-record-per-line JSON formats for
//! feeding external datasets into case construction. Nothing here touches
//! the network.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::{choice, GenError, TaskInput};
use crate::dr::TaskId;
use crate::tasks::{
    Basis, ChoiceInput, Explanation, GraphInput, IntegralInput, LogicInput, SentenceInput,
    TableInput, Term,
};

#[derive(Deserialize)]
struct ChoiceRecord {
    question: String,
    /// Keyed "A".."E".
    options: BTreeMap<String, String>,
    #[allow(dead_code)]
    answer: Option<String>,
    explanation: Option<ChoiceExplanationRecord>,
}

#[derive(Deserialize)]
struct ChoiceExplanationRecord {
    option: String,
    content: String,
}

#[derive(Deserialize)]
struct LogicRecord {
    premises: Vec<String>,
    conclusion: String,
    #[allow(dead_code)]
    proof_indexes: Option<Vec<u32>>,
}

#[derive(Deserialize)]
struct SentenceRecord {
    content: String,
    #[allow(dead_code)]
    label: Option<String>,
}

#[derive(Deserialize)]
struct TableRecord {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    question: String,
    #[allow(dead_code)]
    answer: Option<String>,
}

#[derive(Deserialize)]
struct GraphRecord {
    nodes: Vec<u32>,
    edges: Vec<[u32; 2]>,
    start: u32,
    end: u32,
}

#[derive(Deserialize)]
struct MathRecord {
    terms: Vec<MathTermRecord>,
    eval_point: Option<i64>,
}

#[derive(Deserialize)]
struct MathTermRecord {
    coef: i64,
    basis: String,
    n: Option<u8>,
}

fn option_letter(raw: &str) -> Result<char, GenError> {
    let c = raw.trim().chars().next().map(|c| c.to_ascii_uppercase());
    c.filter(|c| choice::LETTERS.contains(c))
        .ok_or_else(|| GenError::Corpus(format!("option letter {raw:?}")))
}

fn convert_choice(record: ChoiceRecord) -> Result<TaskInput, GenError> {
    let mut options = BTreeMap::new();
    for letter in choice::LETTERS {
        let text = record
            .options
            .get(&letter.to_string())
            .ok_or_else(|| GenError::Corpus(format!("missing option {letter}")))?;
        options.insert(letter, text.clone());
    }
    let explanation = record
        .explanation
        .map(|e| {
            Ok::<_, GenError>(Explanation {
                target: option_letter(&e.option)?,
                content: e.content,
            })
        })
        .transpose()?;
    Ok(TaskInput::Choice(ChoiceInput { question: record.question, options, explanation }))
}

fn convert_math(record: MathRecord) -> Result<TaskInput, GenError> {
    let eval_point = record.eval_point.unwrap_or(super::integral::DEFAULT_EVAL_POINT);
    if eval_point != super::integral::DEFAULT_EVAL_POINT {
        // The task's system prompt pins the substitution point.
        return Err(GenError::Corpus(format!("unsupported eval point {eval_point}")));
    }
    let terms = record
        .terms
        .into_iter()
        .map(|t| match (t.basis.as_str(), t.n) {
            ("exp", _) => Ok(Term { coef: t.coef, basis: Basis::Exp }),
            ("power", Some(n)) if n <= 4 => Ok(Term { coef: t.coef, basis: Basis::Power(n) }),
            _ => Err(GenError::Corpus(format!("bad term basis {:?}/{:?}", t.basis, t.n))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if terms.is_empty() {
        return Err(GenError::Corpus("math record with no terms".to_string()));
    }
    Ok(TaskInput::MathIntegral(IntegralInput { terms, eval_point }))
}

/// Load a task's corpus: one JSON record per line, UTF-8, blank lines
/// skipped. Records must match the normalized format for the task.
pub fn load_corpus(task: TaskId, path: &Path) -> Result<Vec<TaskInput>, GenError> {
    let file = std::fs::File::open(path)
        .map_err(|e| GenError::Corpus(format!("open {}: {e}", path.display())))?;
    let mut inputs = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GenError::Corpus(format!("read line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err =
            |e: serde_json::Error| GenError::Corpus(format!("line {}: {e}", lineno + 1));
        let input = match task {
            TaskId::Choice => convert_choice(serde_json::from_str(&line).map_err(parse_err)?)?,
            TaskId::Logic => {
                let r: LogicRecord = serde_json::from_str(&line).map_err(parse_err)?;
                if r.premises.is_empty() {
                    return Err(GenError::Corpus(format!("line {}: no premises", lineno + 1)));
                }
                TaskInput::Logic(LogicInput { premises: r.premises, conclusion: r.conclusion })
            }
            TaskId::Sentiment => {
                let r: SentenceRecord = serde_json::from_str(&line).map_err(parse_err)?;
                TaskInput::Sentiment(SentenceInput {
                    instruction_prompt: super::sentence::DEFAULT_INSTRUCTION.to_string(),
                    content: r.content,
                    label_set: vec!["positive".to_string(), "negative".to_string()],
                })
            }
            TaskId::TableQa => {
                let r: TableRecord = serde_json::from_str(&line).map_err(parse_err)?;
                if r.rows.iter().any(|row| row.len() != r.header.len()) {
                    return Err(GenError::Corpus(format!("line {}: ragged rows", lineno + 1)));
                }
                TaskInput::TableQa(TableInput {
                    header: r.header,
                    rows: r.rows,
                    question: r.question,
                })
            }
            TaskId::GraphPath => {
                let r: GraphRecord = serde_json::from_str(&line).map_err(parse_err)?;
                TaskInput::GraphPath(GraphInput {
                    nodes: r.nodes,
                    edges: r.edges.into_iter().map(|[a, b]| (a, b)).collect(),
                    start: r.start,
                    end: r.end,
                })
            }
            TaskId::MathIntegral => convert_math(serde_json::from_str(&line).map_err(parse_err)?)?,
            TaskId::ImageCount | TaskId::SpaceWalk => {
                return Err(GenError::Corpus(format!(
                    "task {task} has no corpus format; cases are synthesized"
                )));
            }
        };
        inputs.push(input);
    }
    if inputs.is_empty() {
        return Err(GenError::Corpus(format!("{} holds no records", path.display())));
    }
    Ok(inputs)
}
