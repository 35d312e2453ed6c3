//! Five-option multiple choice: option mirroring and appended explanations.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenError, TaskError};

pub const LETTERS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

/// Marker sentence fragment the add-explanation transform embeds; the
/// reference solver keys on it to honor the explained option.
pub const EXPLANATION_MARKER: &str = "the intended answer here is option ";

/// An explanation that argues for one (not necessarily correct) option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub target: char,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceInput {
    pub question: String,
    /// Exactly the keys A-E.
    pub options: BTreeMap<char, String>,
    /// Present when the add-explanation transform applies to this input.
    pub explanation: Option<Explanation>,
}

impl ChoiceInput {
    pub fn new(
        question: impl Into<String>,
        options: [&str; 5],
        explanation: Option<Explanation>,
    ) -> Self {
        let options = LETTERS
            .iter()
            .zip(options)
            .map(|(&l, text)| (l, text.to_string()))
            .collect();
        ChoiceInput { question: question.into(), options, explanation }
    }
}

/// A<->E, B<->D, C fixed.
pub fn mirror_letter(letter: char) -> char {
    match letter {
        'A' => 'E',
        'B' => 'D',
        'C' => 'C',
        'D' => 'B',
        'E' => 'A',
        other => other,
    }
}

/// Reverse the option order: each letter takes the text of its mirror.
pub fn transform_mirror_options(input: &ChoiceInput) -> ChoiceInput {
    let options = LETTERS
        .iter()
        .map(|&l| (l, input.options[&mirror_letter(l)].clone()))
        .collect();
    ChoiceInput { question: input.question.clone(), options, explanation: input.explanation.clone() }
}

/// Under mirroring, the two chosen letters must sum to twice 'C' in code
/// points: {(A,E), (B,D), (C,C), (D,B), (E,A)} and nothing else.
pub fn relate_mirrored_choice(y1: char, y2: char) -> bool {
    y1 as u32 + y2 as u32 == 2 * ('C' as u32)
}

/// Append the explanation content directly to the question text.
pub fn transform_add_explanation(input: &ChoiceInput) -> Result<ChoiceInput, GenError> {
    let explanation = input.explanation.as_ref().ok_or(GenError::Precondition {
        rule: "b1.2",
        constraint: "an input with explanation metadata",
    })?;
    Ok(ChoiceInput {
        question: format!("{}{}", input.question, explanation.content),
        options: input.options.clone(),
        explanation: input.explanation.clone(),
    })
}

/// After an explanation is appended, the answer must follow it.
pub fn relate_explained_choice(y2: char, target: char) -> bool {
    y2 == target
}

/// Canonical user message: question line, then one option per line.
pub fn user_text(input: &ChoiceInput) -> String {
    let mut out = format!("Question: {}\nOptions:", input.question);
    for l in LETTERS {
        out.push_str(&format!("\n{}. {}", l, input.options[&l]));
    }
    out
}

/// Invert [`user_text`]. Explanation metadata is not recoverable from the
/// prompt and comes back as `None`.
pub fn parse_user_text(text: &str) -> Result<ChoiceInput, TaskError> {
    let malformed = |detail: &str| TaskError::Malformed {
        what: "choice prompt",
        detail: detail.to_string(),
    };
    let rest = text
        .trim()
        .strip_prefix("Question: ")
        .ok_or_else(|| malformed("missing question line"))?;
    let (question, options_block) = rest
        .split_once("\nOptions:")
        .ok_or_else(|| malformed("missing options block"))?;
    let mut options = BTreeMap::new();
    for line in options_block.lines().filter(|l| !l.trim().is_empty()) {
        let mut chars = line.chars();
        let letter = chars.next().ok_or_else(|| malformed("empty option line"))?;
        let rest: String = chars.collect();
        let text = rest
            .strip_prefix(". ")
            .ok_or_else(|| malformed("option line without '. ' separator"))?;
        if !LETTERS.contains(&letter) {
            return Err(malformed(&format!("option letter {letter:?}")));
        }
        options.insert(letter, text.to_string());
    }
    if options.len() != LETTERS.len() {
        return Err(malformed(&format!("expected 5 options, got {}", options.len())));
    }
    Ok(ChoiceInput { question: question.to_string(), options, explanation: None })
}

/// Ground truth: an embedded explanation wins; otherwise solve the
/// arithmetic question and find the option holding its value.
pub fn solve(input: &ChoiceInput) -> Result<char, TaskError> {
    if let Some(pos) = input.question.find(EXPLANATION_MARKER) {
        let letter = input.question[pos + EXPLANATION_MARKER.len()..]
            .chars()
            .next()
            .filter(|c| LETTERS.contains(c))
            .ok_or_else(|| TaskError::Malformed {
                what: "explanation marker",
                detail: "no option letter after marker".to_string(),
            })?;
        return Ok(letter);
    }
    let value = solve_arithmetic(&input.question)?;
    let text = value.to_string();
    LETTERS
        .into_iter()
        .find(|l| input.options[l].trim() == text)
        .ok_or_else(|| TaskError::Unsolvable(format!("no option holds {text}")))
}

fn solve_arithmetic(question: &str) -> Result<i64, TaskError> {
    let malformed = |detail: String| TaskError::Malformed { what: "choice question", detail };
    let rest = question
        .trim()
        .strip_prefix("What is ")
        .ok_or_else(|| malformed("not an arithmetic question".to_string()))?;
    let body = match rest.find('?') {
        Some(q) => &rest[..q],
        None => rest,
    };
    let parts: Vec<&str> = body.split_whitespace().collect();
    let [a, op, b] = parts[..] else {
        return Err(malformed(format!("unexpected expression {body:?}")));
    };
    let a: i64 = a.parse().map_err(|_| malformed(format!("bad operand {a:?}")))?;
    let b: i64 = b.parse().map_err(|_| malformed(format!("bad operand {b:?}")))?;
    match op {
        "+" => Ok(a + b),
        "-" => Ok(a - b),
        "*" | "x" | "\u{d7}" => Ok(a * b),
        other => Err(malformed(format!("unknown operator {other:?}"))),
    }
}

/// Sample an arithmetic question with five distinct numeric options.
pub fn sample_base(rng: &mut ChaCha8Rng) -> ChoiceInput {
    let (question, correct) = match rng.gen_range(0..3u8) {
        0 => {
            let a = rng.gen_range(2..=19i64);
            let b = rng.gen_range(2..=19i64);
            (format!("What is {a} + {b}?"), a + b)
        }
        1 => {
            let a = rng.gen_range(5..=19i64);
            let b = rng.gen_range(2..=a);
            (format!("What is {a} - {b}?"), a - b)
        }
        _ => {
            let a = rng.gen_range(2..=9i64);
            let b = rng.gen_range(2..=9i64);
            (format!("What is {a} * {b}?"), a * b)
        }
    };

    // Four distinct nonzero offsets keep every option value unique.
    let mut offsets = [-3i64, -2, -1, 1, 2, 3];
    for i in (1..offsets.len()).rev() {
        offsets.swap(i, rng.gen_range(0..=i));
    }
    let correct_slot = rng.gen_range(0..LETTERS.len());
    let mut options = BTreeMap::new();
    let mut next_offset = 0;
    for (slot, &letter) in LETTERS.iter().enumerate() {
        let value = if slot == correct_slot {
            correct
        } else {
            let v = correct + offsets[next_offset];
            next_offset += 1;
            v
        };
        options.insert(letter, value.to_string());
    }
    ChoiceInput { question, options, explanation: None }
}

/// Sample a base input carrying an explanation that targets a wrong option.
pub fn sample_with_explanation(rng: &mut ChaCha8Rng) -> ChoiceInput {
    let mut input = sample_base(rng);
    let correct = solve(&input).expect("sampled question is solvable");
    let wrong: Vec<char> = LETTERS.into_iter().filter(|&l| l != correct).collect();
    let target = wrong[rng.gen_range(0..wrong.len())];
    input.explanation = Some(Explanation {
        target,
        content: format!(
            " A note from the question author explains that {EXPLANATION_MARKER}{target}."
        ),
    });
    input
}
