//! Sentiment classification: instruction perturbations that must not move
//! the label.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TaskError;

/// Alphabet the checklist suffix draws from.
pub const CHECKLIST_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";
/// Number of characters the checklist transform appends.
pub const CHECKLIST_LEN: usize = 10;

/// Default classification instruction for generated cases.
pub const DEFAULT_INSTRUCTION: &str = "As a sentiment classifier, determine whether the \
following text is \"positive\" or \"negative\". Please classify:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceInput {
    /// The classification instruction; perturbations apply here only.
    pub instruction_prompt: String,
    /// The text to classify, never perturbed.
    pub content: String,
    pub label_set: Vec<String>,
}

const POSITIVE_WORDS: [&str; 8] = [
    "wonderful", "delightful", "superb", "charming", "uplifting", "brilliant", "heartfelt",
    "dazzling",
];
const NEGATIVE_WORDS: [&str; 8] = [
    "dreadful", "tedious", "clumsy", "lifeless", "grating", "shallow", "dismal", "boring",
];

const TEMPLATES: [&str; 5] = [
    "The film was utterly {} from start to finish.",
    "A {} piece of storytelling that stays with you.",
    "Critics called the lead performance {}.",
    "What a {} evening at the theater that was.",
    "The novel's pacing felt {} throughout.",
];

/// Append a fixed-length random string drawn from letters and digits to the
/// instruction. A semantics-free suffix must not move the label.
pub fn transform_checklist(input: &SentenceInput, rng: &mut ChaCha8Rng) -> SentenceInput {
    let alphabet: Vec<char> = CHECKLIST_ALPHABET.chars().collect();
    let suffix: String =
        (0..CHECKLIST_LEN).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
    SentenceInput {
        instruction_prompt: format!("{}{}", input.instruction_prompt, suffix),
        content: input.content.clone(),
        label_set: input.label_set.clone(),
    }
}

/// Character-level perturbation of the instruction: every "a" becomes "as",
/// then every "t" is dropped (lowercase only, applied in that order).
pub fn transform_deepwordbug(input: &SentenceInput) -> SentenceInput {
    SentenceInput {
        instruction_prompt: deepwordbug(&input.instruction_prompt),
        content: input.content.clone(),
        label_set: input.label_set.clone(),
    }
}

pub fn deepwordbug(text: &str) -> String {
    text.replace('a', "as").replace('t', "")
}

/// Instruction plus the text to classify on the following line. The content
/// sits outside the instruction so perturbations cannot touch it.
pub fn user_text(input: &SentenceInput) -> String {
    format!("{}\n{}", input.instruction_prompt, input.content)
}

/// Ground truth: the single sentiment-bearing word planted in the content
/// decides the label. Exact on generated cases by construction.
pub fn solve(input: &SentenceInput) -> Result<String, TaskError> {
    let content = input.content.to_lowercase();
    let positive = POSITIVE_WORDS.iter().any(|w| content.contains(w));
    let negative = NEGATIVE_WORDS.iter().any(|w| content.contains(w));
    match (positive, negative) {
        (true, false) => Ok("positive".to_string()),
        (false, true) => Ok("negative".to_string()),
        _ => Err(TaskError::Unsolvable(format!(
            "content carries no single sentiment cue: {:?}",
            input.content
        ))),
    }
}

/// Recover the content as the last line; the solver only needs that.
pub fn parse_user_text(text: &str) -> Result<SentenceInput, TaskError> {
    let trimmed = text.trim_end();
    let (instruction, content) = trimmed.rsplit_once('\n').ok_or(TaskError::Malformed {
        what: "sentiment prompt",
        detail: "expected instruction and content lines".to_string(),
    })?;
    Ok(SentenceInput {
        instruction_prompt: instruction.to_string(),
        content: content.to_string(),
        label_set: vec!["positive".to_string(), "negative".to_string()],
    })
}

pub fn sample_base(rng: &mut ChaCha8Rng) -> SentenceInput {
    let positive = rng.gen_bool(0.5);
    let words = if positive { &POSITIVE_WORDS } else { &NEGATIVE_WORDS };
    let word = words[rng.gen_range(0..words.len())];
    let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
    SentenceInput {
        instruction_prompt: DEFAULT_INSTRUCTION.to_string(),
        content: template.replacen("{}", word, 1),
        label_set: vec!["positive".to_string(), "negative".to_string()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn deepwordbug_gold_values() {
        assert_eq!(deepwordbug("classify"), "classsify");
        assert_eq!(deepwordbug("determine"), "deermine");
    }

    #[test]
    fn deepwordbug_is_lowercase_only_and_ordered() {
        // Uppercase letters survive; the a->as expansion happens before the
        // t-drop, so a pre-existing "at" loses its t after expanding.
        assert_eq!(deepwordbug("Tat"), "Tas");
        assert_eq!(deepwordbug("As a"), "As as");
    }

    #[test]
    fn deepwordbug_touches_instruction_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = sample_base(&mut rng);
        let bugged = transform_deepwordbug(&base);
        assert_eq!(bugged.content, base.content);
        assert_eq!(bugged.label_set, base.label_set);
        assert_ne!(bugged.instruction_prompt, base.instruction_prompt);
    }

    #[test]
    fn checklist_appends_ten_alphabet_chars_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let base = sample_base(&mut rng);

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let once = transform_checklist(&base, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let twice = transform_checklist(&base, &mut rng);
        assert_eq!(once, twice, "same seed, same suffix");

        let suffix = once
            .instruction_prompt
            .strip_prefix(base.instruction_prompt.as_str())
            .expect("instruction is extended, not rewritten");
        assert_eq!(suffix.chars().count(), CHECKLIST_LEN);
        assert!(suffix.chars().all(|c| CHECKLIST_ALPHABET.contains(c)));
        assert_eq!(once.content, base.content);
    }

    #[test]
    fn solver_reads_the_planted_cue() {
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = sample_base(&mut rng);
            let label = solve(&input).unwrap();
            assert!(input.label_set.contains(&label));
            // Perturbing the instruction must not change the ground truth.
            assert_eq!(solve(&transform_deepwordbug(&input)).unwrap(), label);
        }
    }

    #[test]
    fn prompt_parse_recovers_the_content() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = sample_base(&mut rng);
        let parsed = parse_user_text(&user_text(&input)).unwrap();
        assert_eq!(parsed.content, input.content);
        assert_eq!(parsed.instruction_prompt, input.instruction_prompt);
    }
}
