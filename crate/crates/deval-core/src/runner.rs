//! The evaluation pipeline: builds case datasets, renders two-round prompts,
//! executes dialogues against a model, parses answers, and persists runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::LazyLock;

use crate::dr::{CasePair, DrError, TaskId, Verdict, VerdictStatus};
use crate::gateway::{sample_majority, ChatMessage, GatewayError, Model, ModelConfig};
use crate::registry::{check_pair, rule_entry};
use crate::strategies::{strategy_suffix, DemoPair, StrategyError, StrategyId};
use crate::tasks::{
    render_answer, scene, solve_input, user_text, GenError, TaskError, TaskInput, TaskOutput,
};

/// Cases with indexes below this are reserved as strategy demonstrations and
/// never scored.
pub const DEMO_POOL: u32 = 5;

/// Hard cap on resampling while generating one case.
const MAX_ATTEMPTS: u32 = 1000;

/// Output contract appended to every system prompt; the parser anchors on it.
pub const ANSWER_CONTRACT: &str =
    "End your reply with a line of the form \"Final answer: <answer>\".";

pub const FINAL_ANSWER_MARKER: &str = "Final answer:";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Dr(#[from] DrError),
    #[error("strategy {strategy} needs {needed} demos for rule {rule_id}, found {found}")]
    MissingDemos { strategy: StrategyId, rule_id: String, needed: usize, found: usize },
    #[error("demo case {case_id} also appears among scored cases")]
    DemoOverlap { case_id: String },
}

// ---------------------------------------------------------------------------
// Seeding and case construction
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-case seed: decorrelates neighboring indexes under one run seed.
pub fn mix_seed(run_seed: u64, index: u32) -> u64 {
    splitmix64(run_seed ^ u64::from(index).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Where base inputs come from: the task's synthetic sampler, or a loaded
/// corpus consumed in order.
#[derive(Debug, Clone, Copy)]
pub enum BaseSource<'a> {
    Synthetic,
    Corpus(&'a [TaskInput]),
}

struct SourceCursor<'a> {
    source: BaseSource<'a>,
    consumed: usize,
}

/// One rule's generated dataset: the reserved demonstration pool followed by
/// the scored cases.
#[derive(Debug, Clone)]
pub struct GeneratedCases {
    pub demos: Vec<CasePair>,
    pub scored: Vec<CasePair>,
}

fn gen_case_at(
    rule_id: &str,
    index: u32,
    run_seed: u64,
    cursor: &mut SourceCursor<'_>,
) -> Result<CasePair, GenError> {
    let entry = rule_entry(rule_id)
        .map_err(|_| GenError::Corpus(format!("unknown rule: {rule_id}")))?;
    let case_seed = mix_seed(run_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let mut last_obstacle = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let base = match cursor.source {
            BaseSource::Synthetic => match (entry.sample)(&mut rng) {
                Ok(b) => b,
                Err(e @ (GenError::Precondition { .. } | GenError::Placement { .. })) => {
                    last_obstacle = e.to_string();
                    continue;
                }
                Err(e) => return Err(e),
            },
            BaseSource::Corpus(records) => {
                let Some(record) = records.get(cursor.consumed) else {
                    return Err(GenError::Corpus(format!(
                        "corpus exhausted after {} records while building {rule_id} case \
                         {index}{}",
                        cursor.consumed,
                        if last_obstacle.is_empty() {
                            String::new()
                        } else {
                            format!(" (last obstacle: {last_obstacle})")
                        }
                    )));
                };
                cursor.consumed += 1;
                if record.task() != entry.rule.task {
                    last_obstacle =
                        format!("corpus record for {} given to {rule_id}", record.task());
                    continue;
                }
                record.clone()
            }
        };
        let transformed = match (entry.transform)(&base, &mut rng) {
            Ok(t) => t,
            Err(e @ (GenError::Precondition { .. } | GenError::Placement { .. })) => {
                last_obstacle = e.to_string();
                continue;
            }
            Err(e) => return Err(e),
        };
        return Ok(CasePair {
            case_id: format!("{rule_id}-{index:04}"),
            rule_id: rule_id.to_string(),
            index,
            base_input: base,
            transformed_input: transformed.input,
            oracle_meta: transformed.meta,
            seed: case_seed,
        });
    }
    Err(GenError::ResampleExhausted { rule: rule_id.to_string(), attempts: MAX_ATTEMPTS })
}

/// Generate one rule's full dataset: the demo pool (only when something will
/// be scored) and `n` scored cases, resampling past transform preconditions.
pub fn generate_cases(
    rule_id: &str,
    n: usize,
    seed: u64,
    source: BaseSource<'_>,
) -> Result<GeneratedCases, GenError> {
    let mut cursor = SourceCursor { source, consumed: 0 };
    let mut demos = Vec::new();
    let mut scored = Vec::new();
    if n > 0 {
        for index in 0..DEMO_POOL {
            demos.push(gen_case_at(rule_id, index, seed, &mut cursor)?);
        }
        for offset in 0..n {
            let index = DEMO_POOL + u32::try_from(offset).expect("case count fits u32");
            scored.push(gen_case_at(rule_id, index, seed, &mut cursor)?);
        }
    }
    Ok(GeneratedCases { demos, scored })
}

/// The scored dataset for a rule; demos are generated but not returned.
pub fn build_cases(
    rule_id: &str,
    n: usize,
    seed: u64,
    source: BaseSource<'_>,
) -> Result<Vec<CasePair>, GenError> {
    generate_cases(rule_id, n, seed, source).map(|g| g.scored)
}

pub fn is_demo_case(case: &CasePair) -> bool {
    case.index < DEMO_POOL
}

/// Render reserved cases into demonstration dialogues, answered by the task
/// oracles. Fails when a base is not oracle-solvable (possible for corpus
/// bases), since a demonstration needs a gold answer.
pub fn render_demo_pairs(demo_cases: &[CasePair]) -> Result<Vec<DemoPair>, RunnerError> {
    demo_cases
        .iter()
        .map(|case| {
            let base_answer = render_answer(&solve_input(&case.base_input)?);
            let transformed_answer = render_answer(&solve_input(&case.transformed_input)?);
            Ok(DemoPair {
                case_id: case.case_id.clone(),
                base_question: user_text(&case.base_input),
                base_answer,
                transformed_question: user_text(&case.transformed_input),
                transformed_answer,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

fn task_instruction(task: TaskId) -> &'static str {
    match task {
        TaskId::Choice => {
            "Answer the following multiple-choice questions by giving the letter of the \
             correct option."
        }
        TaskId::Logic => {
            "For each question, determine the order in which the numbered statements prove \
             the final statement, and answer with the statement numbers in the order used, \
             each in parentheses, like (2), (1), (4)."
        }
        TaskId::Sentiment => {
            "Each question contains a classification instruction followed by the text to \
             classify. Follow the instruction and answer with the label alone."
        }
        TaskId::TableQa => {
            "Answer each question about the given table with the exact cell value, and \
             nothing else."
        }
        TaskId::GraphPath => {
            "In the following questions, find the path between the two given nodes in the \
             tree, and answer with the node sequence separated by \" -> \"."
        }
        TaskId::MathIntegral => {
            "For each function below, integrate it with respect to x taking the constant of \
             integration to be 0, evaluate the antiderivative at x = 4, and round the result \
             down to an integer. Answer with that integer."
        }
        TaskId::ImageCount => {
            "Each image shows solid triangles on a white background: blue triangles point \
             left and red triangles point right. Count them and answer in the form \
             left:<count> right:<count>."
        }
        TaskId::SpaceWalk => {
            "Positions 0 through 19 are arranged clockwise in a circle. In each question \
             you start at a given position and follow the moves in order; moving clockwise \
             increases the position number. Answer with the final position number."
        }
    }
}

/// The baseline system prompt for a task: instruction plus output contract.
pub fn task_template(task: TaskId) -> String {
    format!("{} {}", task_instruction(task), ANSWER_CONTRACT)
}

/// Full system prompt: instruction, then the strategy parenthetical, then the
/// output contract. The `none` strategy reproduces the template byte for byte.
pub fn system_text(
    task: TaskId,
    strategy: StrategyId,
    demos: &[DemoPair],
) -> Result<String, StrategyError> {
    let suffix = strategy_suffix(strategy, demos)?;
    Ok(format!("{}{suffix} {}", task_instruction(task), ANSWER_CONTRACT))
}

/// A user turn for an input: text tasks render their canonical prompt form;
/// scenes travel as an image payload.
pub fn user_message(input: &TaskInput) -> ChatMessage {
    match input {
        TaskInput::ImageCount(img) => {
            ChatMessage::user_with_image(String::new(), scene::encode_ppm(img))
        }
        other => ChatMessage::user(user_text(other)),
    }
}

/// The three fixed prompt pieces of one case dialogue.
pub fn render_dialogue(
    case: &CasePair,
    strategy: StrategyId,
    demos: &[DemoPair],
) -> Result<(String, ChatMessage, ChatMessage), StrategyError> {
    let system = system_text(case.base_input.task(), strategy, demos)?;
    Ok((system, user_message(&case.base_input), user_message(&case.transformed_input)))
}

// ---------------------------------------------------------------------------
// Answer parsing
// ---------------------------------------------------------------------------

static PROOF_RX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\((\d+)\)").unwrap());
static PATH_RX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d+(?:\s*(?:->|→)\s*\d+)+").unwrap());
static INT_RX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+").unwrap());
static COUNTS_RX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)left[^0-9]*(\d+)[^0-9]*right[^0-9]*(\d+)").unwrap());

fn parse_segment(task: TaskId, segment: &str) -> Option<TaskOutput> {
    let segment = segment.trim();
    if segment.is_empty() {
        return None;
    }
    match task {
        TaskId::Choice => segment
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|tok| !tok.is_empty())
            .find_map(|tok| {
                let mut chars = tok.chars();
                match (chars.next(), chars.next()) {
                    (Some(letter @ 'A'..='E'), None) => Some(TaskOutput::Letter { letter }),
                    _ => None,
                }
            }),
        TaskId::Logic => {
            let indexes: Vec<u32> = PROOF_RX
                .captures_iter(segment)
                .filter_map(|c| c[1].parse().ok())
                .collect();
            (!indexes.is_empty()).then_some(TaskOutput::Proof { indexes })
        }
        TaskId::Sentiment | TaskId::TableQa => {
            Some(TaskOutput::Label { text: segment.to_string() })
        }
        TaskId::GraphPath => {
            let m = PATH_RX.find_iter(segment).last()?;
            let cleaned = m.as_str().replace('→', "->");
            let nodes: Option<Vec<u32>> =
                cleaned.split("->").map(|t| t.trim().parse().ok()).collect();
            nodes.map(|nodes| TaskOutput::Path { nodes })
        }
        TaskId::MathIntegral => {
            let m = INT_RX.find_iter(segment).last()?;
            m.as_str().parse().ok().map(|value| TaskOutput::Integer { value })
        }
        TaskId::ImageCount => {
            let caps = COUNTS_RX.captures(segment)?;
            let left = caps[1].parse().ok()?;
            let right = caps[2].parse().ok()?;
            Some(TaskOutput::Counts { left, right })
        }
        TaskId::SpaceWalk => {
            let m = INT_RX.find_iter(segment).last()?;
            let value: i64 = m.as_str().parse().ok()?;
            (0..20).contains(&value).then(|| TaskOutput::Position { position: value as u8 })
        }
    }
}

/// Extract a structured answer from a completion: the line after the last
/// "Final answer:" marker, falling back to the last nonempty line. `None`
/// means unparseable — a scoring outcome, not an error.
pub fn parse_answer(task: TaskId, text: &str) -> Option<TaskOutput> {
    if let Some(pos) = text.rfind(FINAL_ANSWER_MARKER) {
        let segment = text[pos + FINAL_ANSWER_MARKER.len()..].lines().next().unwrap_or("");
        if let Some(output) = parse_segment(task, segment) {
            return Some(output);
        }
    }
    let last = text.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
    parse_segment(task, last)
}

/// Voting key for majority sampling: the canonical rendering of the parsed
/// answer, or the trimmed raw text when unparseable.
pub fn normal_form(task: TaskId, completion: &str) -> String {
    match parse_answer(task, completion) {
        Some(output) => render_answer(&output),
        None => completion.trim().to_string(),
    }
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// One executed case: the full dialogue plus parse and verdict results.
/// An errored record (transport failures and the like) carries `error` and no
/// verdict; it is excluded from the DCS denominator, unlike unparseable
/// answers, which are verdicts in their own right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub case_id: String,
    pub rule_id: String,
    pub strategy_id: StrategyId,
    pub model_name: String,
    pub temperature: f64,
    pub samples_k: u32,
    pub messages: Vec<ChatMessage>,
    pub parsed_y1: Option<TaskOutput>,
    pub parsed_y2: Option<TaskOutput>,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms_round1: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms_round2: Option<u64>,
}

/// Execute a case's two-round dialogue. Round two is issued into the same
/// conversation (assistant one stays in context) unless `fresh_context`
/// restarts from the system prompt — the ablation arm. The record always
/// keeps the full five-message sequence it observed.
pub fn execute_case(
    case: &CasePair,
    model: &dyn Model,
    cfg: &ModelConfig,
    strategy: StrategyId,
    demos: &[DemoPair],
    fresh_context: bool,
) -> TranscriptRecord {
    let task = case.base_input.task();
    let mut record = TranscriptRecord {
        case_id: case.case_id.clone(),
        rule_id: case.rule_id.clone(),
        strategy_id: strategy,
        model_name: model.name().to_string(),
        temperature: cfg.temperature,
        samples_k: cfg.samples_k,
        messages: Vec::new(),
        parsed_y1: None,
        parsed_y2: None,
        verdict: None,
        error: None,
        wall_ms_round1: None,
        wall_ms_round2: None,
    };
    let (system, user1, user2) = match render_dialogue(case, strategy, demos) {
        Ok(parts) => parts,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let timed = !model.deterministic();
    let normalize = |s: &str| normal_form(task, s);
    let system = ChatMessage::system(system);
    record.messages.push(system.clone());
    record.messages.push(user1.clone());

    let round1 = [system.clone(), user1.clone()];
    let started = Instant::now();
    let answer1 = match sample_majority(model, &round1, cfg, &normalize) {
        Ok(a) => a,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    if timed {
        record.wall_ms_round1 = Some(started.elapsed().as_millis() as u64);
    }
    let assistant1 = ChatMessage::assistant(answer1.clone());
    record.messages.push(assistant1.clone());
    record.messages.push(user2.clone());

    let round2: Vec<ChatMessage> = if fresh_context {
        vec![system, user2]
    } else {
        vec![system, user1, assistant1, user2]
    };
    let started = Instant::now();
    let answer2 = match sample_majority(model, &round2, cfg, &normalize) {
        Ok(a) => a,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    if timed {
        record.wall_ms_round2 = Some(started.elapsed().as_millis() as u64);
    }
    record.messages.push(ChatMessage::assistant(answer2.clone()));

    let parsed_y1 = parse_answer(task, &answer1);
    let parsed_y2 = parse_answer(task, &answer2);
    let outcome: Result<Verdict, String> = match (&parsed_y1, &parsed_y2) {
        (None, _) => Ok(Verdict {
            rule_id: case.rule_id.clone(),
            status: VerdictStatus::UnparseableRound1,
        }),
        (_, None) => Ok(Verdict {
            rule_id: case.rule_id.clone(),
            status: VerdictStatus::UnparseableRound2,
        }),
        (Some(y1), Some(y2)) => rule_entry(&case.rule_id)
            .and_then(|entry| check_pair(&entry.rule, y1, y2, &case.oracle_meta))
            .map_err(|e| e.to_string()),
    };
    record.parsed_y1 = parsed_y1;
    record.parsed_y2 = parsed_y2;
    match outcome {
        Ok(verdict) => record.verdict = Some(verdict),
        Err(detail) => record.error = Some(detail),
    }
    record
}

/// Demonstrations per rule, as consumed by `run_cases`.
pub type DemoSet = BTreeMap<String, Vec<DemoPair>>;

/// Execute many cases across a bounded worker pool. Records come back in case
/// order regardless of completion order. Demos are validated up front: every
/// rule present must have enough, and none may collide with a scored case id.
pub fn run_cases(
    cases: &[CasePair],
    model: &dyn Model,
    cfg: &ModelConfig,
    strategy: StrategyId,
    demos: &DemoSet,
    fresh_context: bool,
    workers: usize,
) -> Result<Vec<TranscriptRecord>, RunnerError> {
    let needed = strategy.demo_count();
    if needed > 0 {
        for case in cases {
            let found = demos.get(&case.rule_id).map_or(0, Vec::len);
            if found < needed {
                return Err(RunnerError::MissingDemos {
                    strategy,
                    rule_id: case.rule_id.clone(),
                    needed,
                    found,
                });
            }
        }
        for pool in demos.values() {
            for demo in pool {
                if cases.iter().any(|c| c.case_id == demo.case_id) {
                    return Err(RunnerError::DemoOverlap { case_id: demo.case_id.clone() });
                }
            }
        }
    }
    let slots: Vec<Mutex<Option<TranscriptRecord>>> =
        cases.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(cases.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(case) = cases.get(i) else { break };
                let demo_slice = if needed == 0 {
                    &[]
                } else {
                    &demos[&case.rule_id][..needed]
                };
                let record =
                    execute_case(case, model, cfg, strategy, demo_slice, fresh_context);
                *slots[i].lock().expect("slot lock") = Some(record);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("every slot filled"))
        .collect())
}

// ---------------------------------------------------------------------------
// Persistence: framed JSONL (header line, record lines, digest trailer)
// ---------------------------------------------------------------------------

pub const CASES_KIND: &str = "deval-cases";
pub const RUN_KIND: &str = "deval-run";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFileHeader {
    pub kind: String,
    pub rule_ids: Vec<String>,
    /// Scored cases only; the demo pool rides along on top of this.
    pub case_count: usize,
    pub seed: u64,
}

impl CaseFileHeader {
    pub fn new(rule_ids: Vec<String>, case_count: usize, seed: u64) -> Self {
        CaseFileHeader { kind: CASES_KIND.to_string(), rule_ids, case_count, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub run_id: String,
    /// Seconds since the epoch; omitted for deterministic built-in models so
    /// reruns are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at_unix: Option<u64>,
    pub rule_ids: Vec<String>,
    pub model_name: String,
    pub strategy: StrategyId,
    pub temperature: f64,
    pub samples_k: u32,
    pub max_tokens: u32,
    pub case_count: usize,
    pub seed: u64,
    /// Digest of the case records this run executed; lets scoring detect a
    /// swapped or edited case file.
    pub case_digest: String,
    pub fresh_context: bool,
}

pub fn make_manifest(
    header: &CaseFileHeader,
    cases: &[CasePair],
    model: &dyn Model,
    cfg: &ModelConfig,
    strategy: StrategyId,
    fresh_context: bool,
) -> Result<RunManifest, RunnerError> {
    let case_digest = records_digest(cases)?;
    let identity = format!(
        "{case_digest}|{}|{strategy}|{}|{}|{fresh_context}|{}",
        model.name(),
        cfg.samples_k,
        cfg.temperature,
        header.seed
    );
    let run_id = hex::encode(&Sha256::digest(identity.as_bytes())[..8]);
    let created_at_unix = if model.deterministic() {
        None
    } else {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    };
    Ok(RunManifest {
        kind: RUN_KIND.to_string(),
        run_id,
        created_at_unix,
        rule_ids: header.rule_ids.clone(),
        model_name: model.name().to_string(),
        strategy,
        temperature: cfg.temperature,
        samples_k: cfg.samples_k,
        max_tokens: cfg.max_tokens,
        case_count: cases.len(),
        seed: header.seed,
        case_digest,
        fresh_context,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Trailer {
    records: usize,
    digest: String,
}

fn line_digest<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for line in lines {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Digest of records exactly as persisted: the hash over their serialized
/// lines, matching the file trailer.
pub fn records_digest<R: Serialize>(records: &[R]) -> Result<String, RunnerError> {
    let lines = records
        .iter()
        .map(serde_json::to_string)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(line_digest(lines.iter().map(String::as_str)))
}

fn write_framed<H: Serialize, R: Serialize>(
    path: &Path,
    header: &H,
    records: &[R],
) -> Result<(), RunnerError> {
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    let mut hasher = Sha256::new();
    for record in records {
        let line = serde_json::to_string(record)?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        out.push_str(&line);
        out.push('\n');
    }
    let trailer =
        Trailer { records: records.len(), digest: hex::encode(hasher.finalize()) };
    out.push_str(&serde_json::to_string(&trailer)?);
    out.push('\n');
    std::fs::write(path, out)?;
    Ok(())
}

fn read_framed<H: DeserializeOwned, R: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
) -> Result<(H, Vec<R>), RunnerError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        return Err(RunnerError::Integrity("empty file".to_string()));
    }
    let header_value: serde_json::Value = serde_json::from_str(lines.remove(0))
        .map_err(|_| RunnerError::Integrity("unreadable header line".to_string()))?;
    let kind = header_value.get("kind").and_then(|v| v.as_str()).unwrap_or("");
    if kind != expected_kind {
        return Err(RunnerError::Integrity(format!(
            "expected a {expected_kind} file, found kind {kind:?}"
        )));
    }
    let header: H = serde_json::from_value(header_value)?;
    let trailer_line = lines
        .pop()
        .ok_or_else(|| RunnerError::Integrity("missing trailer".to_string()))?;
    let trailer: Trailer = serde_json::from_str(trailer_line).map_err(|_| {
        RunnerError::Integrity("missing or malformed trailer (truncated file?)".to_string())
    })?;
    if lines.len() != trailer.records {
        return Err(RunnerError::Integrity(format!(
            "record count mismatch: trailer says {}, file holds {}",
            trailer.records,
            lines.len()
        )));
    }
    let digest = line_digest(lines.iter().copied());
    if digest != trailer.digest {
        return Err(RunnerError::Integrity("record digest mismatch".to_string()));
    }
    let records = lines
        .into_iter()
        .map(serde_json::from_str)
        .collect::<Result<Vec<R>, _>>()?;
    Ok((header, records))
}

pub fn persist_cases(
    path: &Path,
    header: &CaseFileHeader,
    cases: &[CasePair],
) -> Result<(), RunnerError> {
    write_framed(path, header, cases)
}

pub fn load_cases(path: &Path) -> Result<(CaseFileHeader, Vec<CasePair>), RunnerError> {
    read_framed(path, CASES_KIND)
}

pub fn persist_run(
    path: &Path,
    manifest: &RunManifest,
    records: &[TranscriptRecord],
) -> Result<(), RunnerError> {
    write_framed(path, manifest, records)
}

pub fn load_run(path: &Path) -> Result<(RunManifest, Vec<TranscriptRecord>), RunnerError> {
    read_framed(path, RUN_KIND)
}

/// Convenience conversion for exit-code mapping: is this a transport-class
/// failure (as opposed to usage or integrity)?
pub fn is_transport_error(err: &GatewayError) -> bool {
    matches!(
        err,
        GatewayError::Transport { .. } | GatewayError::Provider { .. } | GatewayError::Protocol(_)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::OracleModel;
    use crate::registry::{registry, rule_ids};
    use crate::tasks::walk::{Direction, Move, WalkInput};

    #[test]
    fn mixed_seeds_differ_across_indexes_and_runs() {
        let a = mix_seed(7, 0);
        let b = mix_seed(7, 1);
        let c = mix_seed(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(7, 0));
    }

    #[test]
    fn case_generation_is_deterministic_and_indexed() {
        let first = generate_cases("b4.1", 8, 7, BaseSource::Synthetic).unwrap();
        let second = generate_cases("b4.1", 8, 7, BaseSource::Synthetic).unwrap();
        let as_json = |g: &GeneratedCases| {
            serde_json::to_string(&(&g.demos, &g.scored)).unwrap()
        };
        assert_eq!(as_json(&first), as_json(&second));
        assert_eq!(first.demos.len(), 5);
        assert_eq!(first.scored.len(), 8);
        assert_eq!(first.demos[0].case_id, "b4.1-0000");
        assert_eq!(first.scored[0].case_id, "b4.1-0005");
        assert!(first.demos.iter().all(is_demo_case));
        assert!(!first.scored.iter().any(is_demo_case));
    }

    #[test]
    fn zero_cases_means_an_empty_dataset() {
        let g = generate_cases("a1.1", 0, 3, BaseSource::Synthetic).unwrap();
        assert!(g.demos.is_empty());
        assert!(g.scored.is_empty());
    }

    #[test]
    fn every_rule_generates_under_the_synthetic_source() {
        for rule_id in rule_ids() {
            let cases = build_cases(rule_id, 3, 11, BaseSource::Synthetic).unwrap();
            assert_eq!(cases.len(), 3, "{rule_id}");
            for case in &cases {
                assert_eq!(case.rule_id, rule_id);
                let entry = rule_entry(rule_id).unwrap();
                assert_eq!(case.base_input.task(), entry.rule.task);
                for key in entry.meta_keys {
                    assert!(case.oracle_meta.contains_key(*key), "{rule_id} lacks {key}");
                }
            }
        }
    }

    #[test]
    fn corpus_sources_exhaust_with_a_named_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records: Vec<TaskInput> = (0..6)
            .map(|_| TaskInput::Choice(crate::tasks::choice::sample_base(&mut rng)))
            .collect();
        let g = generate_cases("b1.1", 1, 3, BaseSource::Corpus(&records)).unwrap();
        assert_eq!(g.scored.len(), 1);
        let err = generate_cases("b1.1", 5, 3, BaseSource::Corpus(&records)).unwrap_err();
        assert!(err.to_string().contains("corpus exhausted"), "{err}");
    }

    #[test]
    fn none_strategy_reproduces_the_template_exactly() {
        for task in TaskId::ALL {
            assert_eq!(system_text(task, StrategyId::None, &[]).unwrap(), task_template(task));
            assert!(task_template(task).ends_with(ANSWER_CONTRACT));
        }
    }

    #[test]
    fn strategy_suffix_lands_between_instruction_and_contract() {
        let text = system_text(TaskId::GraphPath, StrategyId::Cot, &[]).unwrap();
        let idx_strategy = text.find("thought process").unwrap();
        let idx_contract = text.find(FINAL_ANSWER_MARKER).unwrap();
        assert!(idx_strategy < idx_contract);
        assert!(text.starts_with("In the following questions"));
    }

    #[test]
    fn answers_parse_from_marker_and_fallback_forms() {
        let path = parse_answer(TaskId::GraphPath, "thinking...\nFinal answer: 2 -> 6 -> 3 -> 5");
        assert_eq!(path, Some(TaskOutput::Path { nodes: vec![2, 6, 3, 5] }));
        let unicode = parse_answer(TaskId::GraphPath, "the path is 2 → 6 → 3");
        assert_eq!(unicode, Some(TaskOutput::Path { nodes: vec![2, 6, 3] }));
        let math = parse_answer(TaskId::MathIntegral, "so the final answer is: 54");
        assert_eq!(math, Some(TaskOutput::Integer { value: 54 }));
        assert_eq!(parse_answer(TaskId::MathIntegral, "I refuse"), None);
        let letter = parse_answer(TaskId::Choice, "Final answer: Option B.");
        assert_eq!(letter, Some(TaskOutput::Letter { letter: 'B' }));
        let proof = parse_answer(TaskId::Logic, "Final answer: (4), (5)");
        assert_eq!(proof, Some(TaskOutput::Proof { indexes: vec![4, 5] }));
        let counts = parse_answer(TaskId::ImageCount, "Left: 1, Right: 2");
        assert_eq!(counts, Some(TaskOutput::Counts { left: 1, right: 2 }));
        assert_eq!(
            parse_answer(TaskId::SpaceWalk, "Final answer: 19"),
            Some(TaskOutput::Position { position: 19 })
        );
        assert_eq!(parse_answer(TaskId::SpaceWalk, "Final answer: 25"), None);
        assert_eq!(parse_answer(TaskId::Sentiment, "Final answer: positive").unwrap(),
            TaskOutput::Label { text: "positive".to_string() });
    }

    #[test]
    fn marker_beats_earlier_numbers_and_uses_its_own_line() {
        let text = "Step 1 gives 10.\nStep 2 gives 20.\nFinal answer: 62\ntrailing note";
        assert_eq!(
            parse_answer(TaskId::MathIntegral, text),
            Some(TaskOutput::Integer { value: 62 })
        );
    }

    #[test]
    fn parsing_inverts_rendering_for_every_oracle_answer() {
        for entry in registry() {
            let cases = build_cases(entry.rule.rule_id.as_str(), 4, 23, BaseSource::Synthetic)
                .unwrap();
            for case in &cases {
                for input in [&case.base_input, &case.transformed_input] {
                    let gold = solve_input(input).unwrap();
                    let rendered = format!("Final answer: {}", render_answer(&gold));
                    let parsed = parse_answer(input.task(), &rendered).unwrap();
                    assert_eq!(parsed, gold, "{} round-trip", case.case_id);
                }
            }
        }
    }

    #[test]
    fn oracle_execution_yields_a_passing_five_message_transcript() {
        let cases = build_cases("space.1", 3, 41, BaseSource::Synthetic).unwrap();
        let cfg = ModelConfig::default();
        for case in &cases {
            let record = execute_case(
                case,
                &OracleModel,
                &cfg,
                StrategyId::None,
                &[],
                false,
            );
            assert_eq!(record.error, None);
            assert_eq!(record.messages.len(), 5);
            assert_eq!(record.verdict.as_ref().unwrap().status, VerdictStatus::Pass);
            assert!(record.wall_ms_round1.is_none(), "deterministic models are untimed");
        }
    }

    #[test]
    fn fresh_context_still_records_the_full_dialogue() {
        let cases = build_cases("a1.1", 1, 13, BaseSource::Synthetic).unwrap();
        let record = execute_case(
            &cases[0],
            &OracleModel,
            &ModelConfig::default(),
            StrategyId::None,
            &[],
            true,
        );
        assert_eq!(record.messages.len(), 5);
        assert_eq!(record.verdict.unwrap().status, VerdictStatus::Pass);
    }

    #[test]
    fn worker_pool_preserves_case_order() {
        let cases = build_cases("math.1", 12, 3, BaseSource::Synthetic).unwrap();
        let records = run_cases(
            &cases,
            &OracleModel,
            &ModelConfig::default(),
            StrategyId::None,
            &DemoSet::new(),
            false,
            4,
        )
        .unwrap();
        let got: Vec<&str> = records.iter().map(|r| r.case_id.as_str()).collect();
        let want: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn demo_requirements_are_validated_up_front() {
        let g = generate_cases("b4.1", 2, 9, BaseSource::Synthetic).unwrap();
        let err = run_cases(
            &g.scored,
            &OracleModel,
            &ModelConfig::default(),
            StrategyId::Fs,
            &DemoSet::new(),
            false,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, RunnerError::MissingDemos { .. }));

        let mut demos = DemoSet::new();
        demos.insert("b4.1".to_string(), render_demo_pairs(&g.demos).unwrap());
        let records = run_cases(
            &g.scored,
            &OracleModel,
            &ModelConfig::default(),
            StrategyId::Fs,
            &demos,
            false,
            2,
        )
        .unwrap();
        assert!(records.iter().all(|r| r.verdict.as_ref().unwrap().status
            == VerdictStatus::Pass));

        // A demo colliding with a scored case id is rejected.
        let mut colliding = demos.clone();
        colliding.get_mut("b4.1").unwrap()[0].case_id = g.scored[0].case_id.clone();
        let err = run_cases(
            &g.scored,
            &OracleModel,
            &ModelConfig::default(),
            StrategyId::Fs,
            &colliding,
            false,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, RunnerError::DemoOverlap { .. }));
    }

    #[test]
    fn demo_rendering_answers_with_the_oracles() {
        let g = generate_cases("space.1", 1, 17, BaseSource::Synthetic).unwrap();
        let demos = render_demo_pairs(&g.demos).unwrap();
        assert_eq!(demos.len(), 5);
        for (demo, case) in demos.iter().zip(&g.demos) {
            assert_eq!(demo.case_id, case.case_id);
            let gold = render_answer(&solve_input(&case.base_input).unwrap());
            assert_eq!(demo.base_answer, gold);
            assert!(demo.base_question.contains("You start at position"));
        }
    }

    #[test]
    fn case_files_round_trip_and_detect_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.jsonl");
        let g = generate_cases("b2.1", 3, 5, BaseSource::Synthetic).unwrap();
        let mut all = g.demos.clone();
        all.extend(g.scored.clone());
        let header = CaseFileHeader::new(vec!["b2.1".to_string()], g.scored.len(), 5);
        persist_cases(&path, &header, &all).unwrap();
        let (header2, cases2) = load_cases(&path).unwrap();
        assert_eq!(header2, header);
        assert_eq!(cases2, all);

        // Dropping the trailer is truncation.
        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: String =
            text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(load_cases(&path), Err(RunnerError::Integrity(_))));

        // Flipping a byte inside a record breaks the digest.
        let mangled = text.replacen("b2.1-0001", "b2.1-0901", 1);
        assert_ne!(text, mangled);
        std::fs::write(&path, mangled).unwrap();
        assert!(matches!(load_cases(&path), Err(RunnerError::Integrity(_))));
    }

    #[test]
    fn run_files_round_trip_and_reject_case_files() {
        let dir = tempfile::tempdir().unwrap();
        let cases_path = dir.path().join("cases.jsonl");
        let run_path = dir.path().join("run.jsonl");
        let g = generate_cases("space.1", 2, 2, BaseSource::Synthetic).unwrap();
        let header = CaseFileHeader::new(vec!["space.1".to_string()], 2, 2);
        persist_cases(&cases_path, &header, &g.scored).unwrap();

        let cfg = ModelConfig::default();
        let manifest =
            make_manifest(&header, &g.scored, &OracleModel, &cfg, StrategyId::None, false)
                .unwrap();
        assert_eq!(manifest.created_at_unix, None, "oracle runs carry no timestamp");
        let records = run_cases(
            &g.scored,
            &OracleModel,
            &cfg,
            StrategyId::None,
            &DemoSet::new(),
            false,
            1,
        )
        .unwrap();
        persist_run(&run_path, &manifest, &records).unwrap();
        let (manifest2, records2) = load_run(&run_path).unwrap();
        assert_eq!(manifest2, manifest);
        assert_eq!(records2, records);

        // Kind checks keep the two file flavors apart.
        assert!(matches!(load_cases(&run_path), Err(RunnerError::Integrity(_))));
        assert!(matches!(load_run(&cases_path), Err(RunnerError::Integrity(_))));
    }

    #[test]
    fn empty_runs_persist_as_header_plus_trailer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let header = CaseFileHeader::new(vec![], 0, 0);
        persist_cases(&path, &header, &[]).unwrap();
        let (header2, cases) = load_cases(&path).unwrap();
        assert_eq!(header2, header);
        assert!(cases.is_empty());
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn walk_prompt_and_parse_agree_on_a_hand_case() {
        let input = WalkInput {
            start: 0,
            moves: vec![Move { direction: Direction::Clockwise, steps: 25 }],
        };
        let msg = user_message(&TaskInput::SpaceWalk(input));
        assert_eq!(msg.text, "You start at position 0. Moves: clockwise 25 steps.");
        assert!(msg.image.is_none());
    }
}
