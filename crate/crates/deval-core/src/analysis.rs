//! Scoring rollups, failure attribution through an LLM judge, autonomous
//! rule-candidate generation, and report emission.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dr::{CasePair, DcsReport, DrError, DrType, TaskId, VerdictStatus};
use crate::gateway::{ChatMessage, GatewayError, Model, ModelConfig};
use crate::registry::{registry, rule_entry};
use crate::runner::{execute_case, TranscriptRecord};
use crate::strategies::StrategyId;
use crate::tasks::{render_answer, solve_input, user_text, GenError};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("case {0} did not fail; attribution only runs on failures")]
    NotAFailure(String),
    #[error(transparent)]
    Dr(#[from] DrError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    BadRequest(String),
}

// ---------------------------------------------------------------------------
// Error attribution
// ---------------------------------------------------------------------------

/// Closed failure taxonomy. The first three come from the judge; a case lands
/// in `Unclassifiable` when the judge never names a category.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    DrUnaware,
    DrMislocalized,
    DrMisapplied,
    Unclassifiable,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::DrUnaware => "dr_unaware",
            ErrorCategory::DrMislocalized => "dr_mislocalized",
            ErrorCategory::DrMisapplied => "dr_misapplied",
            ErrorCategory::Unclassifiable => "unclassifiable",
        }
    }
}

impl std::fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One attributed failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub case_id: String,
    pub category: ErrorCategory,
    pub judge_model: String,
}

const CONCEPT_TEXT: &str = "A derivation relation for a task is a pair (T, R): T is a \
binary relation on task inputs describing a controlled change, and R is the \
corresponding binary relation on outputs. A solver respects the relation when, for \
every input pair (x1, x2) in T, its outputs (y1, y2) satisfy R. The derivation \
capability score is the fraction of input pairs in T whose output pairs land in R.";

const CATEGORY_DEFINITIONS: &str = "DR-Unaware: LLM keeps the same output. It does not \
recognize and incorporate the input transformation defined by T.\n\
DR-Mislocalized: LLM changes the output but fails to determine how it should change, \
i.e., the relation R.\n\
DR-Misapplied: LLM correctly identifies how the output should change, but the final \
result is wrong.";

const JUDGE_EXAMPLES: &str = "Example of DR-Unaware: a walking task reverses the move \
direction between rounds, so the correct final position changes; the model answers 9 \
in round one and 9 again in round two, ignoring the change entirely.\n\
Example of DR-Mislocalized: a multiple-choice task mirrors the option order, so the \
correct letter B must become D; the model switches its answer from B to C — it \
reacted to the change but applied the wrong output relation.\n\
Example of DR-Misapplied: an integration task adds a term x to the integrand, which \
should raise the evaluated answer from 54 by 8 to 62; the model explains that the new \
term adds 8 but then answers 59 — right update, wrong final result.";

const JUDGE_ROLE: &str = "You are an evaluator of two-round dialogues that test \
whether a model updates its answer correctly when the question changes in a \
controlled way.";

fn category_instruction() -> &'static str {
    "Reply with exactly one of: DR-Unaware, DR-Mislocalized, DR-Misapplied."
}

fn render_transcript(record: &TranscriptRecord) -> String {
    let mut out = String::new();
    out.push_str(&format!("Case: {}\n", record.case_id));
    if let Ok(entry) = rule_entry(&record.rule_id) {
        out.push_str(&format!(
            "Rule {} ({} on {}): {}\n",
            record.rule_id,
            entry.rule.dr_type.as_str(),
            entry.rule.task,
            entry.rule.description
        ));
    }
    out.push_str("Transcript:\n");
    for msg in &record.messages {
        let role = match msg.role {
            crate::gateway::Role::System => "system",
            crate::gateway::Role::User => "user",
            crate::gateway::Role::Assistant => "assistant",
        };
        let body = if msg.image.is_some() && msg.text.is_empty() {
            "<image attachment>"
        } else {
            msg.text.as_str()
        };
        out.push_str(&format!("[{role}] {body}\n"));
    }
    out
}

fn judge_user_prompt(record: &TranscriptRecord) -> String {
    format!(
        "{CONCEPT_TEXT}\n\nFailure categories:\n{CATEGORY_DEFINITIONS}\n\n\
         {JUDGE_EXAMPLES}\n\n{}\nThe second answer failed the expected output \
         relation. Classify the failure. {}",
        render_transcript(record),
        category_instruction()
    )
}

/// Scan a judge reply for exactly one category token (case-insensitive,
/// underscores and hyphens equivalent).
fn parse_category(reply: &str) -> Option<ErrorCategory> {
    let norm = reply.to_lowercase().replace('_', "-");
    let hits: Vec<ErrorCategory> = [
        ("dr-unaware", ErrorCategory::DrUnaware),
        ("dr-mislocalized", ErrorCategory::DrMislocalized),
        ("dr-misapplied", ErrorCategory::DrMisapplied),
    ]
    .into_iter()
    .filter(|(token, _)| norm.contains(token))
    .map(|(_, cat)| cat)
    .collect();
    match hits.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

/// Ask the judge to classify one failed case. The judge gets the concept
/// prose, the category definitions, one worked example per category, and the
/// stored transcript; a reply without a single category token earns one
/// reprompt, after which the case is `Unclassifiable`. Judge transport errors
/// propagate — they are infrastructure failures, not classifications.
pub fn attribute_error(
    record: &TranscriptRecord,
    judge: &dyn Model,
    judge_cfg: &ModelConfig,
) -> Result<ErrorCategory, AnalysisError> {
    if record.verdict.as_ref().map(|v| v.status) != Some(VerdictStatus::Fail) {
        return Err(AnalysisError::NotAFailure(record.case_id.clone()));
    }
    let system = ChatMessage::system(JUDGE_ROLE.to_string());
    let user = ChatMessage::user(judge_user_prompt(record));
    let first = judge.complete_chat(&[system.clone(), user.clone()], judge_cfg)?;
    if let Some(category) = parse_category(&first) {
        return Ok(category);
    }
    let reprompt = ChatMessage::user(format!(
        "Your previous reply for case {} did not name a category. {}",
        record.case_id,
        category_instruction()
    ));
    let second = judge.complete_chat(
        &[system, user, ChatMessage::assistant(first), reprompt],
        judge_cfg,
    )?;
    Ok(parse_category(&second).unwrap_or(ErrorCategory::Unclassifiable))
}

/// Re-run a case with the chain-of-thought strategy so the stored transcript
/// carries a reasoning chain for the judge to inspect.
pub fn regenerate_with_cot(
    case: &CasePair,
    model: &dyn Model,
    cfg: &ModelConfig,
    fresh_context: bool,
) -> TranscriptRecord {
    execute_case(case, model, cfg, StrategyId::Cot, &[], fresh_context)
}

/// Distribution over failure categories. Fractions are taken over classified
/// failures only; unclassifiable cases are counted but excluded from the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub fractions: BTreeMap<ErrorCategory, f64>,
    pub classifiable: usize,
    pub unclassifiable: usize,
}

pub fn summarize_attribution(categories: &[ErrorCategory]) -> AttributionSummary {
    let unclassifiable = categories
        .iter()
        .filter(|c| **c == ErrorCategory::Unclassifiable)
        .count();
    let classifiable = categories.len() - unclassifiable;
    let mut counts: BTreeMap<ErrorCategory, usize> = BTreeMap::new();
    for category in categories {
        if *category != ErrorCategory::Unclassifiable {
            *counts.entry(*category).or_default() += 1;
        }
    }
    let fractions = counts
        .into_iter()
        .map(|(category, n)| (category, n as f64 / classifiable as f64))
        .collect();
    AttributionSummary { fractions, classifiable, unclassifiable }
}

// ---------------------------------------------------------------------------
// Autonomous rule-candidate generation
// ---------------------------------------------------------------------------

/// Five manual review dimensions: A rationality, B formal correctness,
/// C identity-type, D domain knowledge, E implementability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
    pub e: bool,
}

/// A model-proposed derivation relation awaiting human annotation. The
/// harness never fills the booleans itself — reviewers edit the emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrCandidate {
    pub task: TaskId,
    pub description: String,
    pub t_text: String,
    pub r_text: String,
    pub annotations: Annotations,
}

fn representative_instances(task: TaskId, count: usize) -> Vec<(String, String)> {
    let Some(entry) = registry().iter().find(|e| e.rule.task == task) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x0D06_F00D);
    let mut instances = Vec::new();
    let mut attempts = 0;
    while instances.len() < count && attempts < 200 {
        attempts += 1;
        match (entry.sample)(&mut rng) {
            Ok(input) => {
                let Ok(gold) = solve_input(&input) else { continue };
                instances.push((user_text(&input), render_answer(&gold)));
            }
            Err(GenError::Precondition { .. } | GenError::Placement { .. }) => continue,
            Err(_) => break,
        }
    }
    instances
}

fn drgen_prompt(task: TaskId, n: usize) -> String {
    let mut prompt = format!(
        "{CONCEPT_TEXT}\n\nThe task: {}\n\nRepresentative instances:\n",
        crate::runner::task_template(task)
    );
    for (question, answer) in representative_instances(task, 2) {
        prompt.push_str(&format!("Q: {question}\nA: {answer}\n\n"));
    }
    prompt.push_str(&format!(
        "Propose {n} candidate derivation relations for this task. Number them and \
         format each candidate as exactly three lines:\n\
         DR <index>: <one-line description>\n\
         T: <how the input changes>\n\
         R: <how the output must change>"
    ));
    prompt
}

fn parse_candidates(task: TaskId, reply: &str) -> Vec<DrCandidate> {
    let mut candidates = Vec::new();
    let mut current: Option<DrCandidate> = None;
    let flush = |cand: Option<DrCandidate>, out: &mut Vec<DrCandidate>| {
        if let Some(c) = cand {
            if !c.description.is_empty() && !c.t_text.is_empty() && !c.r_text.is_empty() {
                out.push(c);
            }
        }
    };
    for line in reply.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("DR ") {
            if let Some((_, description)) = rest.split_once(':') {
                flush(current.take(), &mut candidates);
                current = Some(DrCandidate {
                    task,
                    description: description.trim().to_string(),
                    t_text: String::new(),
                    r_text: String::new(),
                    annotations: Annotations::default(),
                });
                continue;
            }
        }
        if let Some(cand) = current.as_mut() {
            if let Some(t) = line.strip_prefix("T:") {
                cand.t_text = t.trim().to_string();
            } else if let Some(r) = line.strip_prefix("R:") {
                cand.r_text = r.trim().to_string();
            }
        }
    }
    flush(current, &mut candidates);
    candidates
}

/// Ask a model to propose `n` derivation relations for a task. Returns the
/// parseable candidates (annotations all false) plus warnings when the reply
/// yields fewer than requested.
pub fn generate_dr_candidates(
    task: TaskId,
    n: usize,
    model: &dyn Model,
    cfg: &ModelConfig,
) -> Result<(Vec<DrCandidate>, Vec<String>), AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::BadRequest(
            "candidate count must be at least 1".to_string(),
        ));
    }
    let history = [
        ChatMessage::system(
            "You design derivation relations: controlled input changes paired with the \
             output changes they must cause."
                .to_string(),
        ),
        ChatMessage::user(drgen_prompt(task, n)),
    ];
    let reply = model.complete_chat(&history, cfg)?;
    let mut candidates = parse_candidates(task, &reply);
    candidates.truncate(n);
    let mut warnings = Vec::new();
    if candidates.len() < n {
        warnings.push(format!(
            "parsed {} of {n} requested candidates for {task}",
            candidates.len()
        ));
    }
    Ok((candidates, warnings))
}

/// Candidate files are plain JSONL (no digest frame) so reviewers can edit
/// the annotation booleans by hand.
pub fn save_candidates(path: &Path, candidates: &[DrCandidate]) -> Result<(), AnalysisError> {
    let mut out = String::new();
    for candidate in candidates {
        out.push_str(&serde_json::to_string(candidate)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_candidates(path: &Path) -> Result<Vec<DrCandidate>, AnalysisError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(AnalysisError::from))
        .collect()
}

/// Per-dimension true-fractions across annotated candidates (zeros when the
/// list is empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRates {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub count: usize,
}

pub fn summarize_annotations(candidates: &[DrCandidate]) -> AnnotationRates {
    let count = candidates.len();
    if count == 0 {
        return AnnotationRates { a: 0.0, b: 0.0, c: 0.0, d: 0.0, e: 0.0, count };
    }
    let rate = |pick: fn(&Annotations) -> bool| {
        candidates.iter().filter(|c| pick(&c.annotations)).count() as f64 / count as f64
    };
    AnnotationRates {
        a: rate(|x| x.a),
        b: rate(|x| x.b),
        c: rate(|x| x.c),
        d: rate(|x| x.d),
        e: rate(|x| x.e),
        count,
    }
}

// ---------------------------------------------------------------------------
// Score aggregation and reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub rule_id: String,
    pub task: TaskId,
    pub dr_type: DrType,
    pub passes: u64,
    pub total: u64,
    /// None when no case reached a verdict.
    pub gamma: Option<f64>,
    /// API-errored cases: reported, never in the denominator.
    pub errored: u64,
    /// Unparseable answers: inside the denominator, also surfaced here.
    pub unparseable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub rows: Vec<ScoreRow>,
    /// Unweighted mean gamma per rule type, over rules that have a gamma.
    pub by_type: BTreeMap<DrType, f64>,
    /// Unweighted mean over all rules with a gamma.
    pub overall: Option<f64>,
}

fn finish_summary(mut rows: Vec<ScoreRow>) -> ScoreSummary {
    rows.sort_by(|x, y| x.rule_id.cmp(&y.rule_id));
    let mut by_type_parts: BTreeMap<DrType, (f64, u64)> = BTreeMap::new();
    let mut overall_parts = (0.0_f64, 0_u64);
    for row in &rows {
        if let Some(gamma) = row.gamma {
            let slot = by_type_parts.entry(row.dr_type).or_insert((0.0, 0));
            slot.0 += gamma;
            slot.1 += 1;
            overall_parts.0 += gamma;
            overall_parts.1 += 1;
        }
    }
    let by_type = by_type_parts
        .into_iter()
        .map(|(ty, (sum, n))| (ty, sum / n as f64))
        .collect();
    let overall =
        (overall_parts.1 > 0).then(|| overall_parts.0 / overall_parts.1 as f64);
    ScoreSummary { rows, by_type, overall }
}

/// Summarize pre-computed per-rule scores (no error or unparseable detail).
pub fn aggregate_scores(reports: &[DcsReport]) -> Result<ScoreSummary, AnalysisError> {
    let rows = reports
        .iter()
        .map(|report| {
            let entry = rule_entry(&report.rule_id)?;
            Ok(ScoreRow {
                rule_id: report.rule_id.clone(),
                task: entry.rule.task,
                dr_type: entry.rule.dr_type,
                passes: report.passes,
                total: report.total,
                gamma: (report.total > 0).then_some(report.gamma),
                errored: 0,
                unparseable: 0,
            })
        })
        .collect::<Result<Vec<_>, DrError>>()?;
    Ok(finish_summary(rows))
}

/// Score a run from its transcripts. Errored records are excluded from the
/// denominator and reported separately; unparseable answers stay in it.
pub fn score_run(records: &[TranscriptRecord]) -> Result<ScoreSummary, AnalysisError> {
    let mut acc: BTreeMap<&str, (u64, u64, u64, u64)> = BTreeMap::new();
    for record in records {
        let slot = acc.entry(record.rule_id.as_str()).or_default();
        if record.error.is_some() {
            slot.2 += 1;
            continue;
        }
        let Some(verdict) = &record.verdict else {
            slot.2 += 1;
            continue;
        };
        slot.1 += 1;
        match verdict.status {
            VerdictStatus::Pass => slot.0 += 1,
            VerdictStatus::Fail => {}
            VerdictStatus::UnparseableRound1 | VerdictStatus::UnparseableRound2 => {
                slot.3 += 1
            }
        }
    }
    let rows = acc
        .into_iter()
        .map(|(rule_id, (passes, total, errored, unparseable))| {
            let entry = rule_entry(rule_id)?;
            Ok(ScoreRow {
                rule_id: rule_id.to_string(),
                task: entry.rule.task,
                dr_type: entry.rule.dr_type,
                passes,
                total,
                gamma: (total > 0).then(|| passes as f64 / total as f64),
                errored,
                unparseable,
            })
        })
        .collect::<Result<Vec<_>, DrError>>()?;
    Ok(finish_summary(rows))
}

fn fmt_gamma(gamma: Option<f64>) -> String {
    gamma.map_or_else(String::new, |g| format!("{g:.6}"))
}

/// CSV of per-rule rows plus mean rollups; header-only when nothing was
/// scored.
pub fn scores_csv(summary: &ScoreSummary) -> String {
    let mut out = String::from("rule_id,task,dr_type,passes,total,gamma\n");
    if summary.rows.is_empty() {
        return out;
    }
    for row in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.rule_id,
            row.task,
            row.dr_type.as_str(),
            row.passes,
            row.total,
            fmt_gamma(row.gamma)
        ));
    }
    for (ty, mean) in &summary.by_type {
        out.push_str(&format!("mean:{},,{},,,{mean:.6}\n", ty.as_str(), ty.as_str()));
    }
    out.push_str(&format!("mean:overall,,,,,{}\n", fmt_gamma(summary.overall)));
    out
}

/// Human-readable rollup: per-type means, attribution distribution, error and
/// unparseable counts. Deterministic given its inputs.
pub fn summary_text(
    summary: &ScoreSummary,
    attribution: Option<&AttributionSummary>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("rules scored: {}\n", summary.rows.len()));
    out.push_str(&format!(
        "overall mean DCS: {}\n",
        summary.overall.map_or_else(|| "n/a".to_string(), |g| format!("{g:.6}"))
    ));
    for (ty, mean) in &summary.by_type {
        out.push_str(&format!("{} mean DCS: {mean:.6}\n", ty.as_str()));
    }
    let errored: u64 = summary.rows.iter().map(|r| r.errored).sum();
    let unparseable: u64 = summary.rows.iter().map(|r| r.unparseable).sum();
    out.push_str(&format!("errored calls (excluded from scores): {errored}\n"));
    out.push_str(&format!("unparseable answers (scored against): {unparseable}\n"));
    if let Some(attr) = attribution {
        out.push_str(&format!(
            "attribution over {} classifiable failures:\n",
            attr.classifiable
        ));
        for (category, fraction) in &attr.fractions {
            out.push_str(&format!("  {category}: {fraction:.6}\n"));
        }
        out.push_str(&format!("  unclassifiable count: {}\n", attr.unclassifiable));
    }
    out
}

/// Write `scores.csv` and `summary.txt` into a directory.
pub fn emit_report(
    out_dir: &Path,
    summary: &ScoreSummary,
    attribution: Option<&AttributionSummary>,
) -> Result<(), AnalysisError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("scores.csv"), scores_csv(summary))?;
    std::fs::write(out_dir.join("summary.txt"), summary_text(summary, attribution))?;
    Ok(())
}
