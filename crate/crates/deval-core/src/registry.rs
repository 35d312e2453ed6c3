//! The shipped rule registry: every derivation rule bound to its base-input
//! sampler, transform, relation checker, and required metadata keys.

use std::sync::LazyLock;

use rand_chacha::ChaCha8Rng;
use rand::Rng;

use crate::dr::{
    meta_i64, meta_str, DerivationRule, DrError, DrType, OracleMeta, TaskId, Verdict,
    VerdictStatus,
};
use crate::tasks::{
    choice, graph, integral, logic, scene, sentence, solve_input, table, walk, GenError,
    TaskInput, TaskOutput,
};

/// A transformed input together with the ground-truth hints recorded while
/// transforming.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub input: TaskInput,
    pub meta: OracleMeta,
}

pub type SampleFn = fn(&mut ChaCha8Rng) -> Result<TaskInput, GenError>;
pub type TransformFn = fn(&TaskInput, &mut ChaCha8Rng) -> Result<Transformed, GenError>;
pub type RelationFn = fn(&TaskOutput, &TaskOutput, &OracleMeta) -> Result<bool, DrError>;

pub struct RuleEntry {
    pub rule: DerivationRule,
    pub sample: SampleFn,
    pub transform: TransformFn,
    pub relation: RelationFn,
    /// Metadata keys the relation checker consumes; generation guarantees
    /// their presence.
    pub meta_keys: &'static [&'static str],
}

/// All shipped rules in registry order.
pub fn registry() -> &'static [RuleEntry] {
    &REGISTRY
}

pub fn rule_entry(rule_id: &str) -> Result<&'static RuleEntry, DrError> {
    REGISTRY
        .iter()
        .find(|e| e.rule.rule_id == rule_id)
        .ok_or_else(|| DrError::UnknownRule(rule_id.to_string()))
}

pub fn rule_ids() -> Vec<&'static str> {
    REGISTRY.iter().map(|e| e.rule.rule_id.as_str()).collect()
}

/// Check one answered pair against its rule's relation.
pub fn check_pair(
    rule: &DerivationRule,
    y1: &TaskOutput,
    y2: &TaskOutput,
    meta: &OracleMeta,
) -> Result<Verdict, DrError> {
    let entry = rule_entry(&rule.rule_id)?;
    for y in [y1, y2] {
        if !y.matches_task(rule.task) {
            return Err(DrError::OutputShape {
                rule_id: rule.rule_id.clone(),
                expected: rule.task,
            });
        }
    }
    let passed = (entry.relation)(y1, y2, meta)?;
    Ok(Verdict {
        rule_id: rule.rule_id.clone(),
        status: if passed { VerdictStatus::Pass } else { VerdictStatus::Fail },
    })
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

fn sample_sentiment(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::Sentiment(sentence::sample_base(rng)))
}

fn sample_table(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::TableQa(table::sample_base(rng)))
}

fn sample_choice(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::Choice(choice::sample_base(rng)))
}

fn sample_choice_with_explanation(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::Choice(choice::sample_with_explanation(rng)))
}

fn sample_scene(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    let (left, right) = loop {
        let left = rng.gen_range(0..=3u32);
        let right = rng.gen_range(0..=3u32);
        if left + right > 0 {
            break (left, right);
        }
    };
    Ok(TaskInput::ImageCount(scene::render_scene(left, right, rng)?))
}

fn sample_logic_single(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::Logic(logic::sample_single_step(rng)))
}

fn sample_logic_chain(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::Logic(logic::sample_chain(rng)))
}

fn sample_graph(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::GraphPath(graph::sample_base(rng)))
}

fn sample_integral(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::MathIntegral(integral::sample_base(rng)))
}

fn sample_walk(rng: &mut ChaCha8Rng) -> Result<TaskInput, GenError> {
    Ok(TaskInput::SpaceWalk(walk::sample_base(rng)))
}

// ---------------------------------------------------------------------------
// Transforms (with metadata recording)
// ---------------------------------------------------------------------------

fn expect_task(input: &TaskInput, rule: &'static str, expected: TaskId) -> Result<(), GenError> {
    if input.task() == expected {
        Ok(())
    } else {
        Err(GenError::TaskMismatch { rule, expected })
    }
}

/// Record the solved base answer for auditability when the base is solvable
/// (synthetic bases always are; corpus bases may not be).
fn audit_answer(meta: &mut OracleMeta, input: &TaskInput) {
    if let Ok(output) = solve_input(input) {
        meta.insert("answer".to_string(), crate::tasks::render_answer(&output));
    }
}

fn tr_checklist(input: &TaskInput, rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "a1.1", TaskId::Sentiment)?;
    let TaskInput::Sentiment(s) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed {
        input: TaskInput::Sentiment(sentence::transform_checklist(s, rng)),
        meta,
    })
}

fn tr_deepwordbug(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "a1.2", TaskId::Sentiment)?;
    let TaskInput::Sentiment(s) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::Sentiment(sentence::transform_deepwordbug(s)), meta })
}

fn tr_fare_column(input: &TaskInput, rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "a2.1", TaskId::TableQa)?;
    let TaskInput::TableQa(t) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed {
        input: TaskInput::TableQa(table::transform_add_fare_column(t, rng)),
        meta,
    })
}

fn tr_reverse_columns(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "a2.2", TaskId::TableQa)?;
    let TaskInput::TableQa(t) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::TableQa(table::transform_reverse_columns(t)), meta })
}

fn tr_mirror_options(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b1.1", TaskId::Choice)?;
    let TaskInput::Choice(c) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::Choice(choice::transform_mirror_options(c)), meta })
}

fn tr_add_explanation(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b1.2", TaskId::Choice)?;
    let TaskInput::Choice(c) = input else { unreachable!() };
    let transformed = choice::transform_add_explanation(c)?;
    let target = c.explanation.as_ref().expect("checked by transform").target;
    let mut meta = OracleMeta::new();
    meta.insert("target".to_string(), target.to_string());
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::Choice(transformed), meta })
}

fn tr_flip_horizontal(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b2.1", TaskId::ImageCount)?;
    let TaskInput::ImageCount(img) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::ImageCount(scene::transform_flip_horizontal(img)), meta })
}

fn tr_concat_vertical(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b2.2", TaskId::ImageCount)?;
    let TaskInput::ImageCount(img) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::ImageCount(scene::transform_concat_vertical(img)), meta })
}

fn tr_reverse_premises(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b3.1", TaskId::Logic)?;
    let TaskInput::Logic(l) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    meta.insert("n".to_string(), l.premises.len().to_string());
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::Logic(logic::transform_reverse_premises(l)), meta })
}

fn tr_add_corollary(input: &TaskInput, rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b3.2", TaskId::Logic)?;
    let TaskInput::Logic(l) = input else { unreachable!() };
    let transformed = logic::transform_add_corollary(l, rng)?;
    let mut meta = OracleMeta::new();
    meta.insert("n".to_string(), l.premises.len().to_string());
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::Logic(transformed), meta })
}

fn tr_swap_endpoints(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b4.1", TaskId::GraphPath)?;
    let TaskInput::GraphPath(g) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::GraphPath(graph::transform_swap_endpoints(g)), meta })
}

fn tr_retract_endpoint(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "b4.2", TaskId::GraphPath)?;
    let TaskInput::GraphPath(g) = input else { unreachable!() };
    let transformed = graph::transform_retract_endpoint(g)?;
    let mut meta = OracleMeta::new();
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::GraphPath(transformed), meta })
}

fn tr_add_term(input: &TaskInput, rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "math.1", TaskId::MathIntegral)?;
    let TaskInput::MathIntegral(i) = input else { unreachable!() };
    let (transformed, delta) = integral::transform_add_term(i, rng)?;
    let mut meta = OracleMeta::new();
    meta.insert("delta".to_string(), delta.to_string());
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::MathIntegral(transformed), meta })
}

fn tr_reverse_directions(input: &TaskInput, _rng: &mut ChaCha8Rng) -> Result<Transformed, GenError> {
    expect_task(input, "space.1", TaskId::SpaceWalk)?;
    let TaskInput::SpaceWalk(w) = input else { unreachable!() };
    let mut meta = OracleMeta::new();
    meta.insert("start".to_string(), w.start.to_string());
    audit_answer(&mut meta, input);
    Ok(Transformed { input: TaskInput::SpaceWalk(walk::transform_reverse_directions(w)), meta })
}

// ---------------------------------------------------------------------------
// Relations over parsed outputs
// ---------------------------------------------------------------------------

fn shape_err(relation: &'static str, expected: TaskId) -> DrError {
    DrError::OutputShape { rule_id: relation.to_string(), expected }
}

fn rel_identical_label(
    y1: &TaskOutput,
    y2: &TaskOutput,
    _meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Label { text: a }, TaskOutput::Label { text: b }) => {
            Ok(crate::tasks::relate_identical_label(a, b))
        }
        _ => Err(shape_err("relate_identical_label", TaskId::Sentiment)),
    }
}

fn rel_mirrored_choice(
    y1: &TaskOutput,
    y2: &TaskOutput,
    _meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Letter { letter: a }, TaskOutput::Letter { letter: b }) => {
            Ok(choice::relate_mirrored_choice(*a, *b))
        }
        _ => Err(shape_err("relate_mirrored_choice", TaskId::Choice)),
    }
}

fn rel_explained_choice(
    _y1: &TaskOutput,
    y2: &TaskOutput,
    meta: &OracleMeta,
) -> Result<bool, DrError> {
    let TaskOutput::Letter { letter } = y2 else {
        return Err(shape_err("relate_explained_choice", TaskId::Choice));
    };
    let raw = meta_str(meta, "target")?;
    let target = raw.chars().next().ok_or_else(|| DrError::BadMeta {
        key: "target".to_string(),
        value: raw.to_string(),
    })?;
    Ok(choice::relate_explained_choice(*letter, target))
}

fn rel_reversed_proof(
    y1: &TaskOutput,
    y2: &TaskOutput,
    meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Proof { indexes: a }, TaskOutput::Proof { indexes: b }) => {
            Ok(logic::relate_reversed_proof(a, b, meta_i64(meta, "n")? as u32))
        }
        _ => Err(shape_err("relate_reversed_proof", TaskId::Logic)),
    }
}

fn rel_corollary_proof(
    y1: &TaskOutput,
    y2: &TaskOutput,
    meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Proof { indexes: a }, TaskOutput::Proof { indexes: b }) => {
            Ok(logic::relate_corollary_proof(a, b, meta_i64(meta, "n")? as u32))
        }
        _ => Err(shape_err("relate_corollary_proof", TaskId::Logic)),
    }
}

fn rel_swapped_counts(
    y1: &TaskOutput,
    y2: &TaskOutput,
    _meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Counts { left: l1, right: r1 }, TaskOutput::Counts { left: l2, right: r2 }) => {
            Ok(scene::relate_swapped_counts((*l1, *r1), (*l2, *r2)))
        }
        _ => Err(shape_err("relate_swapped_counts", TaskId::ImageCount)),
    }
}

fn rel_doubled_counts(
    y1: &TaskOutput,
    y2: &TaskOutput,
    _meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Counts { left: l1, right: r1 }, TaskOutput::Counts { left: l2, right: r2 }) => {
            Ok(scene::relate_doubled_counts((*l1, *r1), (*l2, *r2)))
        }
        _ => Err(shape_err("relate_doubled_counts", TaskId::ImageCount)),
    }
}

fn rel_reversed_path(
    y1: &TaskOutput,
    y2: &TaskOutput,
    _meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Path { nodes: a }, TaskOutput::Path { nodes: b }) => {
            Ok(graph::relate_reversed_path(a, b))
        }
        _ => Err(shape_err("relate_reversed_path", TaskId::GraphPath)),
    }
}

fn rel_truncated_path(
    y1: &TaskOutput,
    y2: &TaskOutput,
    _meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Path { nodes: a }, TaskOutput::Path { nodes: b }) => {
            Ok(graph::relate_truncated_path(a, b))
        }
        _ => Err(shape_err("relate_truncated_path", TaskId::GraphPath)),
    }
}

fn rel_shifted_integral(
    y1: &TaskOutput,
    y2: &TaskOutput,
    meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Integer { value: a }, TaskOutput::Integer { value: b }) => {
            Ok(integral::relate_shifted_integral(*a, *b, meta_i64(meta, "delta")?))
        }
        _ => Err(shape_err("relate_shifted_integral", TaskId::MathIntegral)),
    }
}

fn rel_opposite_position(
    y1: &TaskOutput,
    y2: &TaskOutput,
    meta: &OracleMeta,
) -> Result<bool, DrError> {
    match (y1, y2) {
        (TaskOutput::Position { position: a }, TaskOutput::Position { position: b }) => {
            let start = meta_i64(meta, "start")?;
            if !(0..i64::from(walk::CIRCLE)).contains(&start) {
                return Err(DrError::BadMeta {
                    key: "start".to_string(),
                    value: start.to_string(),
                });
            }
            Ok(walk::relate_opposite_position(*a, *b, start as u8))
        }
        _ => Err(shape_err("relate_opposite_position", TaskId::SpaceWalk)),
    }
}

// ---------------------------------------------------------------------------
// The registry itself
// ---------------------------------------------------------------------------

struct Spec {
    rule_id: &'static str,
    task: TaskId,
    dr_type: DrType,
    description: &'static str,
    transform_ref: &'static str,
    relation_ref: &'static str,
    sample: SampleFn,
    transform: TransformFn,
    relation: RelationFn,
    meta_keys: &'static [&'static str],
}

static REGISTRY: LazyLock<Vec<RuleEntry>> = LazyLock::new(|| {
    let specs = [
        Spec {
            rule_id: "a1.1",
            task: TaskId::Sentiment,
            dr_type: DrType::Id,
            description: "Append a ten-character random string to the classification \
                          instruction; the label must not move.",
            transform_ref: "transform_checklist",
            relation_ref: "relate_identical_label",
            sample: sample_sentiment,
            transform: tr_checklist,
            relation: rel_identical_label,
            meta_keys: &[],
        },
        Spec {
            rule_id: "a1.2",
            task: TaskId::Sentiment,
            dr_type: DrType::Id,
            description: "Apply character-level noise to the classification instruction \
                          (every a doubles to as, every t drops); the label must not move.",
            transform_ref: "transform_deepwordbug",
            relation_ref: "relate_identical_label",
            sample: sample_sentiment,
            transform: tr_deepwordbug,
            relation: rel_identical_label,
            meta_keys: &[],
        },
        Spec {
            rule_id: "a2.1",
            task: TaskId::TableQa,
            dr_type: DrType::Id,
            description: "Insert a constant Fare column at a random position; the \
                          addressed cell is unchanged.",
            transform_ref: "transform_add_fare_column",
            relation_ref: "relate_identical_label",
            sample: sample_table,
            transform: tr_fare_column,
            relation: rel_identical_label,
            meta_keys: &[],
        },
        Spec {
            rule_id: "a2.2",
            task: TaskId::TableQa,
            dr_type: DrType::Id,
            description: "Reverse the column order; the addressed cell is unchanged.",
            transform_ref: "transform_reverse_columns",
            relation_ref: "relate_identical_label",
            sample: sample_table,
            transform: tr_reverse_columns,
            relation: rel_identical_label,
            meta_keys: &[],
        },
        Spec {
            rule_id: "b1.1",
            task: TaskId::Choice,
            dr_type: DrType::Ge,
            description: "Mirror the option order (A and E swap, B and D swap, C stays); \
                          the chosen letters must mirror too.",
            transform_ref: "transform_mirror_options",
            relation_ref: "relate_mirrored_choice",
            sample: sample_choice,
            transform: tr_mirror_options,
            relation: rel_mirrored_choice,
            meta_keys: &[],
        },
        Spec {
            rule_id: "b1.2",
            task: TaskId::Choice,
            dr_type: DrType::Ts,
            description: "Append an explanation arguing for one option; the second answer \
                          must follow the explained option.",
            transform_ref: "transform_add_explanation",
            relation_ref: "relate_explained_choice",
            sample: sample_choice_with_explanation,
            transform: tr_add_explanation,
            relation: rel_explained_choice,
            meta_keys: &["target"],
        },
        Spec {
            rule_id: "b2.1",
            task: TaskId::ImageCount,
            dr_type: DrType::Ge,
            description: "Flip the scene horizontally; the left/right glyph counts swap.",
            transform_ref: "transform_flip_horizontal",
            relation_ref: "relate_swapped_counts",
            sample: sample_scene,
            transform: tr_flip_horizontal,
            relation: rel_swapped_counts,
            meta_keys: &[],
        },
        Spec {
            rule_id: "b2.2",
            task: TaskId::ImageCount,
            dr_type: DrType::Ge,
            description: "Stack the scene on a copy of itself; both glyph counts double.",
            transform_ref: "transform_concat_vertical",
            relation_ref: "relate_doubled_counts",
            sample: sample_scene,
            transform: tr_concat_vertical,
            relation: rel_doubled_counts,
            meta_keys: &[],
        },
        Spec {
            rule_id: "b3.1",
            task: TaskId::Logic,
            dr_type: DrType::Ge,
            description: "Reverse the premise order; the proof's premise indexes re-map \
                          across the reversal.",
            transform_ref: "transform_reverse_premises",
            relation_ref: "relate_reversed_proof",
            sample: sample_logic_single,
            transform: tr_reverse_premises,
            relation: rel_reversed_proof,
            meta_keys: &["n"],
        },
        Spec {
            rule_id: "b3.2",
            task: TaskId::Logic,
            dr_type: DrType::Ts,
            description: "Insert a conditional extending the conclusion as premise one; \
                          the proof re-derives the old conclusion, then applies it.",
            transform_ref: "transform_add_corollary",
            relation_ref: "relate_corollary_proof",
            sample: sample_logic_chain,
            transform: tr_add_corollary,
            relation: rel_corollary_proof,
            meta_keys: &["n"],
        },
        Spec {
            rule_id: "b4.1",
            task: TaskId::GraphPath,
            dr_type: DrType::Ge,
            description: "Swap the path endpoints; the path reverses.",
            transform_ref: "transform_swap_endpoints",
            relation_ref: "relate_reversed_path",
            sample: sample_graph,
            transform: tr_swap_endpoints,
            relation: rel_reversed_path,
            meta_keys: &[],
        },
        Spec {
            rule_id: "b4.2",
            task: TaskId::GraphPath,
            dr_type: DrType::Ts,
            description: "Retract the end one hop along the path; the path truncates by \
                          its last node.",
            transform_ref: "transform_retract_endpoint",
            relation_ref: "relate_truncated_path",
            sample: sample_graph,
            transform: tr_retract_endpoint,
            relation: rel_truncated_path,
            meta_keys: &[],
        },
        Spec {
            rule_id: "math.1",
            task: TaskId::MathIntegral,
            dr_type: DrType::Ts,
            description: "Append a term whose antiderivative at the eval point is a known \
                          integer; the result shifts by exactly that integer.",
            transform_ref: "transform_add_term",
            relation_ref: "relate_shifted_integral",
            sample: sample_integral,
            transform: tr_add_term,
            relation: rel_shifted_integral,
            meta_keys: &["delta"],
        },
        Spec {
            rule_id: "space.1",
            task: TaskId::SpaceWalk,
            dr_type: DrType::Ge,
            description: "Reverse every move's direction; the endpoint mirrors around the \
                          start position on the circle.",
            transform_ref: "transform_reverse_directions",
            relation_ref: "relate_opposite_position",
            sample: sample_walk,
            transform: tr_reverse_directions,
            relation: rel_opposite_position,
            meta_keys: &["start"],
        },
    ];
    specs
        .into_iter()
        .map(|s| RuleEntry {
            rule: DerivationRule {
                rule_id: s.rule_id.to_string(),
                task: s.task,
                dr_type: s.dr_type,
                description: s.description.split_whitespace().collect::<Vec<_>>().join(" "),
                transform_ref: s.transform_ref.to_string(),
                relation_ref: s.relation_ref.to_string(),
            },
            sample: s.sample,
            transform: s.transform,
            relation: s.relation,
            meta_keys: s.meta_keys,
        })
        .collect()
});

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn registry_ships_fourteen_distinct_rules() {
        let ids = rule_ids();
        assert_eq!(ids.len(), 14);
        let unique: std::collections::BTreeSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len());
        assert!(rule_entry("b4.1").is_ok());
        assert!(rule_entry("nope").is_err());
    }

    #[test]
    fn type_census_matches_the_shipped_mix() {
        let count = |t: DrType| registry().iter().filter(|e| e.rule.dr_type == t).count();
        assert_eq!(count(DrType::Id), 4);
        assert_eq!(count(DrType::Ge), 6);
        assert_eq!(count(DrType::Ts), 4);
    }

    #[test]
    fn check_pair_applies_the_bound_relation() {
        let rule = &rule_entry("b1.1").unwrap().rule;
        let meta = OracleMeta::new();
        let y = |letter| TaskOutput::Letter { letter };
        let verdict = check_pair(rule, &y('A'), &y('E'), &meta).unwrap();
        assert_eq!(verdict.status, VerdictStatus::Pass);
        assert_eq!(verdict.rule_id, "b1.1");
        let verdict = check_pair(rule, &y('A'), &y('A'), &meta).unwrap();
        assert_eq!(verdict.status, VerdictStatus::Fail);
    }

    #[test]
    fn check_pair_rejects_mismatched_output_shapes() {
        let rule = &rule_entry("b1.1").unwrap().rule;
        let letter = TaskOutput::Letter { letter: 'A' };
        let path = TaskOutput::Path { nodes: vec![1, 2] };
        let err = check_pair(rule, &letter, &path, &OracleMeta::new()).unwrap_err();
        assert!(matches!(err, DrError::OutputShape { .. }));
    }

    #[test]
    fn relations_surface_missing_metadata() {
        let rule = &rule_entry("math.1").unwrap().rule;
        let y = |value| TaskOutput::Integer { value };
        let err = check_pair(rule, &y(54), &y(62), &OracleMeta::new()).unwrap_err();
        assert!(matches!(err, DrError::MissingMeta { .. }));
    }

    #[test]
    fn every_rule_closes_on_sampled_cases() {
        // Sample, transform, solve both sides, and check the relation: the
        // full square must commute for every rule.
        for entry in registry() {
            let mut passes = 0;
            for seed in 0..25u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + 7);
                let base = match (entry.sample)(&mut rng) {
                    Ok(b) => b,
                    Err(GenError::Precondition { .. } | GenError::Placement { .. }) => continue,
                    Err(e) => panic!("{}: sampler failed: {e}", entry.rule.rule_id),
                };
                let transformed = match (entry.transform)(&base, &mut rng) {
                    Ok(t) => t,
                    Err(GenError::Precondition { .. }) => continue,
                    Err(e) => panic!("{}: transform failed: {e}", entry.rule.rule_id),
                };
                for key in entry.meta_keys {
                    assert!(
                        transformed.meta.contains_key(*key),
                        "{}: meta lacks {key}",
                        entry.rule.rule_id
                    );
                }
                let y1 = solve_input(&base).expect("base solvable");
                let y2 = solve_input(&transformed.input).expect("transformed solvable");
                let verdict =
                    check_pair(&entry.rule, &y1, &y2, &transformed.meta).expect("checkable");
                assert_eq!(
                    verdict.status,
                    VerdictStatus::Pass,
                    "{}: seed {seed} broke the square",
                    entry.rule.rule_id
                );
                passes += 1;
            }
            assert!(passes >= 15, "{}: too many resamples", entry.rule.rule_id);
        }
    }
}
