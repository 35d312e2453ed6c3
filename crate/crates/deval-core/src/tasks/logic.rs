//! Numbered-premise proofs: premise reversal and corollary introduction.
//!
//! Answers are premise indexes in the order a proof introduces them,
//! followed by the conclusion's index. The reference solver performs forward
//! chaining over a small proposition grammar (facts, "Every X is a Y"
//! implications, and "if P then Q" conditionals), which covers everything
//! the generators emit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenError, TaskError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicInput {
    /// Proposition texts without numbering or trailing period; prompt
    /// rendering adds "(i) ... ." around each.
    pub premises: Vec<String>,
    /// The proposition to prove, numbered `premises.len() + 1` at render time.
    pub conclusion: String,
}

const CATEGORIES: [&str; 16] = [
    "wumpus", "numpus", "dumpus", "rompus", "zumpus", "gorpus", "tumpus", "sterpus",
    "grimpus", "yumpus", "lempus", "brimpus", "vumpus", "lorpus", "shumpus", "jompus",
];

const NAMES: [&str; 10] =
    ["Rex", "Sam", "Polly", "Wren", "Max", "Stella", "Alex", "Taylor", "Fae", "Quinn"];

/// Present the premises in reverse textual order; the proof itself is
/// untouched, so the answer indexes must re-map.
pub fn transform_reverse_premises(input: &LogicInput) -> LogicInput {
    let mut premises = input.premises.clone();
    premises.reverse();
    LogicInput { premises, conclusion: input.conclusion.clone() }
}

/// After reversal of `n` premises, premise `r` sits at `n + 1 - r`. The
/// transformed proof lists the re-mapped indexes of the base proof's
/// premises in reverse, then the conclusion index `n + 1`.
pub fn relate_reversed_proof(y1: &[u32], y2: &[u32], n: u32) -> bool {
    let body = y1.split_last().map(|(_, body)| body).unwrap_or_default();
    let mut expected = Vec::with_capacity(body.len() + 1);
    for &r in body.iter().rev() {
        if r == 0 || r > n {
            return false;
        }
        expected.push(n + 1 - r);
    }
    expected.push(n + 1);
    y2 == expected
}

/// Insert "if <conclusion> then <new conclusion>" as premise 1, shifting the
/// originals to 2..n+1, and ask for the new conclusion at n+2.
pub fn transform_add_corollary(
    input: &LogicInput,
    rng: &mut ChaCha8Rng,
) -> Result<LogicInput, GenError> {
    let (name, _) = split_atom(&input.conclusion).ok_or(GenError::Precondition {
        rule: "b3.2",
        constraint: "an atomic conclusion to extend",
    })?;
    let fresh: Vec<&str> = CATEGORIES
        .iter()
        .copied()
        .filter(|cat| {
            !input.conclusion.contains(cat) && !input.premises.iter().any(|p| p.contains(cat))
        })
        .collect();
    if fresh.is_empty() {
        return Err(GenError::Precondition {
            rule: "b3.2",
            constraint: "an unused category for the corollary",
        });
    }
    let new_conclusion = format!("{name} is a {}", fresh[rng.gen_range(0..fresh.len())]);
    let mut premises = Vec::with_capacity(input.premises.len() + 1);
    premises.push(format!("if {} then {}", input.conclusion, new_conclusion));
    premises.extend(input.premises.iter().cloned());
    Ok(LogicInput { premises, conclusion: new_conclusion })
}

/// The corollary proof re-derives the old conclusion (indexes shifted up by
/// one), applies the inserted conditional (index 1), and lands on the new
/// conclusion index `n + 2`.
pub fn relate_corollary_proof(y1: &[u32], y2: &[u32], n: u32) -> bool {
    let body = y1.split_last().map(|(_, body)| body).unwrap_or_default();
    let mut expected: Vec<u32> = body.iter().map(|&r| r + 1).collect();
    expected.push(1);
    expected.push(n + 2);
    y2 == expected
}

pub fn user_text(input: &LogicInput) -> String {
    let mut out = String::from("Premises:");
    for (i, premise) in input.premises.iter().enumerate() {
        out.push_str(&format!("\n({}) {}.", i + 1, premise));
    }
    out.push_str(&format!(
        "\nProve: ({}) {}.",
        input.premises.len() + 1,
        input.conclusion
    ));
    out
}

pub fn parse_user_text(text: &str) -> Result<LogicInput, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "logic prompt", detail };
    let mut premises = Vec::new();
    let mut conclusion = None;
    let mut lines = text.trim().lines();
    if lines.next().map(str::trim) != Some("Premises:") {
        return Err(malformed("missing Premises: header".to_string()));
    }
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Prove:") {
            conclusion = Some(parse_numbered(rest.trim(), premises.len() + 1)?);
        } else {
            premises.push(parse_numbered(line, premises.len() + 1)?);
        }
    }
    let conclusion = conclusion.ok_or_else(|| malformed("missing Prove: line".to_string()))?;
    if premises.is_empty() {
        return Err(malformed("no premises".to_string()));
    }
    Ok(LogicInput { premises, conclusion })
}

fn parse_numbered(line: &str, expected_index: usize) -> Result<String, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "numbered proposition", detail };
    let rest = line
        .strip_prefix('(')
        .ok_or_else(|| malformed(format!("no index in {line:?}")))?;
    let (index, body) = rest
        .split_once(") ")
        .ok_or_else(|| malformed(format!("no index in {line:?}")))?;
    let index: usize =
        index.parse().map_err(|_| malformed(format!("bad index in {line:?}")))?;
    if index != expected_index {
        return Err(malformed(format!("index {index} where {expected_index} expected")));
    }
    let body = body
        .strip_suffix('.')
        .ok_or_else(|| malformed(format!("missing final period in {line:?}")))?;
    Ok(body.to_string())
}

// ---------------------------------------------------------------------------
// Reference solver
// ---------------------------------------------------------------------------

enum Statement {
    /// "<name> is a <cat>" or "<name> is a <cat> and a <cat>".
    Fact { name: String, cats: Vec<String> },
    /// "Every <cat> is a <cat>".
    Implication { from: String, to: String },
    /// "if <atom> then <atom>".
    Conditional { lhs: (String, String), rhs: (String, String) },
}

fn split_atom(prop: &str) -> Option<(&str, &str)> {
    let (name, cat) = prop.split_once(" is a ")?;
    if cat.contains(" and a ") || cat.contains(' ') {
        return None;
    }
    Some((name, cat))
}

fn parse_statement(prop: &str) -> Result<Statement, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "proposition", detail };
    if let Some(rest) = prop.strip_prefix("if ") {
        let (lhs, rhs) = rest
            .split_once(" then ")
            .ok_or_else(|| malformed(format!("conditional without then: {prop:?}")))?;
        let lhs = split_atom(lhs)
            .ok_or_else(|| malformed(format!("non-atomic antecedent: {lhs:?}")))?;
        let rhs = split_atom(rhs)
            .ok_or_else(|| malformed(format!("non-atomic consequent: {rhs:?}")))?;
        return Ok(Statement::Conditional {
            lhs: (lhs.0.to_string(), lhs.1.to_string()),
            rhs: (rhs.0.to_string(), rhs.1.to_string()),
        });
    }
    if let Some(rest) = prop.strip_prefix("Every ") {
        let (from, to) = rest
            .split_once(" is a ")
            .ok_or_else(|| malformed(format!("bad implication: {prop:?}")))?;
        return Ok(Statement::Implication { from: from.to_string(), to: to.to_string() });
    }
    if let Some((name, rest)) = prop.split_once(" is a ") {
        let cats = rest.split(" and a ").map(str::to_string).collect();
        return Ok(Statement::Fact { name: name.to_string(), cats });
    }
    Err(malformed(format!("unrecognized proposition: {prop:?}")))
}

/// Forward-chain to the conclusion; returns premise indexes in introduction
/// order with the conclusion index appended.
///
/// Breadth-first search expands atoms in premise order, so among proofs of
/// equal length the one using earlier premises wins, deterministically. The
/// generators construct problems with a unique proof, making this exact.
pub fn solve(input: &LogicInput) -> Result<Vec<u32>, TaskError> {
    let statements: Vec<Statement> = input
        .premises
        .iter()
        .map(|p| parse_statement(p))
        .collect::<Result<_, _>>()?;
    let goal = split_atom(&input.conclusion).ok_or_else(|| TaskError::Malformed {
        what: "conclusion",
        detail: format!("not atomic: {:?}", input.conclusion),
    })?;
    let goal = (goal.0.to_string(), goal.1.to_string());
    let conclusion_index = input.premises.len() as u32 + 1;

    // BFS over derived atoms (name, category); each carries the premise
    // indexes used to reach it, in introduction order.
    let mut frontier: Vec<((String, String), Vec<u32>)> = Vec::new();
    let mut seen: Vec<(String, String)> = Vec::new();
    for (i, s) in statements.iter().enumerate() {
        if let Statement::Fact { name, cats } = s {
            for cat in cats {
                let atom = (name.clone(), cat.clone());
                if !seen.contains(&atom) {
                    seen.push(atom.clone());
                    frontier.push((atom, vec![i as u32 + 1]));
                }
            }
        }
    }
    let mut cursor = 0;
    while cursor < frontier.len() {
        let (atom, path) = frontier[cursor].clone();
        cursor += 1;
        if atom == goal {
            let mut answer = path;
            answer.push(conclusion_index);
            return Ok(answer);
        }
        for (i, s) in statements.iter().enumerate() {
            let next = match s {
                Statement::Implication { from, to } if *from == atom.1 => {
                    Some((atom.0.clone(), to.clone()))
                }
                Statement::Conditional { lhs, rhs } if *lhs == atom => Some(rhs.clone()),
                _ => None,
            };
            if let Some(next) = next {
                if !seen.contains(&next) {
                    seen.push(next.clone());
                    let mut next_path = path.clone();
                    next_path.push(i as u32 + 1);
                    frontier.push((next, next_path));
                }
            }
        }
    }
    Err(TaskError::Unsolvable(format!("no proof of {:?}", input.conclusion)))
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

fn shuffled_categories(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut cats = CATEGORIES.to_vec();
    for i in (1..cats.len()).rev() {
        cats.swap(i, rng.gen_range(0..=i));
    }
    cats
}

fn insert_shuffled(
    rng: &mut ChaCha8Rng,
    proof_premises: Vec<String>,
    distractors: Vec<String>,
) -> Vec<String> {
    let mut premises = proof_premises;
    for d in distractors {
        let at = rng.gen_range(0..=premises.len());
        premises.insert(at, d);
    }
    premises
}

fn sample_distractors(
    rng: &mut ChaCha8Rng,
    count: usize,
    cats: &[&str],
    main_name: &str,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    for chunk in 0..count {
        // Alternate distractor shapes; categories come from a pool disjoint
        // from the proof's, so no alternative derivation can appear.
        let a = cats[(2 * chunk) % cats.len()];
        let b = cats[(2 * chunk + 1) % cats.len()];
        if rng.gen_bool(0.5) {
            out.push(format!("Every {a} is a {b}"));
        } else {
            let names: Vec<&str> =
                NAMES.iter().copied().filter(|n| *n != main_name).collect();
            let name = names[rng.gen_range(0..names.len())];
            out.push(format!("{name} is a {a}"));
        }
    }
    out
}

/// A problem whose proof uses a single premise: a conjunctive fact whose
/// conjunct is the conclusion. Both index-order conventions for the reversal
/// relation coincide on single-premise proofs.
pub fn sample_single_step(rng: &mut ChaCha8Rng) -> LogicInput {
    let name = NAMES[rng.gen_range(0..NAMES.len())];
    let cats = shuffled_categories(rng);
    let (c1, c2) = (cats[0], cats[1]);
    let goal_cat = if rng.gen_bool(0.5) { c1 } else { c2 };
    let fact = format!("{name} is a {c1} and a {c2}");
    let distractor_count = rng.gen_range(2..=5);
    let distractors = sample_distractors(rng, distractor_count, &cats[2..], name);
    let premises = insert_shuffled(rng, vec![fact], distractors);
    LogicInput { premises, conclusion: format!("{name} is a {goal_cat}") }
}

/// A problem solved by a fact plus a chain of implications.
pub fn sample_chain(rng: &mut ChaCha8Rng) -> LogicInput {
    let name = NAMES[rng.gen_range(0..NAMES.len())];
    let cats = shuffled_categories(rng);
    let links = rng.gen_range(1..=3usize);
    let chain = &cats[..links + 1];
    let mut proof = vec![format!("{name} is a {}", chain[0])];
    for window in chain.windows(2) {
        proof.push(format!("Every {} is a {}", window[0], window[1]));
    }
    let distractor_count = rng.gen_range(1..=3);
    let distractors = sample_distractors(rng, distractor_count, &cats[links + 1..], name);
    let premises = insert_shuffled(rng, proof, distractors);
    LogicInput { premises, conclusion: format!("{name} is a {}", chain[links]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn four_premise_input() -> LogicInput {
        LogicInput {
            premises: vec![
                "Every gorpus is a lempus".to_string(),
                "Every lempus is a dumpus".to_string(),
                "Every dumpus is a rompus".to_string(),
                "Rex is a sterpus and a zumpus".to_string(),
            ],
            conclusion: "Rex is a zumpus".to_string(),
        }
    }

    #[test]
    fn solver_uses_the_conjunctive_fact() {
        assert_eq!(solve(&four_premise_input()).unwrap(), vec![4, 5]);
    }

    #[test]
    fn reversal_remaps_single_premise_proofs() {
        // Base proof (4, 5) over four premises becomes (1, 5).
        assert!(relate_reversed_proof(&[4, 5], &[1, 5], 4));
        assert!(!relate_reversed_proof(&[4, 5], &[4, 5], 4));
        // A conclusion-only proof is inert under reversal.
        assert!(relate_reversed_proof(&[5], &[5], 4));
    }

    #[test]
    fn reversal_transform_closes_with_the_solver() {
        let base = four_premise_input();
        let y1 = solve(&base).unwrap();
        let reversed = transform_reverse_premises(&base);
        let y2 = solve(&reversed).unwrap();
        assert_eq!(y2, vec![1, 5]);
        assert!(relate_reversed_proof(&y1, &y2, base.premises.len() as u32));
    }

    #[test]
    fn corollary_shifts_reuses_and_concludes() {
        // Base proof (2, 5) over four premises becomes (3, 1, 6).
        assert!(relate_corollary_proof(&[2, 5], &[3, 1, 6], 4));
        assert!(!relate_corollary_proof(&[2, 5], &[3, 6], 4));
    }

    #[test]
    fn corollary_transform_closes_with_the_solver() {
        let base = LogicInput {
            premises: vec![
                "Every vumpus is a lorpus".to_string(),
                "Sam is a wumpus".to_string(),
                "Every wumpus is a grimpus".to_string(),
            ],
            conclusion: "Sam is a grimpus".to_string(),
        };
        let y1 = solve(&base).unwrap();
        assert_eq!(y1, vec![2, 3, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let extended = transform_add_corollary(&base, &mut rng).unwrap();
        assert!(extended.premises[0].starts_with("if Sam is a grimpus then "));
        assert_eq!(extended.premises.len(), 4);
        let y2 = solve(&extended).unwrap();
        assert_eq!(y2, vec![3, 4, 1, 5]);
        assert!(relate_corollary_proof(&y1, &y2, base.premises.len() as u32));
    }

    #[test]
    fn prompt_round_trips_through_text() {
        let input = four_premise_input();
        let text = user_text(&input);
        assert!(text.starts_with("Premises:\n(1) Every gorpus is a lempus."));
        assert!(text.ends_with("Prove: (5) Rex is a zumpus."));
        assert_eq!(parse_user_text(&text).unwrap(), input);
    }

    #[test]
    fn generators_produce_unique_deterministic_proofs() {
        for seed in 0..60u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let single = sample_single_step(&mut rng);
            let proof = solve(&single).unwrap();
            assert_eq!(proof.len(), 2, "single-step proof uses one premise");

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sample_single_step(&mut rng), single);

            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let chain = sample_chain(&mut rng);
            let proof = solve(&chain).unwrap();
            assert!(proof.len() >= 3, "chain proof uses a fact and implications");
        }
    }
}
