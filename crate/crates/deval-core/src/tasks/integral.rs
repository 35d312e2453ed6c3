//! Symbolic integrals evaluated at a point: appending a term shifts the
//! result by a known integer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenError, TaskError};

/// Term basis: `e^x` or an integer power `x^n` with `n` in 0..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Exp,
    Power(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub coef: i64,
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralInput {
    pub terms: Vec<Term>,
    /// Point the antiderivative is evaluated at; 4 throughout the suite.
    pub eval_point: i64,
}

pub const DEFAULT_EVAL_POINT: i64 = 4;

// Denominators of power antiderivatives are n+1 in 1..=5; 60 clears them all.
const COMMON_DEN: i128 = 60;

/// Antiderivative of the term sum (integration constant zero) evaluated at
/// `eval_point` and rounded down. The power part is computed as an exact
/// rational; only an exponential term brings floating point in, far from any
/// integer boundary for the magnitudes the suite generates.
pub fn reference_integral(input: &IntegralInput) -> Result<i64, TaskError> {
    if input.terms.is_empty() {
        return Err(TaskError::Malformed {
            what: "integral input",
            detail: "no terms".to_string(),
        });
    }
    let p = input.eval_point;
    let mut exp_coef: i64 = 0;
    let mut rational_num: i128 = 0; // over COMMON_DEN
    for term in &input.terms {
        match term.basis {
            Basis::Exp => exp_coef += term.coef,
            Basis::Power(n) => {
                if n > 4 {
                    return Err(TaskError::Malformed {
                        what: "integral term",
                        detail: format!("power {n} out of range"),
                    });
                }
                let n1 = i128::from(n) + 1;
                rational_num +=
                    i128::from(term.coef) * i128::from(p).pow(n as u32 + 1) * (COMMON_DEN / n1);
            }
        }
    }
    if exp_coef == 0 {
        return Ok(rational_num.div_euclid(COMMON_DEN) as i64);
    }
    let value = exp_coef as f64 * (p as f64).exp() + rational_num as f64 / COMMON_DEN as f64;
    Ok(value.floor() as i64)
}

/// Exact integer antiderivative value of one term at `p`, if it is one.
fn integer_shift(term: Term, p: i64) -> Option<i64> {
    match term.basis {
        Basis::Exp => None,
        Basis::Power(n) => {
            let n1 = i128::from(n) + 1;
            let num = i128::from(term.coef) * i128::from(p).pow(n as u32 + 1);
            (num % n1 == 0).then(|| (num / n1) as i64)
        }
    }
}

/// Append one term whose antiderivative at the eval point is an exact
/// integer delta; returns the extended input and that delta.
pub fn transform_add_term(
    input: &IntegralInput,
    rng: &mut ChaCha8Rng,
) -> Result<(IntegralInput, i64), GenError> {
    // Families with integer shifts at x=4: any c for n in {0,1,3}; multiples
    // of 3 for n=2; multiples of 5 for n=4. Exponentials never qualify.
    let candidates: Vec<Term> = [
        Term { coef: rng.gen_range(1..=3), basis: Basis::Power(0) },
        Term { coef: rng.gen_range(1..=3), basis: Basis::Power(1) },
        Term { coef: 3 * rng.gen_range(1..=3), basis: Basis::Power(2) },
        Term { coef: rng.gen_range(1..=3), basis: Basis::Power(3) },
        Term { coef: 5, basis: Basis::Power(4) },
    ]
    .into_iter()
    .filter(|t| !input.terms.iter().any(|have| have.basis == t.basis))
    .filter(|t| integer_shift(*t, input.eval_point).is_some())
    .collect();
    if candidates.is_empty() {
        return Err(GenError::Precondition {
            rule: "math.1",
            constraint: "an unused term family with an integer shift",
        });
    }
    let term = candidates[rng.gen_range(0..candidates.len())];
    let delta = integer_shift(term, input.eval_point).expect("filtered for integer shift");
    let mut terms = input.terms.clone();
    terms.push(term);
    Ok((IntegralInput { terms, eval_point: input.eval_point }, delta))
}

/// With an appended term of known integer shift, the answers differ by
/// exactly that shift.
pub fn relate_shifted_integral(y1: i64, y2: i64, delta: i64) -> bool {
    i128::from(y2) - i128::from(y1) == i128::from(delta)
}

fn term_text(term: Term) -> String {
    let mag = term.coef.unsigned_abs();
    let coef_prefix = if mag == 1 { String::new() } else { mag.to_string() };
    match term.basis {
        Basis::Exp => format!("{coef_prefix}e^x"),
        Basis::Power(0) => mag.to_string(),
        Basis::Power(1) => format!("{coef_prefix}x"),
        Basis::Power(n) => format!("{coef_prefix}x^{n}"),
    }
}

/// Render the term sum, e.g. "e^x+x" or "3x^2+2x+7".
pub fn function_text(input: &IntegralInput) -> String {
    let mut out = String::new();
    for (i, term) in input.terms.iter().enumerate() {
        if term.coef < 0 {
            out.push('-');
        } else if i > 0 {
            out.push('+');
        }
        out.push_str(&term_text(*term));
    }
    out
}

pub fn user_text(input: &IntegralInput) -> String {
    format!("The function is: {}.", function_text(input))
}

pub fn parse_user_text(text: &str) -> Result<IntegralInput, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "integral prompt", detail };
    let body = text
        .trim()
        .strip_prefix("The function is: ")
        .and_then(|rest| rest.strip_suffix('.'))
        .ok_or_else(|| malformed("missing function sentence".to_string()))?;
    let mut terms = Vec::new();
    let mut rest = body;
    let mut sign = 1i64;
    if let Some(stripped) = rest.strip_prefix('-') {
        sign = -1;
        rest = stripped;
    }
    loop {
        let split = rest.find(['+', '-']);
        let (token, remaining) = match split {
            Some(at) => (&rest[..at], Some((rest.as_bytes()[at], &rest[at + 1..]))),
            None => (rest, None),
        };
        terms.push(parse_term(token.trim(), sign).ok_or_else(|| {
            malformed(format!("unrecognized term {token:?}"))
        })?);
        match remaining {
            Some((op, tail)) => {
                sign = if op == b'-' { -1 } else { 1 };
                rest = tail;
            }
            None => break,
        }
    }
    Ok(IntegralInput { terms, eval_point: DEFAULT_EVAL_POINT })
}

fn parse_term(token: &str, sign: i64) -> Option<Term> {
    if token.is_empty() {
        return None;
    }
    let digits: String = token.chars().take_while(char::is_ascii_digit).collect();
    let rest = &token[digits.len()..];
    let coef: i64 = if digits.is_empty() { 1 } else { digits.parse().ok()? };
    let basis = match rest {
        "e^x" => Basis::Exp,
        "" if !digits.is_empty() => Basis::Power(0),
        "x" => Basis::Power(1),
        _ => {
            let n: u8 = rest.strip_prefix("x^")?.parse().ok()?;
            if n > 4 {
                return None;
            }
            Basis::Power(n)
        }
    };
    Some(Term { coef: sign * coef, basis })
}

/// Sample a one-to-three term function (optionally exponential, then powers
/// in descending degree).
pub fn sample_base(rng: &mut ChaCha8Rng) -> IntegralInput {
    let mut terms = Vec::new();
    if rng.gen_bool(0.5) {
        terms.push(Term { coef: rng.gen_range(1..=3), basis: Basis::Exp });
    }
    let power_count = if terms.is_empty() { rng.gen_range(1..=2) } else { rng.gen_range(0..=2) };
    let mut degrees: Vec<u8> = (0..=4).collect();
    for i in (1..degrees.len()).rev() {
        degrees.swap(i, rng.gen_range(0..=i));
    }
    let mut chosen: Vec<u8> = degrees[..power_count].to_vec();
    chosen.sort_unstable_by(|a, b| b.cmp(a));
    for n in chosen {
        terms.push(Term { coef: rng.gen_range(1..=5), basis: Basis::Power(n) });
    }
    IntegralInput { terms, eval_point: DEFAULT_EVAL_POINT }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn exp_only() -> IntegralInput {
        IntegralInput { terms: vec![Term { coef: 1, basis: Basis::Exp }], eval_point: 4 }
    }

    #[test]
    fn reference_values() {
        assert_eq!(reference_integral(&exp_only()).unwrap(), 54);

        let exp_plus_x = IntegralInput {
            terms: vec![
                Term { coef: 1, basis: Basis::Exp },
                Term { coef: 1, basis: Basis::Power(1) },
            ],
            eval_point: 4,
        };
        assert_eq!(reference_integral(&exp_plus_x).unwrap(), 62);

        let quadratic = IntegralInput {
            terms: vec![Term { coef: 3, basis: Basis::Power(2) }],
            eval_point: 4,
        };
        assert_eq!(reference_integral(&quadratic).unwrap(), 64);
    }

    #[test]
    fn pure_power_inputs_stay_in_exact_arithmetic() {
        // x at 4 gives 8 exactly; x^2 gives 64/3, floored to 21.
        let linear = IntegralInput {
            terms: vec![Term { coef: 1, basis: Basis::Power(1) }],
            eval_point: 4,
        };
        assert_eq!(reference_integral(&linear).unwrap(), 8);
        let square = IntegralInput {
            terms: vec![Term { coef: 1, basis: Basis::Power(2) }],
            eval_point: 4,
        };
        assert_eq!(reference_integral(&square).unwrap(), 21);
    }

    #[test]
    fn added_terms_shift_by_their_recorded_delta() {
        for seed in 0..80u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = sample_base(&mut rng);
            let y1 = reference_integral(&base).unwrap();
            let (extended, delta) = transform_add_term(&base, &mut rng).unwrap();
            let y2 = reference_integral(&extended).unwrap();
            assert_eq!(y2 - y1, delta, "base {base:?} extended {extended:?}");
            assert!(relate_shifted_integral(y1, y2, delta));
            assert_eq!(extended.terms.len(), base.terms.len() + 1);
        }
    }

    #[test]
    fn renders_read_naturally_and_round_trip() {
        let exp_plus_x = IntegralInput {
            terms: vec![
                Term { coef: 1, basis: Basis::Exp },
                Term { coef: 1, basis: Basis::Power(1) },
            ],
            eval_point: 4,
        };
        assert_eq!(user_text(&exp_plus_x), "The function is: e^x+x.");
        assert_eq!(parse_user_text("The function is: e^x+x.").unwrap(), exp_plus_x);

        for seed in 0..60u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = sample_base(&mut rng);
            assert_eq!(parse_user_text(&user_text(&input)).unwrap(), input);
        }
    }

    #[test]
    fn empty_term_lists_are_rejected() {
        let empty = IntegralInput { terms: vec![], eval_point: 4 };
        assert!(reference_integral(&empty).is_err());
    }
}
