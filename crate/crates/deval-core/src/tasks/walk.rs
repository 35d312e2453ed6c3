//! Walks on a 20-position circle: direction reversal mirrors the endpoint
//! around the start.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TaskError;

pub const CIRCLE: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

impl Direction {
    pub fn reversed(self) -> Direction {
        match self {
            Direction::Clockwise => Direction::Counterclockwise,
            Direction::Counterclockwise => Direction::Clockwise,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Clockwise => "clockwise",
            Direction::Counterclockwise => "counterclockwise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub direction: Direction,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkInput {
    /// Start position in 0..20.
    pub start: u8,
    pub moves: Vec<Move>,
}

/// Final position: signed step sum from the start, modulo 20.
pub fn simulate_walk(input: &WalkInput) -> u8 {
    let mut position = i64::from(input.start);
    for m in &input.moves {
        match m.direction {
            Direction::Clockwise => position += i64::from(m.steps),
            Direction::Counterclockwise => position -= i64::from(m.steps),
        }
    }
    position.rem_euclid(i64::from(CIRCLE)) as u8
}

/// Reverse every move's direction; step counts stay put.
pub fn transform_reverse_directions(input: &WalkInput) -> WalkInput {
    WalkInput {
        start: input.start,
        moves: input
            .moves
            .iter()
            .map(|m| Move { direction: m.direction.reversed(), steps: m.steps })
            .collect(),
    }
}

/// Reversed walks land symmetrically: y1 + y2 = 2 * start (mod 20).
pub fn relate_opposite_position(y1: u8, y2: u8, start: u8) -> bool {
    (u32::from(y1) + u32::from(y2)) % CIRCLE == (2 * u32::from(start)) % CIRCLE
}

pub fn user_text(input: &WalkInput) -> String {
    let moves = input
        .moves
        .iter()
        .map(|m| format!("{} {} steps", m.direction.as_str(), m.steps))
        .collect::<Vec<_>>()
        .join("; then ");
    format!("You start at position {}. Moves: {moves}.", input.start)
}

pub fn parse_user_text(text: &str) -> Result<WalkInput, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "walk prompt", detail };
    let rest = text
        .trim()
        .strip_prefix("You start at position ")
        .ok_or_else(|| malformed("missing start sentence".to_string()))?;
    let (start_raw, rest) = rest
        .split_once(". Moves: ")
        .ok_or_else(|| malformed("missing moves".to_string()))?;
    let start: u8 = start_raw
        .parse()
        .ok()
        .filter(|s| *s < CIRCLE as u8)
        .ok_or_else(|| malformed(format!("bad start {start_raw:?}")))?;
    let body = rest
        .strip_suffix('.')
        .ok_or_else(|| malformed("missing final period".to_string()))?;
    let mut moves = Vec::new();
    for part in body.split("; then ") {
        let (direction, steps_raw) = if let Some(r) = part.strip_prefix("counterclockwise ") {
            (Direction::Counterclockwise, r)
        } else if let Some(r) = part.strip_prefix("clockwise ") {
            (Direction::Clockwise, r)
        } else {
            return Err(malformed(format!("bad move {part:?}")));
        };
        let steps: u32 = steps_raw
            .strip_suffix(" steps")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(format!("bad steps in {part:?}")))?;
        moves.push(Move { direction, steps });
    }
    if moves.is_empty() {
        return Err(malformed("no moves".to_string()));
    }
    Ok(WalkInput { start, moves })
}

pub fn sample_base(rng: &mut ChaCha8Rng) -> WalkInput {
    let start = rng.gen_range(0..CIRCLE) as u8;
    let count = rng.gen_range(1..=4);
    let moves = (0..count)
        .map(|_| Move {
            direction: if rng.gen_bool(0.5) {
                Direction::Clockwise
            } else {
                Direction::Counterclockwise
            },
            steps: rng.gen_range(0..=30),
        })
        .collect();
    WalkInput { start, moves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn wrapping_covers_both_directions() {
        let cw = WalkInput {
            start: 0,
            moves: vec![Move { direction: Direction::Clockwise, steps: 25 }],
        };
        assert_eq!(simulate_walk(&cw), 5);
        let ccw = WalkInput {
            start: 3,
            moves: vec![Move { direction: Direction::Counterclockwise, steps: 7 }],
        };
        assert_eq!(simulate_walk(&ccw), 16);
    }

    #[test]
    fn reversal_mirrors_around_the_start() {
        let input = WalkInput {
            start: 7,
            moves: vec![
                Move { direction: Direction::Clockwise, steps: 3 },
                Move { direction: Direction::Counterclockwise, steps: 1 },
            ],
        };
        let y1 = simulate_walk(&input);
        let y2 = simulate_walk(&transform_reverse_directions(&input));
        assert_eq!(y1, 9);
        assert_eq!(y2, 5);
        assert!(relate_opposite_position(y1, y2, input.start));
        assert!(!relate_opposite_position(y1, y1, input.start));
    }

    #[test]
    fn relation_closes_over_random_walks() {
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = sample_base(&mut rng);
            let y1 = simulate_walk(&input);
            let y2 = simulate_walk(&transform_reverse_directions(&input));
            assert!(relate_opposite_position(y1, y2, input.start), "seed {seed}");
        }
    }

    #[test]
    fn prompt_round_trips_through_text() {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = sample_base(&mut rng);
            assert_eq!(parse_user_text(&user_text(&input)).unwrap(), input);
        }
    }

    #[test]
    fn reversal_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = sample_base(&mut rng);
        assert_eq!(transform_reverse_directions(&transform_reverse_directions(&input)), input);
    }
}
