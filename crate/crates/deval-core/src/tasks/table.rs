//! Table question answering: structural edits that leave cell lookups alone.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TaskError;

pub const FARE_HEADER: &str = "Fare";
pub const FARE_VALUE: &str = "$100";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableInput {
    pub header: Vec<String>,
    /// Rectangular: every row has `header.len()` cells.
    pub rows: Vec<Vec<String>>,
    pub question: String,
}

/// Insert a constant "Fare" column at a random position (0..=width).
pub fn transform_add_fare_column(input: &TableInput, rng: &mut ChaCha8Rng) -> TableInput {
    let at = rng.gen_range(0..=input.header.len());
    let mut header = input.header.clone();
    header.insert(at, FARE_HEADER.to_string());
    let rows = input
        .rows
        .iter()
        .map(|row| {
            let mut row = row.clone();
            row.insert(at, FARE_VALUE.to_string());
            row
        })
        .collect();
    TableInput { header, rows, question: input.question.clone() }
}

/// Reverse the column order of the header and every row.
pub fn transform_reverse_columns(input: &TableInput) -> TableInput {
    let mut header = input.header.clone();
    header.reverse();
    let rows = input
        .rows
        .iter()
        .map(|row| {
            let mut row = row.clone();
            row.reverse();
            row
        })
        .collect();
    TableInput { header, rows, question: input.question.clone() }
}

/// Question first, then the table in brace form, one row list per line.
pub fn user_text(input: &TableInput) -> String {
    let mut out = format!(
        "Question: {}\nTable: {{header: [{}], rows: [",
        input.question,
        input.header.join(", ")
    );
    for (i, row) in input.rows.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("[{}]", row.join(", ")));
    }
    out.push_str("]}");
    out
}

pub fn parse_user_text(text: &str) -> Result<TableInput, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "table prompt", detail };
    let rest = text
        .trim()
        .strip_prefix("Question: ")
        .ok_or_else(|| malformed("missing question".to_string()))?;
    let (question, table) = rest
        .split_once("\nTable: {header: [")
        .ok_or_else(|| malformed("missing table block".to_string()))?;
    let (header_raw, rows_raw) = table
        .split_once("], rows: [")
        .ok_or_else(|| malformed("missing rows block".to_string()))?;
    let rows_raw = rows_raw
        .strip_suffix("]}")
        .ok_or_else(|| malformed("unterminated table".to_string()))?;
    let header: Vec<String> = header_raw.split(", ").map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut remaining = rows_raw;
    while let Some(open) = remaining.find('[') {
        let close = remaining[open..]
            .find(']')
            .ok_or_else(|| malformed("unterminated row".to_string()))?;
        let cells = &remaining[open + 1..open + close];
        rows.push(cells.split(", ").map(str::to_string).collect::<Vec<String>>());
        remaining = &remaining[open + close + 1..];
    }
    if rows.iter().any(|r: &Vec<String>| r.len() != header.len()) {
        return Err(malformed("ragged rows".to_string()));
    }
    Ok(TableInput { header, rows, question: question.to_string() })
}

/// Ground truth: parse the lookup question, find the row by key, return the
/// addressed cell.
pub fn solve(input: &TableInput) -> Result<String, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "table question", detail };
    let q = &input.question;
    let take_quoted = |from: &str| -> Option<(String, usize)> {
        let start = from.find('\'')?;
        let end = from[start + 1..].find('\'')?;
        Some((from[start + 1..start + 1 + end].to_string(), start + 1 + end + 1))
    };
    let rest = q
        .strip_prefix("What is the value in the ")
        .ok_or_else(|| malformed(format!("unrecognized question {q:?}")))?;
    let (col, used) =
        take_quoted(rest).ok_or_else(|| malformed("missing column name".to_string()))?;
    let rest = &rest[used..];
    let rest = rest
        .strip_prefix(" column for the row where ")
        .ok_or_else(|| malformed("missing row clause".to_string()))?;
    let (key_col, used) =
        take_quoted(rest).ok_or_else(|| malformed("missing key column".to_string()))?;
    let rest = &rest[used..];
    let (key_val, _) = take_quoted(rest.strip_prefix(" is ").unwrap_or(rest))
        .ok_or_else(|| malformed("missing key value".to_string()))?;

    let col_idx = input
        .header
        .iter()
        .position(|h| *h == col)
        .ok_or_else(|| TaskError::Unsolvable(format!("no column {col:?}")))?;
    let key_idx = input
        .header
        .iter()
        .position(|h| *h == key_col)
        .ok_or_else(|| TaskError::Unsolvable(format!("no column {key_col:?}")))?;
    let row = input
        .rows
        .iter()
        .find(|r| r[key_idx] == key_val)
        .ok_or_else(|| TaskError::Unsolvable(format!("no row with {key_col}={key_val}")))?;
    Ok(row[col_idx].clone())
}

const NATIONS: [&str; 10] = [
    "Cuba", "Chile", "Norway", "Kenya", "Japan", "Brazil", "Canada", "Poland", "Ghana",
    "Austria",
];

/// Sample a small medal table and a cell-lookup question about it.
pub fn sample_base(rng: &mut ChaCha8Rng) -> TableInput {
    let header: Vec<String> =
        ["Rank", "Nation", "Gold", "Silver", "Total"].map(str::to_string).to_vec();
    let mut pool = NATIONS.to_vec();
    for i in (1..pool.len()).rev() {
        pool.swap(i, rng.gen_range(0..=i));
    }
    let row_count = rng.gen_range(3..=6);
    let mut rows = Vec::with_capacity(row_count);
    for rank in 0..row_count {
        let gold = rng.gen_range(0..=9u32);
        let silver = rng.gen_range(0..=9u32);
        rows.push(vec![
            (rank + 1).to_string(),
            pool[rank].to_string(),
            gold.to_string(),
            silver.to_string(),
            (gold + silver).to_string(),
        ]);
    }
    let target_row = rng.gen_range(0..row_count);
    let target_col = ["Rank", "Gold", "Silver", "Total"][rng.gen_range(0..4)];
    let question = format!(
        "What is the value in the '{target_col}' column for the row where 'Nation' is '{}'?",
        rows[target_row][1]
    );
    TableInput { header, rows, question }
}
