//! Tree path finding: endpoint swaps and endpoint retraction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenError, TaskError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInput {
    pub nodes: Vec<u32>,
    /// Undirected tree edges over `nodes`.
    pub edges: Vec<(u32, u32)>,
    pub start: u32,
    pub end: u32,
}

/// Breadth-first path from start to end. On a tree the path is unique; BFS
/// expands neighbors in sorted order so the search itself is deterministic
/// on any graph.
pub fn find_path(input: &GraphInput) -> Result<Vec<u32>, TaskError> {
    let mut adjacency: std::collections::BTreeMap<u32, Vec<u32>> = std::collections::BTreeMap::new();
    for &n in &input.nodes {
        adjacency.entry(n).or_default();
    }
    for &(a, b) in &input.edges {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    for neighbors in adjacency.values_mut() {
        neighbors.sort_unstable();
    }

    let mut parent: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([input.start]);
    parent.insert(input.start, input.start);
    while let Some(node) = queue.pop_front() {
        if node == input.end {
            let mut path = vec![node];
            let mut cur = node;
            while cur != input.start {
                cur = parent[&cur];
                path.push(cur);
            }
            path.reverse();
            return Ok(path);
        }
        for &next in adjacency.get(&node).into_iter().flatten() {
            parent.entry(next).or_insert_with(|| {
                queue.push_back(next);
                node
            });
        }
    }
    Err(TaskError::NoPath { start: input.start, end: input.end })
}

/// Swap the endpoints; the unique tree path reverses.
pub fn transform_swap_endpoints(input: &GraphInput) -> GraphInput {
    GraphInput {
        nodes: input.nodes.clone(),
        edges: input.edges.clone(),
        start: input.end,
        end: input.start,
    }
}

pub fn relate_reversed_path(y1: &[u32], y2: &[u32]) -> bool {
    let mut reversed = y1.to_vec();
    reversed.reverse();
    y2 == reversed
}

/// Move the end one hop back along the path. Paths of length two or less
/// would collapse onto the start, so they are a precondition failure.
pub fn transform_retract_endpoint(input: &GraphInput) -> Result<GraphInput, GenError> {
    let path = find_path(input).map_err(|_| GenError::Precondition {
        rule: "b4.2",
        constraint: "connected endpoints",
    })?;
    if path.len() <= 2 {
        return Err(GenError::Precondition {
            rule: "b4.2",
            constraint: "a base path of at least three nodes",
        });
    }
    Ok(GraphInput {
        nodes: input.nodes.clone(),
        edges: input.edges.clone(),
        start: input.start,
        end: path[path.len() - 2],
    })
}

pub fn relate_truncated_path(y1: &[u32], y2: &[u32]) -> bool {
    y1.len() >= 2 && y2 == &y1[..y1.len() - 1]
}

pub fn user_text(input: &GraphInput) -> String {
    let nodes = input.nodes.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
    let edges = input
        .edges
        .iter()
        .map(|(a, b)| format!("[{a}, {b}]"))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "The tree: {{nodes: [{nodes}], edges: [{edges}]}}\nThe start node: {}\nThe end node: {}",
        input.start, input.end
    )
}

pub fn parse_user_text(text: &str) -> Result<GraphInput, TaskError> {
    let malformed =
        |detail: String| TaskError::Malformed { what: "graph prompt", detail };
    let rest = text
        .trim()
        .strip_prefix("The tree: {nodes: [")
        .ok_or_else(|| malformed("missing tree block".to_string()))?;
    let (nodes_raw, rest) = rest
        .split_once("], edges: [")
        .ok_or_else(|| malformed("missing edges block".to_string()))?;
    let (edges_raw, rest) = rest
        .split_once("]}")
        .ok_or_else(|| malformed("unterminated tree block".to_string()))?;
    let parse_u32 = |s: &str| {
        s.trim().parse::<u32>().map_err(|_| malformed(format!("bad node {s:?}")))
    };
    let nodes = nodes_raw
        .split(", ")
        .map(parse_u32)
        .collect::<Result<Vec<_>, _>>()?;
    let mut edges = Vec::new();
    let mut remaining = edges_raw;
    while let Some(open) = remaining.find('[') {
        let close = remaining[open..]
            .find(']')
            .ok_or_else(|| malformed("unterminated edge".to_string()))?;
        let (a, b) = remaining[open + 1..open + close]
            .split_once(',')
            .ok_or_else(|| malformed("edge without two nodes".to_string()))?;
        edges.push((parse_u32(a)?, parse_u32(b)?));
        remaining = &remaining[open + close + 1..];
    }
    let start_line = |tag: &str| -> Result<u32, TaskError> {
        let at = rest
            .find(tag)
            .ok_or_else(|| malformed(format!("missing {tag:?}")))?;
        let tail = rest[at + tag.len()..].trim_start();
        let digits: String = tail.chars().take_while(char::is_ascii_digit).collect();
        parse_u32(&digits)
    };
    Ok(GraphInput {
        nodes,
        edges,
        start: start_line("The start node:")?,
        end: start_line("The end node:")?,
    })
}

/// Sample a random labeled tree with distinct endpoints.
pub fn sample_base(rng: &mut ChaCha8Rng) -> GraphInput {
    let n = rng.gen_range(6..=10u32);
    // Random attachment builds the shape; a label shuffle hides the order.
    let mut labels: Vec<u32> = (0..n).collect();
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let mut edges = Vec::with_capacity(n as usize - 1);
    for i in 1..n as usize {
        let parent = rng.gen_range(0..i);
        let (a, b) = (labels[parent], labels[i]);
        if rng.gen_bool(0.5) {
            edges.push((a, b));
        } else {
            edges.push((b, a));
        }
    }
    for i in (1..edges.len()).rev() {
        edges.swap(i, rng.gen_range(0..=i));
    }
    let start = rng.gen_range(0..n);
    let end = loop {
        let candidate = rng.gen_range(0..n);
        if candidate != start {
            break candidate;
        }
    };
    GraphInput { nodes: (0..n).collect(), edges, start, end }
}
