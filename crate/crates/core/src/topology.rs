//! Undirected communication graphs and the indexing of pairwise constraints.
//!
//! Every unordered edge `{i, j}` carries two directed constraints, `(i, j)` and
//! `(j, i)`, each with its own dual slot. Slots are laid out lexicographically
//! by `(i, j)`, so node `i` owns the contiguous block of slots for its sorted
//! neighbor list.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Unordered edges stored as `(lo, hi)`, sorted.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered edges. Duplicates (in either orientation)
    /// are merged; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::config(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::config(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges: normalized, neighbors })
    }

    /// G(n, p): each unordered pair is included independently with probability `p`,
    /// pairs visited in lexicographic order under a ChaCha8 stream seeded by `seed`.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("Erdos-Renyi graph needs n >= 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("edge probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed constraints (dual slots), `2 |E|`.
    pub fn constraint_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        i < self.n && self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    visited += 1;
                    queue.push_back(v);
                }
            }
        }
        visited == self.n
    }

    /// Edge-list text: a header line `n m` (m = directed constraint count),
    /// then one `i j` line per unordered edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.constraint_count());
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line_no, header) = lines.next().ok_or_else(|| Error::parse(1, "empty edge list"))?;
        let (n, m) = parse_pair(line_no, header)?;
        let mut edges = Vec::new();
        for (line_no, line) in lines {
            edges.push(parse_pair(line_no, line)?);
        }
        if 2 * edges.len() != m {
            return Err(Error::parse(
                line_no,
                format!("header declares m = {m} but {} edges follow", edges.len()),
            ));
        }
        let graph = Self::from_edges(n, edges)?;
        if graph.constraint_count() != m {
            return Err(Error::parse(line_no, "duplicate edges in edge list"));
        }
        Ok(graph)
    }
}

fn parse_pair(line_no: usize, line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let mut next = || -> Result<usize> {
        parts
            .next()
            .ok_or_else(|| Error::parse(line_no, "expected two integers"))?
            .parse()
            .map_err(|e| Error::parse(line_no, format!("{e}")))
    };
    let a = next()?;
    let b = next()?;
    if parts.next().is_some() {
        return Err(Error::parse(line_no, "trailing tokens"));
    }
    Ok((a, b))
}

/// Bijection between ordered neighbor pairs `(i, j)` and dual slots `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintIndex {
    /// `offsets[i]..offsets[i + 1]` are the slots owned by node `i`.
    offsets: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    mirror: Vec<usize>,
}

impl ConstraintIndex {
    pub fn new(graph: &Graph) -> Self {
        let mut offsets = Vec::with_capacity(graph.node_count() + 1);
        let mut pairs = Vec::with_capacity(graph.constraint_count());
        for i in 0..graph.node_count() {
            offsets.push(pairs.len());
            pairs.extend(graph.neighbors(i).iter().map(|&j| (i, j)));
        }
        offsets.push(pairs.len());

        let mut index = Self { offsets, pairs, mirror: Vec::new() };
        index.mirror = (0..index.pairs.len())
            .map(|s| {
                let (i, j) = index.pairs[s];
                index.find(graph, j, i).expect("undirected graph has both orientations")
            })
            .collect();
        index
    }

    fn find(&self, graph: &Graph, i: usize, j: usize) -> Option<usize> {
        if i >= graph.node_count() {
            return None;
        }
        graph.neighbors(i).binary_search(&j).ok().map(|pos| self.offsets[i] + pos)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Slot of the directed constraint `(i, j)`.
    pub fn slot(&self, graph: &Graph, i: usize, j: usize) -> Result<usize> {
        self.find(graph, i, j).ok_or(Error::MissingConstraint { i, j })
    }

    pub fn pair(&self, slot: usize) -> (usize, usize) {
        self.pairs[slot]
    }

    /// Slot of the reversed constraint `(j, i)`.
    pub fn mirror(&self, slot: usize) -> usize {
        self.mirror[slot]
    }

    /// Contiguous slot range for node `i`, aligned with `graph.neighbors(i)`.
    pub fn node_slots(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Iterates `(slot, (i, j))` in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        self.pairs.iter().copied().enumerate()
    }
}
