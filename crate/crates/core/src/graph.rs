//! Immutable simple-graph representation with BFS shortest paths, the
//! average graph distance statistic, connectivity checks, and a plain-text
//! edge-list format.
//!
//! Vertices are dense ids `0..n`; adjacency is stored CSR-style with sorted
//! neighbor lists so the graph can be shared freely across threads.

use rand::Rng;
use rayon::prelude::*;
use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    VertexOutOfRange { vertex: u32, n: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(u32),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("graph has no connected pairs")]
    NoConnectedPairs,
    #[error("operation requires at least {required} vertices, graph has {n}")]
    TooFewVertices { required: usize, n: usize },
    #[error("subset must be nonempty")]
    EmptySubset,
    #[error("pair sample size must be positive")]
    EmptyPairSample,
}

/// Errors from parsing the edge-list format, each tagged with the 1-based
/// line where it occurred.
#[derive(Debug, Error)]
pub enum EdgeListError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed header (expected \"n m\")")]
    MalformedHeader { line: usize },
    #[error("line {line}: malformed edge (expected \"u v\")")]
    MalformedEdge { line: usize },
    #[error("line {line}: vertex id {id} out of range (n = {n})")]
    VertexOutOfRange { line: usize, id: u64, n: u64 },
    #[error("line {line}: self-loop")]
    SelfLoop { line: usize },
    #[error("line {line}: edge endpoints must satisfy u < v")]
    UnorderedEdge { line: usize },
    #[error("line {line}: duplicate edge")]
    DuplicateEdge { line: usize },
    #[error("expected {expected} edges, found {found}")]
    EdgeCountMismatch { expected: u64, found: u64 },
}

/// Immutable undirected simple graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

/// Result of the average graph distance computation: shortest-path lengths
/// summed over unordered pairs of vertices in the same component.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSummary {
    pub connected_pair_count: u64,
    pub distance_sum: u64,
    pub average: f64,
    pub all_connected: bool,
}

const UNREACHED: u32 = u32::MAX;

impl Graph {
    /// Builds a graph from an edge list. Edges may be given in either
    /// orientation; self-loops and duplicates are rejected.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Graph, GraphError> {
        let mut degree = vec![0usize; n];
        let mut normalized = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            if b as usize >= n {
                return Err(GraphError::VertexOutOfRange { vertex: b, n });
            }
            degree[a as usize] += 1;
            degree[b as usize] += 1;
            normalized.push((a, b));
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut neighbors = vec![0u32; offsets[n]];
        let mut cursor = offsets.clone();
        for &(a, b) in &normalized {
            neighbors[cursor[a as usize]] = b;
            cursor[a as usize] += 1;
            neighbors[cursor[b as usize]] = a;
            cursor[b as usize] += 1;
        }
        for v in 0..n {
            let range = &mut neighbors[offsets[v]..offsets[v + 1]];
            range.sort_unstable();
            if let Some(w) = range.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(v as u32, w[0]));
            }
        }
        Ok(Graph {
            n,
            offsets,
            neighbors,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges as sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n as u32).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// BFS distances from `source`; `None` marks unreachable vertices.
    pub fn bfs_distances(&self, source: u32) -> Result<Vec<Option<u32>>, GraphError> {
        if source as usize >= self.n {
            return Err(GraphError::VertexOutOfRange {
                vertex: source,
                n: self.n,
            });
        }
        let mut scratch = BfsScratch::new(self.n);
        self.bfs_level_sums(source, &mut scratch);
        Ok(scratch
            .dist
            .iter()
            .map(|&d| if d == UNREACHED { None } else { Some(d) })
            .collect())
    }

    /// Frontier-swapping BFS; returns (vertices reached excluding the source,
    /// sum of their distances). Distances land in `scratch.dist`.
    fn bfs_level_sums(&self, source: u32, scratch: &mut BfsScratch) -> (u64, u64) {
        scratch.dist.fill(UNREACHED);
        scratch.frontier.clear();
        scratch.next.clear();
        scratch.dist[source as usize] = 0;
        scratch.frontier.push(source);
        let mut level = 0u32;
        let mut reached = 0u64;
        let mut sum = 0u64;
        while !scratch.frontier.is_empty() {
            level += 1;
            for &u in &scratch.frontier {
                for &v in self.neighbors(u) {
                    if scratch.dist[v as usize] == UNREACHED {
                        scratch.dist[v as usize] = level;
                        scratch.next.push(v);
                    }
                }
            }
            reached += scratch.next.len() as u64;
            sum += level as u64 * scratch.next.len() as u64;
            std::mem::swap(&mut scratch.frontier, &mut scratch.next);
            scratch.next.clear();
        }
        (reached, sum)
    }

    /// Mean shortest-path length over unordered pairs of vertices in the same
    /// component, computed exactly with a BFS from every vertex. Sources are
    /// processed in bit-parallel batches of 64 (in parallel across batches),
    /// which only needs the level sums rather than individual distances.
    pub fn average_graph_distance(&self) -> Result<DistanceSummary, GraphError> {
        if self.n < 2 {
            return Err(GraphError::TooFewVertices {
                required: 2,
                n: self.n,
            });
        }
        if self.edge_count() == 0 {
            return Err(GraphError::NoConnectedPairs);
        }
        let batches: Vec<u32> = (0..self.n as u32).step_by(64).collect();
        let (ordered_pairs, ordered_sum) = batches
            .into_par_iter()
            .map_init(
                || MsBfsScratch::new(self.n),
                |scratch, start| {
                    let count = 64.min(self.n - start as usize);
                    self.ms_bfs_level_sums(start, count, scratch)
                },
            )
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let connected_pair_count = ordered_pairs / 2;
        let distance_sum = ordered_sum / 2;
        let total_pairs = self.n as u64 * (self.n as u64 - 1) / 2;
        Ok(DistanceSummary {
            connected_pair_count,
            distance_sum,
            average: distance_sum as f64 / connected_pair_count as f64,
            all_connected: connected_pair_count == total_pairs,
        })
    }

    /// BFS from up to 64 sources at once, one bit lane per source. Returns
    /// (reached source-vertex pairs excluding self, sum of their distances).
    fn ms_bfs_level_sums(
        &self,
        start: u32,
        count: usize,
        scratch: &mut MsBfsScratch,
    ) -> (u64, u64) {
        let MsBfsScratch {
            seen,
            frontier,
            next,
        } = scratch;
        seen.fill(0);
        frontier.fill(0);
        next.fill(0);
        for lane in 0..count {
            let s = start as usize + lane;
            seen[s] |= 1 << lane;
            frontier[s] |= 1 << lane;
        }
        let mut level = 0u64;
        let mut reached = 0u64;
        let mut sum = 0u64;
        loop {
            level += 1;
            for (u, &lanes) in frontier.iter().enumerate() {
                if lanes == 0 {
                    continue;
                }
                for &v in self.neighbors(u as u32) {
                    next[v as usize] |= lanes;
                }
            }
            let mut new_total = 0u64;
            for v in 0..self.n {
                let new = next[v] & !seen[v];
                seen[v] |= new;
                frontier[v] = new;
                next[v] = 0;
                new_total += new.count_ones() as u64;
            }
            if new_total == 0 {
                break;
            }
            reached += new_total;
            sum += level * new_total;
        }
        (reached, sum)
    }

    /// Sampled variant of [`average_graph_distance`](Self::average_graph_distance):
    /// averages over `pairs` distinct unordered vertex pairs drawn uniformly
    /// without replacement. Falls back to the exact computation when `pairs`
    /// covers at least half of all pairs. A speed knob for large sweeps; the
    /// exact mode is the reference.
    pub fn average_graph_distance_sampled(
        &self,
        pairs: u64,
        rng: &mut impl Rng,
    ) -> Result<DistanceSummary, GraphError> {
        if self.n < 2 {
            return Err(GraphError::TooFewVertices {
                required: 2,
                n: self.n,
            });
        }
        if self.edge_count() == 0 {
            return Err(GraphError::NoConnectedPairs);
        }
        if pairs == 0 {
            return Err(GraphError::EmptyPairSample);
        }
        let total_pairs = self.n as u64 * (self.n as u64 - 1) / 2;
        if pairs >= total_pairs / 2 {
            return self.average_graph_distance();
        }
        let mut chosen: HashSet<(u32, u32)> = HashSet::with_capacity(pairs as usize);
        while (chosen.len() as u64) < pairs {
            let i = rng.gen_range(0..self.n as u32);
            let j = rng.gen_range(0..self.n as u32);
            if i == j {
                continue;
            }
            chosen.insert((i.min(j), i.max(j)));
        }
        // Group targets by source so each distinct source costs one BFS.
        let mut by_source: Vec<(u32, Vec<u32>)> = Vec::new();
        let mut sorted: Vec<(u32, u32)> = chosen.into_iter().collect();
        sorted.sort_unstable();
        for (i, j) in sorted {
            match by_source.last_mut() {
                Some((s, targets)) if *s == i => targets.push(j),
                _ => by_source.push((i, vec![j])),
            }
        }
        let (connected, sum) = by_source
            .par_iter()
            .map_init(
                || BfsScratch::new(self.n),
                |scratch, (s, targets)| {
                    self.bfs_level_sums(*s, scratch);
                    let mut connected = 0u64;
                    let mut sum = 0u64;
                    for &t in targets {
                        let d = scratch.dist[t as usize];
                        if d != UNREACHED {
                            connected += 1;
                            sum += d as u64;
                        }
                    }
                    (connected, sum)
                },
            )
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if connected == 0 {
            return Err(GraphError::NoConnectedPairs);
        }
        Ok(DistanceSummary {
            connected_pair_count: connected,
            distance_sum: sum,
            average: sum as f64 / connected as f64,
            all_connected: connected == pairs,
        })
    }

    /// True iff the subgraph induced by `subset` (all vertices when `None`)
    /// has a single connected component.
    pub fn is_connected(&self, subset: Option<&[u32]>) -> Result<bool, GraphError> {
        let member: Option<Vec<bool>> = match subset {
            None => None,
            Some(ids) => {
                if ids.is_empty() {
                    return Err(GraphError::EmptySubset);
                }
                let mut mask = vec![false; self.n];
                for &v in ids {
                    if v as usize >= self.n {
                        return Err(GraphError::VertexOutOfRange {
                            vertex: v,
                            n: self.n,
                        });
                    }
                    mask[v as usize] = true;
                }
                Some(mask)
            }
        };
        let in_subset = |v: u32| member.as_ref().is_none_or(|m| m[v as usize]);
        let target = member
            .as_ref()
            .map_or(self.n, |m| m.iter().filter(|&&b| b).count());
        if target == 0 {
            return Err(GraphError::EmptySubset);
        }
        let start = match member.as_ref() {
            None => 0u32,
            Some(m) => m.iter().position(|&b| b).unwrap() as u32,
        };
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start as usize] = true;
        let mut count = 0usize;
        while let Some(u) = stack.pop() {
            count += 1;
            for &v in self.neighbors(u) {
                if in_subset(v) && !seen[v as usize] {
                    seen[v as usize] = true;
                    stack.push(v);
                }
            }
        }
        Ok(count == target)
    }
}

struct BfsScratch {
    dist: Vec<u32>,
    frontier: Vec<u32>,
    next: Vec<u32>,
}

impl BfsScratch {
    fn new(n: usize) -> Self {
        BfsScratch {
            dist: vec![UNREACHED; n],
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }
}

struct MsBfsScratch {
    seen: Vec<u64>,
    frontier: Vec<u64>,
    next: Vec<u64>,
}

impl MsBfsScratch {
    fn new(n: usize) -> Self {
        MsBfsScratch {
            seen: vec![0; n],
            frontier: vec![0; n],
            next: vec![0; n],
        }
    }
}

/// Reads the plain-text edge-list format: header line `n m`, then `m` lines
/// `u v` with `0 <= u < v < n`. Lines starting with `#` are ignored.
pub fn read_edge_list(input: impl BufRead) -> Result<Graph, EdgeListError> {
    let mut header: Option<(u64, u64)> = None;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let first = fields.next();
        let second = fields.next();
        let extra = fields.next();
        match header {
            None => {
                let (Some(a), Some(b), None) = (first, second, extra) else {
                    return Err(EdgeListError::MalformedHeader { line: line_no });
                };
                let (Ok(n), Ok(m)) = (a.parse::<u64>(), b.parse::<u64>()) else {
                    return Err(EdgeListError::MalformedHeader { line: line_no });
                };
                header = Some((n, m));
                edges.reserve(m as usize);
            }
            Some((n, m)) => {
                let (Some(a), Some(b), None) = (first, second, extra) else {
                    return Err(EdgeListError::MalformedEdge { line: line_no });
                };
                let (Ok(u), Ok(v)) = (a.parse::<u64>(), b.parse::<u64>()) else {
                    return Err(EdgeListError::MalformedEdge { line: line_no });
                };
                if u >= n || v >= n {
                    return Err(EdgeListError::VertexOutOfRange {
                        line: line_no,
                        id: u.max(v),
                        n,
                    });
                }
                if u == v {
                    return Err(EdgeListError::SelfLoop { line: line_no });
                }
                if u > v {
                    return Err(EdgeListError::UnorderedEdge { line: line_no });
                }
                if edges.len() as u64 >= m {
                    return Err(EdgeListError::EdgeCountMismatch {
                        expected: m,
                        found: edges.len() as u64 + 1,
                    });
                }
                if !seen.insert((u as u32, v as u32)) {
                    return Err(EdgeListError::DuplicateEdge { line: line_no });
                }
                edges.push((u as u32, v as u32));
            }
        }
    }
    let Some((n, m)) = header else {
        return Err(EdgeListError::MalformedHeader { line: 1 });
    };
    if edges.len() as u64 != m {
        return Err(EdgeListError::EdgeCountMismatch {
            expected: m,
            found: edges.len() as u64,
        });
    }
    // All invariants were validated line by line above.
    Ok(Graph::from_edges(n as usize, edges).expect("validated edge list"))
}

/// Writes the edge-list format emitted by [`read_edge_list`]'s grammar:
/// `n m` header then sorted `u v` lines, LF endings.
pub fn write_edge_list(g: &Graph, mut output: impl Write) -> io::Result<()> {
    writeln!(output, "{} {}", g.vertex_count(), g.edge_count())?;
    for (u, v) in g.edges() {
        writeln!(output, "{u} {v}")?;
    }
    Ok(())
}
