//! Detection tests: the isolated-star test and the average-distance test,
//! plus Monte Carlo calibration of their rejection thresholds.
//!
//! The isolated star of a vertex is the largest independent set inside the
//! subgraph induced by its neighborhood. Under the geometric null model its
//! size can never exceed the kissing number of the embedding dimension, which
//! gives the star test a type-1 error of exactly zero.

use crate::geometry::{kissing_number, GeometryError};
use crate::graph::{Graph, GraphError};
use crate::sample::{derive_stream, sample_null, ModelParams, ParamError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("vertex {vertex} has degree {degree}, above the exact-star cap {cap}")]
    ExactCapExceeded {
        vertex: u32,
        degree: usize,
        cap: usize,
    },
    #[error("exact-star cap must be in 1..=64, got {0}")]
    InvalidCap(usize),
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("radius must lie in (0, 1/2], got {0}")]
    InvalidRadius(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("calibration needs at least 100 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("calibration requires null-model params (k = 0), got k = {0}")]
    CalibrationNeedsNull(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// How per-vertex isolated-star sizes are computed.
///
/// `Exact` fails on vertices whose degree exceeds the cap; `Hybrid` falls
/// back to the greedy lower bound there, which can only make the tests more
/// conservative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum StarMethod {
    Exact { cap: usize },
    Greedy,
    Hybrid { cap: usize },
}

impl StarMethod {
    fn validate(&self) -> Result<(), DetectError> {
        match *self {
            StarMethod::Exact { cap } | StarMethod::Hybrid { cap } => {
                if cap == 0 || cap > 64 {
                    Err(DetectError::InvalidCap(cap))
                } else {
                    Ok(())
                }
            }
            StarMethod::Greedy => Ok(()),
        }
    }
}

impl Default for StarMethod {
    fn default() -> Self {
        StarMethod::Hybrid { cap: 32 }
    }
}

/// Per-vertex isolated-star sizes for a whole graph.
#[derive(Debug, Clone)]
pub struct IsolatedStarProfile {
    pub per_vertex_star_size: Vec<u32>,
    pub max_star: u32,
    pub method: StarMethod,
    /// Vertices where `Hybrid` fell back to the greedy bound.
    pub greedy_fallbacks: usize,
}

/// Which statistic a verdict or calibration entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatName {
    MaxStar,
    AvgDistance,
}

impl std::fmt::Display for StatName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatName::MaxStar => write!(f, "max_star"),
            StatName::AvgDistance => write!(f, "avg_distance"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Analytic,
    MonteCarlo,
}

/// Diagnostics attached to a verdict.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerdictNotes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_connected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greedy_used: Option<bool>,
}

/// Outcome of a detection test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestVerdict {
    pub stat: StatName,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub threshold_source: ThresholdSource,
    pub notes: VerdictNotes,
}

/// Neighborhood of `v` as a local graph: sorted neighbor ids plus adjacency
/// among them, expressed in local indices.
fn neighborhood_subgraph(g: &Graph, v: u32) -> Vec<Vec<u16>> {
    let nbrs = g.neighbors(v);
    let mut local = vec![Vec::new(); nbrs.len()];
    for (i, &a) in nbrs.iter().enumerate() {
        // Sorted-merge intersection of adj(a) with nbrs.
        let mut it = 0usize;
        for &w in g.neighbors(a) {
            while it < nbrs.len() && nbrs[it] < w {
                it += 1;
            }
            if it == nbrs.len() {
                break;
            }
            if nbrs[it] == w && it != i {
                local[i].push(it as u16);
            }
        }
    }
    local
}

/// Greedy independent set: repeatedly take the vertex of minimum residual
/// degree (lowest index on ties), removing it and its neighbors.
fn greedy_mis_size(local: &[Vec<u16>]) -> u32 {
    let t = local.len();
    let mut alive = vec![true; t];
    let mut deg: Vec<u32> = local.iter().map(|a| a.len() as u32).collect();
    let mut remaining = t;
    let mut size = 0u32;
    while remaining > 0 {
        let mut v = usize::MAX;
        let mut best = u32::MAX;
        for i in 0..t {
            if alive[i] && deg[i] < best {
                best = deg[i];
                v = i;
            }
        }
        size += 1;
        alive[v] = false;
        remaining -= 1;
        for &u in &local[v] {
            let u = u as usize;
            if alive[u] {
                alive[u] = false;
                remaining -= 1;
                for &w in &local[u] {
                    let w = w as usize;
                    if alive[w] {
                        deg[w] -= 1;
                    }
                }
            }
        }
    }
    size
}

/// Exact maximum independent set on a bitset graph with at most 64 vertices.
/// Branch and bound on the highest-residual-degree vertex, seeded with the
/// greedy lower bound.
fn exact_mis_size(masks: &[u64], seed_lower_bound: u32) -> u32 {
    let all = if masks.len() == 64 {
        u64::MAX
    } else {
        (1u64 << masks.len()) - 1
    };
    let mut best = seed_lower_bound;
    bb(masks, all, 0, &mut best);
    best
}

fn bb(masks: &[u64], cand: u64, current: u32, best: &mut u32) {
    let mut cand = cand;
    let mut current = current;
    loop {
        if cand == 0 {
            *best = (*best).max(current);
            return;
        }
        if current + cand.count_ones() <= *best {
            return;
        }
        // Pick the candidate with the most candidate-neighbors; vertices with
        // none are forced into the set.
        let mut pick = usize::MAX;
        let mut pick_deg = 0u32;
        let mut scan = cand;
        let mut forced = 0u64;
        while scan != 0 {
            let v = scan.trailing_zeros() as usize;
            scan &= scan - 1;
            let deg = (masks[v] & cand).count_ones();
            if deg == 0 {
                forced |= 1 << v;
            } else if pick == usize::MAX || deg > pick_deg {
                pick = v;
                pick_deg = deg;
            }
        }
        if forced != 0 {
            current += forced.count_ones();
            cand &= !forced;
            continue;
        }
        let v = pick;
        // Include v, then exclude v.
        bb(masks, cand & !masks[v] & !(1 << v), current + 1, best);
        cand &= !(1 << v);
    }
}

fn star_size_with(
    local: &[Vec<u16>],
    method: StarMethod,
    vertex: u32,
) -> Result<(u32, bool), DetectError> {
    let degree = local.len();
    match method {
        StarMethod::Greedy => Ok((greedy_mis_size(local), true)),
        StarMethod::Exact { cap } => {
            if degree > cap {
                Err(DetectError::ExactCapExceeded {
                    vertex,
                    degree,
                    cap,
                })
            } else {
                Ok((exact_from_local(local), false))
            }
        }
        StarMethod::Hybrid { cap } => {
            if degree > cap {
                Ok((greedy_mis_size(local), true))
            } else {
                Ok((exact_from_local(local), false))
            }
        }
    }
}

fn exact_from_local(local: &[Vec<u16>]) -> u32 {
    let mut masks = vec![0u64; local.len()];
    for (i, nbrs) in local.iter().enumerate() {
        for &j in nbrs {
            masks[i] |= 1 << j;
        }
    }
    exact_mis_size(&masks, greedy_mis_size(local))
}

/// Size of the isolated star at `v`: the maximum independent set of the
/// neighborhood-induced subgraph (or the greedy lower bound).
pub fn isolated_star_size(g: &Graph, v: u32, method: StarMethod) -> Result<u32, DetectError> {
    method.validate()?;
    if v as usize >= g.vertex_count() {
        return Err(GraphError::VertexOutOfRange {
            vertex: v,
            n: g.vertex_count(),
        }
        .into());
    }
    let local = neighborhood_subgraph(g, v);
    star_size_with(&local, method, v).map(|(s, _)| s)
}

/// Star sizes for every vertex, computed in parallel.
pub fn isolated_star_profile(
    g: &Graph,
    method: StarMethod,
) -> Result<IsolatedStarProfile, DetectError> {
    method.validate()?;
    let results: Result<Vec<(u32, bool)>, DetectError> = (0..g.vertex_count() as u32)
        .into_par_iter()
        .map(|v| {
            let local = neighborhood_subgraph(g, v);
            star_size_with(&local, method, v)
        })
        .collect();
    let results = results?;
    let per_vertex: Vec<u32> = results.iter().map(|&(s, _)| s).collect();
    let greedy_fallbacks = match method {
        StarMethod::Hybrid { .. } => results.iter().filter(|&&(_, g)| g).count(),
        _ => 0,
    };
    let max_star = per_vertex.iter().copied().max().unwrap_or(0);
    Ok(IsolatedStarProfile {
        per_vertex_star_size: per_vertex,
        max_star,
        method,
        greedy_fallbacks,
    })
}

/// The isolated-star test: reject when the largest isolated star exceeds the
/// kissing number of dimension `d`.
pub fn isolated_star_test(g: &Graph, d: u32) -> Result<TestVerdict, DetectError> {
    isolated_star_test_with(g, d, StarMethod::default())
}

pub fn isolated_star_test_with(
    g: &Graph,
    d: u32,
    method: StarMethod,
) -> Result<TestVerdict, DetectError> {
    let profile = isolated_star_profile(g, method)?;
    let threshold = kissing_number(d)? as f64;
    let statistic = profile.max_star as f64;
    let greedy_used = matches!(method, StarMethod::Greedy) || profile.greedy_fallbacks > 0;
    Ok(TestVerdict {
        stat: StatName::MaxStar,
        statistic,
        threshold,
        reject: statistic > threshold,
        threshold_source: ThresholdSource::Analytic,
        notes: VerdictNotes {
            all_connected: None,
            greedy_used: Some(greedy_used),
        },
    })
}

/// The average-distance test: reject when the mean shortest-path length drops
/// below `(1 - epsilon) * d / (2(d+1)) / r`.
pub fn average_distance_test(
    g: &Graph,
    d: u32,
    r: f64,
    epsilon: f64,
) -> Result<TestVerdict, DetectError> {
    if !(r > 0.0 && r <= 0.5) {
        return Err(DetectError::InvalidRadius(r));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(DetectError::InvalidEpsilon(epsilon));
    }
    let summary = g.average_graph_distance()?;
    let threshold = average_distance_threshold(d, r, epsilon);
    Ok(TestVerdict {
        stat: StatName::AvgDistance,
        statistic: summary.average,
        threshold,
        reject: summary.average < threshold,
        threshold_source: ThresholdSource::Analytic,
        notes: VerdictNotes {
            all_connected: Some(summary.all_connected),
            greedy_used: None,
        },
    })
}

/// Analytic rejection boundary of the average-distance test.
pub fn average_distance_threshold(d: u32, r: f64, epsilon: f64) -> f64 {
    (1.0 - epsilon) * d as f64 / (2.0 * (d as f64 + 1.0)) / r
}

/// Empirical null distribution of a statistic with quantile-based thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub stat: StatName,
    pub n: usize,
    pub d: u32,
    pub p: f64,
    pub replicates: usize,
    /// Rejection thresholds keyed by the alpha they were requested for.
    pub alpha_to_threshold: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sorted_samples: Option<Vec<f64>>,
}

impl CalibrationEntry {
    /// Threshold for `alpha`, from the stored map or recomputed from the
    /// stored samples.
    pub fn threshold(&self, alpha: f64) -> Option<f64> {
        if let Some(t) = self.alpha_to_threshold.get(&format_alpha(alpha)) {
            return Some(*t);
        }
        self.sorted_samples
            .as_ref()
            .map(|s| quantile_threshold(self.stat, s, alpha))
    }
}

/// A set of calibration entries keyed by `(stat, n, d, p)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn insert(&mut self, entry: CalibrationEntry) {
        self.entries.push(entry);
    }

    pub fn lookup(&self, stat: StatName, n: usize, d: u32, p: f64) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| {
            e.stat == stat && e.n == n && e.d == d && (e.p - p).abs() <= 1e-9 * p.abs().max(1e-300)
        })
    }
}

fn format_alpha(alpha: f64) -> String {
    format!("{alpha}")
}

/// Empirical quantile of the sorted sample by the order statistic at rank
/// `ceil(q * len)` (no interpolation): the `(1 - alpha)`-quantile for upper-
/// tail statistics, the `alpha`-quantile for lower-tail ones.
fn quantile_threshold(stat: StatName, sorted: &[f64], alpha: f64) -> f64 {
    let q = match stat {
        StatName::MaxStar => 1.0 - alpha,
        StatName::AvgDistance => alpha,
    };
    let len = sorted.len();
    let rank = (q * len as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(len) - 1]
}

/// Whether a statistic crosses a calibrated threshold in the rejection
/// direction (strictly above for `max_star`, strictly below for
/// `avg_distance`).
pub fn crosses_threshold(stat: StatName, statistic: f64, threshold: f64) -> bool {
    match stat {
        StatName::MaxStar => statistic > threshold,
        StatName::AvgDistance => statistic < threshold,
    }
}

/// A pair of optionally-computed statistics: (max star, average distance).
pub type StatPair = (Option<f64>, Option<f64>);

/// Options controlling how the statistics are computed during calibration.
#[derive(Debug, Clone, Copy)]
pub struct StatOptions {
    pub star_method: StarMethod,
    /// Sample this many vertex pairs for the distance statistic instead of
    /// running it exactly.
    pub distance_pair_sample: Option<u64>,
}

impl Default for StatOptions {
    fn default() -> Self {
        StatOptions {
            star_method: StarMethod::Greedy,
            distance_pair_sample: None,
        }
    }
}

pub const STREAM_CALIBRATION: u64 = 0x63616c;
pub const STREAM_PAIR_SAMPLE: u64 = 0x707273;

/// Computes the requested statistics on one graph.
pub fn graph_statistics(
    g: &Graph,
    opts: &StatOptions,
    want_star: bool,
    want_distance: bool,
    pair_sample_seed: u64,
) -> Result<(Option<f64>, Option<f64>, bool), DetectError> {
    let star = if want_star {
        Some(isolated_star_profile(g, opts.star_method)?.max_star as f64)
    } else {
        None
    };
    let mut all_connected = false;
    let dist = if want_distance {
        let summary = match opts.distance_pair_sample {
            None => g.average_graph_distance()?,
            Some(pairs) => {
                let mut rng = crate::sample::derive_rng(pair_sample_seed, &[STREAM_PAIR_SAMPLE]);
                g.average_graph_distance_sampled(pairs, &mut rng)?
            }
        };
        all_connected = summary.all_connected;
        Some(summary.average)
    } else {
        None
    };
    Ok((star, dist, all_connected))
}

/// Monte Carlo calibration: samples `replicates` null graphs, computes the
/// statistic on each, and returns the empirical rejection thresholds for the
/// requested alphas, plus the full sorted sample for diagnostics.
pub fn monte_carlo_threshold(
    stat: StatName,
    params: &ModelParams,
    replicates: usize,
    alphas: &[f64],
    seed: u64,
    opts: &StatOptions,
) -> Result<CalibrationEntry, DetectError> {
    let (star, dist) = collect_null_statistics(
        params,
        replicates,
        alphas,
        seed,
        opts,
        stat == StatName::MaxStar,
        stat == StatName::AvgDistance,
    )?;
    Ok(match stat {
        StatName::MaxStar => star.expect("requested star calibration"),
        StatName::AvgDistance => dist.expect("requested distance calibration"),
    })
}

/// Calibrates both statistics from one shared batch of null samples.
pub fn monte_carlo_calibrate_both(
    params: &ModelParams,
    replicates: usize,
    alphas: &[f64],
    seed: u64,
    opts: &StatOptions,
) -> Result<(CalibrationEntry, CalibrationEntry), DetectError> {
    let (star, dist) = collect_null_statistics(params, replicates, alphas, seed, opts, true, true)?;
    Ok((star.unwrap(), dist.unwrap()))
}

fn collect_null_statistics(
    params: &ModelParams,
    replicates: usize,
    alphas: &[f64],
    seed: u64,
    opts: &StatOptions,
    want_star: bool,
    want_distance: bool,
) -> Result<(Option<CalibrationEntry>, Option<CalibrationEntry>), DetectError> {
    if params.k != 0 {
        return Err(DetectError::CalibrationNeedsNull(params.k));
    }
    if replicates < 100 {
        return Err(DetectError::TooFewReplicates(replicates));
    }
    for &alpha in alphas {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(DetectError::InvalidAlpha(alpha));
        }
    }
    let resolved = params.resolve()?;
    let outcomes: Result<Vec<StatPair>, DetectError> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive_stream(seed, &[STREAM_CALIBRATION, rep]);
            let sample = sample_null(params, rep_seed)?;
            let (star, dist, _) =
                graph_statistics(&sample.graph, opts, want_star, want_distance, rep_seed)?;
            Ok((star, dist))
        })
        .collect();
    let outcomes = outcomes?;

    let build = |stat: StatName, values: Vec<f64>| -> CalibrationEntry {
        let mut sorted = values;
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
        let alpha_to_threshold = alphas
            .iter()
            .map(|&a| (format_alpha(a), quantile_threshold(stat, &sorted, a)))
            .collect();
        CalibrationEntry {
            stat,
            n: resolved.n,
            d: resolved.d,
            p: resolved.p,
            replicates,
            alpha_to_threshold,
            sorted_samples: Some(sorted),
        }
    };
    let star_entry = want_star.then(|| {
        build(
            StatName::MaxStar,
            outcomes.iter().map(|o| o.0.unwrap()).collect(),
        )
    });
    let dist_entry = want_distance.then(|| {
        build(
            StatName::AvgDistance,
            outcomes.iter().map(|o| o.1.unwrap()).collect(),
        )
    });
    Ok((star_entry, dist_entry))
}
