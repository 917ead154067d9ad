//! Samplers for the null model (geometric connections only) and the
//! alternative model with `k` planted vertices that ignore the geometry and
//! connect to everyone independently with probability `p`.
//!
//! Reproducibility: all randomness flows through ChaCha8 streams derived from
//! a caller-supplied 64-bit seed. Stream derivation hashes the seed together
//! with context words (replicate index, purpose tag) through SplitMix64, so
//! identical `(params, seed)` inputs give bit-identical samples regardless of
//! thread scheduling.

use crate::geometry::{radius_for_probability, GeometryError, TorusPoint};
use crate::graph::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("vertex count must be >= 2, got {0}")]
    VertexCount(usize),
    #[error("botnet size {k} exceeds vertex count {n}")]
    BotnetTooLarge { k: usize, n: usize },
    #[error("edge probability must lie in (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("average degree must lie in (0, n), got {0}")]
    AverageDegreeOutOfRange(f64),
    #[error("sampler requires k = 0 for the null model, got {0}")]
    ExpectedNull(usize),
    #[error("sampler requires 1 <= k for the alternative model")]
    ExpectedAlternative,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How the edge density of a model is specified; the three forms are
/// interchangeable through the ball-volume identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    EdgeProbability(f64),
    Radius(f64),
    AverageDegree(f64),
}

/// Parameters of a null (`k = 0`) or alternative (`k >= 1`) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub d: u32,
    pub density: Density,
    pub k: usize,
}

/// Model parameters with the density normalized to both `p` and `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedParams {
    pub n: usize,
    pub d: u32,
    pub p: f64,
    pub r: f64,
    pub k: usize,
}

impl ModelParams {
    pub fn new(n: usize, d: u32, density: Density, k: usize) -> Self {
        ModelParams { n, d, density, k }
    }

    /// Validates and normalizes to `(p, r)`. Average degree resolves as
    /// `p = deg / n`, then `r` through the ball-volume identity.
    pub fn resolve(&self) -> Result<ResolvedParams, ParamError> {
        if self.n < 2 {
            return Err(ParamError::VertexCount(self.n));
        }
        if self.k > self.n {
            return Err(ParamError::BotnetTooLarge {
                k: self.k,
                n: self.n,
            });
        }
        let p = match self.density {
            Density::EdgeProbability(p) => p,
            Density::Radius(r) => crate::geometry::probability_for_radius(r, self.d)?,
            Density::AverageDegree(deg) => {
                if !(deg > 0.0 && deg < self.n as f64) {
                    return Err(ParamError::AverageDegreeOutOfRange(deg));
                }
                deg / self.n as f64
            }
        };
        if !(p > 0.0 && p < 1.0) {
            return Err(ParamError::ProbabilityOutOfRange(p));
        }
        let r = radius_for_probability(p, self.d)?;
        Ok(ResolvedParams {
            n: self.n,
            d: self.d,
            p,
            r,
            k: self.k,
        })
    }
}

/// A sampled graph together with the latent state that generated it.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub graph: Graph,
    pub locations: Vec<TorusPoint>,
    /// Sorted planted vertex ids (empty under the null model).
    pub botnet: Vec<u32>,
}

// Purpose tags for stream derivation.
pub const STREAM_LOCATIONS: u64 = 0x6c6f63;
pub const STREAM_BOTNET_SELECT: u64 = 0x73656c;
pub const STREAM_BOTNET_EDGES: u64 = 0x626567;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses `seed` and the context words into a single stream id.
pub fn derive_stream(seed: u64, words: &[u64]) -> u64 {
    let mut acc = seed;
    for &w in words {
        let mut state = acc ^ w;
        acc = splitmix64(&mut state);
    }
    acc
}

/// ChaCha8 generator keyed from a derived stream id.
pub fn derive_rng(seed: u64, words: &[u64]) -> ChaCha8Rng {
    let mut state = derive_stream(seed, words);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Samples the null model: `n` uniform torus locations, an edge exactly when
/// the torus distance is at most `r`.
pub fn sample_null(params: &ModelParams, seed: u64) -> Result<SampleOutput, ParamError> {
    if params.k != 0 {
        return Err(ParamError::ExpectedNull(params.k));
    }
    sample_impl(&params.resolve()?, seed)
}

/// Samples the alternative model: the `k` planted vertices keep their
/// (unused) locations and instead connect to every other vertex, planted or
/// not, independently with probability `p`.
pub fn sample_alternative(params: &ModelParams, seed: u64) -> Result<SampleOutput, ParamError> {
    if params.k == 0 {
        return Err(ParamError::ExpectedAlternative);
    }
    sample_impl(&params.resolve()?, seed)
}

fn sample_impl(params: &ResolvedParams, seed: u64) -> Result<SampleOutput, ParamError> {
    let ResolvedParams { n, d, p, r, k } = *params;
    let dim = d as usize;

    let mut rng_loc = derive_rng(seed, &[STREAM_LOCATIONS]);
    let mut flat = vec![0.0f64; n * dim];
    for c in flat.iter_mut() {
        *c = rng_loc.gen::<f64>();
    }

    let mut rng_sel = derive_rng(seed, &[STREAM_BOTNET_SELECT]);
    let mut botnet: Vec<u32> = rand::seq::index::sample(&mut rng_sel, n, k)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    botnet.sort_unstable();
    let mut planted = vec![false; n];
    for &b in &botnet {
        planted[b as usize] = true;
    }

    let mut edges = geometric_edges(&flat, n, dim, r, &planted);

    // Planted pairs: enumerate in a fixed order for determinism.
    let mut rng_edges = derive_rng(seed, &[STREAM_BOTNET_EDGES]);
    for &b in &botnet {
        for j in 0..n as u32 {
            if j == b || (planted[j as usize] && j < b) {
                continue;
            }
            if rng_edges.gen::<f64>() < p {
                edges.push((b.min(j), b.max(j)));
            }
        }
    }

    let graph = Graph::from_edges(n, edges).expect("sampler emits unique well-formed edges");
    let locations = flat
        .chunks_exact(dim)
        .map(|c| TorusPoint::new(c.to_vec()))
        .collect();
    Ok(SampleOutput {
        graph,
        locations,
        botnet,
    })
}

#[inline]
fn within_radius(a: &[f64], b: &[f64], r2: f64) -> bool {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = (x - y).abs();
        let wrapped = diff.min(1.0 - diff);
        sum += wrapped * wrapped;
        if sum > r2 {
            return false;
        }
    }
    true
}

/// Branchless squared torus distance; vectorizes better than the early-exit
/// variant inside the sweep's tight window.
#[inline]
fn torus_dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = (x - y).abs();
        let wrapped = diff.min(1.0 - diff);
        sum += wrapped * wrapped;
    }
    sum
}

/// Quadratic-scan replacement for coarse radii: sort the non-planted points
/// by their first coordinate and compare each point only against the
/// circular run of successors whose forward first-coordinate gap is at most
/// `r`. Every unordered pair within distance `r` falls in exactly one such
/// run (for `r < 1/2`; ties at a gap of exactly 1/2 are broken by sorted
/// position).
fn sweep_edges(flat: &[f64], n: usize, dim: usize, r: f64, skip: &[bool]) -> Vec<(u32, u32)> {
    let r2 = r * r;
    let mut order: Vec<u32> = (0..n as u32).filter(|&i| !skip[i as usize]).collect();
    order.sort_by(|&a, &b| {
        flat[a as usize * dim]
            .partial_cmp(&flat[b as usize * dim])
            .expect("coordinates are finite")
            .then(a.cmp(&b))
    });
    let m = order.len();
    let mut sorted_flat = vec![0.0f64; m * dim];
    for (pos, &i) in order.iter().enumerate() {
        sorted_flat[pos * dim..(pos + 1) * dim]
            .copy_from_slice(&flat[i as usize * dim..(i as usize + 1) * dim]);
    }
    let mut edges = Vec::new();
    for a_pos in 0..m {
        let pa = &sorted_flat[a_pos * dim..(a_pos + 1) * dim];
        let xa = pa[0];
        for step in 1..m {
            let b_pos = (a_pos + step) % m;
            let gap = (sorted_flat[b_pos * dim] - xa).rem_euclid(1.0);
            if gap > r {
                break;
            }
            // A pair is seen from both endpoints only when the gap is exactly
            // 0 (tied coordinates, full wrap) or exactly 1/2 at r = 1/2; keep
            // the scan from the earlier sorted position.
            if (gap == 0.0 || gap == 0.5) && b_pos < a_pos {
                continue;
            }
            let pb = &sorted_flat[b_pos * dim..(b_pos + 1) * dim];
            if torus_dist_sq(pa, pb) <= r2 {
                let (i, j) = (order[a_pos], order[b_pos]);
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges
}

/// Geometric edges among the non-planted vertices. Uses a uniform cell grid
/// with side >= r so only same-cell and adjacent-cell pairs are compared;
/// falls back to a sorted sweep on the first coordinate when the grid would
/// be too coarse to prune anything or too large to be worth allocating.
fn geometric_edges(flat: &[f64], n: usize, dim: usize, r: f64, skip: &[bool]) -> Vec<(u32, u32)> {
    let r2 = r * r;
    let cells_per_dim = (1.0 / r).floor() as usize;
    let total_cells = (cells_per_dim as f64).powi(dim as i32);
    let use_grid = cells_per_dim >= 4 && total_cells <= (8 * n).max(4096) as f64;
    if !use_grid {
        return sweep_edges(flat, n, dim, r, skip);
    }

    let total_cells = total_cells as usize;
    let mut cell_of = vec![0usize; n];
    let mut counts = vec![0usize; total_cells + 1];
    for i in 0..n {
        if skip[i] {
            continue;
        }
        let mut idx = 0usize;
        for &c in &flat[i * dim..(i + 1) * dim] {
            let cell = ((c * cells_per_dim as f64) as usize).min(cells_per_dim - 1);
            idx = idx * cells_per_dim + cell;
        }
        cell_of[i] = idx;
        counts[idx + 1] += 1;
    }
    for c in 0..total_cells {
        counts[c + 1] += counts[c];
    }
    let mut bucket = vec![0u32; counts[total_cells]];
    let mut cursor = counts.clone();
    for i in 0..n {
        if !skip[i] {
            bucket[cursor[cell_of[i]]] = i as u32;
            cursor[cell_of[i]] += 1;
        }
    }

    // Odometer over the 3^dim neighbor offsets.
    let mut offsets: Vec<Vec<i64>> = Vec::new();
    let mut odo = vec![-1i64; dim];
    loop {
        offsets.push(odo.clone());
        let mut pos = 0;
        loop {
            if pos == dim {
                break;
            }
            odo[pos] += 1;
            if odo[pos] <= 1 {
                break;
            }
            odo[pos] = -1;
            pos += 1;
        }
        if pos == dim {
            break;
        }
    }

    let cpd = cells_per_dim as i64;
    let mut edges = Vec::new();
    let mut coords = vec![0i64; dim];
    for cell in 0..total_cells {
        let members = &bucket[counts[cell]..counts[cell + 1]];
        if members.is_empty() {
            continue;
        }
        // Same-cell pairs.
        for (ai, &a) in members.iter().enumerate() {
            let pa = &flat[a as usize * dim..(a as usize + 1) * dim];
            for &b in &members[ai + 1..] {
                if within_radius(pa, &flat[b as usize * dim..(b as usize + 1) * dim], r2) {
                    edges.push((a.min(b), a.max(b)));
                }
            }
        }
        // Cross-cell pairs, visiting each unordered cell pair once.
        let mut rem = cell;
        for j in (0..dim).rev() {
            coords[j] = (rem % cells_per_dim) as i64;
            rem /= cells_per_dim;
        }
        for off in &offsets {
            let mut idx = 0i64;
            for j in 0..dim {
                let c = (coords[j] + off[j]).rem_euclid(cpd);
                idx = idx * cpd + c;
            }
            let other = idx as usize;
            if other <= cell {
                continue;
            }
            let others = &bucket[counts[other]..counts[other + 1]];
            for &a in members {
                let pa = &flat[a as usize * dim..(a as usize + 1) * dim];
                for &b in others {
                    if within_radius(pa, &flat[b as usize * dim..(b as usize + 1) * dim], r2) {
                        edges.push((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    edges
}
