//! Estimators for the latent model parameters of an observed graph: the
//! embedding dimension (by inverting the analytic clustering coefficient),
//! the edge probability, and the connection radius.

use crate::geometry::{radius_for_probability, GeometryError};
use crate::graph::Graph;
use crate::numerics::{regularized_incomplete_beta, NumericsError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("dimension must be >= 2, got {0}")]
    DimensionTooSmall(u32),
    #[error("graph has no wedges (paths of length 2)")]
    NoWedges,
    #[error("graph needs at least 2 vertices")]
    TooFewVertices,
    #[error("estimated edge probability {0} is outside (0, 1)")]
    DegenerateEdgeProbability(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Analytic clustering coefficient of the geometric null model in dimension
/// `d`: the probability that two neighbors of a vertex are themselves
/// adjacent. Strictly decreasing in `d`.
pub fn analytic_clustering(d: u32) -> Result<f64, EstimateError> {
    if d < 2 {
        return Err(EstimateError::DimensionTooSmall(d));
    }
    let a = (d as f64 + 1.0) / 2.0;
    let first = regularized_incomplete_beta(a, 0.5, 0.75)?;
    let second = regularized_incomplete_beta(a, a, 0.25)?;
    Ok(first + second)
}

/// Triangle count (unordered) and ordered wedge count `sum_i d_i (d_i - 1)`.
pub fn triangle_wedge_counts(g: &Graph) -> (u64, u64) {
    let triple_count: u64 = (0..g.vertex_count() as u32)
        .into_par_iter()
        .map(|u| {
            let nu = g.neighbors(u);
            let mut count = 0u64;
            for &v in nu {
                if v <= u {
                    continue;
                }
                // Sorted-merge intersection |N(u) ∩ N(v)|.
                let nv = g.neighbors(v);
                let (mut i, mut j) = (0usize, 0usize);
                while i < nu.len() && j < nv.len() {
                    match nu[i].cmp(&nv[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            count += 1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
            }
            count
        })
        .sum();
    // Each triangle is counted once per incident edge.
    let triangles = triple_count / 3;
    let wedges: u64 = (0..g.vertex_count() as u32)
        .map(|v| {
            let d = g.degree(v) as u64;
            d * d.saturating_sub(1)
        })
        .sum();
    (triangles, wedges)
}

/// Empirical clustering coefficient: closed ordered triples over connected
/// ordered triples (distinct `i, j, k` with `i~j` and `i~k`), which reduces
/// to `6 * triangles / sum_i d_i (d_i - 1)`.
pub fn empirical_clustering(g: &Graph) -> Result<f64, EstimateError> {
    let (triangles, wedges) = triangle_wedge_counts(g);
    if wedges == 0 {
        return Err(EstimateError::NoWedges);
    }
    Ok(6.0 * triangles as f64 / wedges as f64)
}

/// Dimension estimate: the `d` in `2..=d_max` whose analytic clustering value
/// is nearest the empirical one, ties resolved toward smaller `d`.
pub fn estimate_dimension(g: &Graph, d_max: u32) -> Result<u32, EstimateError> {
    if d_max < 2 {
        return Err(EstimateError::DimensionTooSmall(d_max));
    }
    let c_hat = empirical_clustering(g)?;
    invert_clustering(c_hat, d_max)
}

/// Nearest-value inversion of the analytic clustering table.
pub fn invert_clustering(c_hat: f64, d_max: u32) -> Result<u32, EstimateError> {
    let mut best_d = 2;
    let mut best_gap = f64::INFINITY;
    for d in 2..=d_max {
        let gap = (analytic_clustering(d)? - c_hat).abs();
        if gap < best_gap {
            best_gap = gap;
            best_d = d;
        }
    }
    Ok(best_d)
}

/// Empirical edge probability: observed edges over all vertex pairs.
pub fn estimate_edge_probability(g: &Graph) -> Result<f64, EstimateError> {
    let n = g.vertex_count();
    if n < 2 {
        return Err(EstimateError::TooFewVertices);
    }
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    Ok(g.edge_count() as f64 / pairs)
}

/// Radius estimate: inverts the ball-volume identity at the estimated edge
/// probability and the given dimension estimate.
pub fn estimate_radius(g: &Graph, d_hat: u32) -> Result<f64, EstimateError> {
    let p_hat = estimate_edge_probability(g)?;
    if !(p_hat > 0.0 && p_hat < 1.0) {
        return Err(EstimateError::DegenerateEdgeProbability(p_hat));
    }
    Ok(radius_for_probability(p_hat, d_hat)?)
}

/// Full estimation output for one observed graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationReport {
    pub c_hat: f64,
    pub d_hat: u32,
    pub p_hat: f64,
    /// `None` when the radius inversion is undefined (degenerate `p_hat` or
    /// a radius above 1/2 at `d_hat`).
    pub r_hat: Option<f64>,
    pub triangle_count: u64,
    pub wedge_count: u64,
}

/// Estimates everything at once, reusing one triangle/wedge pass.
pub fn estimation_report(g: &Graph, d_max: u32) -> Result<EstimationReport, EstimateError> {
    if g.vertex_count() < 2 {
        return Err(EstimateError::TooFewVertices);
    }
    let (triangles, wedges) = triangle_wedge_counts(g);
    if wedges == 0 {
        return Err(EstimateError::NoWedges);
    }
    let c_hat = 6.0 * triangles as f64 / wedges as f64;
    let d_hat = invert_clustering(c_hat, d_max)?;
    let p_hat = estimate_edge_probability(g)?;
    let r_hat = if p_hat > 0.0 && p_hat < 1.0 {
        radius_for_probability(p_hat, d_hat).ok()
    } else {
        None
    };
    Ok(EstimationReport {
        c_hat,
        d_hat,
        p_hat,
        r_hat,
        triangle_count: triangles,
        wedge_count: wedges,
    })
}
