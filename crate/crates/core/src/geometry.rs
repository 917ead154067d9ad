//! Torus metric, radius/probability conversion, and kissing-number data.
//!
//! Vertices live on the unit torus `[0,1)^d`; two points are adjacent in the
//! geometric model when their wrap-around Euclidean distance is at most `r`,
//! and the ball-volume identity `p = (sqrt(pi) r)^d / Gamma(d/2 + 1)` links
//! the radius to the marginal edge probability.

use crate::numerics::{log_gamma, NumericsError};
use std::sync::OnceLock;
use thiserror::Error;

#[allow(clippy::excessive_precision)]
const SQRT_PI: f64 = 1.7724538509055160273;

/// Growth base of the exponential kissing-number upper bound used beyond the
/// tabulated dimensions.
const KISSING_GROWTH_BASE: f64 = 1.3233;

/// Largest dimension covered by the bundled table.
pub const KISSING_TABLE_MAX_DIM: u32 = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimension must be >= 2, got {0}")]
    DimensionTooSmall(u32),
    #[error("radius must lie in (0, 1/2], got {0}")]
    RadiusOutOfRange(f64),
    #[error("probability must lie in (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("radius {radius} for p={p} at d={d} exceeds 1/2")]
    RadiusExceedsHalf { p: f64, d: u32, radius: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A location in `[0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Wraps every coordinate into `[0,1)`.
    pub fn new(coords: Vec<f64>) -> Self {
        let coords = coords.into_iter().map(|c| c.rem_euclid(1.0)).collect();
        TorusPoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Wrap-around Euclidean distance between two torus points.
pub fn torus_distance(x: &TorusPoint, y: &TorusPoint) -> Result<f64, GeometryError> {
    if x.dim() != y.dim() {
        return Err(GeometryError::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(torus_distance_sq_coords(x.coords(), y.coords()).sqrt())
}

/// Squared torus distance on raw coordinate slices (callers guarantee equal
/// lengths). Hot path for the samplers.
#[inline]
pub(crate) fn torus_distance_sq_coords(x: &[f64], y: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (a, b) in x.iter().zip(y) {
        let diff = (a - b).abs();
        let wrapped = diff.min(1.0 - diff);
        sum += wrapped * wrapped;
    }
    sum
}

/// Marginal edge probability for connection radius `r` in dimension `d`:
/// the volume of a radius-`r` ball on the unit torus.
pub fn probability_for_radius(r: f64, d: u32) -> Result<f64, GeometryError> {
    if d < 2 {
        return Err(GeometryError::DimensionTooSmall(d));
    }
    if !(r > 0.0 && r <= 0.5) {
        return Err(GeometryError::RadiusOutOfRange(r));
    }
    let ln_p = d as f64 * (SQRT_PI * r).ln() - log_gamma(d as f64 / 2.0 + 1.0)?;
    Ok(ln_p.exp())
}

/// Connection radius with marginal edge probability `p` in dimension `d`.
///
/// Errors when the implied radius exceeds 1/2, where a torus ball would
/// self-overlap and the volume formula stops being valid.
pub fn radius_for_probability(p: f64, d: u32) -> Result<f64, GeometryError> {
    if d < 2 {
        return Err(GeometryError::DimensionTooSmall(d));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(GeometryError::ProbabilityOutOfRange(p));
    }
    let ln_r = (p.ln() + log_gamma(d as f64 / 2.0 + 1.0)?) / d as f64 - SQRT_PI.ln();
    let r = ln_r.exp();
    if r > 0.5 {
        // Round-trip rounding can land a hair above the boundary.
        if r <= 0.5 * (1.0 + 1e-12) {
            return Ok(0.5);
        }
        return Err(GeometryError::RadiusExceedsHalf { p, d, radius: r });
    }
    Ok(r)
}

fn kissing_table() -> &'static Vec<(u32, u64)> {
    static TABLE: OnceLock<Vec<(u32, u64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw = include_str!("../data/kissing_numbers.txt");
        let mut entries = Vec::new();
        for line in raw.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let d: u32 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .expect("bundled kissing table: bad dimension field");
            let v: u64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .expect("bundled kissing table: bad value field");
            entries.push((d, v));
        }
        entries.sort_unstable();
        assert!(
            entries
                .iter()
                .map(|&(d, _)| d)
                .eq(2..=KISSING_TABLE_MAX_DIM),
            "bundled kissing table must cover dimensions 2..=24"
        );
        entries
    })
}

/// Kissing number (exact or best-known upper bound) in dimension `d >= 2`.
///
/// Dimensions 2..=24 come from the bundled table; beyond that the
/// exponential bound `ceil(1.3233^d)` is used.
pub fn kissing_number(d: u32) -> Result<u64, GeometryError> {
    if d < 2 {
        return Err(GeometryError::DimensionTooSmall(d));
    }
    if d <= KISSING_TABLE_MAX_DIM {
        let table = kissing_table();
        return Ok(table[(d - 2) as usize].1);
    }
    let bound = KISSING_GROWTH_BASE.powi(d as i32).ceil();
    if bound >= u64::MAX as f64 {
        return Ok(u64::MAX);
    }
    Ok(bound as u64)
}
