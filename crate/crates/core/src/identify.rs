//! Identification of the planted vertices: the isolated-star estimator with
//! an inflated threshold, and the symmetric-difference risk that scores an
//! estimate against the ground truth.

use crate::detect::{isolated_star_profile, DetectError, StarMethod};
use crate::geometry::{kissing_number, GeometryError};
use crate::graph::Graph;
use crate::numerics::{lambert_w0, NumericsError};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error("need n > k >= 1, got n = {n}, k = {k}")]
    InvalidSizes { n: usize, k: usize },
    #[error("edge probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("truth set must be nonempty")]
    EmptyTruth,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Threshold inflation `(1 + epsilon) * log(n/k) / W_0(log(n/k) / (k p e))`:
/// slightly more than the number of planted vertices likely to attach to any
/// single regular vertex, so false positives stay rare.
pub fn xi_threshold(n: usize, k: usize, p: f64, epsilon: f64) -> Result<f64, IdentifyError> {
    if k == 0 || k >= n {
        return Err(IdentifyError::InvalidSizes { n, k });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(IdentifyError::InvalidProbability(p));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(IdentifyError::InvalidEpsilon(epsilon));
    }
    let log_ratio = (n as f64 / k as f64).ln();
    let arg = log_ratio / (k as f64 * p * std::f64::consts::E);
    let w = lambert_w0(arg)?;
    Ok((1.0 + epsilon) * log_ratio / w)
}

/// Output of the isolated-star estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BotnetEstimate {
    /// Every vertex whose star size exceeds `kissing(d) + xi` (sorted).
    pub suspects: Vec<u32>,
    /// The `k` vertices with the largest star sizes, ties broken by lowest
    /// id. The threshold set above can have any size; this variant pins it
    /// to the assumed botnet size.
    pub topk_suspects: Vec<u32>,
    pub threshold_used: f64,
    pub xi: f64,
    pub epsilon: f64,
    /// True when any star size came from the greedy bound.
    pub greedy_used: bool,
}

/// Flags every vertex whose isolated star exceeds `kissing(d) + xi_n` as a
/// suspected planted vertex.
pub fn identify_botnet(
    g: &Graph,
    d: u32,
    k: usize,
    p: f64,
    epsilon: f64,
) -> Result<BotnetEstimate, IdentifyError> {
    identify_botnet_with(g, d, k, p, epsilon, StarMethod::Greedy)
}

pub fn identify_botnet_with(
    g: &Graph,
    d: u32,
    k: usize,
    p: f64,
    epsilon: f64,
    method: StarMethod,
) -> Result<BotnetEstimate, IdentifyError> {
    let xi = xi_threshold(g.vertex_count(), k, p, epsilon)?;
    let threshold = kissing_number(d)? as f64 + xi;
    let profile = isolated_star_profile(g, method)?;
    let suspects: Vec<u32> = profile
        .per_vertex_star_size
        .iter()
        .enumerate()
        .filter(|&(_, &size)| size as f64 > threshold)
        .map(|(v, _)| v as u32)
        .collect();
    let mut ranked: Vec<u32> = (0..g.vertex_count() as u32).collect();
    ranked.sort_by_key(|&v| {
        (
            std::cmp::Reverse(profile.per_vertex_star_size[v as usize]),
            v,
        )
    });
    let topk_suspects = ranked.into_iter().take(k).collect();
    let greedy_used = matches!(method, StarMethod::Greedy) || profile.greedy_fallbacks > 0;
    Ok(BotnetEstimate {
        suspects,
        topk_suspects,
        threshold_used: threshold,
        xi,
        epsilon,
        greedy_used,
    })
}

/// Per-sample identification risk of an estimate against the true planted
/// set: `|estimate △ truth| / (2 |truth|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub value: f64,
    pub missed: usize,
    pub false_positive: usize,
}

pub fn identification_risk(estimate: &[u32], truth: &[u32]) -> Result<RiskScore, IdentifyError> {
    if truth.is_empty() {
        return Err(IdentifyError::EmptyTruth);
    }
    let est: HashSet<u32> = estimate.iter().copied().collect();
    let tru: HashSet<u32> = truth.iter().copied().collect();
    let missed = tru.difference(&est).count();
    let false_positive = est.difference(&tru).count();
    Ok(RiskScore {
        value: (missed + false_positive) as f64 / (2.0 * tru.len() as f64),
        missed,
        false_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::sample::{sample_null, Density, ModelParams};

    /// Bisection oracle for `w e^w = x` on `[-1, 60]`.
    fn lambert_bisect(x: f64) -> f64 {
        let f = |w: f64| w * w.exp() - x;
        let (mut lo, mut hi) = (-1.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn xi_matches_lambert_oracle() {
        // n = 1e4, k = 10, p = 1e-3, eps = 0.1: roughly 1.8.
        let xi = xi_threshold(10_000, 10, 1e-3, 0.1).unwrap();
        let l = (1000.0f64).ln();
        let want = 1.1 * l / lambert_bisect(l / (10.0 * 1e-3 * std::f64::consts::E));
        assert!((xi - want).abs() < 1e-9, "xi {xi} vs oracle {want}");
        assert!((xi - 1.8436).abs() < 1e-3);
    }

    #[test]
    fn xi_satisfies_defining_identity() {
        // xi * W_0(L / (k p e)) = (1 + eps) * L, with L = log(n/k).
        for (n, k, p, eps) in [(10_000usize, 10usize, 1e-3, 0.25), (500, 3, 0.02, 0.1)] {
            let xi = xi_threshold(n, k, p, eps).unwrap();
            let l = (n as f64 / k as f64).ln();
            let w = lambert_bisect(l / (k as f64 * p * std::f64::consts::E));
            assert!((xi * w - (1.0 + eps) * l).abs() < 1e-8);
        }
        // When k p e = L the Lambert argument is 1, so xi = (1+eps)/W_0(1).
        let n = 10_000usize;
        let k = 10usize;
        let l = (n as f64 / k as f64).ln();
        let p = l / (k as f64 * std::f64::consts::E);
        let xi = xi_threshold(n, k, p, 0.1).unwrap();
        assert!((xi - 1.1 * l / lambert_bisect(1.0)).abs() < 1e-9);
        assert!((lambert_bisect(1.0) - 0.567143).abs() < 1e-6);
    }

    #[test]
    fn xi_validation() {
        assert!(matches!(
            xi_threshold(10, 10, 0.1, 0.1),
            Err(IdentifyError::InvalidSizes { n: 10, k: 10 })
        ));
        assert!(xi_threshold(10, 0, 0.1, 0.1).is_err());
        assert!(xi_threshold(10, 2, 0.0, 0.1).is_err());
        assert!(xi_threshold(10, 2, 0.1, 0.0).is_err());
    }

    #[test]
    fn xi_bounded_monotone_schedule() {
        // With k p = n^{-1/2}, xi stays O(1) along a growing schedule.
        let mut prev = 0.0;
        for n in [1_000usize, 10_000, 100_000, 1_000_000] {
            let k = 10usize;
            let p = (n as f64).powf(-0.5) / k as f64;
            let xi = xi_threshold(n, k, p, 0.1).unwrap();
            assert!(
                xi > prev,
                "expected increasing schedule, got {xi} after {prev}"
            );
            assert!(xi < 2.2, "xi {xi} should stay bounded");
            prev = xi;
        }
    }

    #[test]
    fn threshold_monotone_in_epsilon() {
        let params = ModelParams::new(400, 2, Density::AverageDegree(8.0), 0);
        let g = sample_null(&params, 5).unwrap().graph;
        let loose = identify_botnet(&g, 2, 4, 0.02, 0.1).unwrap();
        let tight = identify_botnet(&g, 2, 4, 0.02, 0.9).unwrap();
        let loose_set: HashSet<u32> = loose.suspects.iter().copied().collect();
        for v in &tight.suspects {
            assert!(
                loose_set.contains(v),
                "suspects must shrink as epsilon grows"
            );
        }
        assert!(tight.threshold_used >= loose.threshold_used);
    }

    #[test]
    fn constructed_single_suspect() {
        // One vertex with an edgeless neighborhood of size kissing(2) + 3 = 9;
        // everything else small.
        let mut edges: Vec<(u32, u32)> = (1..=9).map(|v| (0u32, v)).collect();
        edges.push((10, 11));
        let g = Graph::from_edges(12, edges).unwrap();
        // xi in (0, 3) for these parameters.
        let est = identify_botnet(&g, 2, 1, 0.05, 0.1).unwrap();
        assert!(est.xi > 0.0 && est.xi < 3.0, "xi = {}", est.xi);
        assert_eq!(est.suspects, vec![0]);
        assert_eq!(est.topk_suspects, vec![0]);
    }

    #[test]
    fn null_sample_yields_no_suspects_d2() {
        let params = ModelParams::new(1500, 2, Density::AverageDegree(8.0), 0);
        for seed in 0..3 {
            let g = sample_null(&params, seed).unwrap().graph;
            let est =
                identify_botnet_with(&g, 2, 5, 0.005, 0.1, StarMethod::Exact { cap: 64 }).unwrap();
            assert!(est.suspects.is_empty());
        }
    }

    #[test]
    fn risk_examples() {
        let truth = [1u32, 2, 3, 4];
        let same = identification_risk(&truth, &truth).unwrap();
        assert_eq!(same.value, 0.0);
        assert_eq!((same.missed, same.false_positive), (0, 0));

        let disjoint = identification_risk(&[5, 6, 7, 8], &truth).unwrap();
        assert_eq!(disjoint.value, 1.0);

        // Half the truth found, no false positives.
        let half = identification_risk(&[1, 2], &truth).unwrap();
        assert_eq!(half.value, 0.25);
        assert_eq!((half.missed, half.false_positive), (2, 0));

        assert!(matches!(
            identification_risk(&[1], &[]),
            Err(IdentifyError::EmptyTruth)
        ));
    }

    #[test]
    fn risk_matches_set_oracle() {
        use rand::Rng;
        let mut rng = crate::sample::derive_rng(8, &[3]);
        for _ in 0..50 {
            let est: Vec<u32> = (0..20).filter(|_| rng.gen::<bool>()).collect();
            let tru: Vec<u32> = (0..20).filter(|_| rng.gen::<bool>()).collect();
            if tru.is_empty() {
                continue;
            }
            let est_set: HashSet<u32> = est.iter().copied().collect();
            let tru_set: HashSet<u32> = tru.iter().copied().collect();
            let sym = est_set.symmetric_difference(&tru_set).count();
            let got = identification_risk(&est, &tru).unwrap();
            assert_eq!(got.value, sym as f64 / (2.0 * tru_set.len() as f64));
        }
    }
}
