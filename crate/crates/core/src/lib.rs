//! Detection and identification of a planted set of uniformly-wired vertices
//! inside a random geometric graph on the d-dimensional unit torus.
//!
//! Under the null model, `n` vertices get i.i.d. uniform torus locations and
//! are connected exactly when their wrap-around distance is at most `r`.
//! Under the alternative, `k` planted vertices ignore the geometry and
//! connect to every other vertex independently with the same marginal edge
//! probability `p`, leaving the expected edge count unchanged.
//!
//! The crate provides:
//! - [`sample`]: reproducible samplers for both models;
//! - [`detect`]: the isolated-star test (zero type-1 error by a kissing
//!   number bound) and the average-distance test, plus Monte Carlo
//!   calibration of either statistic;
//! - [`estimate`]: dimension, edge-probability, and radius estimators;
//! - [`identify`]: the isolated-star identifier with its Lambert-W inflated
//!   threshold and the symmetric-difference risk;
//! - [`experiment`]: seeded, deterministic power/risk sweeps with CSV output;
//! - [`geometry`] / [`graph`] / [`numerics`]: the supporting machinery.

pub mod detect;
pub mod estimate;
pub mod experiment;
pub mod geometry;
pub mod graph;
pub mod identify;
pub mod numerics;
pub mod sample;

pub use detect::{
    average_distance_test, isolated_star_profile, isolated_star_size, isolated_star_test,
    monte_carlo_threshold, CalibrationEntry, CalibrationTable, IsolatedStarProfile, StarMethod,
    StatName, TestVerdict, ThresholdSource,
};
pub use estimate::{
    analytic_clustering, empirical_clustering, estimate_dimension, estimate_edge_probability,
    estimate_radius, estimation_report, EstimationReport,
};
pub use experiment::{
    run_calibrate, run_histogram, run_isolation_probe, run_null_calibration_audit, run_power_sweep,
    run_risk_sweep, ExperimentConfig, HistogramReport, PowerReport, PowerRow, RiskReport, RiskRow,
};
pub use geometry::{
    kissing_number, probability_for_radius, radius_for_probability, torus_distance, TorusPoint,
};
pub use graph::{read_edge_list, write_edge_list, DistanceSummary, Graph};
pub use identify::{identification_risk, identify_botnet, xi_threshold, BotnetEstimate, RiskScore};
pub use numerics::{lambert_w0, log_gamma, regularized_incomplete_beta};
pub use sample::{sample_alternative, sample_null, Density, ModelParams, SampleOutput};
