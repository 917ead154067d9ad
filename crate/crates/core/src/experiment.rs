//! Experiment harness: JSON-configured power sweeps, identification-risk
//! sweeps, null calibration audits, statistic histograms, and an isolation
//! probe, all emitting fixed-schema CSV.
//!
//! Every sweep is deterministic given `(config, seed)`: replicate generators
//! are derived from the seed, the grid point, a purpose tag, and the
//! replicate index, and results reduce in replicate order, so worker count
//! never changes the output bytes.

use crate::detect::{
    average_distance_threshold, crosses_threshold, monte_carlo_calibrate_both,
    monte_carlo_threshold, CalibrationEntry, CalibrationTable, DetectError, StarMethod, StatName,
    StatOptions, StatPair,
};
use crate::estimate::{estimation_report, EstimateError};
use crate::geometry::{kissing_number, GeometryError};
use crate::identify::{identification_risk, xi_threshold, IdentifyError};
use crate::sample::{
    derive_stream, sample_alternative, sample_null, Density, ModelParams, ParamError, SampleOutput,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parameter estimation produced no usable radius at {0}")]
    DegenerateEstimate(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Power,
    Risk,
    Calibrate,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Star,
    Distance,
}

impl TestKind {
    pub fn stat(self) -> StatName {
        match self {
            TestKind::Star => StatName::MaxStar,
            TestKind::Distance => StatName::AvgDistance,
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestKind::Star => write!(f, "star"),
            TestKind::Distance => write!(f, "distance"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSourceMode {
    /// Analytic thresholds fed with parameters estimated from each sample.
    #[default]
    AnalyticEstimated,
    /// Monte Carlo thresholds calibrated with the true parameters.
    MonteCarlo,
}

impl std::fmt::Display for ThresholdSourceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdSourceMode::AnalyticEstimated => write!(f, "analytic_estimated"),
            ThresholdSourceMode::MonteCarlo => write!(f, "monte_carlo"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StarMethodKind {
    #[default]
    Greedy,
    Exact,
    Hybrid,
}

/// Sweep configuration; deserialized from JSON by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: Vec<usize>,
    pub d: Vec<u32>,
    /// Average degrees `np`; each grid point resolves `p = np / n`.
    pub avg_degree: Vec<f64>,
    pub k: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "default_tests")]
    pub tests: Vec<TestKind>,
    #[serde(default)]
    pub threshold_source: ThresholdSourceMode,
    #[serde(default = "default_calibration_replicates")]
    pub calibration_replicates: usize,
    #[serde(default)]
    pub star_method: StarMethodKind,
    #[serde(default = "default_exact_cap")]
    pub exact_cap: usize,
    #[serde(default = "default_d_max")]
    pub d_max: u32,
    /// Sample this many vertex pairs for the distance statistic instead of
    /// the exact all-pairs computation. Unset = exact (the reference mode).
    #[serde(default)]
    pub distance_pair_sample: Option<u64>,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
}

fn default_alphas() -> Vec<f64> {
    vec![0.05]
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_tests() -> Vec<TestKind> {
    vec![TestKind::Star, TestKind::Distance]
}
fn default_calibration_replicates() -> usize {
    2000
}
fn default_exact_cap() -> usize {
    32
}
fn default_d_max() -> u32 {
    64
}
fn default_histogram_bins() -> usize {
    16
}

impl ExperimentConfig {
    pub fn star_method(&self) -> StarMethod {
        match self.star_method {
            StarMethodKind::Greedy => StarMethod::Greedy,
            StarMethodKind::Exact => StarMethod::Exact {
                cap: self.exact_cap,
            },
            StarMethodKind::Hybrid => StarMethod::Hybrid {
                cap: self.exact_cap,
            },
        }
    }

    fn stat_options(&self) -> StatOptions {
        StatOptions {
            star_method: self.star_method(),
            distance_pair_sample: self.distance_pair_sample,
        }
    }

    fn validate_common(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.n.is_empty() || self.d.is_empty() || self.avg_degree.is_empty() || self.k.is_empty()
        {
            return fail("grid lists (n, d, avg_degree, k) must be nonempty".into());
        }
        if self.replicates == 0 {
            return fail("replicates must be >= 1".into());
        }
        if self.tests.is_empty() {
            return fail("tests must be nonempty".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return fail("alphas must be nonempty with every value in (0, 1)".into());
        }
        Ok(())
    }

    fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &n in &self.n {
            for &d in &self.d {
                for &np in &self.avg_degree {
                    for &k in &self.k {
                        points.push(GridPoint { n, d, np, k });
                    }
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub d: u32,
    pub np: f64,
    pub k: usize,
}

impl GridPoint {
    fn params(&self) -> ModelParams {
        ModelParams::new(self.n, self.d, Density::AverageDegree(self.np), self.k)
    }

    fn stream_tag(&self) -> u64 {
        derive_stream(
            STREAM_GRID,
            &[
                self.n as u64,
                self.d as u64,
                self.np.to_bits(),
                self.k as u64,
            ],
        )
    }

    /// Calibration is a property of the null model only, so the stream (and
    /// the memo key) ignore `k`: every grid point sharing `(n, d, np)` sees
    /// the same thresholds.
    fn calibration_key(&self) -> (usize, u32, u64) {
        (self.n, self.d, self.np.to_bits())
    }

    fn label(&self) -> String {
        format!("n={}, d={}, np={}, k={}", self.n, self.d, self.np, self.k)
    }
}

const STREAM_GRID: u64 = 0x67726964;
const STREAM_POWER_REP: u64 = 0x706f77;
const STREAM_CAL_SEED: u64 = 0x63616c73;
const STREAM_RISK_REP: u64 = 0x72736b;
const STREAM_HIST: u64 = 0x68697374;
const STREAM_ISOLATION_REP: u64 = 0x743170;

/// One line of a power sweep (or type-1 audit when `k = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub d: u32,
    pub n: usize,
    pub np: f64,
    pub k: usize,
    pub test: TestKind,
    pub threshold_source: ThresholdSourceMode,
    /// Nominal level for Monte Carlo thresholds; analytic rows have none.
    pub alpha: Option<f64>,
    pub replicates: usize,
    pub rejections: usize,
    pub power: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PowerReport {
    pub rows: Vec<PowerRow>,
    /// Human-readable notes for grid points skipped as infeasible.
    pub skipped: Vec<String>,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    let z = 1.959963984540054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let margin = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The score interval always contains p; guard the float rounding at the
    // clamped endpoints.
    let lo = ((center - margin) / denom).max(0.0).min(p);
    let hi = ((center + margin) / denom).min(1.0).max(p);
    (lo, hi)
}

fn sample_any(params: &ModelParams, seed: u64) -> Result<SampleOutput, ParamError> {
    if params.k == 0 {
        sample_null(params, seed)
    } else {
        sample_alternative(params, seed)
    }
}

/// Rejection decisions for one replicate under the analytic-estimated scheme.
struct AnalyticOutcome {
    star_reject: bool,
    dist_reject: bool,
}

/// Power sweep: for every grid point and selected test, the fraction of
/// replicates rejected. With `k = 0` grid points this measures type-1 error.
/// Infeasible grid points (radius above 1/2) are skipped and reported in
/// `skipped`.
pub fn run_power_sweep(config: &ExperimentConfig) -> Result<PowerReport, ExperimentError> {
    if config.mode != Mode::Power {
        return Err(ExperimentError::InvalidConfig(format!(
            "power sweep requires mode \"power\", got {:?}",
            config.mode
        )));
    }
    power_sweep_impl(config)
}

/// Type-1 audit: a power sweep restricted to null-model grid points.
pub fn run_null_calibration_audit(
    config: &ExperimentConfig,
) -> Result<PowerReport, ExperimentError> {
    if config.k.iter().any(|&k| k != 0) {
        return Err(ExperimentError::InvalidConfig(
            "null calibration audit requires k = 0 everywhere".into(),
        ));
    }
    power_sweep_impl(config)
}

type CalibrationMemo = std::collections::HashMap<
    (usize, u32, u64),
    (Option<CalibrationEntry>, Option<CalibrationEntry>),
>;

fn power_sweep_impl(config: &ExperimentConfig) -> Result<PowerReport, ExperimentError> {
    config.validate_common()?;
    let mut report = PowerReport::default();
    let mut memo = CalibrationMemo::new();
    for gp in config.grid() {
        let params = gp.params();
        match params.resolve() {
            Err(ParamError::Geometry(GeometryError::RadiusExceedsHalf { radius, .. })) => {
                report.skipped.push(format!(
                    "skipped infeasible grid point ({}): r = {radius:.4} > 1/2",
                    gp.label()
                ));
                continue;
            }
            Err(e) => return Err(e.into()),
            Ok(_) => {}
        }
        match config.threshold_source {
            ThresholdSourceMode::AnalyticEstimated => report
                .rows
                .extend(power_point_analytic(config, &gp, &params)?),
            ThresholdSourceMode::MonteCarlo => report
                .rows
                .extend(power_point_monte_carlo(config, &gp, &params, &mut memo)?),
        }
    }
    Ok(report)
}

fn power_point_analytic(
    config: &ExperimentConfig,
    gp: &GridPoint,
    params: &ModelParams,
) -> Result<Vec<PowerRow>, ExperimentError> {
    let want_star = config.tests.contains(&TestKind::Star);
    let want_dist = config.tests.contains(&TestKind::Distance);
    let tag = gp.stream_tag();
    let opts = config.stat_options();
    let outcomes: Result<Vec<AnalyticOutcome>, ExperimentError> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_stream(config.seed, &[tag, STREAM_POWER_REP, rep]);
            let sample = sample_any(params, seed)?;
            let report = estimation_report(&sample.graph, config.d_max)?;
            let (star_stat, dist_stat, _) =
                crate::detect::graph_statistics(&sample.graph, &opts, want_star, want_dist, seed)?;
            let star_reject = match star_stat {
                Some(stat) => stat > kissing_number(report.d_hat)? as f64,
                None => false,
            };
            let dist_reject = match dist_stat {
                Some(stat) => {
                    let r_hat = report
                        .r_hat
                        .ok_or_else(|| ExperimentError::DegenerateEstimate(gp.label()))?;
                    stat < average_distance_threshold(report.d_hat, r_hat, config.epsilon)
                }
                None => false,
            };
            Ok(AnalyticOutcome {
                star_reject,
                dist_reject,
            })
        })
        .collect();
    let outcomes = outcomes?;
    let mut rows = Vec::new();
    for &test in &config.tests {
        let rejections = outcomes
            .iter()
            .filter(|o| match test {
                TestKind::Star => o.star_reject,
                TestKind::Distance => o.dist_reject,
            })
            .count();
        rows.push(make_row(
            gp,
            test,
            ThresholdSourceMode::AnalyticEstimated,
            None,
            config.replicates,
            rejections,
        ));
    }
    Ok(rows)
}

fn power_point_monte_carlo(
    config: &ExperimentConfig,
    gp: &GridPoint,
    params: &ModelParams,
    memo: &mut CalibrationMemo,
) -> Result<Vec<PowerRow>, ExperimentError> {
    let want_star = config.tests.contains(&TestKind::Star);
    let want_dist = config.tests.contains(&TestKind::Distance);
    let tag = gp.stream_tag();
    let opts = config.stat_options();
    let (star_cal, dist_cal) = match memo.get(&gp.calibration_key()) {
        Some(entry) => entry.clone(),
        None => {
            let entry = calibrate_point(config, gp, want_star, want_dist)?;
            memo.insert(gp.calibration_key(), entry.clone());
            entry
        }
    };

    let outcomes: Result<Vec<StatPair>, ExperimentError> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_stream(config.seed, &[tag, STREAM_POWER_REP, rep]);
            let sample = sample_any(params, seed)?;
            let (star, dist, _) =
                crate::detect::graph_statistics(&sample.graph, &opts, want_star, want_dist, seed)?;
            Ok((star, dist))
        })
        .collect();
    let outcomes = outcomes?;
    let mut rows = Vec::new();
    for &test in &config.tests {
        let entry = match test {
            TestKind::Star => star_cal.as_ref().expect("calibrated star"),
            TestKind::Distance => dist_cal.as_ref().expect("calibrated distance"),
        };
        for &alpha in &config.alphas {
            let threshold = entry
                .threshold(alpha)
                .expect("threshold present for requested alpha");
            let rejections = outcomes
                .iter()
                .filter(|(star, dist)| {
                    let stat = match test {
                        TestKind::Star => star.unwrap(),
                        TestKind::Distance => dist.unwrap(),
                    };
                    crosses_threshold(test.stat(), stat, threshold)
                })
                .count();
            rows.push(make_row(
                gp,
                test,
                ThresholdSourceMode::MonteCarlo,
                Some(alpha),
                config.replicates,
                rejections,
            ));
        }
    }
    Ok(rows)
}

/// Clairvoyant calibration at a grid point: null samples with the true
/// `(n, d, p)`, shared across both statistics.
fn calibrate_point(
    config: &ExperimentConfig,
    gp: &GridPoint,
    want_star: bool,
    want_dist: bool,
) -> Result<(Option<CalibrationEntry>, Option<CalibrationEntry>), ExperimentError> {
    let null_params = ModelParams::new(gp.n, gp.d, Density::AverageDegree(gp.np), 0);
    let (key_n, key_d, key_np) = gp.calibration_key();
    let cal_seed = derive_stream(
        config.seed,
        &[key_n as u64, key_d as u64, key_np, STREAM_CAL_SEED],
    );
    let opts = config.stat_options();
    if want_star && want_dist {
        let (s, d) = monte_carlo_calibrate_both(
            &null_params,
            config.calibration_replicates,
            &config.alphas,
            cal_seed,
            &opts,
        )?;
        Ok((Some(s), Some(d)))
    } else if want_star {
        let s = monte_carlo_threshold(
            StatName::MaxStar,
            &null_params,
            config.calibration_replicates,
            &config.alphas,
            cal_seed,
            &opts,
        )?;
        Ok((Some(s), None))
    } else {
        let d = monte_carlo_threshold(
            StatName::AvgDistance,
            &null_params,
            config.calibration_replicates,
            &config.alphas,
            cal_seed,
            &opts,
        )?;
        Ok((None, Some(d)))
    }
}

fn make_row(
    gp: &GridPoint,
    test: TestKind,
    source: ThresholdSourceMode,
    alpha: Option<f64>,
    replicates: usize,
    rejections: usize,
) -> PowerRow {
    let power = rejections as f64 / replicates as f64;
    let (lo, hi) = wilson_interval(rejections, replicates);
    PowerRow {
        d: gp.d,
        n: gp.n,
        np: gp.np,
        k: gp.k,
        test,
        threshold_source: source,
        alpha,
        replicates,
        rejections,
        power,
        wilson_lo: lo,
        wilson_hi: hi,
    }
}

/// Calibration tables for every grid point (null model), for persistence.
pub fn run_calibrate(
    config: &ExperimentConfig,
) -> Result<(CalibrationTable, Vec<String>), ExperimentError> {
    if config.mode != Mode::Calibrate {
        return Err(ExperimentError::InvalidConfig(format!(
            "calibration requires mode \"calibrate\", got {:?}",
            config.mode
        )));
    }
    config.validate_common()?;
    if config.k.iter().any(|&k| k != 0) {
        return Err(ExperimentError::InvalidConfig(
            "calibration samples the null model; set k = [0]".into(),
        ));
    }
    if config.replicates < 100 {
        return Err(ExperimentError::InvalidConfig(
            "calibration needs at least 100 replicates".into(),
        ));
    }
    let mut table = CalibrationTable::default();
    let mut skipped = Vec::new();
    for gp in config.grid() {
        if let Err(ParamError::Geometry(GeometryError::RadiusExceedsHalf { radius, .. })) =
            gp.params().resolve()
        {
            skipped.push(format!(
                "skipped infeasible grid point ({}): r = {radius:.4} > 1/2",
                gp.label()
            ));
            continue;
        }
        let want_star = config.tests.contains(&TestKind::Star);
        let want_dist = config.tests.contains(&TestKind::Distance);
        let with_reps = ExperimentConfig {
            calibration_replicates: config.replicates,
            ..config.clone()
        };
        let (star, dist) = calibrate_point(&with_reps, &gp, want_star, want_dist)?;
        if let Some(entry) = star {
            table.insert(entry);
        }
        if let Some(entry) = dist {
            table.insert(entry);
        }
    }
    Ok((table, skipped))
}

/// One line of an identification-risk sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub d: u32,
    pub n: usize,
    pub np: f64,
    pub k: usize,
    pub epsilon: f64,
    pub replicates: usize,
    pub mean_risk: f64,
    pub se_risk: f64,
    pub mean_missed: f64,
    pub mean_false_positive: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    pub skipped: Vec<String>,
}

/// Identification-risk sweep: mean symmetric-difference risk of the
/// isolated-star estimator over replicates, per grid point. The threshold
/// uses the true `p` of each grid point.
pub fn run_risk_sweep(config: &ExperimentConfig) -> Result<RiskReport, ExperimentError> {
    if config.mode != Mode::Risk {
        return Err(ExperimentError::InvalidConfig(format!(
            "risk sweep requires mode \"risk\", got {:?}",
            config.mode
        )));
    }
    config.validate_common()?;
    if config.k.contains(&0) {
        return Err(ExperimentError::InvalidConfig(
            "risk sweep requires k >= 1 on the whole grid".into(),
        ));
    }
    let mut report = RiskReport::default();
    for gp in config.grid() {
        let params = gp.params();
        let resolved = match params.resolve() {
            Err(ParamError::Geometry(GeometryError::RadiusExceedsHalf { radius, .. })) => {
                report.skipped.push(format!(
                    "skipped infeasible grid point ({}): r = {radius:.4} > 1/2",
                    gp.label()
                ));
                continue;
            }
            Err(e) => return Err(e.into()),
            Ok(r) => r,
        };
        let tag = gp.stream_tag();
        let method = config.star_method();
        let xi = xi_threshold(gp.n, gp.k, resolved.p, config.epsilon)?;
        let threshold = kissing_number(gp.d)? as f64 + xi;
        let risks: Result<Vec<(f64, usize, usize)>, ExperimentError> = (0..config.replicates
            as u64)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_stream(config.seed, &[tag, STREAM_RISK_REP, rep]);
                let sample = sample_alternative(&params, seed)?;
                let profile = crate::detect::isolated_star_profile(&sample.graph, method)?;
                let suspects: Vec<u32> = profile
                    .per_vertex_star_size
                    .iter()
                    .enumerate()
                    .filter(|&(_, &s)| s as f64 > threshold)
                    .map(|(v, _)| v as u32)
                    .collect();
                let score = identification_risk(&suspects, &sample.botnet)?;
                Ok((score.value, score.missed, score.false_positive))
            })
            .collect();
        let risks = risks?;
        let reps = risks.len() as f64;
        let mean = risks.iter().map(|r| r.0).sum::<f64>() / reps;
        let var = risks.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
        report.rows.push(RiskRow {
            d: gp.d,
            n: gp.n,
            np: gp.np,
            k: gp.k,
            epsilon: config.epsilon,
            replicates: config.replicates,
            mean_risk: mean,
            se_risk: (var / reps).sqrt(),
            mean_missed: risks.iter().map(|r| r.1 as f64).sum::<f64>() / reps,
            mean_false_positive: risks.iter().map(|r| r.2 as f64).sum::<f64>() / reps,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Null,
    Alternative,
}

impl std::fmt::Display for Series {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Series::Null => write!(f, "null"),
            Series::Alternative => write!(f, "alternative"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub test: TestKind,
    pub series: Series,
    pub x: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMark {
    pub test: TestKind,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct HistogramReport {
    pub rows: Vec<HistogramRow>,
    pub thresholds: Vec<ThresholdMark>,
}

/// Empirical distributions of the selected statistics under the null and the
/// alternative at one grid point, with the null-quantile threshold marked.
/// The config must list exactly one `n`, `d`, `avg_degree`, and `k` must be
/// `[0, K]` for some `K > 0`.
pub fn run_histogram(config: &ExperimentConfig) -> Result<HistogramReport, ExperimentError> {
    if config.mode != Mode::Histogram {
        return Err(ExperimentError::InvalidConfig(format!(
            "histogram requires mode \"histogram\", got {:?}",
            config.mode
        )));
    }
    config.validate_common()?;
    if config.n.len() != 1 || config.d.len() != 1 || config.avg_degree.len() != 1 {
        return Err(ExperimentError::InvalidConfig(
            "histogram mode takes a single (n, d, avg_degree) point".into(),
        ));
    }
    let mut ks = config.k.clone();
    ks.sort_unstable();
    if ks.len() != 2 || ks[0] != 0 || ks[1] == 0 {
        return Err(ExperimentError::InvalidConfig(
            "histogram mode requires k = [0, K] with K > 0".into(),
        ));
    }
    if config.histogram_bins == 0 {
        return Err(ExperimentError::InvalidConfig(
            "histogram_bins must be >= 1".into(),
        ));
    }
    let alt_k = ks[1];
    let want_star = config.tests.contains(&TestKind::Star);
    let want_dist = config.tests.contains(&TestKind::Distance);
    let opts = config.stat_options();

    let mut stats: Vec<(Series, Vec<f64>, Vec<f64>)> = Vec::new();
    for (series, k) in [(Series::Null, 0usize), (Series::Alternative, alt_k)] {
        let gp = GridPoint {
            n: config.n[0],
            d: config.d[0],
            np: config.avg_degree[0],
            k,
        };
        let params = gp.params();
        params.resolve()?;
        let tag = gp.stream_tag();
        let outcome: Result<Vec<StatPair>, ExperimentError> = (0..config.replicates as u64)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_stream(config.seed, &[tag, STREAM_HIST, rep]);
                let sample = sample_any(&params, seed)?;
                let (star, dist, _) = crate::detect::graph_statistics(
                    &sample.graph,
                    &opts,
                    want_star,
                    want_dist,
                    seed,
                )?;
                Ok((star, dist))
            })
            .collect();
        let outcome = outcome?;
        stats.push((
            series,
            outcome.iter().filter_map(|o| o.0).collect(),
            outcome.iter().filter_map(|o| o.1).collect(),
        ));
    }

    let mut report = HistogramReport::default();
    for &test in &config.tests {
        let pick = |entry: &(Series, Vec<f64>, Vec<f64>)| match test {
            TestKind::Star => entry.1.clone(),
            TestKind::Distance => entry.2.clone(),
        };
        let null_values = pick(&stats[0]);
        let alt_values = pick(&stats[1]);
        match test {
            TestKind::Star => {
                for (series, values) in [
                    (Series::Null, &null_values),
                    (Series::Alternative, &alt_values),
                ] {
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) as i64;
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) as i64;
                    for bin in lo..=hi {
                        let count = values.iter().filter(|&&v| v as i64 == bin).count() as u64;
                        report.rows.push(HistogramRow {
                            test,
                            series,
                            x: bin as f64,
                            count,
                        });
                    }
                }
            }
            TestKind::Distance => {
                let all: Vec<f64> = null_values.iter().chain(&alt_values).copied().collect();
                let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let bins = config.histogram_bins;
                let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
                for (series, values) in [
                    (Series::Null, &null_values),
                    (Series::Alternative, &alt_values),
                ] {
                    let mut counts = vec![0u64; bins];
                    for &v in values {
                        let idx = (((v - lo) / width) as usize).min(bins - 1);
                        counts[idx] += 1;
                    }
                    for (i, &count) in counts.iter().enumerate() {
                        report.rows.push(HistogramRow {
                            test,
                            series,
                            x: lo + (i as f64 + 0.5) * width,
                            count,
                        });
                    }
                }
            }
        }
        // Null-quantile threshold at the first configured level.
        let alpha = config.alphas[0];
        let mut sorted = null_values;
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
        let q = match test {
            TestKind::Star => 1.0 - alpha,
            TestKind::Distance => alpha,
        };
        let rank = ((q * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize).min(sorted.len());
        report.thresholds.push(ThresholdMark {
            test,
            alpha,
            value: sorted[rank - 1],
        });
    }
    Ok(report)
}

/// Estimate of the probability that every planted vertex is isolated, with
/// its analytic references. The planted degrees are Binomial(n-1, p), so the
/// frequency should track `exp(-n p k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationProbe {
    pub n: usize,
    pub np: f64,
    pub k: usize,
    pub replicates: usize,
    pub isolated_runs: usize,
    pub frequency: f64,
    /// `exp(-n p k)`.
    pub reference: f64,
    /// Exact isolation probability `(1-p)^{k(n-k) + k(k-1)/2}`.
    pub exact: f64,
}

/// Measures how often all planted vertices are isolated in alternative
/// samples (embedding dimension 2; the planted degrees do not depend on it).
pub fn run_isolation_probe(
    n: usize,
    np: f64,
    k: usize,
    replicates: usize,
    seed: u64,
) -> Result<IsolationProbe, ExperimentError> {
    if replicates == 0 {
        return Err(ExperimentError::InvalidConfig(
            "replicates must be >= 1".into(),
        ));
    }
    let params = ModelParams::new(n, 2, Density::AverageDegree(np), k);
    let resolved = params.resolve()?;
    if k == 0 {
        return Err(ExperimentError::InvalidConfig(
            "isolation probe requires k >= 1".into(),
        ));
    }
    let isolated: Result<Vec<bool>, ExperimentError> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let sample =
                sample_alternative(&params, derive_stream(seed, &[STREAM_ISOLATION_REP, rep]))?;
            Ok(sample.botnet.iter().all(|&b| sample.graph.degree(b) == 0))
        })
        .collect();
    let isolated = isolated?;
    let isolated_runs = isolated.iter().filter(|&&b| b).count();
    let p = resolved.p;
    let exponent = (k * (n - k)) as f64 + (k * (k - 1)) as f64 / 2.0;
    Ok(IsolationProbe {
        n,
        np,
        k,
        replicates,
        isolated_runs,
        frequency: isolated_runs as f64 / replicates as f64,
        reference: (-np * k as f64).exp(),
        exact: (1.0 - p).powf(exponent),
    })
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Fixed-schema CSV for power rows (header + one line per row, LF endings).
pub fn power_csv(rows: &[PowerRow]) -> String {
    let mut out = String::from(
        "d,n,np,k,test,threshold_source,alpha,replicates,rejections,power,wilson_lo,wilson_hi\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.d,
            r.n,
            r.np,
            r.k,
            r.test,
            r.threshold_source,
            csv_opt(r.alpha),
            r.replicates,
            r.rejections,
            r.power,
            r.wilson_lo,
            r.wilson_hi
        ));
    }
    out
}

/// Fixed-schema CSV for risk rows.
pub fn risk_csv(rows: &[RiskRow]) -> String {
    let mut out = String::from(
        "d,n,np,k,epsilon,replicates,mean_risk,se_risk,mean_missed,mean_false_positive\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.d,
            r.n,
            r.np,
            r.k,
            r.epsilon,
            r.replicates,
            r.mean_risk,
            r.se_risk,
            r.mean_missed,
            r.mean_false_positive
        ));
    }
    out
}

/// Fixed-schema CSV for histograms. Bin rows carry an empty alpha; threshold
/// rows use series `threshold` with the alpha they were computed at.
pub fn histogram_csv(report: &HistogramReport) -> String {
    let mut out = String::from("test,series,alpha,x,count\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},,{},{}\n", r.test, r.series, r.x, r.count));
    }
    for t in &report.thresholds {
        out.push_str(&format!("{},threshold,{},{},0\n", t.test, t.alpha, t.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            n: vec![120],
            d: vec![2],
            avg_degree: vec![6.0],
            k: vec![4],
            replicates: 12,
            alphas: vec![0.1],
            epsilon: 0.1,
            seed: 31,
            tests: vec![TestKind::Star, TestKind::Distance],
            threshold_source: ThresholdSourceMode::AnalyticEstimated,
            calibration_replicates: 120,
            star_method: StarMethodKind::Greedy,
            exact_cap: 32,
            d_max: 8,
            distance_pair_sample: None,
            histogram_bins: 8,
        }
    }

    #[test]
    fn wilson_contains_point_estimate() {
        for (s, n) in [(0usize, 10usize), (5, 10), (10, 10), (42, 300)] {
            let (lo, hi) = wilson_interval(s, n);
            let p = s as f64 / n as f64;
            assert!(lo <= p && p <= hi, "wilson ({lo}, {hi}) misses {p}");
        }
    }

    #[test]
    fn power_sweep_is_deterministic_across_pool_sizes() {
        let config = tiny_config(Mode::Power);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| power_csv(&run_power_sweep(&config).unwrap().rows))
        };
        let single = run(1);
        let multi = run(4);
        assert_eq!(single, multi);
        assert_eq!(single, run(2));
    }

    #[test]
    fn power_sweep_skips_infeasible_grid_points() {
        let mut config = tiny_config(Mode::Power);
        // np = 108 at n = 120 gives p = 0.9, radius above 1/2 at d = 2.
        config.avg_degree = vec![6.0, 108.0];
        let report = run_power_sweep(&config).unwrap();
        assert_eq!(report.skipped.len(), 1);
        assert!(report.skipped[0].contains("np=108"));
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn power_sweep_validates_mode_and_grid() {
        let mut config = tiny_config(Mode::Risk);
        assert!(matches!(
            run_power_sweep(&config),
            Err(ExperimentError::InvalidConfig(_))
        ));
        config.mode = Mode::Power;
        config.n = vec![];
        assert!(run_power_sweep(&config).is_err());
    }

    #[test]
    fn audit_requires_null_grid() {
        let config = tiny_config(Mode::Power);
        assert!(run_null_calibration_audit(&config).is_err());
        let mut null_config = config;
        null_config.k = vec![0];
        null_config.replicates = 1;
        let report = run_null_calibration_audit(&null_config).unwrap();
        // With one replicate the rate is 0 or 1.
        for row in &report.rows {
            assert!(row.power == 0.0 || row.power == 1.0);
        }
    }

    #[test]
    fn monte_carlo_rows_cover_alphas() {
        let mut config = tiny_config(Mode::Power);
        config.threshold_source = ThresholdSourceMode::MonteCarlo;
        config.alphas = vec![0.05, 0.2];
        config.tests = vec![TestKind::Star];
        let report = run_power_sweep(&config).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].alpha, Some(0.05));
        assert_eq!(report.rows[1].alpha, Some(0.2));
        for row in &report.rows {
            assert_eq!(row.threshold_source, ThresholdSourceMode::MonteCarlo);
            assert!(row.wilson_lo <= row.power && row.power <= row.wilson_hi);
        }
    }

    #[test]
    fn risk_sweep_shapes_and_validation() {
        let mut config = tiny_config(Mode::Risk);
        config.replicates = 10;
        let report = run_risk_sweep(&config).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert!(row.mean_risk >= 0.0 && row.mean_risk <= 1.0);

        config.k = vec![0];
        assert!(run_risk_sweep(&config).is_err());
    }

    #[test]
    fn histogram_shapes_and_validation() {
        let mut config = tiny_config(Mode::Histogram);
        config.k = vec![0, 4];
        config.replicates = 15;
        let report = run_histogram(&config).unwrap();
        assert_eq!(report.thresholds.len(), 2);
        let star_null_total: u64 = report
            .rows
            .iter()
            .filter(|r| r.test == TestKind::Star && r.series == Series::Null)
            .map(|r| r.count)
            .sum();
        assert_eq!(star_null_total, 15);
        let dist_alt_total: u64 = report
            .rows
            .iter()
            .filter(|r| r.test == TestKind::Distance && r.series == Series::Alternative)
            .map(|r| r.count)
            .sum();
        assert_eq!(dist_alt_total, 15);

        let mut bad = config.clone();
        bad.replicates = 0;
        assert!(run_histogram(&bad).is_err());
        let mut bad = config.clone();
        bad.k = vec![4];
        assert!(run_histogram(&bad).is_err());
        let mut bad = config;
        bad.k = vec![0, 0];
        assert!(run_histogram(&bad).is_err());
    }

    /// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
    fn ks_two_sample(a: &mut Vec<f64>, b: &mut Vec<f64>) -> (f64, f64) {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (n1, n2) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j) = (0usize, 0usize);
        let mut d = 0.0f64;
        while i < a.len() && j < b.len() {
            let (x, y) = (a[i], b[j]);
            if x <= y {
                i += 1;
            }
            if y <= x {
                j += 1;
            }
            d = d.max((i as f64 / n1 - j as f64 / n2).abs());
        }
        let ne = (n1 * n2 / (n1 + n2)).sqrt();
        let lambda = (ne + 0.12 + 0.11 / ne) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
            p += term;
            if term.abs() < 1e-12 {
                break;
            }
        }
        (d, p.clamp(0.0, 1.0))
    }

    #[test]
    fn matched_null_batches_pass_ks_test() {
        // Two disjoint streams of null samples must give statistically
        // indistinguishable average-distance distributions.
        let params = ModelParams::new(400, 2, Density::AverageDegree(8.0), 0);
        let collect = |purpose: u64| -> Vec<f64> {
            (0..150u64)
                .into_par_iter()
                .map(|rep| {
                    let seed = derive_stream(0x4b53, &[purpose, rep]);
                    let sample = sample_null(&params, seed).unwrap();
                    sample.graph.average_graph_distance().unwrap().average
                })
                .collect()
        };
        let mut a = collect(1);
        let mut b = collect(2);
        let (d, p) = ks_two_sample(&mut a, &mut b);
        assert!(p > 1e-3, "KS test rejected matched null batches: D = {d:.4}, p = {p:.2e}");
    }

    #[test]
    fn isolation_probe_trivial_cases() {
        // With minuscule p the planted vertices are almost surely isolated.
        let probe = run_isolation_probe(400, 0.01, 1, 50, 3).unwrap();
        assert!(probe.frequency > 0.9);
        assert!(probe.exact > 0.9);
        assert!(run_isolation_probe(400, 1.0, 0, 10, 3).is_err());
        assert!(run_isolation_probe(400, 1.0, 1, 0, 3).is_err());
    }

    #[test]
    fn csv_schemas() {
        let row = PowerRow {
            d: 2,
            n: 100,
            np: 10.0,
            k: 5,
            test: TestKind::Star,
            threshold_source: ThresholdSourceMode::AnalyticEstimated,
            alpha: None,
            replicates: 10,
            rejections: 3,
            power: 0.3,
            wilson_lo: 0.1,
            wilson_hi: 0.6,
        };
        let csv = power_csv(&[row]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "d,n,np,k,test,threshold_source,alpha,replicates,rejections,power,wilson_lo,wilson_hi"
        );
        assert_eq!(
            lines.next().unwrap(),
            "2,100,10,5,star,analytic_estimated,,10,3,0.3,0.1,0.6"
        );
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let json = r#"{
            "mode": "power",
            "n": [1000],
            "d": [2, 3],
            "avg_degree": [10.0],
            "k": [10],
            "replicates": 50,
            "seed": 7
        }"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.alphas, vec![0.05]);
        assert_eq!(config.epsilon, 0.1);
        assert_eq!(config.tests, vec![TestKind::Star, TestKind::Distance]);
        assert_eq!(
            config.threshold_source,
            ThresholdSourceMode::AnalyticEstimated
        );
        assert_eq!(config.star_method, StarMethodKind::Greedy);
        assert!(
            serde_json::from_str::<ExperimentConfig>("{\"mode\": \"power\", \"unknown\": 1}")
                .is_err()
        );
    }
}
