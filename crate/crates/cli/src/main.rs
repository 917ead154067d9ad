//! `botscan`: sample geometric graphs with optional planted botnets, run the
//! detection tests, estimate model parameters, identify suspects, and drive
//! calibration / power / risk / histogram experiments.
//!
//! Exit codes: 0 = ran, 2 = invalid input, 3 = infeasible parameters.

use botscan::detect::{
    average_distance_test, isolated_star_test_with, CalibrationTable, StarMethod, StatName,
    TestVerdict, ThresholdSource, VerdictNotes,
};
use botscan::estimate::estimation_report;
use botscan::experiment::{
    histogram_csv, power_csv, risk_csv, run_calibrate, run_histogram, run_power_sweep,
    run_risk_sweep, ExperimentConfig, Mode,
};
use botscan::geometry::GeometryError;
use botscan::graph::{read_edge_list, write_edge_list, Graph};
use botscan::identify::identify_botnet_with;
use botscan::sample::{sample_alternative, sample_null, Density, ModelParams, ParamError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "botscan",
    about = "Detect and identify uniformly-wired vertex sets planted in random geometric graphs",
    after_help = "Worker threads honor RAYON_NUM_THREADS; results do not depend on it.\n\
                  Exit codes: 0 = ran, 2 = invalid input, 3 = infeasible parameters."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and write it as an edge list.
    Generate(GenerateArgs),
    /// Run detection tests on an edge-list file.
    Detect(DetectArgs),
    /// Estimate dimension, edge probability, and radius from a graph.
    Estimate(EstimateArgs),
    /// Flag suspected planted vertices.
    Identify(IdentifyArgs),
    /// Build Monte Carlo calibration tables from null samples.
    Calibrate(CalibrateArgs),
    /// Run a power sweep from a JSON config.
    Power(SweepArgs),
    /// Run an identification-risk sweep from a JSON config.
    Risk(SweepArgs),
    /// Emit statistic histograms under both hypotheses from a JSON config.
    Histogram(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TestChoice {
    Star,
    Distance,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum StarMethodChoice {
    Greedy,
    Exact,
    Hybrid,
}

impl StarMethodChoice {
    fn to_method(self, cap: usize) -> StarMethod {
        match self {
            StarMethodChoice::Greedy => StarMethod::Greedy,
            StarMethodChoice::Exact => StarMethod::Exact { cap },
            StarMethodChoice::Hybrid => StarMethod::Hybrid { cap },
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Vertex count.
    #[arg(long)]
    n: usize,
    /// Embedding dimension.
    #[arg(long)]
    d: u32,
    /// Edge probability (exactly one of --p, --r, --avg-degree).
    #[arg(long, conflicts_with_all = ["r", "avg_degree"])]
    p: Option<f64>,
    /// Connection radius.
    #[arg(long, conflicts_with = "avg_degree")]
    r: Option<f64>,
    /// Average degree n*p.
    #[arg(long)]
    avg_degree: Option<f64>,
    /// Planted botnet size (0 samples the null model).
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// RNG seed (sampling never uses wall-clock seeding).
    #[arg(long)]
    seed: u64,
    /// Output edge-list path.
    #[arg(long)]
    out: PathBuf,
    /// Also write vertex locations (one line of d coordinates per vertex).
    #[arg(long)]
    locations: Option<PathBuf>,
    /// Also write botnet membership (one vertex id per line).
    #[arg(long)]
    botnet: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Edge-list file to test.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TestChoice::Both)]
    test: TestChoice,
    /// Embedding dimension (required unless --estimate-params).
    #[arg(long)]
    d: Option<u32>,
    /// Connection radius for the distance test (required unless --estimate-params).
    #[arg(long)]
    r: Option<f64>,
    /// Slack of the analytic distance threshold.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Estimate d (and r) from the observed graph instead of taking them as flags.
    #[arg(long)]
    estimate_params: bool,
    /// JSON calibration table; switches both tests to Monte Carlo thresholds.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Significance level used with --calibration.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = StarMethodChoice::Hybrid)]
    star_method: StarMethodChoice,
    #[arg(long, default_value_t = 32)]
    exact_cap: usize,
    /// Cap of the dimension search when estimating parameters.
    #[arg(long, default_value_t = 64)]
    d_max: u32,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 64)]
    d_max: u32,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Embedding dimension.
    #[arg(long)]
    d: u32,
    /// Assumed botnet size.
    #[arg(long)]
    k: usize,
    /// Planted connection probability; estimated from the graph when omitted.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = StarMethodChoice::Greedy)]
    star_method: StarMethodChoice,
    #[arg(long, default_value_t = 32)]
    exact_cap: usize,
    /// Write the suspect list (one vertex id per line) here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: u32,
    #[arg(long, conflicts_with = "avg_degree")]
    p: Option<f64>,
    #[arg(long)]
    avg_degree: Option<f64>,
    /// Null replicates per statistic (at least 100).
    #[arg(long)]
    replicates: usize,
    /// Significance levels to tabulate (repeatable).
    #[arg(long, required = true)]
    alpha: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TestChoice::Both)]
    test: TestChoice,
    #[arg(long, value_enum, default_value_t = StarMethodChoice::Greedy)]
    star_method: StarMethodChoice,
    #[arg(long, default_value_t = 32)]
    exact_cap: usize,
    /// Sample this many vertex pairs for the distance statistic (default exact).
    #[arg(long)]
    distance_pair_sample: Option<u64>,
    /// Output JSON table path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

/// Radius-above-1/2 failures exit 3; everything else is invalid input.
fn classify<E: std::error::Error + 'static>(err: E) -> Failure {
    let mut source: Option<&(dyn std::error::Error + 'static)> = Some(&err);
    while let Some(e) = source {
        if let Some(GeometryError::RadiusExceedsHalf { .. }) = e.downcast_ref::<GeometryError>() {
            return Failure::infeasible(err.to_string());
        }
        if let Some(ParamError::Geometry(GeometryError::RadiusExceedsHalf { .. })) =
            e.downcast_ref::<ParamError>()
        {
            return Failure::infeasible(err.to_string());
        }
        source = e.source();
    }
    Failure::invalid(err.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Detect(args) => detect(args),
        Command::Estimate(args) => estimate(args),
        Command::Identify(args) => identify(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Power(args) => sweep(args, Mode::Power),
        Command::Risk(args) => sweep(args, Mode::Risk),
        Command::Histogram(args) => sweep(args, Mode::Histogram),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn density_from(
    p: Option<f64>,
    r: Option<f64>,
    avg_degree: Option<f64>,
) -> Result<Density, Failure> {
    match (p, r, avg_degree) {
        (Some(p), None, None) => Ok(Density::EdgeProbability(p)),
        (None, Some(r), None) => Ok(Density::Radius(r)),
        (None, None, Some(deg)) => Ok(Density::AverageDegree(deg)),
        _ => Err(Failure::invalid(
            "specify exactly one of --p, --r, --avg-degree",
        )),
    }
}

fn load_graph(path: &Path) -> Result<Graph, Failure> {
    let file = File::open(path)
        .map_err(|e| Failure::invalid(format!("cannot open {}: {e}", path.display())))?;
    read_edge_list(BufReader::new(file)).map_err(classify)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::invalid(format!("cannot write {}: {e}", path.display())))
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let density = density_from(args.p, args.r, args.avg_degree)?;
    let params = ModelParams::new(args.n, args.d, density, args.k);
    let output = if args.k == 0 {
        sample_null(&params, args.seed)
    } else {
        sample_alternative(&params, args.seed)
    }
    .map_err(classify)?;

    let file = File::create(&args.out)
        .map_err(|e| Failure::invalid(format!("cannot create {}: {e}", args.out.display())))?;
    let mut writer = BufWriter::new(file);
    write_edge_list(&output.graph, &mut writer)
        .and_then(|_| writer.flush())
        .map_err(|e| Failure::invalid(format!("write failed: {e}")))?;

    if let Some(path) = &args.locations {
        let mut text = String::new();
        for point in &output.locations {
            let coords: Vec<String> = point.coords().iter().map(|c| c.to_string()).collect();
            text.push_str(&coords.join(" "));
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    if let Some(path) = &args.botnet {
        let mut text = String::new();
        for v in &output.botnet {
            text.push_str(&v.to_string());
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    Ok(())
}

fn detect(args: DetectArgs) -> Result<(), Failure> {
    let graph = load_graph(&args.input)?;
    let method = args.star_method.to_method(args.exact_cap);

    let (d, r, estimated) = if args.estimate_params {
        let report = estimation_report(&graph, args.d_max).map_err(classify)?;
        (report.d_hat, report.r_hat, Some(report))
    } else {
        let d = args
            .d
            .ok_or_else(|| Failure::invalid("--d is required without --estimate-params"))?;
        (d, args.r, None)
    };

    let table = match &args.calibration {
        None => None,
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Failure::invalid(format!("cannot open {}: {e}", path.display())))?;
            let table: CalibrationTable = serde_json::from_reader(BufReader::new(file))
                .map_err(|e| Failure::invalid(format!("bad calibration table: {e}")))?;
            Some(table)
        }
    };

    let want_star = matches!(args.test, TestChoice::Star | TestChoice::Both);
    let want_dist = matches!(args.test, TestChoice::Distance | TestChoice::Both);

    let mut report = serde_json::Map::new();
    if let Some(est) = &estimated {
        report.insert(
            "estimated_params".into(),
            serde_json::to_value(est).unwrap(),
        );
    }

    if want_star {
        let verdict = match &table {
            None => isolated_star_test_with(&graph, d, method).map_err(classify)?,
            Some(table) => {
                let stat = botscan::detect::isolated_star_profile(&graph, method)
                    .map_err(classify)?
                    .max_star as f64;
                calibrated_verdict(table, StatName::MaxStar, &graph, d, args.alpha, stat)?
            }
        };
        report.insert("star".into(), serde_json::to_value(&verdict).unwrap());
    }
    if want_dist {
        let verdict = match &table {
            None => {
                let r = r.ok_or_else(|| {
                    Failure::invalid(
                        "the analytic distance test needs --r (or --estimate-params with a usable radius estimate)",
                    )
                })?;
                average_distance_test(&graph, d, r, args.epsilon).map_err(classify)?
            }
            Some(table) => {
                let summary = graph.average_graph_distance().map_err(classify)?;
                let mut v = calibrated_verdict(
                    table,
                    StatName::AvgDistance,
                    &graph,
                    d,
                    args.alpha,
                    summary.average,
                )?;
                v.notes.all_connected = Some(summary.all_connected);
                v
            }
        };
        report.insert("distance".into(), serde_json::to_value(&verdict).unwrap());
    }
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

/// Finds the table entry for (stat, n, d) with the nearest model probability
/// and builds a Monte Carlo verdict from it.
fn calibrated_verdict(
    table: &CalibrationTable,
    stat: StatName,
    graph: &Graph,
    d: u32,
    alpha: f64,
    statistic: f64,
) -> Result<TestVerdict, Failure> {
    let n = graph.vertex_count();
    let p_hat = graph.edge_count() as f64 / (n as f64 * (n as f64 - 1.0) / 2.0);
    let entry = table
        .entries
        .iter()
        .filter(|e| e.stat == stat && e.n == n && e.d == d)
        .min_by(|a, b| {
            (a.p - p_hat)
                .abs()
                .partial_cmp(&(b.p - p_hat).abs())
                .unwrap()
        })
        .ok_or_else(|| {
            Failure::invalid(format!(
                "calibration table has no entry for stat={stat}, n={n}, d={d}"
            ))
        })?;
    if (entry.p - p_hat).abs() > 0.25 * entry.p {
        eprintln!(
            "warning: calibration entry p={} is far from the observed edge density {p_hat:.6}",
            entry.p
        );
    }
    let threshold = entry.threshold(alpha).ok_or_else(|| {
        Failure::invalid(format!(
            "calibration entry has no threshold for alpha={alpha}"
        ))
    })?;
    Ok(TestVerdict {
        stat,
        statistic,
        threshold,
        reject: botscan::detect::crosses_threshold(stat, statistic, threshold),
        threshold_source: ThresholdSource::MonteCarlo,
        notes: VerdictNotes::default(),
    })
}

fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let graph = load_graph(&args.input)?;
    let report = estimation_report(&graph, args.d_max).map_err(classify)?;
    let text = serde_json::to_string_pretty(&report).unwrap();
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn identify(args: IdentifyArgs) -> Result<(), Failure> {
    let graph = load_graph(&args.input)?;
    let (p, p_estimated) = match args.p {
        Some(p) => (p, false),
        None => {
            let n = graph.vertex_count() as f64;
            (graph.edge_count() as f64 / (n * (n - 1.0) / 2.0), true)
        }
    };
    let method = args.star_method.to_method(args.exact_cap);
    let estimate =
        identify_botnet_with(&graph, args.d, args.k, p, args.epsilon, method).map_err(classify)?;

    if let Some(path) = &args.out {
        let mut text = String::new();
        for v in &estimate.suspects {
            text.push_str(&v.to_string());
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    let mut report = serde_json::to_value(&estimate).unwrap();
    report["p_used"] = json!(p);
    report["p_estimated"] = json!(p_estimated);
    if p_estimated {
        eprintln!("note: --p not given; using the observed edge density {p:.6}");
    }
    let text = serde_json::to_string_pretty(&report).unwrap();
    match &args.report {
        Some(path) => write_file(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), Failure> {
    let density = match (args.p, args.avg_degree) {
        (Some(p), None) => Density::EdgeProbability(p),
        (None, Some(deg)) => Density::AverageDegree(deg),
        _ => return Err(Failure::invalid("specify exactly one of --p, --avg-degree")),
    };
    // Normalize to an average degree so the grid config carries one form.
    let params = ModelParams::new(args.n, args.d, density, 0);
    let resolved = params.resolve().map_err(classify)?;
    let tests = match args.test {
        TestChoice::Star => vec![botscan::experiment::TestKind::Star],
        TestChoice::Distance => vec![botscan::experiment::TestKind::Distance],
        TestChoice::Both => vec![
            botscan::experiment::TestKind::Star,
            botscan::experiment::TestKind::Distance,
        ],
    };
    let config = ExperimentConfig {
        mode: Mode::Calibrate,
        n: vec![args.n],
        d: vec![args.d],
        avg_degree: vec![resolved.p * args.n as f64],
        k: vec![0],
        replicates: args.replicates,
        alphas: args.alpha.clone(),
        epsilon: 0.1,
        seed: args.seed,
        tests,
        threshold_source: botscan::experiment::ThresholdSourceMode::MonteCarlo,
        calibration_replicates: args.replicates,
        star_method: match args.star_method {
            StarMethodChoice::Greedy => botscan::experiment::StarMethodKind::Greedy,
            StarMethodChoice::Exact => botscan::experiment::StarMethodKind::Exact,
            StarMethodChoice::Hybrid => botscan::experiment::StarMethodKind::Hybrid,
        },
        exact_cap: args.exact_cap,
        d_max: 64,
        distance_pair_sample: args.distance_pair_sample,
        histogram_bins: 16,
    };
    let (table, skipped) = run_calibrate(&config).map_err(classify)?;
    for note in &skipped {
        eprintln!("warning: {note}");
    }
    write_file(&args.out, &serde_json::to_string_pretty(&table).unwrap())
}

fn sweep(args: SweepArgs, mode: Mode) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::invalid(format!("cannot read {}: {e}", args.config.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("bad config: {e}")))?;
    if config.mode != mode {
        return Err(Failure::invalid(format!(
            "config mode {:?} does not match the subcommand",
            config.mode
        )));
    }
    let csv = match mode {
        Mode::Power => {
            let report = run_power_sweep(&config).map_err(classify)?;
            for note in &report.skipped {
                eprintln!("warning: {note}");
            }
            power_csv(&report.rows)
        }
        Mode::Risk => {
            let report = run_risk_sweep(&config).map_err(classify)?;
            for note in &report.skipped {
                eprintln!("warning: {note}");
            }
            risk_csv(&report.rows)
        }
        Mode::Histogram => histogram_csv(&run_histogram(&config).map_err(classify)?),
        Mode::Calibrate => unreachable!("calibrate has its own subcommand"),
    };
    write_file(&args.out, &csv)
}
