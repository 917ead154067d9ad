//! End-to-end tests of the `botscan` binary: every subcommand, the file
//! formats it reads and writes, and the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_botscan"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn botscan")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn generate_alt(dir: &Path, name: &str, k: usize, seed: u64) -> String {
    let path = dir.join(name).to_str().unwrap().to_string();
    let out = run(&[
        "generate",
        "--n",
        "600",
        "--d",
        "2",
        "--avg-degree",
        "8",
        "--k",
        &k.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        &path,
    ]);
    assert_success(&out);
    path
}

#[test]
fn generate_writes_edge_list_and_side_files() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("g.txt");
    let locations = dir.path().join("loc.txt");
    let botnet = dir.path().join("bot.txt");
    let out = run(&[
        "generate",
        "--n",
        "200",
        "--d",
        "3",
        "--avg-degree",
        "6",
        "--k",
        "5",
        "--seed",
        "11",
        "--out",
        edges.to_str().unwrap(),
        "--locations",
        locations.to_str().unwrap(),
        "--botnet",
        botnet.to_str().unwrap(),
    ]);
    assert_success(&out);

    let text = std::fs::read_to_string(&edges).unwrap();
    let header = text.lines().next().unwrap();
    let mut fields = header.split_whitespace();
    assert_eq!(fields.next(), Some("200"));
    let m: usize = fields.next().unwrap().parse().unwrap();
    assert_eq!(text.lines().count(), m + 1);

    let loc_text = std::fs::read_to_string(&locations).unwrap();
    assert_eq!(loc_text.lines().count(), 200);
    assert_eq!(
        loc_text.lines().next().unwrap().split_whitespace().count(),
        3
    );

    let bot_text = std::fs::read_to_string(&botnet).unwrap();
    assert_eq!(bot_text.lines().count(), 5);

    // Same seed reproduces the exact bytes.
    let edges2 = dir.path().join("g2.txt");
    let out = run(&[
        "generate",
        "--n",
        "200",
        "--d",
        "3",
        "--avg-degree",
        "6",
        "--k",
        "5",
        "--seed",
        "11",
        "--out",
        edges2.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert_eq!(text, std::fs::read_to_string(&edges2).unwrap());
}

#[test]
fn generate_rejects_infeasible_radius_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--n",
        "100",
        "--d",
        "2",
        "--p",
        "0.9",
        "--k",
        "0",
        "--seed",
        "1",
        "--out",
        dir.path().join("g.txt").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_requires_exactly_one_density_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--n",
        "100",
        "--d",
        "2",
        "--seed",
        "1",
        "--out",
        dir.path().join("g.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_with_given_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate_alt(dir.path(), "g.txt", 12, 5);
    // r for p = 8/600 at d = 2.
    let r = (8.0 / 600.0 / std::f64::consts::PI).sqrt().to_string();
    let out = run(&[
        "detect", "--input", &graph, "--test", "both", "--d", "2", "--r", &r,
    ]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["star"]["reject"].is_boolean());
    assert_eq!(report["star"]["threshold"], 6.0);
    assert!(report["distance"]["statistic"].as_f64().unwrap() > 0.0);
    assert_eq!(report["star"]["threshold_source"], "analytic");
}

#[test]
fn detect_with_estimated_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate_alt(dir.path(), "g.txt", 0, 6);
    let out = run(&["detect", "--input", &graph, "--estimate-params"]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["estimated_params"]["d_hat"], 2);
    assert_eq!(report["star"]["reject"], false);
}

#[test]
fn detect_without_dimension_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate_alt(dir.path(), "g.txt", 0, 7);
    let out = run(&["detect", "--input", &graph, "--test", "star"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_rejects_malformed_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(&path, "2 1\n0 0\n").unwrap();
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--d",
        "2",
        "--test",
        "star",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("self-loop"));
}

#[test]
fn estimate_emits_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate_alt(dir.path(), "g.txt", 0, 8);
    let out = run(&["estimate", "--input", &graph, "--d-max", "8"]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["d_hat"], 2);
    for field in ["c_hat", "p_hat", "r_hat", "triangle_count", "wedge_count"] {
        assert!(!report[field].is_null(), "missing {field}");
    }
}

#[test]
fn identify_writes_suspects_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let graph = generate_alt(dir.path(), "g.txt", 15, 9);
    let suspects = dir.path().join("suspects.txt");
    let out = run(&[
        "identify",
        "--input",
        &graph,
        "--d",
        "2",
        "--k",
        "15",
        "--out",
        suspects.to_str().unwrap(),
    ]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["xi"].as_f64().unwrap() > 0.0);
    assert_eq!(report["topk_suspects"].as_array().unwrap().len(), 15);
    assert_eq!(report["p_estimated"], true);
    let listed = std::fs::read_to_string(&suspects).unwrap();
    assert_eq!(
        listed.lines().count(),
        report["suspects"].as_array().unwrap().len()
    );
}

#[test]
fn calibrate_then_detect_with_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.json");
    let out = run(&[
        "calibrate",
        "--n",
        "300",
        "--d",
        "2",
        "--avg-degree",
        "8",
        "--replicates",
        "120",
        "--alpha",
        "0.05",
        "--alpha",
        "0.2",
        "--seed",
        "3",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_success(&out);
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&table).unwrap()).unwrap();
    assert_eq!(parsed["entries"].as_array().unwrap().len(), 2);

    let graph = {
        let path = dir.path().join("g.txt");
        let out = run(&[
            "generate",
            "--n",
            "300",
            "--d",
            "2",
            "--avg-degree",
            "8",
            "--k",
            "10",
            "--seed",
            "4",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_success(&out);
        path.to_str().unwrap().to_string()
    };
    let out = run(&[
        "detect",
        "--input",
        &graph,
        "--d",
        "2",
        "--calibration",
        table.to_str().unwrap(),
        "--alpha",
        "0.05",
    ]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["star"]["threshold_source"], "monte_carlo");
    assert_eq!(report["distance"]["threshold_source"], "monte_carlo");
}

#[test]
fn power_sweep_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
            "mode": "power",
            "n": [200],
            "d": [2],
            "avg_degree": [6.0],
            "k": [6],
            "replicates": 10,
            "seed": 12,
            "tests": ["star"]
        }"#,
    )
    .unwrap();
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    for (path, threads) in [(&csv_a, "1"), (&csv_b, "2")] {
        let out = bin()
            .args([
                "power",
                "--config",
                config.to_str().unwrap(),
                "--out",
                path.to_str().unwrap(),
            ])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert_success(&out);
    }
    let a = std::fs::read(&csv_a).unwrap();
    let b = std::fs::read(&csv_b).unwrap();
    assert_eq!(a, b, "CSV must not depend on worker count");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("d,n,np,k,test,threshold_source,alpha,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn sweep_mode_mismatch_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"mode": "power", "n": [100], "d": [2], "avg_degree": [5.0], "k": [3],
            "replicates": 5, "seed": 1}"#,
    )
    .unwrap();
    let out = run(&[
        "risk",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn risk_and_histogram_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let risk_config = dir.path().join("risk.json");
    std::fs::write(
        &risk_config,
        r#"{"mode": "risk", "n": [300], "d": [2], "avg_degree": [8.0], "k": [8],
            "replicates": 8, "seed": 2}"#,
    )
    .unwrap();
    let risk_csv = dir.path().join("risk.csv");
    let out = run(&[
        "risk",
        "--config",
        risk_config.to_str().unwrap(),
        "--out",
        risk_csv.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&risk_csv).unwrap();
    assert!(text.starts_with("d,n,np,k,epsilon,replicates,mean_risk,"));

    let hist_config = dir.path().join("hist.json");
    std::fs::write(
        &hist_config,
        r#"{"mode": "histogram", "n": [300], "d": [2], "avg_degree": [8.0], "k": [0, 8],
            "replicates": 12, "seed": 2, "histogram_bins": 6}"#,
    )
    .unwrap();
    let hist_csv = dir.path().join("hist.csv");
    let out = run(&[
        "histogram",
        "--config",
        hist_config.to_str().unwrap(),
        "--out",
        hist_csv.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&hist_csv).unwrap();
    assert!(text.starts_with("test,series,alpha,x,count"));
    assert!(text.lines().any(|l| l.contains(",threshold,0.05,")));
}
