use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ecodrive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecodrive"))
        .args(args)
        .env_remove("ECODRIVE_OUT")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn generated_suite(dir: &TempDir) -> std::path::PathBuf {
    let suite = dir.path().join("suite");
    let out = ecodrive(&["generate-suite", "--out", path(&suite)]);
    assert!(out.status.success(), "{}", stderr(&out));
    suite
}

#[test]
fn simulate_with_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let suite = generated_suite(&dir);
    let scenario = suite.join("trip-3.toml");
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = ecodrive(&[
            "simulate",
            "--scenario",
            path(&scenario),
            "--seed",
            "42",
            "--out",
            path(&out_dir),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        runs.push(out_dir);
    }
    for file in [
        "trip-3.eco.csv",
        "trip-3.human.csv",
        "trip-3.advisories.csv",
        "trip-3.summary.txt",
    ] {
        let a = fs::read(runs[0].join(file)).unwrap();
        let b = fs::read(runs[1].join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn missing_scenario_is_an_input_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let out = ecodrive(&[
        "simulate",
        "--scenario",
        path(&missing),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.toml"), "{}", stderr(&out));
}

#[test]
fn missing_route_is_an_input_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.csv");
    fs::write(&trace, "t,x,v\n0,0,0\n1,1,1\n").unwrap();
    let route = dir.path().join("absent.route");
    let out = ecodrive(&[
        "score",
        "--route",
        path(&route),
        "--trace",
        path(&trace),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.route"), "{}", stderr(&out));
}

#[test]
fn malformed_trace_reports_the_row() {
    let dir = TempDir::new().unwrap();
    let suite = generated_suite(&dir);
    let trace = dir.path().join("bad.csv");
    fs::write(&trace, "t,x,v\n0,0,0\n1,1,1\n2,two,1\n").unwrap();
    let out = ecodrive(&[
        "score",
        "--route",
        path(&suite.join("trip-1.route")),
        "--trace",
        path(&trace),
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("bad.csv:4"), "{msg}");
    assert!(msg.contains("two"), "{msg}");
}

#[test]
fn trace_that_does_not_cover_the_route_is_rejected() {
    let dir = TempDir::new().unwrap();
    let suite = generated_suite(&dir);
    let trace = dir.path().join("short.csv");
    fs::write(&trace, "t,x,v\n0,0,0\n1,1,1\n").unwrap();
    let out = ecodrive(&[
        "score",
        "--route",
        path(&suite.join("trip-1.route")),
        "--trace",
        path(&trace),
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn suite_scores_and_reference_rescoring() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    let out = ecodrive(&["simulate", "--suite", "--out", path(&run)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let comparison = fs::read_to_string(run.join("comparison.csv")).unwrap();
    let mut lines = comparison.lines();
    assert_eq!(
        lines.next(),
        Some("trip,energy_gain_pct,delta_avg_speed_pct")
    );
    assert_eq!(lines.count(), 9);

    // nine eco rows and nine baseline rows
    let eds = fs::read_to_string(run.join("eds.csv")).unwrap();
    let score = |suffix: &str| -> Vec<f64> {
        eds.lines()
            .skip(1)
            .filter(|l| l.split(',').next().unwrap().ends_with(suffix))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect()
    };
    let (eco, human) = (score("-eco"), score("-human"));
    assert_eq!((eco.len(), human.len()), (9, 9));
    let ed_better = eco.iter().zip(&human).filter(|(e, h)| e <= h).count();
    assert!(ed_better >= 8, "eco scored better in {ed_better} of 9");

    // a reference trace is its own optimum
    let suite = generated_suite(&dir);
    let scored = dir.path().join("scored");
    let out = ecodrive(&[
        "score",
        "--route",
        path(&suite.join("trip-1.route")),
        "--trace",
        path(&run.join("trip-1.eco.csv")),
        "--out",
        path(&scored),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rescored = dir.path().join("rescored");
    let out = ecodrive(&[
        "score",
        "--route",
        path(&suite.join("trip-1.route")),
        "--trace",
        path(&scored.join("trip-1.eco.reference.csv")),
        "--out",
        path(&rescored),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eds = fs::read_to_string(rescored.join("eds.csv")).unwrap();
    let value: f64 = eds
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(value.abs() < 1e-4, "reference EDS {value}");
}

#[test]
fn compare_writes_one_comparison_row() {
    let dir = TempDir::new().unwrap();
    let suite = generated_suite(&dir);
    let run = dir.path().join("run");
    let out = ecodrive(&[
        "simulate",
        "--scenario",
        path(&suite.join("trip-5.toml")),
        "--out",
        path(&run),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cmp = dir.path().join("cmp");
    let out = ecodrive(&[
        "compare",
        "--route",
        path(&suite.join("trip-5.route")),
        "--trace",
        path(&run.join("trip-5.eco.csv")),
        "--trace",
        path(&run.join("trip-5.human.csv")),
        "--out",
        path(&cmp),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "trip-5.eco");
    assert!(row[1].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_ecodrive"))
        .arg("generate-suite")
        .env("ECODRIVE_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("trip-9.toml").exists());
}

#[test]
fn oracle_check_passes_and_is_reproducible() {
    let run = || ecodrive(&["oracle-check", "--instances", "4", "--seed", "7"]);
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let lines = |o: &Output| -> Vec<String> {
        // timings differ between runs
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .map(|l| {
                l.split(" instances, ").next().unwrap().to_string()
                    + l.split("): ").nth(1).unwrap_or("")
            })
            .collect()
    };
    assert_eq!(lines(&a).len(), 5);
    assert_eq!(lines(&a), lines(&b));
}

#[test]
fn tight_slack_reports_failures_with_exit_code_one() {
    let out = ecodrive(&["oracle-check", "--instances", "20", "--slack", "0"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL] DP-oracle optimality"), "{stdout}");
    assert!(stderr(&out).contains("DP-oracle optimality"));
}

#[test]
fn invalid_flag_values_are_input_errors() {
    let out = ecodrive(&["oracle-check", "--instances", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
