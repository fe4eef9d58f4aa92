use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecodrive::oracle::{run_oracle_suite, OracleConfig};
use ecodrive::route::Route;
use ecodrive::scenario::Scenario;
use ecodrive::score::{
    compare_trips, comparison_csv, eds_csv, score_trip, TripComparison, DEFAULT_PROMINENCE,
};
use ecodrive::sim::{run_scenario, SimResult};
use ecodrive::suite::{nine_scenario_suite, DEFAULT_SUITE_SEED};
use ecodrive::vehicle::{TripTrace, VehicleParams};

#[derive(Parser)]
#[command(
    name = "ecodrive",
    version,
    about = "Eco-driving advisory simulator and trip scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the eco-advised and baseline drivers through a scenario
    Simulate(SimulateArgs),
    /// Score driven traces against their optimal reference
    Score(ScoreArgs),
    /// Compare an eco-advised trace with a baseline trace on the same route
    Compare(CompareArgs),
    /// Check the closed-form controller against the numerical oracles
    OracleCheck(OracleArgs),
    /// Write the nine-scenario evaluation suite as scenario files
    GenerateSuite(GenerateArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output directory
    #[arg(long, env = "ECODRIVE_OUT", default_value = "ecodrive-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file
    #[arg(long, required_unless_present = "suite", conflicts_with = "suite")]
    scenario: Option<PathBuf>,
    /// Run the built-in nine-scenario suite instead of a scenario file
    #[arg(long)]
    suite: bool,
    /// Override the scenario seed (suite seed with --suite)
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulation step [s]
    #[arg(long)]
    dt: Option<f64>,
    /// Vehicle parameter file replacing the scenario's vehicle
    #[arg(long)]
    vehicle: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
    prominence: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ScoreArgs {
    /// Route file the traces were driven on
    #[arg(long)]
    route: PathBuf,
    /// Trace CSV with `t,x,v` columns; repeat for several trips
    #[arg(long, required = true)]
    trace: Vec<PathBuf>,
    /// Minimum prominence of a traffic speed minimum [m/s]
    #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
    prominence: f64,
    #[arg(long)]
    vehicle: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    route: PathBuf,
    /// Eco-advised trace followed by baseline trace
    #[arg(long, num_args = 1, required = true)]
    trace: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PROMINENCE)]
    prominence: f64,
    #[arg(long)]
    vehicle: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = OracleConfig::default().seed)]
    seed: u64,
    /// Use this many instances for every property
    #[arg(long)]
    instances: Option<usize>,
    /// Relative slack on the DP optimality comparison
    #[arg(long, default_value_t = OracleConfig::default().dp_slack)]
    slack: f64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

/// A check ran to completion and failed.
#[derive(Debug)]
struct PropertyFailure(String);

impl fmt::Display for PropertyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PropertyFailure {}

/// Bad or unreadable input; maps to exit code 2.
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

trait InputContext<T> {
    fn input(self) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> Result<T> {
        self.map_err(|e| InputError(describe(&e.into())).into())
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.ends_with(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Score(a) => score(a),
        Command::Compare(a) => compare(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::GenerateSuite(a) => generate_suite(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(if e.downcast_ref::<InputError>().is_some() {
                2
            } else {
                1
            })
        }
    }
}

fn load_vehicle(path: Option<&Path>) -> Result<Option<VehicleParams>> {
    path.map(|p| VehicleParams::load(p).input()).transpose()
}

fn load_route(path: &Path) -> Result<Route> {
    Route::load(path).input()
}

fn load_trace(path: &Path) -> Result<TripTrace> {
    TripTrace::read_csv(path).input()
}

fn trip_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let vehicle = load_vehicle(args.vehicle.as_deref())?;
    let mut scenarios = match &args.scenario {
        Some(path) => {
            let mut sc = Scenario::load(path).input()?;
            if let Some(seed) = args.seed {
                sc.seed = seed;
            }
            vec![sc]
        }
        None => nine_scenario_suite(args.seed.unwrap_or(DEFAULT_SUITE_SEED)).input()?,
    };
    for sc in &mut scenarios {
        if let Some(dt) = args.dt {
            sc.dt = dt;
        }
        if let Some(v) = &vehicle {
            sc.vehicle = v.clone();
        }
        sc.validate().input()?;
    }
    let dir = &args.out.out;
    let mut comparisons = Vec::new();
    for sc in &scenarios {
        let result = run_scenario(sc).with_context(|| format!("simulating `{}`", sc.name))?;
        write_sim_outputs(dir, sc, &result)?;
        println!(
            "{}: eco {:.1} s {:.2} Wh, human {:.1} s {:.2} Wh, gain {:.2} %, avg speed change {:.2} %",
            sc.name,
            result.eco.trip_time,
            result.eco.energy_wh,
            result.human.trip_time,
            result.human.energy_wh,
            result.energy_gain_pct(),
            result.delta_avg_speed_pct()
        );
        if args.suite {
            let cmp = compare_trips(
                &result.eco.trace,
                &result.human.trace,
                &sc.route,
                &sc.vehicle,
                args.prominence,
            )
            .with_context(|| format!("scoring `{}`", sc.name))?;
            comparisons.push((sc.name.clone(), cmp));
        }
    }
    if args.suite {
        write_suite_tables(dir, &comparisons)?;
        let n = comparisons.len() as f64;
        let mean_gain = comparisons
            .iter()
            .map(|(_, c)| c.energy_gain_pct)
            .sum::<f64>()
            / n;
        let ed_better = comparisons
            .iter()
            .filter(|(_, c)| c.eco.eds <= c.human.eds)
            .count();
        println!(
            "suite: mean gain {mean_gain:.2} %, eco EDS <= baseline EDS in {ed_better}/{}",
            comparisons.len()
        );
    }
    Ok(())
}

fn write_sim_outputs(dir: &Path, sc: &Scenario, r: &SimResult) -> Result<()> {
    let stem = &sc.name;
    write(
        dir,
        &format!("{stem}.eco.csv"),
        &r.eco.to_csv_string(&sc.vehicle),
    )?;
    write(
        dir,
        &format!("{stem}.human.csv"),
        &r.human.to_csv_string(&sc.vehicle),
    )?;
    write(dir, &format!("{stem}.advisories.csv"), &r.advisory_csv())?;
    write(dir, &format!("{stem}.events.csv"), &r.events_csv())?;
    write(dir, &format!("{stem}.summary.txt"), &r.summary())
}

fn write_suite_tables(dir: &Path, rows: &[(String, TripComparison)]) -> Result<()> {
    write(
        dir,
        "comparison.csv",
        &comparison_csv(rows.iter().map(|(n, c)| (n.as_str(), c))),
    )?;
    let eco: Vec<(String, _)> = rows
        .iter()
        .map(|(n, c)| (format!("{n}-eco"), &c.eco))
        .collect();
    let human: Vec<(String, _)> = rows
        .iter()
        .map(|(n, c)| (format!("{n}-human"), &c.human))
        .collect();
    write(
        dir,
        "eds.csv",
        &eds_csv(eco.iter().chain(&human).map(|(n, r)| (n.as_str(), *r))),
    )
}

fn score(args: ScoreArgs) -> Result<()> {
    let route = load_route(&args.route)?;
    let params = load_vehicle(args.vehicle.as_deref())?.unwrap_or_default();
    let mut reports = Vec::with_capacity(args.trace.len());
    for path in &args.trace {
        let trace = load_trace(path)?;
        let report = score_trip(&trace, &route, &params, args.prominence)
            .input()
            .with_context(|| format!("scoring {}", path.display()))?;
        reports.push((trip_name(path), report));
    }
    let dir = &args.out.out;
    for (name, report) in &reports {
        write(dir, &format!("{name}.segments.csv"), &report.segments_csv())?;
        write(
            dir,
            &format!("{name}.reference.csv"),
            &report.reference.to_csv_string(),
        )?;
        println!(
            "{name}: E_D {:.2} Wh, E_T {:.2} Wh, EDS {:.4} ({} breakpoints)",
            report.e_driven_wh,
            report.e_reference_wh,
            report.eds,
            report.breakpoints.len()
        );
    }
    write(
        dir,
        "eds.csv",
        &eds_csv(reports.iter().map(|(n, r)| (n.as_str(), r))),
    )
}

fn compare(args: CompareArgs) -> Result<()> {
    let [eco_path, human_path] = args.trace.as_slice() else {
        return Err(anyhow::anyhow!(
            "compare takes exactly two --trace arguments (eco, then baseline), got {}",
            args.trace.len()
        ))
        .input();
    };
    let route = load_route(&args.route)?;
    let params = load_vehicle(args.vehicle.as_deref())?.unwrap_or_default();
    let eco = load_trace(eco_path)?;
    let human = load_trace(human_path)?;
    let cmp = compare_trips(&eco, &human, &route, &params, args.prominence).input()?;
    let trip = trip_name(eco_path);
    let dir = &args.out.out;
    write(
        dir,
        "comparison.csv",
        &comparison_csv([(trip.as_str(), &cmp)]),
    )?;
    let (eco_name, human_name) = (trip_name(eco_path), trip_name(human_path));
    write(
        dir,
        "eds.csv",
        &eds_csv([
            (eco_name.as_str(), &cmp.eco),
            (human_name.as_str(), &cmp.human),
        ]),
    )?;
    println!(
        "energy gain {:.2} %, avg speed change {:.2} %, EDS {:.4} vs {:.4}",
        cmp.energy_gain_pct, cmp.delta_avg_speed_pct, cmp.eco.eds, cmp.human.eds
    );
    Ok(())
}

fn oracle_check(args: OracleArgs) -> Result<()> {
    if args.slack.is_nan() || args.slack < 0.0 {
        return Err(anyhow::anyhow!("--slack must be non-negative")).input();
    }
    let mut cfg = OracleConfig {
        seed: args.seed,
        dp_slack: args.slack,
        ..OracleConfig::default()
    };
    if let Some(n) = args.instances {
        if n == 0 {
            return Err(anyhow::anyhow!("--instances must be positive")).input();
        }
        cfg = cfg.with_instances(n);
    }
    let outcomes = run_oracle_suite(&cfg);
    for o in &outcomes {
        println!("{o}");
    }
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name)
        .collect();
    if !failed.is_empty() {
        bail!(PropertyFailure(format!(
            "failed properties: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn generate_suite(args: GenerateArgs) -> Result<()> {
    let dir = &args.out.out;
    for sc in nine_scenario_suite(args.seed)? {
        let path = sc
            .write_files(dir, &sc.name)
            .with_context(|| format!("writing scenario `{}`", sc.name))?;
        println!("{}", path.display());
    }
    Ok(())
}
