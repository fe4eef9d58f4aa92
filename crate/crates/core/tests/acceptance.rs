//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! and then asserts it; run with `--nocapture` to see the report.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use ecodrive::advisor::{
    estimate_lead_acceleration, AccelEstimator, Advisor, LeadHistory, DEFAULT_EWMA_BETA,
    MIN_HORIZON,
};
use ecodrive::ocp::{f1_vmax, solve_unconstrained, BoundaryConditions, QuadraticProfile};
use ecodrive::oracle::{
    check_boundary_exactness, check_dp_optimality, check_f1_sign, check_f2_sign,
    check_horizon_adjustment, OracleConfig, PropertyOutcome,
};
use ecodrive::route::{aggregate_links, match_point, EndFeature, Link, Point};
use ecodrive::score::{compare_trips, eds, TripComparison, DEFAULT_PROMINENCE};
use ecodrive::sim::{run_scenario, SimResult};
use ecodrive::suite::{nine_scenario_suite, suite_route, DEFAULT_SUITE_SEED, SUITE_SIZE};
use ecodrive::vehicle::KinState;

fn report(id: u32, title: &str, passed: bool, detail: &str, elapsed: Duration) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{verdict}] {title}: {detail} ({:.2} s)",
        elapsed.as_secs_f64()
    );
}

fn oracle_criterion(id: u32, title: &str, outcome: PropertyOutcome, budget: Duration) {
    let in_time = outcome.elapsed < budget;
    let passed = outcome.passed && in_time;
    let detail = format!(
        "{} instances, {}; budget {:.0} s",
        outcome.instances,
        outcome.detail,
        budget.as_secs_f64()
    );
    report(id, title, passed, &detail, outcome.elapsed);
    assert!(outcome.passed, "criterion {id}: {}", outcome.detail);
    assert!(in_time, "criterion {id} took {:?}", outcome.elapsed);
}

#[test]
fn criterion_01_boundary_exactness() {
    let outcome = check_boundary_exactness(&OracleConfig::default());
    assert_eq!(outcome.instances, 10_000);
    oracle_criterion(
        1,
        "boundary-condition exactness",
        outcome,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_02_dp_optimality() {
    let cfg = OracleConfig::default();
    assert_eq!(cfg.dp_instances, 50);
    assert_eq!((cfg.grid.dt, cfg.grid.dv, cfg.dp_slack), (0.1, 0.05, 0.01));
    oracle_criterion(
        2,
        "DP-oracle optimality",
        check_dp_optimality(&cfg),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_03_predicate_sign_equivalence() {
    let cfg = OracleConfig::default();
    assert_eq!(cfg.sign_instances, 1_000);
    let f1 = check_f1_sign(&cfg);
    let f2 = check_f2_sign(&cfg);
    let elapsed = f1.elapsed + f2.elapsed;
    let passed = f1.passed && f2.passed && elapsed < Duration::from_secs(60);
    report(
        3,
        "f1/f2 sign equivalence",
        passed,
        &format!("f1: {}; f2: {}", f1.detail, f2.detail),
        elapsed,
    );
    assert!(passed);
}

#[test]
fn criterion_04_horizon_adjustment() {
    let cfg = OracleConfig::default();
    assert_eq!(cfg.lead_adjust_instances, 100);
    oracle_criterion(
        4,
        "horizon adjustment",
        check_horizon_adjustment(&cfg),
        Duration::from_secs(60),
    );
}

struct SuiteRun {
    results: Vec<SimResult>,
    elapsed: Duration,
}

fn suite_run() -> &'static SuiteRun {
    static RUN: OnceLock<SuiteRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let results = nine_scenario_suite(DEFAULT_SUITE_SEED)
            .expect("suite builds")
            .iter()
            .map(|sc| run_scenario(sc).expect("scenario runs"))
            .collect();
        SuiteRun {
            results,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_05_closed_loop_energy() {
    let run = suite_run();
    assert_eq!(run.results.len(), SUITE_SIZE);
    let route_length = suite_route().total_length();
    let lights = suite_route()
        .links()
        .iter()
        .filter(|l| l.end_feature == EndFeature::TrafficLight)
        .count();
    let mut all_lower = true;
    let mut speed_ok = true;
    let mut gains = Vec::new();
    for r in &run.results {
        let gain = r.energy_gain_pct();
        let dv = r.delta_avg_speed_pct();
        println!(
            "    {:<8} E_ED {:>7.1} Wh  E_HD {:>7.1} Wh  gain {:>6.2}%  d(avg speed) {:>6.2}%",
            r.scenario, r.eco.energy_wh, r.human.energy_wh, gain, dv
        );
        all_lower &= r.eco.energy_wh < r.human.energy_wh;
        speed_ok &= dv.abs() <= 5.0;
        gains.push(gain);
    }
    let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let in_time = run.elapsed < Duration::from_secs(120);
    let route_ok = (route_length - 2300.0).abs() < 50.0 && lights == 9;
    let passed = all_lower && mean_gain > 0.0 && speed_ok && in_time && route_ok;
    report(
        5,
        "closed-loop ED vs HD energy",
        passed,
        &format!(
            "route {route_length:.0} m with {lights} lights; ED < HD in every trip: {all_lower}; \
             mean gain {mean_gain:.2}%; |d avg speed| <= 5%: {speed_ok}"
        ),
        run.elapsed,
    );
    assert!(route_ok);
    assert!(all_lower, "ED energy must be below HD in every scenario");
    assert!(mean_gain > 0.0);
    assert!(speed_ok);
    assert!(in_time, "suite took {:?}", run.elapsed);
}

#[test]
fn criterion_06_safety_invariants() {
    let run = suite_run();
    let worst_overspeed = run
        .results
        .iter()
        .map(|r| r.eco.max_overspeed())
        .fold(f64::NEG_INFINITY, f64::max);
    let min_gap = run
        .results
        .iter()
        .filter_map(|r| r.eco.min_gap())
        .reduce(f64::min);
    let gap_ok = min_gap.is_none_or(|g| g >= 0.0);
    let passed = worst_overspeed <= 0.2 && gap_ok;
    report(
        6,
        "ED safety invariants",
        passed,
        &format!(
            "max (v - v_max) {worst_overspeed:.4} m/s (limit 0.2); min lead gap {}",
            min_gap.map_or("n/a".into(), |g| format!("{g:.2} m"))
        ),
        run.elapsed,
    );
    assert!(worst_overspeed <= 0.2);
    assert!(gap_ok);
}

/// Drives the plan from tick 0 exactly and returns the largest deviation
/// between any later plan and the tick-0 profile, and the tick count.
fn perfect_tracking_error(
    link: &Link,
    next: Option<&Link>,
    v_init: f64,
    tick: f64,
) -> (f64, usize) {
    let mut advisor = Advisor::default();
    let first = advisor
        .step(
            &KinState {
                x: 0.0,
                v: v_init,
                t: 0.0,
            },
            0,
            link,
            next,
        )
        .unwrap();
    let plan: QuadraticProfile = first.profile.expect("tick 0 plans");
    let mut worst: f64 = 0.0;
    let mut ticks = 0;
    let mut t = tick;
    loop {
        let x = plan.position(t);
        let remaining = plan.horizon() - t;
        let looks_past_link =
            next.is_some() && link.length - x < advisor.config().lookahead_distance;
        let at_stop_line = link.length - x < advisor.config().hold_distance;
        if remaining < MIN_HORIZON + 1e-9 || looks_past_link || at_stop_line {
            break;
        }
        let ego = KinState {
            x,
            v: plan.speed(t),
            t,
        };
        let advisory = advisor.step(&ego, 0, link, next).unwrap();
        let replanned = advisory.profile.expect("replans every tick");
        let n = 50;
        for k in 0..=n {
            let tau = remaining * k as f64 / n as f64;
            worst = worst.max((replanned.speed(tau) - plan.speed(t + tau)).abs());
        }
        let preview = advisor.config().preview.min(remaining);
        worst = worst.max((advisory.target_speed - plan.speed(t + preview)).abs());
        ticks += 1;
        t += tick;
    }
    (worst, ticks)
}

fn straight(id: &str, from: f64, to: f64, duration: f64, v_final: f64, end: EndFeature) -> Link {
    Link::straight(
        id,
        Point::new(from, 0.0),
        Point::new(to, 0.0),
        16.0,
        duration,
        v_final,
        end,
    )
    .unwrap()
}

#[test]
fn criterion_07_mpc_consistency() {
    let start = Instant::now();
    let passing = straight("pass", 0.0, 400.0, 32.0, 12.0, EndFeature::TrafficLight);
    let after = straight("after", 400.0, 800.0, 32.0, 12.0, EndFeature::TrafficLight);
    let stopping = straight("stop", 0.0, 150.0, 25.0, 0.0, EndFeature::None);
    for (bc, link) in [
        (
            BoundaryConditions::new(10.0, 12.0, 400.0, 32.0).unwrap(),
            &passing,
        ),
        (
            BoundaryConditions::new(10.0, 0.0, 150.0, 25.0).unwrap(),
            &stopping,
        ),
    ] {
        // the plans must stay inside the limit so no horizon adjustment kicks in
        assert!(f1_vmax(&bc, link.v_max).unwrap() >= 0.0);
        assert!(solve_unconstrained(&bc).unwrap().speed_range().0 >= -1e-9);
    }
    let (pass_err, pass_ticks) = perfect_tracking_error(&passing, Some(&after), 10.0, 0.05);
    let (stop_err, stop_ticks) = perfect_tracking_error(&stopping, None, 10.0, 0.05);
    let elapsed = start.elapsed();
    let worst = pass_err.max(stop_err);
    let passed = worst <= 1e-4 && pass_ticks > 300 && stop_ticks > 300 && elapsed.as_secs() < 10;
    report(
        7,
        "MPC consistency under perfect tracking",
        passed,
        &format!(
            "{pass_ticks} passing + {stop_ticks} stopping ticks; max |replan - tick-0 plan| \
             {worst:.2e} m/s (limit 1e-4)"
        ),
        elapsed,
    );
    assert!(worst <= 1e-4, "deviation {worst}");
    assert!(pass_ticks > 300 && stop_ticks > 300);
    assert!(elapsed.as_secs() < 10);
}

#[test]
fn criterion_08_ewma_estimator() {
    let start = Instant::now();
    let (v0, accel) = (8.0, 0.7);
    let mut hist = LeadHistory::new(DEFAULT_EWMA_BETA);
    for k in 0..6 {
        let t = k as f64;
        hist.push(t, v0 + accel * t).unwrap();
    }
    let exact_err =
        (estimate_lead_acceleration(&hist, AccelEstimator::PairDifferences).accel - accel).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let true_accel = Uniform::new(-1.5, 1.5).unwrap();
    let draws = 10_000;
    let (mut raw_sq, mut ewma_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let a = true_accel.sample(&mut rng);
        let mut hist = LeadHistory::new(DEFAULT_EWMA_BETA);
        let mut speeds = Vec::with_capacity(6);
        for k in 0..6 {
            let t = k as f64;
            let v = 10.0 + a * t + noise.sample(&mut rng);
            speeds.push(v);
            hist.push(t, v).unwrap();
        }
        let raw = speeds[5] - speeds[4];
        let smoothed = estimate_lead_acceleration(&hist, AccelEstimator::PairDifferences).accel;
        raw_sq += (raw - a).powi(2);
        ewma_sq += (smoothed - a).powi(2);
    }
    let (raw_var, ewma_var) = (raw_sq / draws as f64, ewma_sq / draws as f64);
    let elapsed = start.elapsed();
    let passed = exact_err <= 1e-9 && ewma_var < raw_var && elapsed.as_secs() < 10;
    report(
        8,
        "EWMA lead acceleration",
        passed,
        &format!(
            "ramp error {exact_err:.2e} (limit 1e-9); error variance over {draws} draws: \
             raw differencing {raw_var:.4}, EWMA {ewma_var:.4}"
        ),
        elapsed,
    );
    assert!(exact_err <= 1e-9);
    assert!(ewma_var < raw_var);
    assert!(elapsed.as_secs() < 10);
}

#[test]
fn criterion_09_map_matching() {
    let start = Instant::now();
    let route = suite_route();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let along = Uniform::new(0.0, route.total_length()).unwrap();
    let samples = 1_000;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let s = along.sample(&mut rng);
        let m = match_point(&route, &route.point_at(s), None).unwrap();
        worst = worst.max((route.link_start(m.link_index) + m.x - s).abs());
    }

    // integer lengths keep every partial sum exact
    let lengths = Uniform::new_inclusive(5u32, 120).unwrap();
    let features = [
        EndFeature::None,
        EndFeature::TrafficLight,
        EndFeature::StopSign,
    ];
    let mut sums_exact = true;
    let mut merged_any = false;
    for case in 0..200 {
        let mut at = 0.0;
        let links: Vec<Link> = (0..12)
            .map(|i| {
                let len = f64::from(lengths.sample(&mut rng));
                let end = features[(case + i * 7 + len as usize) % 3];
                let link = Link::straight(
                    format!("l{i}"),
                    Point::new(at, 0.0),
                    Point::new(at + len, 0.0),
                    13.0,
                    len / 10.0,
                    10.0,
                    end,
                )
                .unwrap();
                at += len;
                link
            })
            .collect();
        let merged = aggregate_links(&links, 50.0);
        merged_any |= merged.len() < links.len();
        let before: f64 = links.iter().map(|l| l.length).sum();
        let after: f64 = merged.iter().map(|l| l.length).sum();
        sums_exact &= before == after;
    }
    let elapsed = start.elapsed();
    let passed = worst <= 1.0 && sums_exact && merged_any && elapsed.as_secs() < 10;
    report(
        9,
        "map matching and link aggregation",
        passed,
        &format!(
            "max round-trip error {worst:.2e} m over {samples} points (limit 1 m); \
             sum of link lengths preserved exactly: {sums_exact}"
        ),
        elapsed,
    );
    assert!(worst <= 1.0);
    assert!(sums_exact && merged_any);
    assert!(elapsed.as_secs() < 10);
}

#[test]
fn criterion_10_eco_driving_score() {
    let run = suite_run();
    let start = Instant::now();
    let suite = nine_scenario_suite(DEFAULT_SUITE_SEED).unwrap();
    let comparisons: Vec<TripComparison> = suite
        .iter()
        .zip(&run.results)
        .map(|(sc, r)| {
            compare_trips(
                &r.eco.trace,
                &r.human.trace,
                &sc.route,
                &sc.vehicle,
                DEFAULT_PROMINENCE,
            )
            .unwrap()
        })
        .collect();
    let mut self_scores_zero = true;
    let mut ed_better = 0;
    for (sc, c) in suite.iter().zip(&comparisons) {
        for report in [&c.eco, &c.human] {
            self_scores_zero &= eds(report.e_reference_wh, report.e_reference_wh).unwrap() == 0.0;
        }
        println!(
            "    {:<8} EDS ED {:>7.4}  HD {:>7.4}",
            sc.name, c.eco.eds, c.human.eds
        );
        if c.eco.eds <= c.human.eds {
            ed_better += 1;
        }
    }
    let elapsed = start.elapsed();
    let hard_ok = self_scores_zero && ed_better >= 7 && elapsed.as_secs() < 60;
    let detail = format!(
        "EDS(reference, reference) == 0: {self_scores_zero}; ED <= HD in {ed_better}/{SUITE_SIZE} \
         (target 8, 7 is flagged)"
    );
    report(
        10,
        "eco-driving score",
        hard_ok && ed_better >= 8,
        &detail,
        elapsed,
    );
    if hard_ok && ed_better == 7 {
        println!("criterion 10 flagged: only 7 of 9 trips score ED <= HD");
    }
    assert!(self_scores_zero);
    assert!(ed_better >= 7, "ED scored better in only {ed_better} trips");
    assert!(elapsed.as_secs() < 60);
}
