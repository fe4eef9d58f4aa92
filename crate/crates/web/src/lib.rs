//! Browser bindings for the speed-profile explorer. Every export takes plain
//! numbers and returns a JSON document; errors come back as `{"error": ...}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ecodrive::ocp::{
    adjust_horizon, f1_vmax, f2_lead, lead_spacing, profile_cost, solve_unconstrained,
    BoundaryConditions, HorizonConstraint, LeadState, QuadraticProfile,
};
use ecodrive::score::{compare_trips, DEFAULT_PROMINENCE};
use ecodrive::sim::run_scenario;
use ecodrive::suite::{suite_scenario, SUITE_SIZE};
use ecodrive::vehicle::{TripTrace, VehicleParams};

const CURVE_POINTS: usize = 200;
/// Trace samples kept per vehicle for plotting.
const TRACE_POINTS: usize = 600;

#[derive(Serialize)]
struct Curve {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl Curve {
    fn sample(horizon: f64, f: impl Fn(f64) -> f64) -> Self {
        let t: Vec<f64> = (0..=CURVE_POINTS)
            .map(|k| horizon * k as f64 / CURVE_POINTS as f64)
            .collect();
        let y = t.iter().map(|&tau| f(tau)).collect();
        Curve { t, y }
    }
}

#[derive(Serialize)]
struct ProfileView {
    coefficients: [f64; 3],
    speed: Curve,
    cost_kj: f64,
    peak_speed: f64,
}

impl ProfileView {
    fn of(p: &QuadraticProfile) -> Self {
        ProfileView {
            coefficients: [p.c0, p.c1, p.c2],
            speed: Curve::sample(p.horizon(), |tau| p.speed(tau)),
            cost_kj: profile_cost(p, &VehicleParams::default()) / 1e3,
            peak_speed: p.speed_range().1,
        }
    }
}

#[derive(Serialize)]
struct ProfileReport {
    f1: f64,
    adjusted_horizon: f64,
    constraint: &'static str,
    nominal: ProfileView,
    adjusted: ProfileView,
}

#[derive(Serialize)]
struct LeadReport {
    f2: f64,
    adjusted_horizon: f64,
    constraint: &'static str,
    nominal_spacing: Curve,
    adjusted_spacing: Curve,
    adjusted: ProfileView,
}

#[derive(Serialize)]
struct RunView {
    trace: Curve,
    energy_wh: f64,
    trip_time: f64,
    eds: f64,
}

#[derive(Serialize)]
struct TripReport {
    name: String,
    route_length: f64,
    energy_gain_pct: f64,
    delta_avg_speed_pct: f64,
    eco: RunView,
    human: RunView,
    /// Route positions of the signalized link ends [m].
    lights: Vec<f64>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    let json = match result {
        Ok(v) => serde_json::to_string(&v),
        Err(error) => serde_json::to_string(&Failure { error }),
    };
    json.expect("report types serialize")
}

fn constraint_name(c: HorizonConstraint) -> &'static str {
    match c {
        HorizonConstraint::None => "none",
        HorizonConstraint::SpeedLimit => "speed limit",
        HorizonConstraint::Lead => "lead vehicle",
    }
}

fn profile_report(bc: BoundaryConditions, v_max: f64) -> Result<ProfileReport, String> {
    let nominal = solve_unconstrained(&bc).map_err(|e| e.to_string())?;
    let f1 = f1_vmax(&bc, v_max).map_err(|e| e.to_string())?;
    let adj = adjust_horizon(&bc, v_max, None, None).map_err(|e| e.to_string())?;
    let adjusted = solve_unconstrained(&adj.bc).map_err(|e| e.to_string())?;
    Ok(ProfileReport {
        f1,
        adjusted_horizon: adj.bc.horizon,
        constraint: constraint_name(adj.constraint),
        nominal: ProfileView::of(&nominal),
        adjusted: ProfileView::of(&adjusted),
    })
}

/// Closed-form profile for the given boundary conditions, its speed-limit
/// predicate and the horizon-adjusted profile.
#[wasm_bindgen]
pub fn explore_profile(
    v_init: f64,
    v_final: f64,
    distance: f64,
    horizon: f64,
    v_max: f64,
) -> String {
    to_json(
        BoundaryConditions::new(v_init, v_final, distance, horizon)
            .map_err(|e| e.to_string())
            .and_then(|bc| profile_report(bc, v_max)),
    )
}

fn lead_report(bc: BoundaryConditions, lead: LeadState) -> Result<LeadReport, String> {
    let nominal = solve_unconstrained(&bc).map_err(|e| e.to_string())?;
    let f2 = f2_lead(&bc, &lead).map_err(|e| e.to_string())?;
    // the speed limit is left out so only the lead shapes the horizon
    let adj = adjust_horizon(&bc, f64::INFINITY, Some(&lead), None).map_err(|e| e.to_string())?;
    let adjusted = solve_unconstrained(&adj.bc).map_err(|e| e.to_string())?;
    Ok(LeadReport {
        f2,
        adjusted_horizon: adj.bc.horizon,
        constraint: constraint_name(adj.constraint),
        nominal_spacing: Curve::sample(nominal.horizon(), |tau| lead_spacing(&nominal, &lead, tau)),
        adjusted_spacing: Curve::sample(adjusted.horizon(), |tau| {
            lead_spacing(&adjusted, &lead, tau)
        }),
        adjusted: ProfileView::of(&adjusted),
    })
}

/// Predicted spacing to a constant-acceleration lead along the closed-form
/// profile, before and after the horizon is stretched to keep it non-negative.
#[wasm_bindgen]
pub fn lead_spacing_curve(
    v_init: f64,
    v_final: f64,
    distance: f64,
    horizon: f64,
    gap: f64,
    lead_speed: f64,
    lead_accel: f64,
) -> String {
    to_json(
        BoundaryConditions::new(v_init, v_final, distance, horizon)
            .and_then(|bc| Ok((bc, LeadState::new(gap, lead_speed, lead_accel)?)))
            .map_err(|e| e.to_string())
            .and_then(|(bc, lead)| lead_report(bc, lead)),
    )
}

fn decimate(trace: &TripTrace) -> Curve {
    let s = trace.samples();
    let stride = s.len().div_ceil(TRACE_POINTS).max(1);
    let kept: Vec<_> = s.iter().step_by(stride).chain(s.last()).collect();
    Curve {
        t: kept.iter().map(|p| p.t).collect(),
        y: kept.iter().map(|p| p.v).collect(),
    }
}

fn trip_report(index: usize, seed: u64) -> Result<TripReport, String> {
    if index >= SUITE_SIZE {
        return Err(format!("trip index {index} outside 0..{SUITE_SIZE}"));
    }
    let sc = suite_scenario(index, seed).map_err(|e| e.to_string())?;
    let r = run_scenario(&sc).map_err(|e| e.to_string())?;
    let cmp = compare_trips(
        &r.eco.trace,
        &r.human.trace,
        &sc.route,
        &sc.vehicle,
        DEFAULT_PROMINENCE,
    )
    .map_err(|e| e.to_string())?;
    let lights = sc
        .route
        .links()
        .iter()
        .enumerate()
        .filter(|(_, l)| sc.lights.contains_key(&l.id))
        .map(|(i, l)| sc.route.link_start(i) + l.length)
        .collect();
    Ok(TripReport {
        name: sc.name.clone(),
        route_length: sc.route.total_length(),
        energy_gain_pct: r.energy_gain_pct(),
        delta_avg_speed_pct: r.delta_avg_speed_pct(),
        eco: RunView {
            trace: decimate(&r.eco.trace),
            energy_wh: r.eco.energy_wh,
            trip_time: r.eco.trip_time,
            eds: cmp.eco.eds,
        },
        human: RunView {
            trace: decimate(&r.human.trace),
            energy_wh: r.human.energy_wh,
            trip_time: r.human.trip_time,
            eds: cmp.human.eds,
        },
        lights,
    })
}

/// Runs one trip of the nine-scenario suite with both drivers.
#[wasm_bindgen]
pub fn simulate_suite_trip(index: u32, seed: u32) -> String {
    to_json(trip_report(index as usize, u64::from(seed)))
}
