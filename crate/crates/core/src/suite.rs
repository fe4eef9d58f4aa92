//! Synthetic nine-scenario benchmark: a 2.3 km urban arterial with nine
//! coordinated signals, seeded timings and scripted lead traffic.
//!
//! Link durations stand in for a traffic predictor: they are the link
//! travel times of the baseline vehicle under the same lights and leads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::route::{EndFeature, GeoPoint, Link, Point, Projection, Route};
use crate::scenario::{LightSchedule, Scenario};
use crate::sim::{generate_lead_script, run_baseline};
use crate::vehicle::TripTrace;

pub const SUITE_SIZE: usize = 9;
pub const SUITE_SPEED_LIMIT: f64 = 50.0 / 3.6;
pub const DEFAULT_SUITE_SEED: u64 = 2024;

const LINK_LENGTHS: [f64; 10] = [
    180.0, 260.0, 220.0, 300.0, 200.0, 240.0, 280.0, 210.0, 230.0, 180.0,
];
const HEADINGS_DEG: [f64; 10] = [0.0, 20.0, -10.0, 30.0, 0.0, -25.0, 10.0, 40.0, 15.0, 0.0];
const ORIGIN: GeoPoint = GeoPoint {
    lat: 48.8698,
    lon: 2.1785,
};
const LEAD_DT: f64 = 0.1;
/// Predicted passing speed as a share of the limit.
const TRAFFIC_SPEED_SHARE: f64 = 0.8;
/// Start-up time folded into the green-wave timing [s].
const WAVE_LAUNCH: f64 = 4.0;

/// The suite route with provisional durations at the predicted traffic speed.
pub fn suite_route() -> Route {
    let n = LINK_LENGTHS.len();
    let mut at = Point::new(0.0, 0.0);
    let mut links = Vec::with_capacity(n);
    for (i, (&len, &heading)) in LINK_LENGTHS.iter().zip(&HEADINGS_DEG).enumerate() {
        let (sin, cos) = heading.to_radians().sin_cos();
        let to = Point::new(at.x + len * cos, at.y + len * sin);
        let last = i + 1 == n;
        let traffic_speed = TRAFFIC_SPEED_SHARE * SUITE_SPEED_LIMIT;
        let link = Link::straight(
            format!("L{}", i + 1),
            at,
            to,
            SUITE_SPEED_LIMIT,
            len / traffic_speed,
            if last { 0.0 } else { traffic_speed },
            if last {
                EndFeature::None
            } else {
                EndFeature::TrafficLight
            },
        )
        .expect("suite geometry is valid");
        links.push(link);
        at = to;
    }
    let projection = Projection::LocalTangent { origin: ORIGIN };
    let destination = projection.unproject(at);
    Route::new("suite", links, ORIGIN, destination, projection).expect("suite links connect")
}

/// Time at which a trace first reaches route position `s`.
fn crossing_time(trace: &TripTrace, s: f64) -> Option<f64> {
    let samples = trace.samples();
    let k = samples.iter().position(|p| p.x >= s)?;
    if k == 0 {
        return Some(samples[0].t);
    }
    let (a, b) = (samples[k - 1], samples[k]);
    Some(a.t + (s - a.x) / (b.x - a.x) * (b.t - a.t))
}

/// Speed of a trace when it first reaches route position `s`.
fn speed_at(trace: &TripTrace, s: f64) -> Option<f64> {
    trace.samples().iter().find(|p| p.x >= s).map(|p| p.v)
}

/// Replaces link durations with a vehicle's observed link travel times and
/// the predicted passing speeds with the faster of its speed at each link
/// end and its average speed on the link.
pub fn calibrate_durations(route: &Route, trace: &TripTrace) -> Result<Route> {
    let mut links = route.links().to_vec();
    let mut prev = trace.samples().first().map_or(0.0, |s| s.t);
    let n = links.len();
    for (i, link) in links.iter_mut().enumerate() {
        let end = route.link_start(i) + link.length;
        let t_end = if i + 1 == n {
            trace.samples().last().map_or(prev, |s| s.t)
        } else {
            crossing_time(trace, end).unwrap_or(prev + link.duration)
        };
        link.duration = (t_end - prev).max(1.0);
        if i + 1 < n {
            let passing = speed_at(trace, end).unwrap_or(0.0);
            link.v_final = passing.max(link.length / link.duration).min(link.v_max);
        }
        prev = t_end;
    }
    Route::new(
        route.id.clone(),
        links,
        route.origin,
        route.destination,
        route.projection,
    )
}

/// Scenario `index` (0-based) of the suite for `seed`.
pub fn suite_scenario(index: usize, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100 + index as u64);
    let route = suite_route();
    let mut sc = Scenario::new(format!("trip-{}", index + 1), route);
    sc.seed = seed.wrapping_mul(31).wrapping_add(index as u64);
    // coordinated arterial: one cycle, greens progress at the traffic speed
    let cycle = rng.random_range(60.0..90.0);
    let wave_speed = TRAFFIC_SPEED_SHARE * SUITE_SPEED_LIMIT;
    for i in 0..sc.route.links().len() {
        let link = &sc.route.links()[i];
        if link.end_feature == EndFeature::TrafficLight {
            let green = rng.random_range(0.45..0.6);
            let lead_in = rng.random_range(0.1..0.4) * green * cycle;
            let end = sc.route.link_start(i) + link.length;
            let green_start = WAVE_LAUNCH + end / wave_speed - lead_in;
            let offset = (-green_start).rem_euclid(cycle);
            sc.lights
                .insert(link.id.clone(), LightSchedule::new(cycle, green, offset)?);
        }
    }

    let total = sc.route.total_length();
    let ends: Vec<f64> = (0..sc.route.links().len())
        .map(|i| sc.route.link_start(i) + sc.route.links()[i].length)
        .collect();
    let n_leads = index % 3;
    let mut starts = Vec::with_capacity(n_leads);
    let mut pos = rng.random_range(40.0..120.0);
    for _ in 0..n_leads {
        starts.push(pos);
        pos += rng.random_range(150.0..400.0);
    }
    // generate front to back so each lead follows the one ahead
    let mut scripts = Vec::with_capacity(n_leads);
    for &start in starts.iter().rev() {
        let candidates: Vec<f64> = ends
            .iter()
            .copied()
            .filter(|&e| e >= start + 300.0)
            .collect();
        let exit = if candidates.is_empty() {
            total
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        let desired = rng.random_range(0.75..0.95) * SUITE_SPEED_LIMIT;
        let script = generate_lead_script(&sc, start, exit, desired, scripts.last(), LEAD_DT)?;
        scripts.push(script);
    }
    sc.leads = scripts;

    let baseline = run_baseline(&sc)?;
    sc.route = calibrate_durations(&sc.route, &baseline.trace)?;
    Ok(sc)
}

pub fn nine_scenario_suite(seed: u64) -> Result<Vec<Scenario>> {
    (0..SUITE_SIZE).map(|i| suite_scenario(i, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_shape() {
        let r = suite_route();
        assert_eq!(r.links().len(), 10);
        assert!((r.total_length() - 2300.0).abs() < 1e-9);
        let lights = r
            .links()
            .iter()
            .filter(|l| l.end_feature == EndFeature::TrafficLight)
            .count();
        assert_eq!(lights, 9);
    }

    #[test]
    fn scenarios_are_reproducible_and_calibrated() {
        let a = suite_scenario(4, 7).unwrap();
        let b = suite_scenario(4, 7).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let sum: f64 = a.route.links().iter().map(|l| l.duration).sum();
        let baseline = run_baseline(&a).unwrap();
        assert!((sum - baseline.trip_time).abs() < 1e-6);
    }
}
