use serde_json::Value;

use ecodrive_web::{explore_profile, lead_spacing_curve, simulate_suite_trip};

fn parse(json: &str) -> Value {
    serde_json::from_str(json).expect("valid JSON")
}

fn last(v: &Value) -> f64 {
    v.as_array().unwrap().last().unwrap().as_f64().unwrap()
}

#[test]
fn speed_limited_profile_is_stretched_to_the_root() {
    let r = parse(&explore_profile(10.0, 10.0, 250.0, 10.0, 20.0));
    assert!(r["f1"].as_f64().unwrap() < 0.0);
    assert!((r["adjusted_horizon"].as_f64().unwrap() - 15.0).abs() < 1e-9);
    assert_eq!(r["constraint"], "speed limit");
    assert!((r["adjusted"]["peak_speed"].as_f64().unwrap() - 20.0).abs() < 1e-9);
    assert!((last(&r["adjusted"]["speed"]["y"]) - 10.0).abs() < 1e-9);
}

#[test]
fn feasible_profile_is_left_alone() {
    let r = parse(&explore_profile(0.0, 0.0, 100.0, 20.0, 13.9));
    assert_eq!(r["constraint"], "none");
    assert_eq!(r["nominal"]["coefficients"][1].as_f64().unwrap(), 1.5);
    assert!((r["nominal"]["peak_speed"].as_f64().unwrap() - 7.5).abs() < 1e-12);
}

#[test]
fn invalid_input_is_reported_as_an_error_object() {
    let r = parse(&explore_profile(5.0, 5.0, -1.0, 10.0, 20.0));
    assert!(r["error"].as_str().unwrap().contains("boundary"));
    let r = parse(&simulate_suite_trip(9, 1));
    assert!(r["error"].is_string());
}

#[test]
fn lead_violation_is_resolved_by_a_longer_horizon() {
    let r = parse(&lead_spacing_curve(12.0, 12.0, 200.0, 12.0, 10.0, 8.0, 0.0));
    assert!(r["f2"].as_f64().unwrap() < 0.0);
    assert_eq!(r["constraint"], "lead vehicle");
    assert!(r["adjusted_horizon"].as_f64().unwrap() > 12.0);
    let spacing = r["adjusted_spacing"]["y"].as_array().unwrap();
    assert!(spacing.iter().all(|s| s.as_f64().unwrap() >= -1e-6));
}

#[test]
fn suite_trip_reports_both_drivers() {
    let r = parse(&simulate_suite_trip(0, 2024));
    assert_eq!(r["name"], "trip-1");
    assert_eq!(r["lights"].as_array().unwrap().len(), 9);
    let eco = r["eco"]["energy_wh"].as_f64().unwrap();
    let human = r["human"]["energy_wh"].as_f64().unwrap();
    assert!(eco < human);
    let gain = r["energy_gain_pct"].as_f64().unwrap();
    assert!((gain - (human - eco) / human * 100.0).abs() < 1e-9);
    assert!(r["eco"]["trace"]["t"].as_array().unwrap().len() <= 601);
    assert_eq!(simulate_suite_trip(0, 2024), simulate_suite_trip(0, 2024));
}
