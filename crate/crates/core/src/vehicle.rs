//! Vehicle parameters, longitudinal force model, motor/battery power and the
//! backward (a posteriori) energy evaluator.
//!
//! Two cost-coefficient domains coexist:
//!
//! * `p0`, `p1` act on the linearized model, `p0·(a+h)·v + p1·(a+h)²`, and are
//!   what the optimal-control layer minimizes.
//! * `motor_linear_coeff`, `motor_loss_coeff` act on motor torque and speed,
//!   `k·T_m·ω_m + p1_T·T_m²`, and drive the backward energy evaluation.
//!
//! `p1 = p1_T·(m·r_w)²` by default; both entries can be set independently.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Speed used to calibrate the lumped resistive deceleration `h` (30 km/h).
pub const DEFAULT_H_REFERENCE_SPEED: f64 = 30.0 / 3.6;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Mass including rotating inertia [kg].
    pub mass: f64,
    /// Air density [kg/m^3].
    pub air_density: f64,
    pub drag_coeff: f64,
    /// Frontal area [m^2].
    pub frontal_area: f64,
    pub rolling_coeff: f64,
    pub gravity: f64,
    /// Wheel radius [m].
    pub wheel_radius: f64,
    /// Lumped resistive deceleration [m/s^2].
    pub h: f64,
    /// Linear cost coefficient, `m / r_w`.
    pub p0: f64,
    /// Quadratic cost coefficient on `(a + h)`.
    pub p1: f64,
    /// Factor on `T_m·ω_m` in the motor power model.
    pub motor_linear_coeff: f64,
    /// Quadratic loss coefficient on motor torque [W/(N·m)^2].
    pub motor_loss_coeff: f64,
    /// Symmetric acceleration bound, `a_min = -a_max` [m/s^2].
    pub a_max: f64,
    /// Maximum regenerative power accepted by the battery [W].
    pub regen_power_limit: f64,
}

impl Default for VehicleParams {
    /// Renault Zoe ZE-50 engineering defaults. Calibratable, not measured.
    fn default() -> Self {
        VehicleParams::from_physical(PhysicalParams::default())
    }
}

/// The independently chosen parameters; derived coefficients are filled in
/// by [`VehicleParams::from_physical`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub mass: f64,
    pub air_density: f64,
    pub drag_coeff: f64,
    pub frontal_area: f64,
    pub rolling_coeff: f64,
    pub gravity: f64,
    pub wheel_radius: f64,
    pub motor_linear_coeff: f64,
    pub motor_loss_coeff: f64,
    pub a_max: f64,
    pub regen_power_limit: f64,
    pub h_reference_speed: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            mass: 1545.0,
            air_density: 1.2,
            drag_coeff: 0.31,
            frontal_area: 2.43,
            rolling_coeff: 0.012,
            gravity: 9.81,
            wheel_radius: 0.2914,
            motor_linear_coeff: 1.0,
            motor_loss_coeff: 0.002,
            a_max: 2.5,
            regen_power_limit: 40_000.0,
            h_reference_speed: DEFAULT_H_REFERENCE_SPEED,
        }
    }
}

impl VehicleParams {
    pub fn from_physical(p: PhysicalParams) -> Self {
        let mut params = VehicleParams {
            mass: p.mass,
            air_density: p.air_density,
            drag_coeff: p.drag_coeff,
            frontal_area: p.frontal_area,
            rolling_coeff: p.rolling_coeff,
            gravity: p.gravity,
            wheel_radius: p.wheel_radius,
            h: 0.0,
            p0: p.mass / p.wheel_radius,
            p1: p.motor_loss_coeff * (p.mass * p.wheel_radius).powi(2),
            motor_linear_coeff: p.motor_linear_coeff,
            motor_loss_coeff: p.motor_loss_coeff,
            a_max: p.a_max,
            regen_power_limit: p.regen_power_limit,
        };
        params.h = params.calibrated_h(p.h_reference_speed);
        params
    }

    /// `h` such that `m·h` equals the aerodynamic plus rolling resistance at `v_ref`.
    pub fn calibrated_h(&self, v_ref: f64) -> f64 {
        let f = resistive_forces(v_ref, 0.0, self);
        (f.aero + f.rolling) / self.mass
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 10] = [
            ("m", self.mass),
            ("rho_a", self.air_density),
            ("c_d", self.drag_coeff),
            ("a_f", self.frontal_area),
            ("c_r", self.rolling_coeff),
            ("g", self.gravity),
            ("r_w", self.wheel_radius),
            ("p0", self.p0),
            ("a_max", self.a_max),
            ("regen_power_limit", self.regen_power_limit),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        let non_negative: [(&'static str, f64); 4] = [
            ("h", self.h),
            ("p1", self.p1),
            ("motor_linear_coeff", self.motor_linear_coeff),
            ("motor_loss_coeff", self.motor_loss_coeff),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and >= 0, got {value}"),
                });
            }
        }
        let expected_p0 = self.mass / self.wheel_radius;
        if ((self.p0 - expected_p0) / expected_p0).abs() > 1e-9 {
            return Err(Error::InvalidParam {
                name: "p0",
                reason: format!("must equal m / r_w = {expected_p0}, got {}", self.p0),
            });
        }
        Ok(())
    }

    /// Parses a `key = value` parameter file. Missing keys take the Zoe
    /// defaults; `h`, `p0` and `p1` are derived unless given explicitly.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut phys = PhysicalParams::default();
        let mut h = None;
        let mut p0 = None;
        let mut p1 = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::parse(
                    origin,
                    line_no,
                    format!("`{}` is not a number", value.trim()),
                )
            })?;
            match key {
                "m" => phys.mass = value,
                "rho_a" => phys.air_density = value,
                "c_d" => phys.drag_coeff = value,
                "a_f" | "A_f" => phys.frontal_area = value,
                "c_r" => phys.rolling_coeff = value,
                "g" => phys.gravity = value,
                "r_w" => phys.wheel_radius = value,
                "motor_linear_coeff" => phys.motor_linear_coeff = value,
                "motor_loss_coeff" => phys.motor_loss_coeff = value,
                "a_max" => phys.a_max = value,
                "regen_power_limit" => phys.regen_power_limit = value,
                "v_ref" => phys.h_reference_speed = value,
                "h" => h = Some(value),
                "p0" => p0 = Some(value),
                "p1" => p1 = Some(value),
                other => {
                    return Err(Error::parse(
                        origin,
                        line_no,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        let mut params = VehicleParams::from_physical(phys);
        if let Some(h) = h {
            params.h = h;
        }
        if let Some(p0) = p0 {
            params.p0 = p0;
        }
        if let Some(p1) = p1 {
            params.p1 = p1;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# vehicle parameters, SI units\n");
        let rows: [(&str, f64); 14] = [
            ("m", self.mass),
            ("rho_a", self.air_density),
            ("c_d", self.drag_coeff),
            ("a_f", self.frontal_area),
            ("c_r", self.rolling_coeff),
            ("g", self.gravity),
            ("r_w", self.wheel_radius),
            ("h", self.h),
            ("p0", self.p0),
            ("p1", self.p1),
            ("motor_linear_coeff", self.motor_linear_coeff),
            ("motor_loss_coeff", self.motor_loss_coeff),
            ("a_max", self.a_max),
            ("regen_power_limit", self.regen_power_limit),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinState {
    /// Position along the current link [m].
    pub x: f64,
    pub v: f64,
    /// Time since trip start [s].
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistiveForces {
    pub aero: f64,
    pub rolling: f64,
    pub grade: f64,
}

impl ResistiveForces {
    pub fn total(&self) -> f64 {
        self.aero + self.rolling + self.grade
    }
}

pub fn resistive_forces(v: f64, slope: f64, params: &VehicleParams) -> ResistiveForces {
    let mg = params.mass * params.gravity;
    ResistiveForces {
        aero: 0.5 * params.air_density * params.drag_coeff * params.frontal_area * v * v,
        rolling: mg * params.rolling_coeff,
        grade: mg * slope.sin(),
    }
}

/// Integrand of the linearized cost, clipped below at the regenerative limit.
pub fn battery_power(v: f64, a: f64, params: &VehicleParams) -> f64 {
    linearized_power(v, a, params).max(-params.regen_power_limit)
}

/// `p0·(a+h)·v + p1·(a+h)²`, unclipped.
pub fn linearized_power(v: f64, a: f64, params: &VehicleParams) -> f64 {
    let u = a + params.h;
    params.p0 * u * v + params.p1 * u * u
}

/// Battery power from the backward wheel → motor → battery chain on a flat
/// road, with ideal transmission and regen clipping.
pub fn backward_power(v: f64, a: f64, params: &VehicleParams) -> f64 {
    if v <= 0.0 && a <= 0.0 {
        // standing still on the brakes
        return 0.0;
    }
    let f = resistive_forces(v.max(0.0), 0.0, params);
    let traction = params.mass * a + f.total();
    let torque = traction * params.wheel_radius;
    let omega = v.max(0.0) / params.wheel_radius;
    let p = params.motor_linear_coeff * torque * omega + params.motor_loss_coeff * torque * torque;
    p.max(-params.regen_power_limit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripTrace {
    samples: Vec<TraceSample>,
    pub vehicle_id: String,
    pub route_id: String,
}

impl TripTrace {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.v.is_finite()) {
                return Err(Error::InvalidTrace(format!("sample {i} is not finite")));
            }
            if s.v < 0.0 {
                return Err(Error::InvalidTrace(format!(
                    "sample {i} has negative speed {}",
                    s.v
                )));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidTrace(format!(
                    "time is not strictly increasing at sample {}",
                    i + 1
                )));
            }
            if w[1].x < w[0].x {
                return Err(Error::InvalidTrace(format!(
                    "position decreases at sample {}",
                    i + 1
                )));
            }
        }
        Ok(TripTrace {
            samples,
            vehicle_id: String::new(),
            route_id: String::new(),
        })
    }

    pub fn with_ids(mut self, vehicle_id: impl Into<String>, route_id: impl Into<String>) -> Self {
        self.vehicle_id = vehicle_id.into();
        self.route_id = route_id.into();
        self
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn distance(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.x - a.x,
            _ => 0.0,
        }
    }

    pub fn average_speed(&self) -> f64 {
        let d = self.duration();
        if d > 0.0 {
            self.distance() / d
        } else {
            0.0
        }
    }

    /// Finite-difference acceleration: central inside, one-sided at the ends.
    pub fn accelerations(&self) -> Vec<f64> {
        let s = &self.samples;
        let n = s.len();
        if n < 2 {
            return vec![0.0; n];
        }
        (0..n)
            .map(|k| {
                let (lo, hi) = match k {
                    0 => (0, 1),
                    k if k == n - 1 => (n - 2, n - 1),
                    k => (k - 1, k + 1),
                };
                (s[hi].v - s[lo].v) / (s[hi].t - s[lo].t)
            })
            .collect()
    }

    /// Sub-trace over the inclusive sample range.
    pub fn slice(&self, start: usize, end: usize) -> TripTrace {
        TripTrace {
            samples: self.samples[start..=end].to_vec(),
            vehicle_id: self.vehicle_id.clone(),
            route_id: self.route_id.clone(),
        }
    }

    /// Reads a CSV trace with at least the `t`, `x` and `v` columns.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(origin, 1, e.to_string()))?
            .clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(origin, 1, format!("missing `{name}` column")))
        };
        let (ti, xi, vi) = (column("t")?, column("x")?, column("v")?);
        let mut samples = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                let raw = record.get(i).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| Error::parse(origin, line, format!("`{raw}` is not a number")))
            };
            samples.push(TraceSample {
                t: field(ti)?,
                x: field(xi)?,
                v: field(vi)?,
            });
        }
        TripTrace::new(samples).map_err(|e| Error::parse(origin, 0, e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,x,v\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.t, s.x, s.v);
        }
        out
    }
}

/// Battery power at every trace sample from the backward model [W].
pub fn trace_power(trace: &TripTrace, params: &VehicleParams) -> Vec<f64> {
    trace
        .samples()
        .iter()
        .zip(trace.accelerations())
        .map(|(s, a)| backward_power(s.v, a, params))
        .collect()
}

/// Total battery energy of a recorded trace [Wh], trapezoidal in time.
pub fn evaluate_trace_energy(trace: &TripTrace, params: &VehicleParams) -> Result<f64> {
    let power = trace_power(trace, params);
    integrate_power(trace, &power).map(|joules| joules / 3600.0)
}

/// Linearized-model cost `∫ p0(a+h)v + p1(a+h)² dt` of a trace [J], unclipped.
pub fn linearized_trace_cost(trace: &TripTrace, params: &VehicleParams) -> Result<f64> {
    let power: Vec<f64> = trace
        .samples()
        .iter()
        .zip(trace.accelerations())
        .map(|(s, a)| linearized_power(s.v, a, params))
        .collect();
    integrate_power(trace, &power)
}

fn integrate_power(trace: &TripTrace, power: &[f64]) -> Result<f64> {
    let s = trace.samples();
    if s.len() < 2 {
        return Err(Error::InvalidTrace(format!(
            "need at least 2 samples, got {}",
            s.len()
        )));
    }
    let mut joules = 0.0;
    for k in 0..s.len() - 1 {
        let dt = s[k + 1].t - s[k].t;
        if dt <= 0.0 {
            return Err(Error::InvalidTrace(format!(
                "non-positive time step at sample {}",
                k + 1
            )));
        }
        joules += 0.5 * (power[k] + power[k + 1]) * dt;
    }
    Ok(joules)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_params() -> VehicleParams {
        VehicleParams::from_physical(PhysicalParams {
            mass: 1500.0,
            ..PhysicalParams::default()
        })
    }

    fn uniform_trace(dt: f64, n: usize, speed: impl Fn(f64) -> f64) -> TripTrace {
        let mut x = 0.0;
        let mut samples = Vec::with_capacity(n);
        let mut prev_v = speed(0.0);
        for k in 0..n {
            let t = k as f64 * dt;
            let v = speed(t);
            if k > 0 {
                x += 0.5 * (v + prev_v) * dt;
            }
            prev_v = v;
            samples.push(TraceSample { t, x, v });
        }
        TripTrace::new(samples).unwrap()
    }

    #[test]
    fn resistive_forces_at_standstill() {
        let p = example_params();
        let f = resistive_forces(0.0, 0.0, &p);
        assert_eq!(f.aero, 0.0);
        assert_eq!(f.grade, 0.0);
        assert!((f.rolling - 1500.0 * 9.81 * 0.012).abs() < 1e-12);
    }

    #[test]
    fn resistive_forces_at_ten_metres_per_second() {
        let p = example_params();
        let f = resistive_forces(10.0, 0.0, &p);
        assert!((f.aero - 45.198).abs() < 1e-9);
        assert!((f.rolling - 176.58).abs() < 1e-9);
        assert_eq!(f.grade, 0.0);
    }

    #[test]
    fn slope_sign_only_flips_grade() {
        let p = example_params();
        let up = resistive_forces(12.0, 0.03, &p);
        let down = resistive_forces(12.0, -0.03, &p);
        assert_eq!(up.aero, down.aero);
        assert_eq!(up.rolling, down.rolling);
        assert_eq!(up.grade, -down.grade);
    }

    fn unit_cost_params(h: f64) -> VehicleParams {
        VehicleParams {
            p0: 1.0,
            p1: 1.0,
            h,
            regen_power_limit: 1e9,
            ..VehicleParams::default()
        }
    }

    #[test]
    fn battery_power_direct_evaluation() {
        assert_eq!(battery_power(2.0, 3.0, &unit_cost_params(0.0)), 15.0);
    }

    #[test]
    fn battery_power_vanishes_when_coasting() {
        let p = VehicleParams::default();
        for v in [0.0, 1.0, 7.5, 30.0] {
            assert_eq!(battery_power(v, -p.h, &p), 0.0);
        }
    }

    #[test]
    fn cruise_integrand_and_energy() {
        let p = unit_cost_params(0.1);
        let power = battery_power(10.0, 0.0, &p);
        assert!((power - 1.01).abs() < 1e-12);
        assert!((power * 100.0 - 101.0).abs() < 1e-9);
    }

    #[test]
    fn battery_power_is_clipped_by_regen_limit() {
        let p = VehicleParams::default();
        assert_eq!(battery_power(15.0, -3.0, &p), -p.regen_power_limit);
    }

    #[test]
    fn constant_speed_energy_matches_resistive_work() {
        let p = VehicleParams {
            motor_loss_coeff: 0.0,
            ..example_params()
        };
        let trace = uniform_trace(0.5, 201, |_| 10.0);
        let wh = evaluate_trace_energy(&trace, &p).unwrap();
        let f = resistive_forces(10.0, 0.0, &p);
        let expected = (f.aero + f.rolling) * 10.0 * 100.0 / 3600.0;
        assert!((wh - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn standstill_trip_uses_no_energy() {
        let trace = uniform_trace(1.0, 10, |_| 0.0);
        assert_eq!(
            evaluate_trace_energy(&trace, &VehicleParams::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn short_trace_is_rejected() {
        let trace = uniform_trace(1.0, 1, |_| 5.0);
        assert!(matches!(
            evaluate_trace_energy(&trace, &VehicleParams::default()),
            Err(Error::InvalidTrace(_))
        ));
    }

    #[test]
    fn non_increasing_time_is_rejected() {
        let samples = vec![
            TraceSample {
                t: 0.0,
                x: 0.0,
                v: 1.0,
            },
            TraceSample {
                t: 0.0,
                x: 1.0,
                v: 1.0,
            },
        ];
        assert!(TripTrace::new(samples).is_err());
    }

    #[test]
    fn energy_is_stable_under_resampling() {
        let p = VehicleParams::default();
        let speed = |t: f64| 9.0 + 3.0 * (t / 15.0).sin();
        let coarse = uniform_trace(0.5, 241, speed);
        let fine = uniform_trace(0.05, 2401, speed);
        let a = evaluate_trace_energy(&coarse, &p).unwrap();
        let b = evaluate_trace_energy(&fine, &p).unwrap();
        assert!(((a - b) / b).abs() < 0.005, "coarse {a} fine {b}");
    }

    #[test]
    fn backward_model_agrees_with_linearized_model_near_reference_speed() {
        // With p1 = 0 and h calibrated at v_ref, the nonlinear chain reduces to
        // ∫ m(a+h)v dt up to the drag curvature around v_ref.
        let p = VehicleParams {
            motor_loss_coeff: 0.0,
            regen_power_limit: 1e9,
            ..VehicleParams::default()
        };
        let v_ref = DEFAULT_H_REFERENCE_SPEED;
        let cruise = uniform_trace(0.1, 1001, |_| v_ref);
        let linear = |trace: &TripTrace| {
            let s = trace.samples();
            let acc = trace.accelerations();
            let mut j = 0.0;
            for k in 0..s.len() - 1 {
                let pk = p.mass * (acc[k] + p.h) * s[k].v;
                let pk1 = p.mass * (acc[k + 1] + p.h) * s[k + 1].v;
                j += 0.5 * (pk + pk1) * (s[k + 1].t - s[k].t);
            }
            j / 3600.0
        };
        let e = evaluate_trace_energy(&cruise, &p).unwrap();
        assert!((e - linear(&cruise)).abs() < 1e-9 * e);

        let wavy = uniform_trace(0.05, 2001, |t| v_ref + 0.8 * (t / 8.0).sin());
        let e = evaluate_trace_energy(&wavy, &p).unwrap();
        let l = linear(&wavy);
        assert!(((e - l) / l).abs() < 0.01, "backward {e} linear {l}");
    }

    #[test]
    fn default_parameters_are_consistent() {
        let p = VehicleParams::default();
        p.validate().unwrap();
        assert!((p.p0 - p.mass / p.wheel_radius).abs() < 1e-9);
        let f = resistive_forces(DEFAULT_H_REFERENCE_SPEED, 0.0, &p);
        assert!((p.h * p.mass - f.aero - f.rolling).abs() < 1e-9);
    }

    #[test]
    fn parameter_file_round_trip_and_diagnostics() {
        let p = VehicleParams::default();
        let parsed = VehicleParams::parse(&p.to_file_string(), "zoe.txt").unwrap();
        assert_eq!(parsed, p);

        let err = VehicleParams::parse("m = 1500\nmass = 3\n", "bad.txt").unwrap_err();
        assert!(err.to_string().starts_with("bad.txt:2:"), "{err}");
        let err = VehicleParams::parse("m = 1500\np0 = 1\n", "bad.txt").unwrap_err();
        assert!(matches!(err, Error::InvalidParam { name: "p0", .. }));
    }

    #[test]
    fn trace_csv_round_trip_and_row_numbers() {
        let trace = uniform_trace(0.25, 9, |t| 2.0 + t);
        let parsed = TripTrace::parse_csv(&trace.to_csv_string(), "t.csv").unwrap();
        assert_eq!(parsed.samples(), trace.samples());

        let err = TripTrace::parse_csv("t,x,v\n0,0,1\n1,oops,1\n", "t.csv").unwrap_err();
        assert!(err.to_string().starts_with("t.csv:3:"), "{err}");
    }

    #[test]
    fn finite_differences_are_central_inside() {
        let trace = uniform_trace(1.0, 4, |t| t * t);
        let acc = trace.accelerations();
        assert_eq!(acc, vec![1.0, 2.0, 4.0, 5.0]);
    }
}
