//! Post-trip scoring: breakpoints at signals and traffic-induced speed
//! minima, a per-segment optimal reference, and the driving score
//! `EDS = (E_D − E_T) / E_T`.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::ocp::{f1_vmax, solve_unconstrained, BoundaryConditions, QuadraticProfile};
use crate::route::{EndFeature, Route};
use crate::vehicle::{trace_power, TraceSample, TripTrace, VehicleParams};

/// Minimum prominence of a traffic speed minimum [m/s].
pub const DEFAULT_PROMINENCE: f64 = 2.0;
/// Minima this close to a planned breakpoint are merged into it [m].
pub const MERGE_RADIUS: f64 = 20.0;
/// Allowed gap between the trace ends and the route ends [m].
pub const COVERAGE_TOLERANCE: f64 = 1.0;
/// At or below this speed the vehicle counts as standing [m/s].
pub const STATIONARY_SPEED: f64 = 1e-3;

/// Trace samples closer than this to a breakpoint time are dropped from the
/// reference grid [s].
const GRID_EPS: f64 = 1e-6;

pub const EDS_CSV_HEADER: &str = "trip,E_D_Wh,E_T_Wh,EDS";
pub const COMPARISON_CSV_HEADER: &str = "trip,energy_gain_pct,delta_avg_speed_pct";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakpointKind {
    /// Trip ends and link ends with a signal, stop or speed change.
    Planned,
    /// Speed minimum caused by traffic.
    Traffic,
}

impl fmt::Display for BreakpointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BreakpointKind::Planned => "planned",
            BreakpointKind::Traffic => "traffic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub x: f64,
    /// Arrival time [s].
    pub t: f64,
    pub v: f64,
    pub kind: BreakpointKind,
    /// Time spent standing at `x` after arrival [s].
    pub dwell: f64,
}

impl Breakpoint {
    pub fn departure(&self) -> f64 {
        self.t + self.dwell
    }
}

/// One run of samples with the same speed, or of standing samples.
#[derive(Debug, Clone, Copy)]
struct Level {
    v: f64,
    first: usize,
    last: usize,
}

fn speed_levels(samples: &[TraceSample]) -> Vec<Level> {
    let mut levels: Vec<Level> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let standing = s.v <= STATIONARY_SPEED;
        match levels.last_mut() {
            Some(l) if l.v == s.v || (standing && l.v <= STATIONARY_SPEED) => {
                l.v = l.v.min(s.v);
                l.last = i;
            }
            _ => levels.push(Level {
                v: s.v,
                first: i,
                last: i,
            }),
        }
    }
    levels
}

/// Topographic prominence of the minimum at level `j`: the lower of the two
/// highest speeds reached before the trace dips below it on either side.
fn prominence(levels: &[Level], j: usize) -> f64 {
    let depth = levels[j].v;
    let side_max = |range: &mut dyn Iterator<Item = usize>| {
        let mut top = depth;
        for k in range {
            if levels[k].v < depth {
                break;
            }
            top = top.max(levels[k].v);
        }
        top
    };
    let left = side_max(&mut (0..j).rev());
    let right = side_max(&mut (j + 1..levels.len()));
    left.min(right) - depth
}

/// State where a single-sample minimum bottoms out, from the parabola
/// through it and its neighbours.
fn refine_minimum(s: &[TraceSample], i: usize) -> (f64, f64, f64) {
    let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
    let (h1, h2) = (b.t - a.t, c.t - b.t);
    let d1 = (b.v - a.v) / h1;
    let d2 = (c.v - b.v) / h2;
    let curvature = (d2 - d1) / (h1 + h2);
    if !(curvature > 0.0) {
        return (b.t, b.x, b.v);
    }
    // v(t) = b.v + slope·(t − b.t) + curvature·(t − b.t)²
    let slope = d1 + curvature * h1;
    let offset = (-slope / (2.0 * curvature)).clamp(-h1, h2);
    let t = b.t + offset;
    let v = (b.v + slope * offset + curvature * offset * offset).max(0.0);
    let x = if offset < 0.0 {
        b.x + offset / h1 * (b.x - a.x)
    } else {
        b.x + offset / h2 * (c.x - b.x)
    };
    (t, x, v)
}

/// First time the trace reaches position `x`, with the interpolated speed.
fn crossing(samples: &[TraceSample], x: f64) -> Option<(f64, f64)> {
    let k = samples.iter().position(|s| s.x >= x)?;
    if k == 0 {
        return Some((samples[0].t, samples[0].v));
    }
    let (a, b) = (samples[k - 1], samples[k]);
    let w = (x - a.x) / (b.x - a.x);
    Some((a.t + w * (b.t - a.t), a.v + w * (b.v - a.v)))
}

fn check_coverage(trace: &TripTrace, route: &Route) -> Result<()> {
    let (first, last) = match (trace.samples().first(), trace.samples().last()) {
        (Some(a), Some(b)) if trace.len() >= 2 => (a, b),
        _ => {
            return Err(Error::InvalidTrace(
                "trace needs at least two samples".into(),
            ))
        }
    };
    let length = route.total_length();
    if first.x > COVERAGE_TOLERANCE || last.x < length - COVERAGE_TOLERANCE {
        return Err(Error::InvalidTrace(format!(
            "trace covers {:.1}..{:.1} m but route `{}` is {:.1} m long",
            first.x, last.x, route.id, length
        )));
    }
    Ok(())
}

/// Planned breakpoints (trip ends, link ends with a feature) plus traffic
/// minima of prominence at least `prominence_min`.
pub fn detect_breakpoints(
    trace: &TripTrace,
    route: &Route,
    prominence_min: f64,
) -> Result<Vec<Breakpoint>> {
    check_coverage(trace, route)?;
    if !(prominence_min >= 0.0) {
        return Err(Error::InvalidTrace(format!(
            "prominence threshold {prominence_min} must be non-negative"
        )));
    }
    let s = trace.samples();
    let levels = speed_levels(s);
    let (start, end) = (s[0], s[s.len() - 1]);

    let start_dwell = if levels[0].v <= STATIONARY_SPEED && levels.len() > 1 {
        s[levels[0].last].t - start.t
    } else {
        0.0
    };
    let mut planned = vec![Breakpoint {
        x: start.x,
        t: start.t,
        v: start.v,
        kind: BreakpointKind::Planned,
        dwell: start_dwell,
    }];
    for (i, link) in route.links().iter().enumerate() {
        if link.end_feature == EndFeature::None {
            continue;
        }
        let x = route.link_start(i) + link.length;
        if x <= start.x || x >= end.x {
            continue;
        }
        if let Some((t, v)) = crossing(s, x) {
            planned.push(Breakpoint {
                x,
                t,
                v,
                kind: BreakpointKind::Planned,
                dwell: 0.0,
            });
        }
    }
    let last_planned = Breakpoint {
        x: end.x,
        t: end.t,
        v: end.v,
        kind: BreakpointKind::Planned,
        dwell: 0.0,
    };

    let mut traffic = Vec::new();
    for j in 1..levels.len().saturating_sub(1) {
        let l = levels[j];
        if !(l.v < levels[j - 1].v && l.v < levels[j + 1].v) {
            continue;
        }
        if prominence(&levels, j) < prominence_min {
            continue;
        }
        let bp = if l.v <= STATIONARY_SPEED {
            Breakpoint {
                x: s[l.first].x,
                t: s[l.first].t,
                v: 0.0,
                kind: BreakpointKind::Traffic,
                dwell: s[l.last].t - s[l.first].t,
            }
        } else if l.first == l.last {
            let (t, x, v) = refine_minimum(s, l.first);
            Breakpoint {
                x,
                t,
                v,
                kind: BreakpointKind::Traffic,
                dwell: 0.0,
            }
        } else {
            let mid = s[l.first];
            Breakpoint {
                x: mid.x,
                t: mid.t,
                v: l.v,
                kind: BreakpointKind::Traffic,
                dwell: 0.0,
            }
        };
        traffic.push(bp);
    }

    // merge minima into nearby planned points; the trip ends stay put
    let mut interior: Vec<Breakpoint> = planned[1..].to_vec();
    let mut merged_speed: Vec<Option<f64>> = vec![None; interior.len()];
    let mut extra = Vec::new();
    for bp in traffic {
        if (bp.x - start.x).abs() <= MERGE_RADIUS || (end.x - bp.x).abs() <= MERGE_RADIUS {
            continue;
        }
        let nearest = interior
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.x - bp.x).abs() <= MERGE_RADIUS)
            .min_by(|a, b| (a.1.x - bp.x).abs().total_cmp(&(b.1.x - bp.x).abs()))
            .map(|(k, _)| k);
        match nearest {
            Some(k) => {
                if merged_speed[k].is_none_or(|v| bp.v < v) {
                    merged_speed[k] = Some(bp.v);
                    interior[k] = Breakpoint {
                        kind: BreakpointKind::Planned,
                        ..bp
                    };
                }
            }
            None => extra.push(bp),
        }
    }
    interior.extend(extra);
    interior.sort_by(|a, b| a.t.total_cmp(&b.t));

    let mut out = vec![planned[0]];
    for bp in interior {
        let prev = out[out.len() - 1];
        let room = bp.x > prev.x + GRID_EPS
            && bp.t > prev.departure() + GRID_EPS
            && bp.x < last_planned.x - GRID_EPS
            && bp.departure() < last_planned.t - GRID_EPS;
        if room {
            out.push(bp);
        }
    }
    out.push(last_planned);
    Ok(out)
}

/// Optimal profile between two consecutive breakpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSegment {
    pub from: Breakpoint,
    pub to: Breakpoint,
    pub profile: QuadraticProfile,
    pub v_max: f64,
    /// The unconstrained profile leaves `[0, v_max]` and was clipped.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub trace: TripTrace,
    pub segments: Vec<ReferenceSegment>,
}

/// Lowest speed limit over the route interval `[a, b]`.
fn limit_between(route: &Route, a: f64, b: f64) -> f64 {
    route
        .links()
        .iter()
        .enumerate()
        .filter(|(i, l)| {
            let lo = route.link_start(*i);
            lo < b && lo + l.length > a
        })
        .map(|(_, l)| l.v_max)
        .fold(f64::INFINITY, f64::min)
}

/// Standstill at a breakpoint, on the driven time grid.
fn push_dwell(out: &mut Vec<TraceSample>, times: &[f64], bp: &Breakpoint) {
    if bp.dwell <= 0.0 {
        return;
    }
    let lo = times.partition_point(|&t| t <= bp.t + GRID_EPS);
    let hi = times.partition_point(|&t| t < bp.departure() - GRID_EPS);
    for &t in times[lo..hi.max(lo)].iter().chain([bp.departure()].iter()) {
        out.push(TraceSample { t, x: bp.x, v: 0.0 });
    }
}

/// Per-segment optimal speed profile with the driven breakpoint states.
/// Horizons are fixed by the trace; a profile leaving `[0, v_max]` is clipped
/// in speed and flagged, positions follow the unclipped profile.
pub fn optimal_reference(
    trace: &TripTrace,
    breakpoints: &[Breakpoint],
    route: &Route,
) -> Result<Reference> {
    if breakpoints.len() < 2 {
        return Err(Error::DegenerateSegment {
            index: 0,
            reason: format!("need at least two breakpoints, got {}", breakpoints.len()),
        });
    }
    let times: Vec<f64> = trace.samples().iter().map(|s| s.t).collect();
    let first = breakpoints[0];
    let mut out = vec![TraceSample {
        t: first.t,
        x: first.x,
        v: first.v,
    }];
    push_dwell(&mut out, &times, &first);
    let mut segments = Vec::with_capacity(breakpoints.len() - 1);
    for (index, pair) in breakpoints.windows(2).enumerate() {
        let (from, to) = (pair[0], pair[1]);
        let t0 = from.departure();
        let (dt, dx) = (to.t - t0, to.x - from.x);
        if !(dt > 0.0) || !(dx > 0.0) {
            return Err(Error::DegenerateSegment {
                index,
                reason: format!("Δt = {dt} s, Δx = {dx} m"),
            });
        }
        let bc = BoundaryConditions::new(from.v, to.v, dx, dt)?;
        let profile = solve_unconstrained(&bc)?;
        let v_max = limit_between(route, from.x, to.x);
        let over = match f1_vmax(&bc, v_max) {
            Ok(f1) => f1 < 0.0,
            Err(Error::SpeedLimitInfeasible { .. }) => true,
            Err(e) => return Err(e),
        };
        let clipped = over || profile.speed_range().0 < 0.0;

        let lo = times.partition_point(|&t| t <= t0 + GRID_EPS);
        let hi = times.partition_point(|&t| t < to.t - GRID_EPS);
        for &t in &times[lo..hi.max(lo)] {
            let tau = t - t0;
            let floor = out[out.len() - 1].x;
            out.push(TraceSample {
                t,
                x: (from.x + profile.position(tau)).clamp(floor, to.x),
                v: profile.speed(tau).clamp(0.0, v_max),
            });
        }
        out.push(TraceSample {
            t: to.t,
            x: to.x,
            v: to.v,
        });
        push_dwell(&mut out, &times, &to);
        segments.push(ReferenceSegment {
            from,
            to,
            profile,
            v_max,
            clipped,
        });
    }
    let trace = TripTrace::new(out)?.with_ids(
        format!("{}-reference", trace.vehicle_id),
        trace.route_id.clone(),
    );
    Ok(Reference { trace, segments })
}

/// `(E_D − E_T) / E_T`; negative when the driver beat the reference.
pub fn eds(e_driven: f64, e_reference: f64) -> Result<f64> {
    if !(e_reference > 0.0) {
        return Err(Error::NonPositiveReference(e_reference));
    }
    Ok((e_driven - e_reference) / e_reference)
}

/// Running battery energy at every sample [Wh].
fn cumulative_energy(trace: &TripTrace, params: &VehicleParams) -> Vec<f64> {
    let power = trace_power(trace, params);
    let s = trace.samples();
    let mut acc = Vec::with_capacity(s.len());
    let mut total = 0.0;
    for k in 0..s.len() {
        if k > 0 {
            total += 0.5 * (power[k] + power[k - 1]) * (s[k].t - s[k - 1].t) / 3600.0;
        }
        acc.push(total);
    }
    acc
}

fn energy_at(trace: &TripTrace, cumulative: &[f64], t: f64) -> f64 {
    let s = trace.samples();
    let k = s.partition_point(|p| p.t < t);
    if k == 0 {
        return cumulative[0];
    }
    if k >= s.len() {
        return cumulative[s.len() - 1];
    }
    let w = (t - s[k - 1].t) / (s[k].t - s[k - 1].t);
    cumulative[k - 1] + w * (cumulative[k] - cumulative[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentScore {
    pub from: Breakpoint,
    pub to: Breakpoint,
    pub e_driven_wh: f64,
    pub e_reference_wh: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdsReport {
    pub e_driven_wh: f64,
    pub e_reference_wh: f64,
    pub eds: f64,
    pub breakpoints: Vec<Breakpoint>,
    pub segments: Vec<SegmentScore>,
    pub reference: TripTrace,
}

impl EdsReport {
    pub fn csv_row(&self, trip: &str) -> String {
        format!(
            "{trip},{:.4},{:.4},{:.6}",
            self.e_driven_wh, self.e_reference_wh, self.eds
        )
    }

    /// Per-segment breakdown as CSV.
    pub fn segments_csv(&self) -> String {
        let mut out = String::from(
            "segment,x_start,x_end,t_start,t_end,v_start,v_end,end_kind,E_D_Wh,E_T_Wh,clipped\n",
        );
        for (i, s) in self.segments.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{},{:.4},{:.4},{}",
                s.from.x,
                s.to.x,
                s.from.departure(),
                s.to.t,
                s.from.v,
                s.to.v,
                s.to.kind,
                s.e_driven_wh,
                s.e_reference_wh,
                s.clipped
            );
        }
        out
    }
}

/// Scores a driven trace against its reconstructed optimal reference.
pub fn score_trip(
    trace: &TripTrace,
    route: &Route,
    params: &VehicleParams,
    prominence_min: f64,
) -> Result<EdsReport> {
    let breakpoints = detect_breakpoints(trace, route, prominence_min)?;
    let reference = optimal_reference(trace, &breakpoints, route)?;
    let driven_acc = cumulative_energy(trace, params);
    let reference_acc = cumulative_energy(&reference.trace, params);
    let e_driven_wh = driven_acc[driven_acc.len() - 1];
    let e_reference_wh = reference_acc[reference_acc.len() - 1];
    let segments = reference
        .segments
        .iter()
        .map(|seg| {
            let (t0, t1) = (seg.from.t, seg.to.t);
            SegmentScore {
                from: seg.from,
                to: seg.to,
                e_driven_wh: energy_at(trace, &driven_acc, t1) - energy_at(trace, &driven_acc, t0),
                e_reference_wh: energy_at(&reference.trace, &reference_acc, t1)
                    - energy_at(&reference.trace, &reference_acc, t0),
                clipped: seg.clipped,
            }
        })
        .collect();
    Ok(EdsReport {
        e_driven_wh,
        e_reference_wh,
        eds: eds(e_driven_wh, e_reference_wh)?,
        breakpoints,
        segments,
        reference: reference.trace,
    })
}

/// Eco-advised against baseline trip over the same route.
#[derive(Debug, Clone, PartialEq)]
pub struct TripComparison {
    /// `(E_HD − E_ED) / E_HD · 100`.
    pub energy_gain_pct: f64,
    /// `(v̄_ED − v̄_HD) / v̄_HD · 100`.
    pub delta_avg_speed_pct: f64,
    pub eco: EdsReport,
    pub human: EdsReport,
}

impl TripComparison {
    pub fn csv_row(&self, trip: &str) -> String {
        format!(
            "{trip},{:.4},{:.4}",
            self.energy_gain_pct, self.delta_avg_speed_pct
        )
    }
}

pub fn compare_trips(
    eco: &TripTrace,
    human: &TripTrace,
    route: &Route,
    params: &VehicleParams,
    prominence_min: f64,
) -> Result<TripComparison> {
    let eco_report = score_trip(eco, route, params, prominence_min)?;
    let human_report = score_trip(human, route, params, prominence_min)?;
    let e_hd = human_report.e_driven_wh;
    if e_hd == 0.0 {
        return Err(Error::InvalidTrace(
            "baseline trace uses no energy; gain is undefined".into(),
        ));
    }
    let v_hd = human.average_speed();
    if !(v_hd > 0.0) {
        return Err(Error::InvalidTrace(
            "baseline trace has no average speed".into(),
        ));
    }
    Ok(TripComparison {
        energy_gain_pct: (e_hd - eco_report.e_driven_wh) / e_hd * 100.0,
        delta_avg_speed_pct: (eco.average_speed() - v_hd) / v_hd * 100.0,
        eco: eco_report,
        human: human_report,
    })
}

pub fn eds_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a EdsReport)>) -> String {
    let mut out = format!("{EDS_CSV_HEADER}\n");
    for (trip, report) in rows {
        out.push_str(&report.csv_row(trip));
        out.push('\n');
    }
    out
}

pub fn comparison_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a TripComparison)>) -> String {
    let mut out = format!("{COMPARISON_CSV_HEADER}\n");
    for (trip, cmp) in rows {
        out.push_str(&cmp.csv_row(trip));
        out.push('\n');
    }
    out
}
