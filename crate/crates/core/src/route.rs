//! Route and link model, coordinate projection, link aggregation and
//! geometric point-to-curve map matching.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Spherical earth radius used by the local tangent plane [m].
pub const EARTH_RADIUS: f64 = 6_371_000.0;
/// Matches farther than this from every link are rejected [m].
pub const OFF_ROUTE_DISTANCE: f64 = 50.0;
/// Default minimum link length before aggregation [m].
pub const DEFAULT_MIN_LINK_LENGTH: f64 = 50.0;

const LOCAL_PLANE_RADIUS: f64 = 100_000.0;
const LENGTH_TOLERANCE: f64 = 1e-3;
const JOINT_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(&self, other: &Point, s: f64) -> Point {
        Point::new(
            self.x + s * (other.x - self.x),
            self.y + s * (other.y - self.y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Equirectangular plane tangent at `origin` on a spherical earth.
    LocalTangent { origin: GeoPoint },
    /// Lambert Conformal Conic, French national zone (Lambert-93, GRS80).
    Lambert93,
}

// Lambert-93 constants
const GRS80_A: f64 = 6_378_137.0;
const GRS80_F: f64 = 1.0 / 298.257_222_101;
const L93_LAT1: f64 = 49.0;
const L93_LAT2: f64 = 44.0;
const L93_LAT0: f64 = 46.5;
const L93_LON0: f64 = 3.0;
const L93_X0: f64 = 700_000.0;
const L93_Y0: f64 = 6_600_000.0;

struct LambertConic {
    e: f64,
    n: f64,
    af: f64,
    r0: f64,
}

impl LambertConic {
    fn lambert93() -> Self {
        let e = (2.0 * GRS80_F - GRS80_F * GRS80_F).sqrt();
        let m = |phi: f64| phi.cos() / (1.0 - (e * phi.sin()).powi(2)).sqrt();
        let t = |phi: f64| conformal_t(phi, e);
        let (p1, p2, p0) = (
            L93_LAT1.to_radians(),
            L93_LAT2.to_radians(),
            L93_LAT0.to_radians(),
        );
        let n = (m(p1).ln() - m(p2).ln()) / (t(p1).ln() - t(p2).ln());
        let af = GRS80_A * m(p1) / (n * t(p1).powf(n));
        let r0 = af * t(p0).powf(n);
        LambertConic { e, n, af, r0 }
    }

    fn forward(&self, g: GeoPoint) -> Point {
        let phi = g.lat.to_radians();
        let r = self.af * conformal_t(phi, self.e).powf(self.n);
        let theta = self.n * (g.lon - L93_LON0).to_radians();
        Point::new(L93_X0 + r * theta.sin(), L93_Y0 + self.r0 - r * theta.cos())
    }

    fn inverse(&self, p: Point) -> GeoPoint {
        let dx = p.x - L93_X0;
        let dy = self.r0 - (p.y - L93_Y0);
        let r = self.n.signum() * dx.hypot(dy);
        let t = (r / self.af).powf(1.0 / self.n);
        let theta = dx.atan2(dy);
        let lon = (theta / self.n).to_degrees() + L93_LON0;
        let mut phi = FRAC_PI_2 - 2.0 * t.atan();
        for _ in 0..30 {
            let es = self.e * phi.sin();
            let next = FRAC_PI_2 - 2.0 * (t * ((1.0 - es) / (1.0 + es)).powf(self.e / 2.0)).atan();
            let done = (next - phi).abs() < 1e-14;
            phi = next;
            if done {
                break;
            }
        }
        GeoPoint {
            lat: phi.to_degrees(),
            lon,
        }
    }
}

fn conformal_t(phi: f64, e: f64) -> f64 {
    let es = e * phi.sin();
    (FRAC_PI_4 - phi / 2.0).tan() / ((1.0 - es) / (1.0 + es)).powf(e / 2.0)
}

impl Projection {
    pub fn project(&self, g: GeoPoint) -> Result<Point> {
        if !(g.lat.is_finite() && g.lon.is_finite()) {
            return Err(Error::OutOfZone {
                lat: g.lat,
                lon: g.lon,
            });
        }
        match *self {
            Projection::LocalTangent { origin } => {
                let p = Point::new(
                    EARTH_RADIUS
                        * origin.lat.to_radians().cos()
                        * (g.lon - origin.lon).to_radians(),
                    EARTH_RADIUS * (g.lat - origin.lat).to_radians(),
                );
                if p.x.hypot(p.y) > LOCAL_PLANE_RADIUS {
                    return Err(Error::OutOfZone {
                        lat: g.lat,
                        lon: g.lon,
                    });
                }
                Ok(p)
            }
            Projection::Lambert93 => {
                if !(41.0..=52.0).contains(&g.lat) || !(-6.0..=10.0).contains(&g.lon) {
                    return Err(Error::OutOfZone {
                        lat: g.lat,
                        lon: g.lon,
                    });
                }
                Ok(LambertConic::lambert93().forward(g))
            }
        }
    }

    pub fn unproject(&self, p: Point) -> GeoPoint {
        match *self {
            Projection::LocalTangent { origin } => GeoPoint {
                lat: origin.lat + (p.y / EARTH_RADIUS).to_degrees(),
                lon: origin.lon
                    + (p.x / (EARTH_RADIUS * origin.lat.to_radians().cos())).to_degrees(),
            },
            Projection::Lambert93 => LambertConic::lambert93().inverse(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndFeature {
    None,
    TrafficLight,
    StopSign,
    SpeedChange,
}

impl EndFeature {
    /// Boundaries that aggregation must keep.
    pub fn is_control(&self) -> bool {
        matches!(self, EndFeature::TrafficLight | EndFeature::StopSign)
    }
}

impl fmt::Display for EndFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndFeature::None => "none",
            EndFeature::TrafficLight => "traffic_light",
            EndFeature::StopSign => "stop_sign",
            EndFeature::SpeedChange => "speed_change",
        })
    }
}

impl FromStr for EndFeature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(EndFeature::None),
            "traffic_light" => Ok(EndFeature::TrafficLight),
            "stop_sign" => Ok(EndFeature::StopSign),
            "speed_change" => Ok(EndFeature::SpeedChange),
            other => Err(format!("unknown end feature `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    /// Planar vertices [m].
    pub polyline: Vec<Point>,
    /// Speed limit [m/s].
    pub v_max: f64,
    /// Length `D_f` [m].
    pub length: f64,
    /// Predicted duration `T_f` [s].
    pub duration: f64,
    /// Predicted final speed `v_f` [m/s]; zero encodes a stop.
    pub v_final: f64,
    pub end_feature: EndFeature,
    cumulative: Vec<f64>,
}

impl Link {
    pub fn new(
        id: impl Into<String>,
        polyline: Vec<Point>,
        v_max: f64,
        length: f64,
        duration: f64,
        v_final: f64,
        end_feature: EndFeature,
    ) -> Result<Self> {
        let id = id.into();
        if polyline.len() < 2 {
            return Err(Error::InvalidRoute(format!(
                "link `{id}` needs at least 2 vertices"
            )));
        }
        let mut cumulative = Vec::with_capacity(polyline.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in polyline.windows(2) {
            acc += w[0].distance(&w[1]);
            cumulative.push(acc);
        }
        if !(length > 0.0) || ((acc - length) / length).abs() > LENGTH_TOLERANCE {
            return Err(Error::InvalidRoute(format!(
                "link `{id}`: length {length} m differs from polyline length {acc:.3} m"
            )));
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidRoute(format!(
                "link `{id}`: duration must be > 0"
            )));
        }
        if !(v_max > 0.0) || !(0.0..=v_max + 1e-9).contains(&v_final) {
            return Err(Error::InvalidRoute(format!(
                "link `{id}`: need 0 <= v_f ({v_final}) <= v_max ({v_max})"
            )));
        }
        Ok(Link {
            id,
            polyline,
            v_max,
            length,
            duration,
            v_final,
            end_feature,
            cumulative,
        })
    }

    /// Straight link between two points with its length taken from the geometry.
    pub fn straight(
        id: impl Into<String>,
        from: Point,
        to: Point,
        v_max: f64,
        duration: f64,
        v_final: f64,
        end_feature: EndFeature,
    ) -> Result<Self> {
        let length = from.distance(&to);
        Link::new(
            id,
            vec![from, to],
            v_max,
            length,
            duration,
            v_final,
            end_feature,
        )
    }

    /// Whether the link ends at a mandatory stop.
    pub fn ends_in_stop(&self) -> bool {
        self.end_feature == EndFeature::StopSign || self.v_final == 0.0
    }

    /// Geometric arc length of the polyline [m].
    pub fn arc_length(&self) -> f64 {
        *self.cumulative.last().expect("at least two vertices")
    }

    /// Point at arc length `x` scaled onto the polyline, clamped to the ends.
    pub fn point_at(&self, x: f64) -> Point {
        let s = (x / self.length).clamp(0.0, 1.0) * self.arc_length();
        let k = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, self.polyline.len() - 1);
        let seg = self.cumulative[k] - self.cumulative[k - 1];
        let frac = if seg > 0.0 {
            (s - self.cumulative[k - 1]) / seg
        } else {
            0.0
        };
        self.polyline[k - 1].lerp(&self.polyline[k], frac)
    }

    /// Perpendicular projection: `(x along link, distance to polyline)`.
    pub fn project_point(&self, p: &Point) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for (k, w) in self.polyline.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let s = if len2 > 0.0 {
                (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = a.lerp(&b, s);
            let d = q.distance(p);
            if d < best.1 {
                let arc = self.cumulative[k] + s * len2.sqrt();
                best = (arc, d);
            }
        }
        // report in D_f units
        let scale = self.length / self.arc_length();
        ((best.0 * scale).clamp(0.0, self.length), best.1)
    }

    fn start(&self) -> Point {
        self.polyline[0]
    }

    fn end(&self) -> Point {
        *self.polyline.last().expect("at least two vertices")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub id: String,
    links: Vec<Link>,
    starts: Vec<f64>,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub projection: Projection,
}

impl Route {
    pub fn new(
        id: impl Into<String>,
        links: Vec<Link>,
        origin: GeoPoint,
        destination: GeoPoint,
        projection: Projection,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for l in &links {
            if !seen.insert(l.id.as_str()) {
                return Err(Error::InvalidRoute(format!("duplicate link id `{}`", l.id)));
            }
        }
        for w in links.windows(2) {
            let gap = w[0].end().distance(&w[1].start());
            if gap > JOINT_TOLERANCE {
                return Err(Error::InvalidRoute(format!(
                    "links `{}` and `{}` are {gap:.2} m apart",
                    w[0].id, w[1].id
                )));
            }
        }
        let mut starts = Vec::with_capacity(links.len());
        let mut acc = 0.0;
        for l in &links {
            starts.push(acc);
            acc += l.length;
        }
        Ok(Route {
            id: id.into(),
            links,
            starts,
            origin,
            destination,
            projection,
        })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, index: usize) -> Option<&Link> {
        self.links.get(index)
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Route position at which link `index` starts [m].
    pub fn link_start(&self, index: usize) -> f64 {
        self.starts[index]
    }

    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }

    /// Link index and offset for a route position, clamped to the route.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let idx = self.starts.partition_point(|&st| st <= s).saturating_sub(1);
        let idx = idx.min(self.links.len().saturating_sub(1));
        let x = (s - self.starts[idx]).clamp(0.0, self.links[idx].length);
        (idx, x)
    }

    pub fn point_at(&self, s: f64) -> Point {
        let (idx, x) = self.locate(s);
        self.links[idx].point_at(x)
    }

    pub fn parse(text: &str, origin_name: &str) -> Result<Self> {
        parse_route(text, origin_name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_route(&text, &path.display().to_string())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# ecodrive route\n");
        let _ = writeln!(out, "id = {}", self.id);
        match self.projection {
            Projection::LocalTangent { .. } => out.push_str("projection = local\n"),
            Projection::Lambert93 => out.push_str("projection = lambert93\n"),
        }
        let _ = writeln!(out, "origin = {} {}", self.origin.lat, self.origin.lon);
        let _ = writeln!(
            out,
            "destination = {} {}",
            self.destination.lat, self.destination.lon
        );
        out.push_str("[links]\n");
        out.push_str(
            "# id, v_max_kmh, D_f_m, T_f_s, v_f_kmh, end_feature, polyline(lat lon; ...)\n",
        );
        for l in &self.links {
            let poly: Vec<String> = l
                .polyline
                .iter()
                .map(|p| {
                    let g = self.projection.unproject(*p);
                    format!("{} {}", g.lat, g.lon)
                })
                .collect();
            let _ = writeln!(
                out,
                "{}, {}, {}, {}, {}, {}, {}",
                l.id,
                l.v_max * 3.6,
                l.length,
                l.duration,
                l.v_final * 3.6,
                l.end_feature,
                poly.join("; ")
            );
        }
        out
    }
}

fn parse_geo(s: &str) -> Option<GeoPoint> {
    let mut it = s.split_whitespace();
    let lat = it.next()?.parse().ok()?;
    let lon = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some(GeoPoint { lat, lon })
}

fn parse_route(text: &str, name: &str) -> Result<Route> {
    let mut id = String::from("route");
    let mut projection_kind = String::from("local");
    let mut origin = None;
    let mut destination = None;
    let mut rows = Vec::new();
    let mut in_links = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[links]" {
            in_links = true;
            continue;
        }
        if !in_links {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(name, line_no, "expected `key = value`"))?;
            let v = v.trim();
            match k.trim() {
                "id" => id = v.to_string(),
                "projection" => projection_kind = v.to_string(),
                "origin" => {
                    origin =
                        Some(parse_geo(v).ok_or_else(|| {
                            Error::parse(name, line_no, "origin must be `lat lon`")
                        })?)
                }
                "destination" => {
                    destination = Some(parse_geo(v).ok_or_else(|| {
                        Error::parse(name, line_no, "destination must be `lat lon`")
                    })?)
                }
                other => {
                    return Err(Error::parse(
                        name,
                        line_no,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        } else {
            rows.push((line_no, line.to_string()));
        }
    }
    let origin = origin.ok_or_else(|| Error::parse(name, 0, "missing `origin`"))?;
    let destination = destination.unwrap_or(origin);
    let projection = match projection_kind.as_str() {
        "local" => Projection::LocalTangent { origin },
        "lambert93" => Projection::Lambert93,
        other => {
            return Err(Error::parse(
                name,
                0,
                format!("unknown projection `{other}`"),
            ))
        }
    };
    let mut links = Vec::with_capacity(rows.len());
    for (line_no, row) in rows {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                name,
                line_no,
                format!("expected 7 comma-separated fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                Error::parse(
                    name,
                    line_no,
                    format!("{what} `{}` is not a number", fields[i]),
                )
            })
        };
        let v_max = num(1, "v_max_kmh")? / 3.6;
        let length = num(2, "D_f_m")?;
        let duration = num(3, "T_f_s")?;
        let v_final = num(4, "v_f_kmh")? / 3.6;
        let end_feature: EndFeature = fields[5]
            .parse()
            .map_err(|e: String| Error::parse(name, line_no, e))?;
        let mut polyline = Vec::new();
        for vertex in fields[6].split(';') {
            let g = parse_geo(vertex).ok_or_else(|| {
                Error::parse(name, line_no, format!("bad vertex `{}`", vertex.trim()))
            })?;
            let p = projection
                .project(g)
                .map_err(|e| Error::parse(name, line_no, e.to_string()))?;
            polyline.push(p);
        }
        let link = Link::new(
            fields[0],
            polyline,
            v_max,
            length,
            duration,
            v_final,
            end_feature,
        )
        .map_err(|e| Error::parse(name, line_no, e.to_string()))?;
        links.push(link);
    }
    Route::new(id, links, origin, destination, projection)
        .map_err(|e| Error::parse(name, 0, e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub link_index: usize,
    pub link_id: String,
    /// Arc-length position along the link [m].
    pub x: f64,
    pub lateral_error: f64,
}

/// Matches a planar point against the route. With a previous match only the
/// current and next links are candidates; if neither is within range the
/// whole route is scanned. Ties go to the earlier link.
pub fn match_point(route: &Route, p: &Point, previous: Option<usize>) -> Result<MatchResult> {
    if route.is_empty() {
        return Err(Error::InvalidRoute(
            "cannot match against an empty route".into(),
        ));
    }
    let scan = |candidates: &mut dyn Iterator<Item = usize>| -> (usize, f64, f64) {
        let mut best = (0, 0.0, f64::INFINITY);
        for i in candidates {
            let (x, d) = route.links[i].project_point(p);
            if d < best.2 - 1e-9 {
                best = (i, x, d);
            }
        }
        best
    };
    let mut best = match previous {
        Some(prev) if prev < route.links.len() => {
            let hi = (prev + 1).min(route.links.len() - 1);
            scan(&mut (prev..=hi))
        }
        _ => (0, 0.0, f64::INFINITY),
    };
    if best.2 > OFF_ROUTE_DISTANCE {
        best = scan(&mut (0..route.links.len()));
    }
    let (link_index, x, lateral_error) = best;
    if lateral_error > OFF_ROUTE_DISTANCE {
        return Err(Error::OffRoute {
            distance: lateral_error,
            limit: OFF_ROUTE_DISTANCE,
        });
    }
    Ok(MatchResult {
        link_index,
        link_id: route.links[link_index].id.clone(),
        x,
        lateral_error,
    })
}

/// Per-vehicle matching state with an optional exponential smoother on `x`.
#[derive(Debug, Clone, Default)]
pub struct MapMatcher {
    previous: Option<usize>,
    smoothing: Option<f64>,
    smoothed: Option<(f64, f64)>,
}

impl MapMatcher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Smooths the matched position with time constant `tau` [s].
    pub fn with_smoothing(tau: f64) -> Self {
        MapMatcher {
            smoothing: Some(tau),
            ..Self::default()
        }
    }

    pub fn reset(&mut self) {
        self.previous = None;
        self.smoothed = None;
    }

    pub fn update(&mut self, route: &Route, p: &Point, t: f64) -> Result<MatchResult> {
        let mut m = match_point(route, p, self.previous)?;
        if self.previous != Some(m.link_index) {
            self.smoothed = None;
        }
        self.previous = Some(m.link_index);
        if let Some(tau) = self.smoothing {
            let x = match self.smoothed {
                Some((t_prev, x_prev)) if t > t_prev => {
                    let alpha = 1.0 - (-(t - t_prev) / tau).exp();
                    x_prev + alpha * (m.x - x_prev)
                }
                _ => m.x,
            };
            self.smoothed = Some((t, x));
            m.x = x;
        }
        Ok(m)
    }
}

fn merge_links(a: Link, b: Link) -> Link {
    let mut polyline = a.polyline;
    polyline.extend_from_slice(&b.polyline[1..]);
    let mut cumulative = a.cumulative;
    let offset = *cumulative.last().expect("non-empty");
    cumulative.extend(b.cumulative[1..].iter().map(|c| c + offset));
    Link {
        id: a.id,
        polyline,
        v_max: a.v_max.min(b.v_max),
        length: a.length + b.length,
        duration: a.duration + b.duration,
        v_final: b.v_final,
        end_feature: b.end_feature,
        cumulative,
    }
}

/// Merges short links, and links without a boundary feature into an equal
/// speed-limit successor. Traffic-light and stop-sign boundaries are kept.
pub fn aggregate_links(links: &[Link], min_length: f64) -> Vec<Link> {
    let mut out = Vec::with_capacity(links.len());
    let mut pending: Option<Link> = None;
    for (i, link) in links.iter().enumerate() {
        let current = match pending.take() {
            Some(p) => merge_links(p, link.clone()),
            None => link.clone(),
        };
        let merge_next = links.get(i + 1).is_some_and(|next| {
            !current.end_feature.is_control()
                && (current.length < min_length
                    || (current.v_max == next.v_max && current.end_feature == EndFeature::None))
        });
        if merge_next {
            pending = Some(current);
        } else {
            out.push(current);
        }
    }
    out
}
