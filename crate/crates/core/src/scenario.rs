//! Scenario description: route, light schedules, scripted lead traffic,
//! driver and sensor configuration, plus the TOML scenario file and the
//! lead-script CSV format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::advisor::AdvisorConfig;
use crate::error::{Error, Result};
use crate::route::{EndFeature, Route};
use crate::vehicle::VehicleParams;

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_MAX_DURATION: f64 = 3600.0;

/// Fixed-time signal: green while `(t + offset) mod cycle < green_fraction·cycle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSchedule {
    pub cycle: f64,
    pub green_fraction: f64,
    pub offset: f64,
}

impl LightSchedule {
    pub fn new(cycle: f64, green_fraction: f64, offset: f64) -> Result<Self> {
        let s = LightSchedule {
            cycle,
            green_fraction,
            offset,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cycle > 0.0 && self.cycle.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "cycle {} must be > 0",
                self.cycle
            )));
        }
        if !(self.green_fraction > 0.0 && self.green_fraction < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "green fraction {} must lie in (0, 1)",
                self.green_fraction
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidScenario("light offset must be finite".into()));
        }
        Ok(())
    }

    pub fn is_green(&self, t: f64) -> bool {
        (t + self.offset).rem_euclid(self.cycle) < self.green_fraction * self.cycle
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadSample {
    pub t: f64,
    /// Front-bumper position along the route [m].
    pub x: f64,
    pub v: f64,
}

/// Replayable lead trajectory; the lead exists between its first and last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadScript {
    samples: Vec<LeadSample>,
}

impl LeadScript {
    pub fn new(samples: Vec<LeadSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidScenario(
                "lead script needs at least 2 samples".into(),
            ));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) || w[1].x < w[0].x {
                return Err(Error::InvalidScenario(format!(
                    "lead script not monotone at sample {}",
                    i + 1
                )));
            }
        }
        if samples.iter().any(|s| !(s.v >= 0.0) || !s.x.is_finite()) {
            return Err(Error::InvalidScenario(
                "lead script has invalid values".into(),
            ));
        }
        Ok(LeadScript { samples })
    }

    pub fn samples(&self) -> &[LeadSample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Interpolated `(x, v)` while the lead is on the route.
    pub fn state_at(&self, t: f64) -> Option<(f64, f64)> {
        if t < self.start_time() || t > self.end_time() {
            return None;
        }
        let k = self
            .samples
            .partition_point(|s| s.t <= t)
            .clamp(1, self.samples.len() - 1);
        let (a, b) = (self.samples[k - 1], self.samples[k]);
        let s = (t - a.t) / (b.t - a.t);
        Some((a.x + s * (b.x - a.x), a.v + s * (b.v - a.v)))
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
        let (ti, xi, vi) = (column("t")?, column("x_l")?, column("v_l")?);
        let mut samples = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                let raw = record.get(i).unwrap_or("");
                raw.parse::<f64>()
                    .map_err(|_| Error::parse(origin, line, format!("`{raw}` is not a number")))
            };
            samples.push(LeadSample {
                t: field(ti)?,
                x: field(xi)?,
                v: field(vi)?,
            });
        }
        LeadScript::new(samples).map_err(|e| Error::parse(origin, 0, e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,x_l,v_l\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.t, s.x, s.v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverKind {
    EcoAdvised,
    HumanBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverConfig {
    pub kind: DriverKind,
    /// Speed-tracking gain [1/s].
    pub gain: f64,
    /// Pure delay between advisory and pedal response [s].
    pub reaction_delay: f64,
    /// Largest acceleration and comfortable deceleration used [m/s²].
    pub aggressiveness: f64,
}

impl DriverConfig {
    pub fn eco() -> Self {
        DriverConfig {
            kind: DriverKind::EcoAdvised,
            gain: 0.4,
            reaction_delay: 1.0,
            aggressiveness: 2.5,
        }
    }

    pub fn human() -> Self {
        DriverConfig {
            kind: DriverKind::HumanBaseline,
            gain: 2.0,
            reaction_delay: 1.0,
            aggressiveness: 2.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) || !(self.aggressiveness > 0.0) {
            return Err(Error::InvalidScenario(
                "driver gain and aggressiveness must be > 0".into(),
            ));
        }
        if !(self.reaction_delay >= 0.0) {
            return Err(Error::InvalidScenario("reaction delay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    /// Detection range for leads and lights [m].
    pub range: f64,
    pub rate: f64,
    /// Per-frame probability of missing the light.
    pub miss_probability: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            range: 50.0,
            rate: 3.0,
            miss_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsConfig {
    pub rate: f64,
    /// Standard deviation of planar position noise per axis [m].
    pub noise_std: f64,
    /// Time constant of the matched-position smoother [s], if any.
    pub smoothing: Option<f64>,
}

impl Default for GpsConfig {
    fn default() -> Self {
        GpsConfig {
            rate: 1.15,
            noise_std: 0.0,
            smoothing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub route: Route,
    /// Signal schedules keyed by the id of the link they terminate.
    pub lights: BTreeMap<String, LightSchedule>,
    pub leads: Vec<LeadScript>,
    pub eco: DriverConfig,
    pub human: DriverConfig,
    pub dt: f64,
    pub seed: u64,
    pub perception: PerceptionConfig,
    pub gps: GpsConfig,
    pub advisory_rate: f64,
    pub vehicle: VehicleParams,
    pub advisor: AdvisorConfig,
    pub max_duration: f64,
}

impl Scenario {
    /// Scenario with default drivers, sensors and vehicle.
    pub fn new(name: impl Into<String>, route: Route) -> Self {
        Scenario {
            name: name.into(),
            route,
            lights: BTreeMap::new(),
            leads: Vec::new(),
            eco: DriverConfig::eco(),
            human: DriverConfig::human(),
            dt: DEFAULT_DT,
            seed: 0,
            perception: PerceptionConfig::default(),
            gps: GpsConfig::default(),
            advisory_rate: 1.0,
            vehicle: VehicleParams::default(),
            advisor: AdvisorConfig::default(),
            max_duration: DEFAULT_MAX_DURATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.route.is_empty() {
            return Err(Error::InvalidScenario("route has no links".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.5) {
            return Err(Error::InvalidScenario(format!(
                "dt {} must lie in (0, 0.5]",
                self.dt
            )));
        }
        for (id, schedule) in &self.lights {
            schedule.validate()?;
            let link = self
                .route
                .links()
                .iter()
                .find(|l| &l.id == id)
                .ok_or_else(|| Error::InvalidScenario(format!("light on unknown link `{id}`")))?;
            if link.end_feature != EndFeature::TrafficLight {
                return Err(Error::InvalidScenario(format!(
                    "link `{id}` does not end at a traffic light"
                )));
            }
        }
        for link in self.route.links() {
            if link.end_feature == EndFeature::TrafficLight && !self.lights.contains_key(&link.id) {
                return Err(Error::InvalidScenario(format!(
                    "traffic light at the end of `{}` has no schedule",
                    link.id
                )));
            }
        }
        self.eco.validate()?;
        self.human.validate()?;
        let rates = [self.perception.rate, self.gps.rate, self.advisory_rate];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidScenario(
                "sensor and advisory rates must be > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.perception.miss_probability) {
            return Err(Error::InvalidScenario(
                "miss probability must lie in [0, 1]".into(),
            ));
        }
        if !(self.gps.noise_std >= 0.0) {
            return Err(Error::InvalidScenario("GPS noise must be >= 0".into()));
        }
        if !(self.max_duration > 0.0) {
            return Err(Error::InvalidScenario("max duration must be > 0".into()));
        }
        self.vehicle.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Parses a scenario file; relative paths resolve against `base`.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse(origin, line, e.message().to_string())
        })?;
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let route = Route::load(&resolve(&file.route))?;
        let mut sc = Scenario::new(file.name.unwrap_or_else(|| "scenario".into()), route);
        if let Some(seed) = file.seed {
            sc.seed = seed;
        }
        if let Some(dt) = file.dt {
            sc.dt = dt;
        }
        if let Some(m) = file.max_duration {
            sc.max_duration = m;
        }
        if let Some(v) = &file.vehicle {
            sc.vehicle = VehicleParams::load(&resolve(v))?;
        }
        for l in file.lights {
            let schedule = LightSchedule {
                cycle: l.cycle,
                green_fraction: l.green_fraction,
                offset: l.offset,
            };
            if sc.lights.insert(l.link.clone(), schedule).is_some() {
                return Err(Error::parse(
                    origin,
                    0,
                    format!("duplicate light for `{}`", l.link),
                ));
            }
        }
        for lead in file.leads {
            sc.leads.push(LeadScript::read_csv(&resolve(&lead.script))?);
        }
        if let Some(d) = file.eco {
            d.apply(&mut sc.eco);
        }
        if let Some(d) = file.human {
            d.apply(&mut sc.human);
        }
        if let Some(p) = file.perception {
            if let Some(v) = p.range {
                sc.perception.range = v;
            }
            if let Some(v) = p.rate {
                sc.perception.rate = v;
            }
            if let Some(v) = p.miss_probability {
                sc.perception.miss_probability = v;
            }
        }
        if let Some(g) = file.gps {
            if let Some(v) = g.rate {
                sc.gps.rate = v;
            }
            if let Some(v) = g.noise_std {
                sc.gps.noise_std = v;
            }
            sc.gps.smoothing = g.smoothing;
        }
        if let Some(r) = file.advisory_rate {
            sc.advisory_rate = r;
        }
        sc.validate()
            .map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        Ok(sc)
    }

    /// Writes `<stem>.toml`, `<stem>.route` and one lead CSV per lead into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let route_name = format!("{stem}.route");
        let route_path = dir.join(&route_name);
        fs::write(&route_path, self.route.to_file_string())
            .map_err(|e| Error::io(&route_path, e))?;
        let mut out = String::new();
        let _ = writeln!(out, "name = {:?}", self.name);
        let _ = writeln!(out, "route = {route_name:?}");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "dt = {:?}", self.dt);
        let _ = writeln!(out, "max_duration = {:?}", self.max_duration);
        let _ = writeln!(out, "advisory_rate = {:?}", self.advisory_rate);
        for (label, d) in [("eco", &self.eco), ("human", &self.human)] {
            let _ = writeln!(
                out,
                "\n[{label}]\ngain = {:?}\nreaction_delay = {:?}\naggressiveness = {:?}",
                d.gain, d.reaction_delay, d.aggressiveness
            );
        }
        let _ = writeln!(
            out,
            "\n[perception]\nrange = {:?}\nrate = {:?}\nmiss_probability = {:?}",
            self.perception.range, self.perception.rate, self.perception.miss_probability
        );
        let _ = writeln!(
            out,
            "\n[gps]\nrate = {:?}\nnoise_std = {:?}",
            self.gps.rate, self.gps.noise_std
        );
        if let Some(tau) = self.gps.smoothing {
            let _ = writeln!(out, "smoothing = {tau:?}");
        }
        for (link, s) in &self.lights {
            let _ = writeln!(
                out,
                "\n[[lights]]\nlink = {link:?}\ncycle = {:?}\ngreen_fraction = {:?}\noffset = {:?}",
                s.cycle, s.green_fraction, s.offset
            );
        }
        for (k, lead) in self.leads.iter().enumerate() {
            let name = format!("{stem}_lead{}.csv", k + 1);
            let path = dir.join(&name);
            fs::write(&path, lead.to_csv_string()).map_err(|e| Error::io(&path, e))?;
            let _ = writeln!(out, "\n[[leads]]\nscript = {name:?}");
        }
        let path = dir.join(format!("{stem}.toml"));
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    route: PathBuf,
    seed: Option<u64>,
    dt: Option<f64>,
    max_duration: Option<f64>,
    advisory_rate: Option<f64>,
    vehicle: Option<PathBuf>,
    #[serde(default)]
    lights: Vec<LightEntry>,
    #[serde(default)]
    leads: Vec<LeadEntry>,
    eco: Option<DriverEntry>,
    human: Option<DriverEntry>,
    perception: Option<PerceptionEntry>,
    gps: Option<GpsEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightEntry {
    link: String,
    cycle: f64,
    green_fraction: f64,
    #[serde(default)]
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeadEntry {
    script: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriverEntry {
    gain: Option<f64>,
    reaction_delay: Option<f64>,
    aggressiveness: Option<f64>,
}

impl DriverEntry {
    fn apply(&self, cfg: &mut DriverConfig) {
        if let Some(v) = self.gain {
            cfg.gain = v;
        }
        if let Some(v) = self.reaction_delay {
            cfg.reaction_delay = v;
        }
        if let Some(v) = self.aggressiveness {
            cfg.aggressiveness = v;
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerceptionEntry {
    range: Option<f64>,
    rate: Option<f64>,
    miss_probability: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpsEntry {
    rate: Option<f64>,
    noise_std: Option<f64>,
    smoothing: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::{GeoPoint, Link, Point, Projection};

    fn one_light_route() -> Route {
        let origin = GeoPoint {
            lat: 48.87,
            lon: 2.18,
        };
        let links = vec![
            Link::straight(
                "a",
                Point::new(0.0, 0.0),
                Point::new(300.0, 0.0),
                13.9,
                30.0,
                11.1,
                EndFeature::TrafficLight,
            )
            .unwrap(),
            Link::straight(
                "b",
                Point::new(300.0, 0.0),
                Point::new(500.0, 0.0),
                13.9,
                20.0,
                0.0,
                EndFeature::None,
            )
            .unwrap(),
        ];
        Route::new(
            "r",
            links,
            origin,
            origin,
            Projection::LocalTangent { origin },
        )
        .unwrap()
    }

    #[test]
    fn light_phase() {
        let s = LightSchedule::new(60.0, 0.5, 0.0).unwrap();
        assert!(s.is_green(0.0) && s.is_green(29.9));
        assert!(!s.is_green(30.0) && !s.is_green(59.9));
        assert!(s.is_green(60.0));
        let shifted = LightSchedule::new(60.0, 0.5, 30.0).unwrap();
        assert!(!shifted.is_green(0.0));
        assert!(LightSchedule::new(0.0, 0.5, 0.0).is_err());
        assert!(LightSchedule::new(60.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn lead_script_interpolation_and_lifetime() {
        let script = LeadScript::new(vec![
            LeadSample {
                t: 1.0,
                x: 10.0,
                v: 2.0,
            },
            LeadSample {
                t: 2.0,
                x: 12.0,
                v: 4.0,
            },
        ])
        .unwrap();
        assert_eq!(script.state_at(1.5), Some((11.0, 3.0)));
        assert_eq!(script.state_at(0.5), None);
        assert_eq!(script.state_at(2.5), None);
        let back = LeadScript::parse_csv(&script.to_csv_string(), "lead.csv").unwrap();
        assert_eq!(back, script);
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let mut sc = Scenario::new("s", one_light_route());
        assert!(sc.validate().is_err(), "light without schedule");
        sc.lights
            .insert("a".into(), LightSchedule::new(60.0, 0.5, 0.0).unwrap());
        sc.validate().unwrap();
        sc.dt = 0.6;
        assert!(sc.validate().is_err());
        sc.dt = 0.05;
        sc.lights
            .insert("b".into(), LightSchedule::new(60.0, 0.5, 0.0).unwrap());
        assert!(sc.validate().is_err(), "schedule on a link without a light");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut sc = Scenario::new("s", one_light_route());
        sc.seed = 42;
        sc.lights
            .insert("a".into(), LightSchedule::new(70.0, 0.45, 12.5).unwrap());
        sc.leads.push(
            LeadScript::new(vec![
                LeadSample {
                    t: 0.0,
                    x: 50.0,
                    v: 0.0,
                },
                LeadSample {
                    t: 1.0,
                    x: 50.5,
                    v: 1.0,
                },
            ])
            .unwrap(),
        );
        let path = sc.write_files(dir.path(), "trip").unwrap();
        let back = Scenario::load(&path).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.lights, sc.lights);
        assert_eq!(back.leads, sc.leads);
        assert_eq!(back.route.links().len(), 2);
        assert_eq!(back.eco, sc.eco);
    }

    #[test]
    fn parse_errors_report_lines_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let err = Scenario::parse("route = \"missing.route\"\n", "s.toml", dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing.route"), "{err}");
        let err =
            Scenario::parse("route = \"r\"\ndt = \"fast\"\n", "s.toml", dir.path()).unwrap_err();
        assert!(err.to_string().starts_with("s.toml:2:"), "{err}");
    }
}
