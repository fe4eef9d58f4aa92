//! Shrinking-horizon advisory loop: terminal conditions from the current
//! link and light state, lead-vehicle prediction, horizon adjustment, and the
//! advised speed a few seconds ahead on the planned profile.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::ocp::{
    adjust_horizon, solve_unconstrained, BoundaryConditions, HorizonConstraint, LeadState,
    QuadraticProfile, HORIZON_CAP_FACTOR,
};
use crate::route::Link;
use crate::vehicle::KinState;

pub const LEAD_HISTORY_CAPACITY: usize = 6;
pub const DEFAULT_EWMA_BETA: f64 = 0.95;
/// Preview time at which the planned profile is read out [s].
pub const DEFAULT_PREVIEW: f64 = 3.0;
/// Shortest horizon the advisor plans over [s].
pub const MIN_HORIZON: f64 = 0.5;
/// Below this speed a re-timed stop plans from rest [m/s].
const STOPPED_SPEED: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadObservation {
    /// Spacing to the lead net of its length and the minimum spacing [m].
    pub gap: f64,
    /// Lead speed minus ego speed [m/s].
    pub rel_speed: f64,
}

/// One camera frame. A frame that sees no light reports green.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionFrame {
    pub timestamp: f64,
    pub lead: Option<LeadObservation>,
    pub red: bool,
    pub green: bool,
    /// Whether a light was actually detected, as opposed to the green default.
    pub light_seen: bool,
}

impl PerceptionFrame {
    /// Frame with no lead and no detected light.
    pub fn clear(timestamp: f64) -> Self {
        PerceptionFrame {
            timestamp,
            lead: None,
            red: false,
            green: true,
            light_seen: false,
        }
    }

    pub fn with_light(mut self, red: bool) -> Self {
        self.red = red;
        self.green = !red;
        self.light_seen = true;
        self
    }

    pub fn with_lead(mut self, gap: f64, rel_speed: f64) -> Self {
        self.lead = Some(LeadObservation { gap, rel_speed });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccelEstimator {
    /// Exponentially weighted mean of consecutive finite differences.
    #[default]
    PairDifferences,
    /// Slope of an exponentially weighted least-squares line through the speeds.
    WeightedSlope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadAccelEstimate {
    pub accel: f64,
    pub low_confidence: bool,
}

/// The last six `(timestamp, lead speed)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadHistory {
    samples: VecDeque<(f64, f64)>,
    beta: f64,
}

impl Default for LeadHistory {
    fn default() -> Self {
        LeadHistory::new(DEFAULT_EWMA_BETA)
    }
}

impl LeadHistory {
    pub fn new(beta: f64) -> Self {
        LeadHistory {
            samples: VecDeque::with_capacity(LEAD_HISTORY_CAPACITY),
            beta,
        }
    }

    pub fn push(&mut self, t: f64, lead_speed: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.back() {
            if !(t > last) {
                return Err(Error::LeadHistory(format!(
                    "timestamp {t} does not follow {last}"
                )));
            }
        }
        if self.samples.len() == LEAD_HISTORY_CAPACITY {
            self.samples.pop_front();
        }
        self.samples.push_back((t, lead_speed));
        Ok(())
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().copied()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub fn estimate_lead_acceleration(hist: &LeadHistory, mode: AccelEstimator) -> LeadAccelEstimate {
    let s: Vec<(f64, f64)> = hist.samples().collect();
    let pairs = s.len().saturating_sub(1);
    if pairs == 0 {
        return LeadAccelEstimate {
            accel: 0.0,
            low_confidence: true,
        };
    }
    let beta = hist.beta();
    let accel = match mode {
        AccelEstimator::PairDifferences => {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, w) in s.windows(2).enumerate() {
                let weight = beta.powi((pairs - 1 - k) as i32);
                num += weight * (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                den += weight;
            }
            num / den
        }
        AccelEstimator::WeightedSlope => {
            let n = s.len();
            let weights: Vec<f64> = (0..n).map(|k| beta.powi((n - 1 - k) as i32)).collect();
            let wsum: f64 = weights.iter().sum();
            let t_mean = s.iter().zip(&weights).map(|(p, w)| w * p.0).sum::<f64>() / wsum;
            let v_mean = s.iter().zip(&weights).map(|(p, w)| w * p.1).sum::<f64>() / wsum;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for ((t, v), w) in s.iter().zip(&weights) {
                sxy += w * (t - t_mean) * (v - v_mean);
                sxx += w * (t - t_mean) * (t - t_mean);
            }
            sxy / sxx
        }
    };
    LeadAccelEstimate {
        accel,
        low_confidence: pairs < 2,
    }
}

/// Lead state in the ego frame: position `ξ`, speed `ξ̇ + v`.
pub fn transform_lead(obs: &LeadObservation, ego_v: f64, accel: f64) -> LeadState {
    LeadState {
        gap: obs.gap.max(0.0),
        speed: obs.rel_speed + ego_v,
        accel,
    }
}

/// Remaining horizon on a link. Once the predicted schedule is used up, the
/// remainder is re-timed: a pass at the faster of the planned average speed
/// and the mean of current and final speed, a stop at constant deceleration
/// (or, from rest, at the planned speed but no shorter than two previews).
pub fn remaining_horizon(
    link: &Link,
    distance_left: f64,
    elapsed: f64,
    v_now: f64,
    v_final: f64,
    preview: f64,
) -> f64 {
    let scheduled = link.duration - elapsed;
    if scheduled >= MIN_HORIZON {
        return scheduled;
    }
    let planned_speed = link.length / link.duration;
    let mean_speed = 0.5 * (v_now.max(0.0) + v_final);
    let horizon = if v_final > 0.0 {
        distance_left / planned_speed.max(mean_speed)
    } else if v_now > STOPPED_SPEED {
        distance_left / mean_speed
    } else {
        (distance_left / planned_speed).max(2.0 * preview)
    };
    horizon.max(MIN_HORIZON)
}

/// `D = D_f − x`, `T = T_f − elapsed` and `V = 0` for a stop, else the link's
/// predicted final speed.
pub fn select_terminal_conditions(
    link: &Link,
    ego: &KinState,
    elapsed: f64,
    stop_required: bool,
) -> Result<BoundaryConditions> {
    if ego.x >= link.length {
        return Err(Error::LinkTransition {
            link: link.id.clone(),
            x: ego.x,
            length: link.length,
        });
    }
    let distance = link.length - ego.x;
    let v_final = if stop_required || link.ends_in_stop() {
        0.0
    } else {
        link.v_final
    };
    BoundaryConditions::new(
        ego.v.max(0.0),
        v_final,
        distance,
        remaining_horizon(link, distance, elapsed, ego.v, v_final, DEFAULT_PREVIEW),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveConstraint {
    None,
    Vmax,
    Lead,
    InfeasibleFallback,
}

impl fmt::Display for ActiveConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActiveConstraint::None => "none",
            ActiveConstraint::Vmax => "vmax",
            ActiveConstraint::Lead => "lead",
            ActiveConstraint::InfeasibleFallback => "infeasible-fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advisory {
    pub timestamp: f64,
    pub target_speed: f64,
    /// Planned profile; `None` while holding at a stop point.
    pub profile: Option<QuadraticProfile>,
    pub active_constraint: ActiveConstraint,
    pub bc_used: Option<BoundaryConditions>,
}

impl Advisory {
    fn hold(timestamp: f64) -> Self {
        Advisory {
            timestamp,
            target_speed: 0.0,
            profile: None,
            active_constraint: ActiveConstraint::None,
            bc_used: None,
        }
    }

    /// Advisory log row `t,target_speed,active_constraint,T,D,V`.
    pub fn csv_row(&self) -> String {
        match self.bc_used {
            Some(bc) => format!(
                "{},{},{},{},{},{}",
                self.timestamp,
                self.target_speed,
                self.active_constraint,
                bc.horizon,
                bc.distance,
                bc.v_final
            ),
            None => format!(
                "{},{},{},,,",
                self.timestamp, self.target_speed, self.active_constraint
            ),
        }
    }
}

pub const ADVISORY_CSV_HEADER: &str = "t,target_speed,active_constraint,T,D,V";

#[derive(Debug, Clone, PartialEq)]
pub struct AdvisorConfig {
    pub preview: f64,
    pub beta: f64,
    pub estimator: AccelEstimator,
    /// Below this distance to a link end passed at speed, the plan extends
    /// to the end of the next link [m].
    pub lookahead_distance: f64,
    /// Within this distance of a stop point the advisor holds zero [m].
    pub hold_distance: f64,
    /// A stop sign counts as served once stopped within this distance [m].
    pub stop_release_distance: f64,
    pub stop_release_speed: f64,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        AdvisorConfig {
            preview: DEFAULT_PREVIEW,
            beta: DEFAULT_EWMA_BETA,
            estimator: AccelEstimator::PairDifferences,
            lookahead_distance: 20.0,
            hold_distance: 0.5,
            stop_release_distance: 3.0,
            stop_release_speed: 0.1,
        }
    }
}

/// Per-vehicle advisory state: lead history, light latch, link bookkeeping.
#[derive(Debug, Clone)]
pub struct Advisor {
    cfg: AdvisorConfig,
    history: LeadHistory,
    last_frame: Option<PerceptionFrame>,
    red_latched: bool,
    stop_served: bool,
    link_index: Option<usize>,
    /// Scheduled start and end of the current link, chained from trip start.
    link_start_time: f64,
    link_deadline: f64,
    last: Option<Advisory>,
}

impl Default for Advisor {
    fn default() -> Self {
        Advisor::new(AdvisorConfig::default())
    }
}

impl Advisor {
    pub fn new(cfg: AdvisorConfig) -> Self {
        let history = LeadHistory::new(cfg.beta);
        Advisor {
            cfg,
            history,
            last_frame: None,
            red_latched: false,
            stop_served: false,
            link_index: None,
            link_start_time: 0.0,
            link_deadline: 0.0,
            last: None,
        }
    }

    pub fn config(&self) -> &AdvisorConfig {
        &self.cfg
    }

    pub fn last_advisory(&self) -> Option<&Advisory> {
        self.last.as_ref()
    }

    pub fn red_latched(&self) -> bool {
        self.red_latched
    }

    pub fn lead_history(&self) -> &LeadHistory {
        &self.history
    }

    /// Ingests a perception frame. A red light latches until a detected green.
    pub fn observe(&mut self, frame: &PerceptionFrame, ego_v: f64) -> Result<()> {
        if frame.red && frame.green {
            return Err(Error::InvalidScenario(
                "perception frame reports red and green together".into(),
            ));
        }
        if frame.light_seen {
            if frame.red {
                self.red_latched = true;
            } else if frame.green {
                self.red_latched = false;
            }
        }
        match frame.lead {
            Some(obs) => self.history.push(frame.timestamp, obs.rel_speed + ego_v)?,
            None => self.history.clear(),
        }
        self.last_frame = Some(*frame);
        Ok(())
    }

    fn enter_link(&mut self, index: usize, duration: f64, t: f64) {
        if self.link_index != Some(index) {
            self.link_start_time = if self.link_index.is_some() {
                self.red_latched = false;
                self.link_deadline
            } else {
                t
            };
            self.link_deadline = self.link_start_time + duration;
            self.link_index = Some(index);
            self.stop_served = false;
        }
    }

    /// One advisory tick. `ego.x` is the position along `link`, `next` the
    /// following link (`None` on the final link).
    pub fn step(
        &mut self,
        ego: &KinState,
        link_index: usize,
        link: &Link,
        next: Option<&Link>,
    ) -> Result<Advisory> {
        self.enter_link(link_index, link.duration, ego.t);
        if ego.x >= link.length {
            return Err(Error::LinkTransition {
                link: link.id.clone(),
                x: ego.x,
                length: link.length,
            });
        }
        let distance_left = link.length - ego.x;
        if link.ends_in_stop()
            && distance_left <= self.cfg.stop_release_distance
            && ego.v <= self.cfg.stop_release_speed
        {
            self.stop_served = true;
        }
        let elapsed = ego.t - self.link_start_time;
        let must_stop =
            self.red_latched || next.is_none() || (link.ends_in_stop() && !self.stop_served);

        let (bc, v_max) = if must_stop {
            if distance_left < self.cfg.hold_distance {
                return Ok(self.record(Advisory::hold(ego.t)));
            }
            let horizon =
                remaining_horizon(link, distance_left, elapsed, ego.v, 0.0, self.cfg.preview);
            (
                BoundaryConditions::new(0.0, 0.0, distance_left, horizon)?,
                link.v_max,
            )
        } else {
            let next = next.expect("must_stop covers the final link");
            let pass_speed = link.v_final.min(next.v_max);
            let horizon = remaining_horizon(
                link,
                distance_left,
                elapsed,
                ego.v,
                pass_speed,
                self.cfg.preview,
            );
            if distance_left < self.cfg.lookahead_distance || pass_speed <= 0.0 {
                let next_final = if next.ends_in_stop() {
                    0.0
                } else {
                    next.v_final
                };
                (
                    BoundaryConditions::new(
                        0.0,
                        next_final,
                        distance_left + next.length,
                        horizon.max(MIN_HORIZON) + next.duration,
                    )?,
                    link.v_max.min(next.v_max),
                )
            } else {
                (
                    BoundaryConditions::new(0.0, pass_speed, distance_left, horizon)?,
                    link.v_max,
                )
            }
        };
        let bc = BoundaryConditions {
            v_init: ego.v.clamp(0.0, v_max),
            ..bc
        };
        let advisory = self.plan(ego, bc, v_max, link.v_max)?;
        Ok(self.record(advisory))
    }

    fn record(&mut self, advisory: Advisory) -> Advisory {
        self.last = Some(advisory);
        advisory
    }

    fn current_lead(&self, ego_v: f64) -> Option<LeadState> {
        let frame = self.last_frame?;
        let obs = frame.lead?;
        let est = estimate_lead_acceleration(&self.history, self.cfg.estimator);
        Some(transform_lead(&obs, ego_v, est.accel))
    }

    fn plan(
        &self,
        ego: &KinState,
        bc: BoundaryConditions,
        v_max: f64,
        display_limit: f64,
    ) -> Result<Advisory> {
        let lead = self.current_lead(ego.v);
        let (profile, active, bc_used) = match adjust_horizon(&bc, v_max, lead.as_ref(), None) {
            Ok(adj) => {
                let active = match adj.constraint {
                    HorizonConstraint::None => ActiveConstraint::None,
                    HorizonConstraint::SpeedLimit => ActiveConstraint::Vmax,
                    HorizonConstraint::Lead => ActiveConstraint::Lead,
                };
                (solve_unconstrained(&adj.bc)?, active, adj.bc)
            }
            Err(Error::InfeasibleHorizon { .. }) => {
                let lead = lead.expect("infeasibility only arises from the lead constraint");
                match self.stopping_fallback(&bc, v_max, &lead) {
                    Some((profile, bc_used)) => {
                        (profile, ActiveConstraint::InfeasibleFallback, bc_used)
                    }
                    None => {
                        return Ok(Advisory {
                            active_constraint: ActiveConstraint::InfeasibleFallback,
                            ..Advisory::hold(ego.t)
                        })
                    }
                }
            }
            Err(e) => return Err(e),
        };
        let tau = self.cfg.preview.min(profile.horizon());
        let target = profile.speed(tau).clamp(0.0, display_limit);
        Ok(Advisory {
            timestamp: ego.t,
            target_speed: target,
            profile: Some(profile),
            active_constraint: active,
            bc_used: Some(bc_used),
        })
    }

    /// Stop behind the lead: `D` = current gap, `V = 0`, shortest horizon
    /// that keeps the predicted spacing.
    fn stopping_fallback(
        &self,
        bc: &BoundaryConditions,
        v_max: f64,
        lead: &LeadState,
    ) -> Option<(QuadraticProfile, BoundaryConditions)> {
        if lead.gap < self.cfg.hold_distance {
            return None;
        }
        let v0 = bc.v_init;
        let guess = if v0 > 0.0 {
            (2.0 * lead.gap / v0).max(MIN_HORIZON)
        } else {
            2.0 * self.cfg.preview
        };
        let stop = BoundaryConditions::new(v0, 0.0, lead.gap, guess).ok()?;
        let cap = HORIZON_CAP_FACTOR * guess.max(bc.horizon);
        let adj = adjust_horizon(&stop, v_max.max(v0), Some(lead), Some(cap)).ok()?;
        Some((solve_unconstrained(&adj.bc).ok()?, adj.bc))
    }
}
