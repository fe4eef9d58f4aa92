//! Unconstrained energy-optimal speed profile and its validity predicates.
//!
//! For the linearized longitudinal model `ẋ = v`, `v̇ = a` with running cost
//! `p0·(a+h)·v + p1·(a+h)²`, the optimum between `(0, v0)` and `(D, V)` over a
//! horizon `T` is a quadratic in time. Constraints are not solved as arcs;
//! instead the horizon is lengthened until the quadratic is valid.

use crate::error::{Error, Result};
use crate::vehicle::VehicleParams;

/// Bisection resolution for lead-constrained horizon adjustment [s].
pub const HORIZON_TOLERANCE: f64 = 1e-3;
/// Default cap on adjusted horizons, as a multiple of the incoming horizon.
pub const HORIZON_CAP_FACTOR: f64 = 10.0;
const LEAD_SCAN_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub v_init: f64,
    pub v_final: f64,
    pub distance: f64,
    pub horizon: f64,
}

impl BoundaryConditions {
    pub fn new(v_init: f64, v_final: f64, distance: f64, horizon: f64) -> Result<Self> {
        let bc = BoundaryConditions {
            v_init,
            v_final,
            distance,
            horizon,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.v_init, self.v_final, self.distance, self.horizon]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidBoundary(format!(
                "non-finite value in {self:?}"
            )));
        }
        if self.distance <= 0.0 {
            return Err(Error::InvalidBoundary(format!(
                "distance {} <= 0",
                self.distance
            )));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidBoundary(format!(
                "horizon {} <= 0",
                self.horizon
            )));
        }
        if self.v_init < 0.0 || self.v_final < 0.0 {
            return Err(Error::InvalidBoundary(format!(
                "negative speed (v_init {}, v_final {})",
                self.v_init, self.v_final
            )));
        }
        Ok(())
    }

    pub fn with_horizon(self, horizon: f64) -> Self {
        BoundaryConditions { horizon, ..self }
    }
}

/// `v*(τ) = c0 + c1·τ + c2·τ²` on `τ ∈ [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticProfile {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub bc: BoundaryConditions,
}

impl QuadraticProfile {
    pub fn speed(&self, tau: f64) -> f64 {
        self.c0 + tau * (self.c1 + tau * self.c2)
    }

    pub fn accel(&self, tau: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * tau
    }

    /// Distance covered since `τ = 0`.
    pub fn position(&self, tau: f64) -> f64 {
        tau * (self.c0 + tau * (self.c1 / 2.0 + tau * self.c2 / 3.0))
    }

    pub fn horizon(&self) -> f64 {
        self.bc.horizon
    }

    /// Extreme speeds over `[0, T]` as `(min, max)`.
    pub fn speed_range(&self) -> (f64, f64) {
        let t = self.bc.horizon;
        let mut lo = self.speed(0.0).min(self.speed(t));
        let mut hi = self.speed(0.0).max(self.speed(t));
        if self.c2 != 0.0 {
            let vertex = -self.c1 / (2.0 * self.c2);
            if vertex > 0.0 && vertex < t {
                let v = self.speed(vertex);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

pub fn solve_unconstrained(bc: &BoundaryConditions) -> Result<QuadraticProfile> {
    bc.validate()?;
    let BoundaryConditions {
        v_init: v0,
        v_final: vf,
        distance: d,
        horizon: t,
    } = *bc;
    let t2 = t * t;
    Ok(QuadraticProfile {
        c0: v0,
        c1: -4.0 * v0 / t - 2.0 * vf / t + 6.0 * d / t2,
        c2: 3.0 * v0 / t2 - 6.0 * d / (t2 * t) + 3.0 * vf / t2,
        bc: *bc,
    })
}

/// Speed-limit validity predicate; non-negative iff the unconstrained profile
/// stays at or below `v_max` over the whole horizon.
pub fn f1_vmax(bc: &BoundaryConditions, v_max: f64) -> Result<f64> {
    let radicand = speed_limit_radicand(bc, v_max)?;
    Ok((bc.v_init + bc.v_final + v_max) / 3.0 - bc.distance / bc.horizon + radicand.sqrt() / 3.0)
}

/// `v0·V + v_max² − v0·v_max − V·v_max = (v_max − v0)(v_max − V)`.
fn speed_limit_radicand(bc: &BoundaryConditions, v_max: f64) -> Result<f64> {
    let (v0, vf) = (bc.v_init, bc.v_final);
    if v_max < v0.max(vf) {
        return Err(Error::SpeedLimitInfeasible {
            v_init: v0,
            v_final: vf,
            v_max,
        });
    }
    Ok(((v_max - v0) * (v_max - vf)).max(0.0))
}

/// Preceding vehicle predicted with constant acceleration. `gap` is the
/// distance ahead of the ego with vehicle length and minimum spacing lumped in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadState {
    pub gap: f64,
    pub speed: f64,
    pub accel: f64,
}

impl LeadState {
    pub fn new(gap: f64, speed: f64, accel: f64) -> Result<Self> {
        if !(gap >= 0.0) {
            return Err(Error::InvalidBoundary(format!(
                "lead gap {gap} is already violated"
            )));
        }
        Ok(LeadState { gap, speed, accel })
    }

    pub fn position(&self, tau: f64) -> f64 {
        self.gap + self.speed * tau + 0.5 * self.accel * tau * tau
    }
}

/// Predicted spacing `x_l(τ) − x*(τ)` between lead and ego profile.
pub fn lead_spacing(profile: &QuadraticProfile, lead: &LeadState, tau: f64) -> f64 {
    lead.position(tau) - profile.position(tau)
}

/// Lead-vehicle validity predicate: the minimum predicted spacing over
/// `[0, T]`. Non-negative iff the profile never closes on the lead.
pub fn f2_lead(bc: &BoundaryConditions, lead: &LeadState) -> Result<f64> {
    let profile = solve_unconstrained(bc)?;
    Ok(min_lead_spacing(&profile, lead))
}

pub fn min_lead_spacing(profile: &QuadraticProfile, lead: &LeadState) -> f64 {
    let t = profile.horizon();
    // d/dτ spacing = (v_l − c0) + (a_l − c1)·τ − c2·τ²
    let qa = -profile.c2;
    let qb = lead.accel - profile.c1;
    let qc = lead.speed - profile.c0;
    let mut best = lead_spacing(profile, lead, 0.0).min(lead_spacing(profile, lead, t));
    for root in quadratic_roots(qa, qb, qc) {
        if root > 0.0 && root < t {
            best = best.min(lead_spacing(profile, lead, root));
        }
    }
    best
}

/// Real roots of `a·x² + b·x + c`, degrading to the linear case.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonConstraint {
    None,
    SpeedLimit,
    Lead,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonAdjustment {
    pub bc: BoundaryConditions,
    pub constraint: HorizonConstraint,
}

/// Smallest horizon with `f1 = 0`: `3D / (v0 + V + v_max + √((v_max−v0)(v_max−V)))`.
pub fn min_horizon_for_speed_limit(bc: &BoundaryConditions, v_max: f64) -> Result<f64> {
    let radicand = speed_limit_radicand(bc, v_max)?;
    let denom = bc.v_init + bc.v_final + v_max + radicand.sqrt();
    if denom <= 0.0 {
        return Err(Error::SpeedLimitInfeasible {
            v_init: bc.v_init,
            v_final: bc.v_final,
            v_max,
        });
    }
    Ok(3.0 * bc.distance / denom)
}

/// Lengthens the horizon until the unconstrained profile is valid. When the
/// lead constraint is violated it alone drives the adjustment; otherwise the
/// speed-limit root is used. `D` and `V` are never changed.
pub fn adjust_horizon(
    bc: &BoundaryConditions,
    v_max: f64,
    lead: Option<&LeadState>,
    t_cap: Option<f64>,
) -> Result<HorizonAdjustment> {
    bc.validate()?;
    let lead_violated = match lead {
        Some(l) => f2_lead(bc, l)? < 0.0,
        None => false,
    };
    if lead_violated {
        let lead = lead.expect("checked above");
        let cap = t_cap.unwrap_or(HORIZON_CAP_FACTOR * bc.horizon);
        let feasible = |t: f64| -> Result<bool> { Ok(f2_lead(&bc.with_horizon(t), lead)? >= 0.0) };
        if cap <= bc.horizon {
            return Err(Error::InfeasibleHorizon { t_cap: cap });
        }
        // spacing is not monotone in the horizon: bracket the first feasible one
        let step = (cap - bc.horizon) / LEAD_SCAN_STEPS as f64;
        let mut bracket = None;
        for k in 1..=LEAD_SCAN_STEPS {
            let t = if k == LEAD_SCAN_STEPS {
                cap
            } else {
                bc.horizon + k as f64 * step
            };
            if feasible(t)? {
                bracket = Some((t - step, t));
                break;
            }
        }
        let (mut lo, mut hi) = bracket.ok_or(Error::InfeasibleHorizon { t_cap: cap })?;
        while hi - lo > HORIZON_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if feasible(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(HorizonAdjustment {
            bc: bc.with_horizon(hi),
            constraint: HorizonConstraint::Lead,
        });
    }
    if f1_vmax(bc, v_max)? < 0.0 {
        return Ok(HorizonAdjustment {
            bc: bc.with_horizon(min_horizon_for_speed_limit(bc, v_max)?),
            constraint: HorizonConstraint::SpeedLimit,
        });
    }
    Ok(HorizonAdjustment {
        bc: *bc,
        constraint: HorizonConstraint::None,
    })
}

/// Exact cost `∫₀ᵀ p0(a+h)v + p1(a+h)² dτ` of a quadratic profile [J].
pub fn profile_cost(profile: &QuadraticProfile, params: &VehicleParams) -> f64 {
    let QuadraticProfile { c0, c1, c2, bc } = *profile;
    let t = bc.horizon;
    let h = params.h;
    let v_end = profile.speed(t);
    let dist = profile.position(t);
    // ∫ a·v = ΔKE per unit mass; ∫ a² of a linear acceleration
    let accel_sq = c1 * c1 * t + 2.0 * c1 * c2 * t * t + 4.0 / 3.0 * c2 * c2 * t * t * t;
    let linear = 0.5 * (v_end * v_end - c0 * c0) + h * dist;
    let quadratic = accel_sq + 2.0 * h * (v_end - c0) + h * h * t;
    params.p0 * linear + params.p1 * quadratic
}
