//! Residual lifetime of a source→relay link under straight-line motion.
//!
//! A relay `r` is useful to source `s` for destination `d` while it stays in the
//! survival area: inside the range circle of `s` and no farther from `d` than
//! `s` is. Both boundaries give a quadratic in the elapsed time `t`:
//!
//! * range circle, by the law of cosines in the triangle formed by `s`, the
//!   relay's start and its position after `t`:
//!   `R² = d0² + (v t)² − 2 d0 v t cos α`, with `v` the relay speed relative to `s`
//!   and `α` the angle between the relay→source bearing and that velocity;
//! * destination circle, the same construction around `d`:
//!   `d_ds(t)² = d_dr² + (v t)² − 2 d_dr v t cos φ`, where `d_ds(t)` follows the
//!   source's own motion relative to `d`.
//!
//! The velocity of the relay relative to the moving `s→d` frame,
//! `v_sdr = v_r − (v_s − v_d)`, and its angle to the `s→d` bearing classify the
//! motion as heading toward the destination side or away from it; that case
//! decides which boundary is the primary one, and the earlier exit of the two
//! is the lifetime.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifetimeError {
    #[error("source and destination positions coincide")]
    CoincidentNodes,
    #[error("relay is outside the survival area (d(s,r)={d_sr:.3}, R={range:.3}, d(r,d)={d_rd:.3}, d(s,d)={d_sd:.3})")]
    NotInSurvivalArea {
        d_sr: f64,
        range: f64,
        d_rd: f64,
        d_sd: f64,
    },
    #[error("transmission range must be positive, got {0}")]
    BadRange(f64),
}

/// Normalizes an angle to `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    /// m/s, non-negative.
    pub speed: f64,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, speed: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            speed: speed.abs(),
            heading: normalize_angle(if speed < 0.0 { heading + PI } else { heading }),
        }
    }

    pub fn stationary(x: f64, y: f64) -> Self {
        Self::new(x, y, 0.0, 0.0)
    }

    pub fn from_velocity(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        let speed = vx.hypot(vy);
        let heading = if speed == 0.0 { 0.0 } else { normalize_angle(vy.atan2(vx)) };
        Self { x, y, speed, heading }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.speed * self.heading.cos(), self.speed * self.heading.sin())
    }

    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let (vx, vy) = self.velocity();
        (self.x + vx * t, self.y + vy * t)
    }

    pub fn distance_to(&self, other: &KinematicState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.speed.is_finite()
            && self.speed >= 0.0
            && (0.0..TAU).contains(&self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeVelocity {
    pub speed: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
}

impl RelativeVelocity {
    fn from_components(vx: f64, vy: f64) -> Self {
        let speed = vx.hypot(vy);
        let heading = if speed == 0.0 { 0.0 } else { normalize_angle(vy.atan2(vx)) };
        Self { speed, heading, vx, vy }
    }
}

/// Velocity of `a` as seen from `b`: `v_a − v_b`.
pub fn relative_velocity(a: &KinematicState, b: &KinematicState) -> RelativeVelocity {
    let (ax, ay) = a.velocity();
    let (bx, by) = b.velocity();
    RelativeVelocity::from_components(ax - bx, ay - by)
}

/// Velocity of relay `r` relative to the source-destination frame: `v_r − (v_s − v_d)`.
pub fn frame_velocity(s: &KinematicState, r: &KinematicState, d: &KinematicState) -> RelativeVelocity {
    let sd = relative_velocity(s, d);
    let (rx, ry) = r.velocity();
    RelativeVelocity::from_components(rx - sd.vx, ry - sd.vy)
}

/// Bearing of the `s→d` segment from the x-axis, in `[0, 2π)`.
pub fn bearing(s: &KinematicState, d: &KinematicState) -> Result<f64, LifetimeError> {
    let (dx, dy) = (d.x - s.x, d.y - s.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(LifetimeError::CoincidentNodes);
    }
    Ok(normalize_angle(dy.atan2(dx)))
}

/// Angle of `sdr` measured from the `s→d` bearing, in `[0, 2π)`.
pub fn relative_angle(
    sdr: &RelativeVelocity,
    s: &KinematicState,
    d: &KinematicState,
) -> Result<f64, LifetimeError> {
    Ok(normalize_angle(sdr.heading - bearing(s, d)?))
}

/// Static distances describing the source/relay/destination triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    /// Source–relay distance.
    pub d0: f64,
    pub d_ds: f64,
    pub d_dr: f64,
    pub range: f64,
    pub theta_sd_x: f64,
}

impl LinkGeometry {
    pub fn new(
        s: &KinematicState,
        r: &KinematicState,
        d: &KinematicState,
        range: f64,
    ) -> Result<Self, LifetimeError> {
        Ok(Self {
            d0: s.distance_to(r),
            d_ds: s.distance_to(d),
            d_dr: r.distance_to(d),
            range,
            theta_sd_x: bearing(s, d)?,
        })
    }

    /// Angle at the source between the relay and the destination (law of cosines).
    pub fn angle_at_source(&self) -> f64 {
        if self.d0 == 0.0 || self.d_ds == 0.0 {
            return 0.0;
        }
        let c = (self.d0 * self.d0 + self.d_ds * self.d_ds - self.d_dr * self.d_dr)
            / (2.0 * self.d0 * self.d_ds);
        c.clamp(-1.0, 1.0).acos()
    }

    /// Relay inside the survival area, with a small relative slack for rounding.
    pub fn in_survival_area(&self) -> bool {
        let slack = 1e-9;
        self.d0 <= self.range * (1.0 + slack) && self.d_dr <= self.d_ds * (1.0 + slack) + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionCase {
    /// `θ_rel ∈ [0, π/2] ∪ [3π/2, 2π)`: the relay drifts toward the destination side.
    Toward,
    /// `θ_rel ∈ (π/2, 3π/2)`.
    Away,
}

impl MotionCase {
    pub fn classify(theta_rel: f64) -> Self {
        let t = normalize_angle(theta_rel);
        if t <= PI / 2.0 || t >= 3.0 * PI / 2.0 {
            MotionCase::Toward
        } else {
            MotionCase::Away
        }
    }
}

/// Remaining time a link survives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lifetime {
    Finite(f64),
    Unbounded,
}

impl Lifetime {
    /// Finite seconds, or `horizon` for an unbounded lifetime.
    pub fn or_horizon(self, horizon: f64) -> f64 {
        match self {
            Lifetime::Finite(t) => t.min(horizon),
            Lifetime::Unbounded => horizon,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Lifetime::Unbounded)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Lifetime::Finite(t) => Some(t),
            Lifetime::Unbounded => None,
        }
    }
}

impl fmt::Display for Lifetime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lifetime::Finite(t) => write!(f, "{t:.4}"),
            Lifetime::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Default cut-off beyond which a lifetime is reported as unbounded.
pub const DEFAULT_HORIZON: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimePrediction {
    pub lifetime: Lifetime,
    pub case: MotionCase,
    pub theta_rel: f64,
    pub frame_velocity: RelativeVelocity,
    /// Exit time through the range circle of the source.
    pub range_exit: Lifetime,
    /// Exit time through the destination circle.
    pub destination_exit: Lifetime,
}

/// First `t ≥ 0` at which `a t² + b t + c` crosses from `≤ 0` to `> 0`, given `c ≤ 0`.
fn first_upcrossing(a: f64, b: f64, c: f64) -> Option<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return None;
    }
    let (a, b, c) = (a / scale, b / scale, c / scale);
    let eps = 1e-12;
    if c > eps {
        return Some(0.0);
    }
    if c.abs() <= eps && (b > eps || (b.abs() <= eps && a > eps)) {
        return Some(0.0);
    }
    if a.abs() <= eps {
        return (b > eps).then(|| (-c / b).max(0.0));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { -b / (2.0 * a) }];
    roots.sort_by(f64::total_cmp);
    roots
        .into_iter()
        .filter(|&t| t >= 0.0)
        .find(|&t| 2.0 * a * t + b > 0.0)
}

fn to_lifetime(t: Option<f64>, horizon: f64) -> Lifetime {
    match t {
        Some(t) if t <= horizon => Lifetime::Finite(t),
        _ => Lifetime::Unbounded,
    }
}

/// Full prediction including the motion case and both boundary exits.
pub fn predict_lifetime(
    s: &KinematicState,
    r: &KinematicState,
    d: &KinematicState,
    range: f64,
    horizon: f64,
) -> Result<LifetimePrediction, LifetimeError> {
    if !(range > 0.0) {
        return Err(LifetimeError::BadRange(range));
    }
    let geom = LinkGeometry::new(s, r, d, range)?;
    if !geom.in_survival_area() {
        return Err(LifetimeError::NotInSurvivalArea {
            d_sr: geom.d0,
            range,
            d_rd: geom.d_dr,
            d_sd: geom.d_ds,
        });
    }
    let sdr = frame_velocity(s, r, d);
    let theta_rel = relative_angle(&sdr, s, d)?;
    let case = MotionCase::classify(theta_rel);

    // Range circle: relay relative to the source.
    let rel_rs = relative_velocity(r, s);
    let v = rel_rs.speed;
    let range_exit = if v == 0.0 {
        None
    } else {
        // α: angle between the relay→source direction and the relay's relative velocity
        let (px, py) = (s.x - r.x, s.y - r.y);
        let cos_alpha = if geom.d0 == 0.0 {
            0.0
        } else {
            (px * rel_rs.vx + py * rel_rs.vy) / (geom.d0 * v)
        };
        first_upcrossing(
            v * v,
            -2.0 * geom.d0 * v * cos_alpha,
            geom.d0 * geom.d0 - range * range,
        )
    };

    // Destination circle: |r(t) − d(t)|² − |s(t) − d(t)|².
    let rel_rd = relative_velocity(r, d);
    let rel_sd = relative_velocity(s, d);
    let (qrx, qry) = (r.x - d.x, r.y - d.y);
    let (qsx, qsy) = (s.x - d.x, s.y - d.y);
    let destination_exit = first_upcrossing(
        rel_rd.speed * rel_rd.speed - rel_sd.speed * rel_sd.speed,
        2.0 * ((qrx * rel_rd.vx + qry * rel_rd.vy) - (qsx * rel_sd.vx + qsy * rel_sd.vy)),
        geom.d_dr * geom.d_dr - geom.d_ds * geom.d_ds,
    );

    let (primary, secondary) = match case {
        MotionCase::Toward => (range_exit, destination_exit),
        MotionCase::Away => (destination_exit, range_exit),
    };
    let exit = match (primary, secondary) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };

    Ok(LifetimePrediction {
        lifetime: to_lifetime(exit, horizon),
        case,
        theta_rel,
        frame_velocity: sdr,
        range_exit: to_lifetime(range_exit, horizon),
        destination_exit: to_lifetime(destination_exit, horizon),
    })
}

/// Predicted residual lifetime of link `s→r` toward destination `d`.
pub fn residual_lifetime(
    s: &KinematicState,
    r: &KinematicState,
    d: &KinematicState,
    range: f64,
    horizon: f64,
) -> Result<Lifetime, LifetimeError> {
    predict_lifetime(s, r, d, range, horizon).map(|p| p.lifetime)
}

/// Time-stepping reference: advances all three nodes in steps of `dt` and reports
/// the first step at which the relay has left the survival area.
pub fn survival_exit_oracle(
    s: &KinematicState,
    r: &KinematicState,
    d: &KinematicState,
    range: f64,
    dt: f64,
    horizon: f64,
) -> Lifetime {
    assert!(dt > 0.0 && horizon > 0.0);
    let outside = |t: f64| {
        let (sx, sy) = s.position_at(t);
        let (rx, ry) = r.position_at(t);
        let (dx, dy) = d.position_at(t);
        let d_sr = (sx - rx).hypot(sy - ry);
        let d_rd = (rx - dx).hypot(ry - dy);
        let d_sd = (sx - dx).hypot(sy - dy);
        d_sr > range * (1.0 + 1e-12) || d_rd > d_sd * (1.0 + 1e-12)
    };
    let steps = (horizon / dt).ceil() as u64;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if outside(t) {
            return Lifetime::Finite(t);
        }
    }
    Lifetime::Unbounded
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn relative_velocity_examples() {
        let a = KinematicState::new(0.0, 0.0, 3.0, 0.0);
        assert_eq!(relative_velocity(&a, &a).speed, 0.0);
        let still = KinematicState::stationary(5.0, 5.0);
        let rv = relative_velocity(&a, &still);
        assert!(close(rv.speed, 3.0, 1e-12) && close(rv.heading, 0.0, 1e-12));
        let b = KinematicState::new(1.0, 1.0, 4.0, PI / 2.0);
        let rv = relative_velocity(&a, &b);
        assert!(close(rv.vx, 3.0, 1e-12));
        assert!(close(rv.vy, -4.0, 1e-12));
        assert!(close(rv.speed, 5.0, 1e-12));
        assert!(close(rv.speed, rv.vx.hypot(rv.vy), 1e-12));
    }

    #[test]
    fn relative_angle_examples() {
        let s = KinematicState::stationary(0.0, 0.0);
        let d = KinematicState::stationary(10.0, 0.0);
        let along = RelativeVelocity::from_components(1.0, 0.0);
        assert!(close(relative_angle(&along, &s, &d).unwrap(), 0.0, 1e-12));
        let back = RelativeVelocity::from_components(-1.0, 0.0);
        assert!(close(relative_angle(&back, &s, &d).unwrap(), PI, 1e-12));
        let diag = RelativeVelocity::from_components(1.0, 1.0);
        assert!(close(relative_angle(&diag, &s, &d).unwrap(), FRAC_PI_4, 1e-12));
        // bearing is taken over the full circle
        let d2 = KinematicState::stationary(-10.0, 0.0);
        assert!(close(relative_angle(&back, &s, &d2).unwrap(), 0.0, 1e-12));
        assert_eq!(
            relative_angle(&along, &s, &KinematicState::stationary(0.0, 0.0)),
            Err(LifetimeError::CoincidentNodes)
        );
    }

    #[test]
    fn stationary_nodes_are_unbounded() {
        let s = KinematicState::stationary(0.0, 0.0);
        let r = KinematicState::stationary(30.0, 10.0);
        let d = KinematicState::stationary(100.0, 0.0);
        assert_eq!(residual_lifetime(&s, &r, &d, 50.0, DEFAULT_HORIZON), Ok(Lifetime::Unbounded));
        assert_eq!(survival_exit_oracle(&s, &r, &d, 50.0, 0.01, 100.0), Lifetime::Unbounded);
    }

    #[test]
    fn boundary_outward_is_immediate() {
        // relay on the range circle, moving radially out of it (toward d)
        let s = KinematicState::stationary(0.0, 0.0);
        let r = KinematicState::new(0.0, 50.0, 2.0, PI / 2.0);
        let d = KinematicState::stationary(0.0, 300.0);
        let lt = residual_lifetime(&s, &r, &d, 50.0, DEFAULT_HORIZON).unwrap();
        assert_eq!(lt, Lifetime::Finite(0.0));
        let oracle = survival_exit_oracle(&s, &r, &d, 50.0, 0.001, 10.0);
        assert!(oracle.finite().unwrap() <= 0.001);
    }

    #[test]
    fn collinear_relay_moving_to_destination() {
        let s = KinematicState::stationary(0.0, 0.0);
        let r = KinematicState::new(20.0, 0.0, 1.0, 0.0);
        let d = KinematicState::stationary(100.0, 0.0);
        let p = predict_lifetime(&s, &r, &d, 50.0, DEFAULT_HORIZON).unwrap();
        assert_eq!(p.case, MotionCase::Toward);
        assert!(close(p.theta_rel, 0.0, 1e-12));
        // leaves the 50 m range after 30 s
        assert!(close(p.lifetime.finite().unwrap(), 30.0, 1e-9));
    }

    #[test]
    fn away_case_exits_destination_circle() {
        // relay just ahead of s moving back past it: the destination circle is
        // crossed long before the range circle
        let s = KinematicState::stationary(0.0, 0.0);
        let r = KinematicState::new(1.0, 0.0, 1.0, PI);
        let d = KinematicState::stationary(100.0, 0.0);
        let p = predict_lifetime(&s, &r, &d, 50.0, DEFAULT_HORIZON).unwrap();
        assert_eq!(p.case, MotionCase::Away);
        assert!(close(p.lifetime.finite().unwrap(), 1.0, 1e-9));
        assert!(close(p.range_exit.finite().unwrap(), 51.0, 1e-9));
    }

    #[test]
    fn rejects_relay_outside() {
        let s = KinematicState::stationary(0.0, 0.0);
        let d = KinematicState::stationary(100.0, 0.0);
        let far = KinematicState::stationary(60.0, 0.0);
        assert!(matches!(
            residual_lifetime(&s, &far, &d, 50.0, DEFAULT_HORIZON),
            Err(LifetimeError::NotInSurvivalArea { .. })
        ));
        let behind = KinematicState::stationary(-10.0, 0.0);
        assert!(residual_lifetime(&s, &behind, &d, 50.0, DEFAULT_HORIZON).is_err());
        assert!(matches!(
            residual_lifetime(&s, &s, &d, 0.0, DEFAULT_HORIZON),
            Err(LifetimeError::BadRange(_))
        ));
    }

    #[test]
    fn oracle_converges_under_dt_halving() {
        let s = KinematicState::new(0.0, 0.0, 1.0, 0.3);
        let r = KinematicState::new(20.0, 15.0, 3.0, 2.0);
        let d = KinematicState::new(120.0, -10.0, 0.5, 4.0);
        let coarse = survival_exit_oracle(&s, &r, &d, 60.0, 0.01, 500.0).finite().unwrap();
        let fine = survival_exit_oracle(&s, &r, &d, 60.0, 0.005, 500.0).finite().unwrap();
        assert!((coarse - fine).abs() <= 0.01 + 1e-12);
        let exact = residual_lifetime(&s, &r, &d, 60.0, DEFAULT_HORIZON).unwrap().finite().unwrap();
        assert!(fine >= exact - 1e-9 && fine - exact <= 0.005 + 1e-9);
    }

    #[test]
    fn quadratic_root_selection() {
        // t² − 1: upcrossing at 1
        assert_eq!(first_upcrossing(1.0, 0.0, -1.0), Some(1.0));
        // −t² + 3t − 2 ≤ 0 at 0, positive on (1, 2)
        assert!(close(first_upcrossing(-1.0, 3.0, -2.0).unwrap(), 1.0, 1e-12));
        // never positive
        assert_eq!(first_upcrossing(-1.0, 0.0, -1.0), None);
        assert_eq!(first_upcrossing(0.0, -1.0, -1.0), None);
        assert!(close(first_upcrossing(0.0, 2.0, -1.0).unwrap(), 0.5, 1e-12));
        // on the boundary moving inward, exits at the far root
        assert!(close(first_upcrossing(1.0, -2.0, 0.0).unwrap(), 2.0, 1e-12));
    }
}
