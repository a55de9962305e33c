//! Opportunistic topology control: keep each sender's relay node degree (RND)
//! inside a healthy band `[n1, n2]` by probabilistically resizing its range,
//! plus a k-connection controller used as a comparison baseline.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid region policy: {0}")]
    InvalidPolicy(String),
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("node density must be positive, got {0}")]
    BadDensity(f64),
    #[error("region probability has no stationary point on [{n1}, {n2}]")]
    NoBracket { n1: u32, n2: u32 },
}

/// Probability that at least one of `n` relays hears a transmission: `1 − (1 − p)^n`.
pub fn ptp(p_link: f64, n: u32) -> f64 {
    1.0 - (1.0 - p_link).powi(n as i32)
}

/// Smallest relay count whose PTP reaches `target`.
pub fn required_rnd(p_link: f64, target: f64) -> Result<u32, TopologyError> {
    if !(p_link > 0.0 && p_link < 1.0) {
        return Err(TopologyError::BadProbability(p_link));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(TopologyError::BadProbability(target));
    }
    let estimate = ((1.0 - target).ln() / (1.0 - p_link).ln()).ceil().max(0.0) as u32;
    // guard the ceil against rounding on exact powers
    let mut n = estimate.saturating_sub(1);
    while ptp(p_link, n) < target {
        n += 1;
    }
    Ok(n)
}

/// Healthy RND band and the network size bounding the unhealthy band above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPolicy {
    pub n1: u32,
    pub n2: u32,
    pub network_size: u32,
    /// PTP bounds the band was derived from, when it was.
    pub p1: Option<f64>,
    pub p2: Option<f64>,
}

impl RegionPolicy {
    pub fn new(n1: u32, n2: u32, network_size: u32) -> Result<Self, TopologyError> {
        if n1 >= n2 || n2 > network_size {
            return Err(TopologyError::InvalidPolicy(format!(
                "need 0 <= n1 < n2 <= N, got n1={n1} n2={n2} N={network_size}"
            )));
        }
        Ok(Self {
            n1,
            n2,
            network_size,
            p1: None,
            p2: None,
        })
    }

    /// Derives `[n1, n2]` from PTP bounds `(p1, p2)` for a typical link delivery ratio.
    pub fn from_ptp(p1: f64, p2: f64, p_link: f64, network_size: u32) -> Result<Self, TopologyError> {
        if !(0.0 < p1 && p1 < p2 && p2 < 1.0) {
            return Err(TopologyError::InvalidPolicy(format!(
                "need 0 < p1 < p2 < 1, got p1={p1} p2={p2}"
            )));
        }
        let n1 = required_rnd(p_link, p1)?;
        let n2 = required_rnd(p_link, p2)?;
        let mut policy = Self::new(n1, n2, network_size)?;
        policy.p1 = Some(p1);
        policy.p2 = Some(p2);
        Ok(policy)
    }

    pub fn is_healthy(&self, n: u32) -> bool {
        (self.n1..=self.n2).contains(&n)
    }

    /// Same band for a different network size (clamping `n2` if needed).
    pub fn with_network_size(&self, network_size: u32) -> Self {
        Self {
            network_size: network_size.max(self.n2),
            ..*self
        }
    }
}

/// Range adjustment probability for a node with RND `n`.
///
/// Zero inside the healthy band; below it the shortfall relative to `n1`,
/// above it the excess relative to the room left up to `N`.
pub fn adjustment_probability(n: u32, policy: &RegionPolicy) -> f64 {
    let p = if policy.is_healthy(n) {
        0.0
    } else if n < policy.n1 {
        f64::from(policy.n1 - n) / f64::from(policy.n1)
    } else if policy.network_size > policy.n2 {
        f64::from(n - policy.n2) / f64::from(policy.network_size - policy.n2)
    } else {
        1.0
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonField {
    /// Nodes per square metre.
    pub rho: f64,
}

impl PoissonField {
    pub fn new(rho: f64) -> Result<Self, TopologyError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(TopologyError::BadDensity(rho));
        }
        Ok(Self { rho })
    }

    /// Uniform density of `nodes` on a square of side `side`.
    pub fn uniform(nodes: u32, side: f64) -> Result<Self, TopologyError> {
        Self::new(f64::from(nodes) / (side * side))
    }

    pub fn mean_count(&self, area: f64) -> f64 {
        self.rho * area
    }
}

/// Poisson pmf terms `P(n)` for `n = 0..=n_max` with mean `lambda`.
///
/// Small means use the plain multiplicative recurrence; large means recur in log
/// space so neither `λ^n`, `n!` nor `e^{−λ}` overflow or underflow on their own.
pub fn poisson_pmf_table(lambda: f64, n_max: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max as usize + 1);
    if lambda <= 0.0 {
        out.push(1.0);
        out.resize(n_max as usize + 1, 0.0);
        return out;
    }
    if lambda <= 50.0 {
        let mut p = (-lambda).exp();
        out.push(p);
        for n in 1..=n_max {
            p *= lambda / f64::from(n);
            out.push(p);
        }
    } else {
        let ln_lambda = lambda.ln();
        let mut lp = -lambda;
        out.push(lp.exp());
        for n in 1..=n_max {
            lp += ln_lambda - f64::from(n).ln();
            out.push(lp.exp());
        }
    }
    out
}

pub fn poisson_pmf(lambda: f64, n: u32) -> f64 {
    poisson_pmf_table(lambda, n)[n as usize]
}

/// `P(n1 ≤ RND ≤ n2)` for a survival area of size `area`. Empty when `n1 > n2`.
pub fn poisson_region_prob(field: &PoissonField, area: f64, n1: u32, n2: u32) -> f64 {
    if n1 > n2 {
        return 0.0;
    }
    let pmf = poisson_pmf_table(field.mean_count(area), n2);
    pmf[n1 as usize..=n2 as usize].iter().sum()
}

/// Probability mass outside the healthy band, truncated at the network size.
pub fn unhealthy_prob(field: &PoissonField, area: f64, policy: &RegionPolicy) -> f64 {
    let pmf = poisson_pmf_table(field.mean_count(area), policy.network_size);
    let low: f64 = pmf[..policy.n1 as usize].iter().sum();
    let high: f64 = pmf[policy.n2 as usize + 1..].iter().sum();
    low + high
}

/// Expected per-node adjustment probability, `Σ_{n ∉ [n1,n2], n ≤ N} P(n) · p_adj(n)`.
pub fn predicted_adjustment_ratio(field: &PoissonField, area: f64, policy: &RegionPolicy) -> f64 {
    poisson_pmf_table(field.mean_count(area), policy.network_size)
        .iter()
        .enumerate()
        .map(|(n, p)| p * adjustment_probability(n as u32, policy))
        .sum()
}

/// Sign of `d/dΔ P(n1 ≤ n ≤ n2)` at mean `x = ρΔ`, scaled by `e^{−x}/x` to stay finite.
fn region_prob_slope(x: f64, n1: u32, n2: u32) -> f64 {
    let pmf = poisson_pmf_table(x, n2);
    (n1..=n2)
        .map(|n| pmf[n as usize] * (f64::from(n) - x))
        .sum::<f64>()
        / x
}

/// Survival area that maximises the probability of a healthy RND.
pub fn optimal_area(field: &PoissonField, n1: u32, n2: u32) -> Result<f64, TopologyError> {
    if n1 == 0 || n2 < n1 {
        return Err(TopologyError::InvalidPolicy(format!(
            "optimal area needs 1 <= n1 <= n2, got n1={n1} n2={n2}"
        )));
    }
    if n1 == n2 {
        return Ok(f64::from(n1) / field.rho);
    }
    let (mut lo, mut hi) = (f64::from(n1), f64::from(n2));
    let (f_lo, f_hi) = (region_prob_slope(lo, n1, n2), region_prob_slope(hi, n1, n2));
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(TopologyError::NoBracket { n1, n2 });
    }
    while (hi - lo) > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if region_prob_slope(mid, n1, n2) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / field.rho)
}

/// Survival area covered by range `r` when the destination is `d` away.
pub fn survival_area(r: f64, d: f64) -> f64 {
    if r <= 0.0 || d <= 0.0 {
        return 0.0;
    }
    r * r * (r / (2.0 * d)).min(1.0).acos()
}

/// Range clamps applied to every computed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeLimits {
    pub min: f64,
    pub max: f64,
}

impl RangeLimits {
    pub fn new(min: f64, max: f64) -> Self {
        debug_assert!(min <= max);
        Self { min, max }
    }

    pub fn unbounded() -> Self {
        Self {
            min: 0.0,
            max: f64::INFINITY,
        }
    }

    pub fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSolution {
    pub delta_star: f64,
    pub r_star: f64,
    /// Destination distance the solution was computed for.
    pub d: f64,
    /// False when no range reaches `delta_star` at this `d`; `r_star` is then `limits.max`.
    pub reachable: bool,
}

/// Solves `Δ* = r² arccos(r / 2d)` for `r` on the rising branch `(0, r_peak]`.
pub fn optimal_range(delta_star: f64, d: f64, limits: &RangeLimits) -> RangeSolution {
    // r² arccos(r/2d) = 4d² u² arccos(u) with u = r/2d; its maximum is where
    // 2 arccos(u) = u / sqrt(1 − u²)
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..100 {
        let u = 0.5 * (lo + hi);
        if 2.0 * u.acos() > u / (1.0 - u * u).sqrt() {
            lo = u;
        } else {
            hi = u;
        }
    }
    let r_peak = 2.0 * d * lo;
    let max_area = survival_area(r_peak, d);
    if !(delta_star > 0.0) {
        return RangeSolution {
            delta_star,
            r_star: limits.clamp(0.0),
            d,
            reachable: true,
        };
    }
    if delta_star > max_area || !max_area.is_finite() {
        log::warn!(
            "survival area {delta_star:.1} m² unreachable at destination distance {d:.1} m (max {max_area:.1}); using r_max"
        );
        return RangeSolution {
            delta_star,
            r_star: limits.max,
            d,
            reachable: false,
        };
    }
    let (mut a, mut b) = (0.0, r_peak);
    while b - a > 1e-9 * r_peak.max(1.0) {
        let mid = 0.5 * (a + b);
        if survival_area(mid, d) < delta_star {
            a = mid;
        } else {
            b = mid;
        }
    }
    RangeSolution {
        delta_star,
        r_star: limits.clamp(0.5 * (a + b)),
        d,
        reachable: true,
    }
}

/// Small-range limit of the survival area: a half disc.
pub fn half_disc_range(delta_star: f64) -> f64 {
    (delta_star / FRAC_PI_2).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RangeDecision {
    Grow,
    Shrink,
    Hold,
}

/// Steers every node's degree toward a fixed `k` with multiplicative range steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KConnection {
    pub k: u32,
    pub grow: f64,
    pub shrink: f64,
}

impl Default for KConnection {
    fn default() -> Self {
        Self {
            k: 5,
            grow: 1.1,
            shrink: 0.9,
        }
    }
}

impl KConnection {
    pub fn decide(&self, degree: u32) -> RangeDecision {
        k_connection_decision(degree, self.k)
    }

    pub fn apply(&self, range: f64, decision: RangeDecision, limits: &RangeLimits) -> f64 {
        match decision {
            RangeDecision::Grow => limits.clamp(range * self.grow),
            RangeDecision::Shrink => limits.clamp(range * self.shrink),
            RangeDecision::Hold => range,
        }
    }
}

pub fn k_connection_decision(degree: u32, k: u32) -> RangeDecision {
    use std::cmp::Ordering::*;
    match degree.cmp(&k) {
        Less => RangeDecision::Grow,
        Greater => RangeDecision::Shrink,
        Equal => RangeDecision::Hold,
    }
}
