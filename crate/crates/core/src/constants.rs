//! Exponent-derived constants, the signed power `J_p`, the truncation
//! schedule for the gambling constant `c`, and the truncated weighted
//! geometric mean identities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent `p`, dimension `d` and the three constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub d: usize,
    /// Weight of the free-move (gradient) term, `(p-2)/(p-1)`.
    pub alpha: f64,
    /// Tug-of-war weight inside the noise ball, `(p-2)/(p+d)`.
    pub beta: f64,
    /// Dilation of the noise ball, `sqrt(2(p+d))`.
    pub gamma: f64,
}

impl Params {
    pub fn new(p: f64, d: usize) -> Result<Self> {
        if !p.is_finite() || p < 2.0 {
            return Err(Error::Domain(format!(
                "exponent p = {p} is not supported; the construction needs p >= 2"
            )));
        }
        if d < 1 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let df = d as f64;
        Ok(Self {
            p,
            d,
            alpha: (p - 2.0) / (p - 1.0),
            beta: (p - 2.0) / (p + df),
            gamma: (2.0 * (p + df)).sqrt(),
        })
    }

    /// Contraction factor `alpha + (1 - alpha) beta` of the sup/inf parts of
    /// the averaging operator.
    pub fn eta(&self) -> f64 {
        self.alpha + (1.0 - self.alpha) * self.beta
    }

    /// Signed power `J_p` at this exponent.
    pub fn jp(&self, xi: f64) -> f64 {
        jp(xi, self.p)
    }

    /// Largest radius any operator ball can reach from its center at this `eps`.
    pub fn reach(&self, bounds: &TruncationBounds) -> f64 {
        let eps = bounds.epsilon;
        let free = eps * eps * bounds.big_m.powf(1.0 - self.alpha);
        let noise = self.gamma * eps * bounds.m.powf(-self.alpha / 2.0);
        free.max(noise)
    }
}

/// Signed `1/(p-1)` power.
pub fn jp(xi: f64, p: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let mag = xi.abs().powf(1.0 / (p - 1.0));
    if xi < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Compact range `[m, M]` for the gambling constant at a given `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationBounds {
    pub epsilon: f64,
    pub m: f64,
    pub big_m: f64,
}

pub fn truncation_bounds(epsilon: f64, alpha: f64) -> Result<TruncationBounds> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} outside (0, 1); truncation schedule undefined"
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha = {alpha} outside [0, 1)")));
    }
    Ok(TruncationBounds {
        epsilon,
        m: epsilon.powf(2.0 / (2.0 + alpha)),
        big_m: epsilon.powf(-2.0 / (2.0 - alpha)),
    })
}

fn check_gm_args(a: f64, b: f64, alpha: f64, m: f64, big_m: f64) -> Result<()> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Domain(format!("negative argument (a = {a}, b = {b})")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(m > 0.0 && m < big_m && big_m.is_finite()) {
        return Err(Error::Domain(format!("need 0 < m < M, got m = {m}, M = {big_m}")));
    }
    Ok(())
}

/// `alpha c^{1-alpha} a + (1-alpha) c^{-alpha} b`.
pub fn am_objective(c: f64, a: f64, b: f64, alpha: f64) -> f64 {
    alpha * c.powf(1.0 - alpha) * a + (1.0 - alpha) * c.powf(-alpha) * b
}

/// Closed-form `inf_{c in [m, M]}` of [`am_objective`].
///
/// The objective has a single stationary point `c* = b/a`; the truncated
/// infimum is attained at `c*` clamped to `[m, M]`. When `a = 0` the
/// objective decreases in `c` (minimizer `M`); when `b = 0` it increases
/// (minimizer `m`).
pub fn truncated_weighted_gm(a: f64, b: f64, alpha: f64, m: f64, big_m: f64) -> Result<f64> {
    check_gm_args(a, b, alpha, m, big_m)?;
    if a == 0.0 && b == 0.0 {
        return Ok(0.0);
    }
    let c = if a == 0.0 {
        big_m
    } else if b == 0.0 {
        m
    } else {
        (b / a).clamp(m, big_m)
    };
    Ok(am_objective(c, a, b, alpha))
}

/// Upper bound `alpha a m^{1-alpha} + (1-alpha) b M^{-alpha}` on the gap between
/// `a^alpha b^{1-alpha}` and its truncated arithmetic-mean representation.
pub fn gm_truncation_error_bound(a: f64, b: f64, alpha: f64, m: f64, big_m: f64) -> Result<f64> {
    check_gm_args(a, b, alpha, m, big_m)?;
    Ok(alpha * a * m.powf(1.0 - alpha) + (1.0 - alpha) * b * big_m.powf(-alpha))
}
