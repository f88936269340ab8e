//! The free-space heat kernel in three dimensions and its exact time integrals.
//!
//! Every solver in the crate integrates the kernel in time against
//! piecewise-constant or piecewise-linear densities, so the closed-form
//! antiderivative in `tau` is exposed as product-integration weights.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Exponent arguments below this are treated as exact underflow.
pub const UNDERFLOW_EXPONENT: f64 = -700.0;

/// A point in space-time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: Vec3,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec3, t: f64) -> Self {
        Self { x, t }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|c| c.is_finite())
    }
}

/// Heat kernel as a function of the squared distance and the elapsed time.
#[inline]
pub fn phi_r2(r2: f64, lag: f64) -> f64 {
    if lag <= 0.0 {
        return 0.0;
    }
    let e = -r2 / (4.0 * lag);
    if e < UNDERFLOW_EXPONENT {
        return 0.0;
    }
    e.exp() / (4.0 * PI * lag).powf(1.5)
}

/// `Phi(x, t; y, tau)`; zero whenever `t <= tau`.
#[inline]
pub fn eval_phi(x: &Vec3, t: f64, y: &Vec3, tau: f64) -> f64 {
    phi_r2((x - y).norm_squared(), t - tau)
}

/// Spatial gradient of the kernel with respect to `x`.
pub fn eval_grad_phi(x: &Vec3, t: f64, y: &Vec3, tau: f64) -> Vec3 {
    let lag = t - tau;
    if lag <= 0.0 {
        return Vec3::zeros();
    }
    let d = x - y;
    -d / (2.0 * lag) * phi_r2(d.norm_squared(), lag)
}

/// Complementary error function with the crate's underflow policy.
#[inline]
pub fn erfc(x: f64) -> f64 {
    if x > 0.0 && -x * x < UNDERFLOW_EXPONENT {
        return 0.0;
    }
    libm::erfc(x)
}

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// `int_0^lag Phi(r; s) ds = erfc(r / (2 sqrt(lag))) / (4 pi r)` for `r > 0`.
///
/// Tends to the Laplace kernel `1 / (4 pi r)` as `lag -> inf` and vanishes at
/// `lag = 0`.
#[inline]
pub fn cumulative_kernel(r: f64, lag: f64) -> f64 {
    debug_assert!(r > 0.0);
    if lag <= 0.0 {
        return 0.0;
    }
    erfc(r / (2.0 * lag.sqrt())) / (4.0 * PI * r)
}

/// The smooth part `erf(r / (2 sqrt(lag))) / (4 pi r)` of the decomposition
/// `cumulative_kernel = 1/(4 pi r) - smooth_remainder`.
///
/// Bounded by `1 / (4 pi^{3/2} sqrt(lag))` and analytic in `r`, including at
/// `r = 0`. For `lag = 0` it equals the Laplace kernel.
#[inline]
pub fn smooth_remainder(r: f64, lag: f64) -> f64 {
    if lag <= 0.0 {
        return 1.0 / (4.0 * PI * r);
    }
    let s = 2.0 * lag.sqrt();
    let d = r / s;
    if d < 1e-4 {
        // erf(d)/d = 2/sqrt(pi) (1 - d^2/3 + d^4/10)
        let d2 = d * d;
        return (1.0 - d2 / 3.0 + d2 * d2 / 10.0) / (2.0 * PI.powf(1.5) * s);
    }
    erf(d) / (4.0 * PI * r)
}

/// `int_{lag_lo}^{lag_hi} Phi(r; s) ds` for `0 <= lag_lo <= lag_hi`, `r >= 0`.
///
/// At `r = 0` the integral is finite only for `lag_lo > 0`; the `r -> 0` limit
/// is returned in that case and `+inf` otherwise.
pub fn lag_weight(r: f64, lag_lo: f64, lag_hi: f64) -> f64 {
    debug_assert!(lag_lo <= lag_hi);
    if lag_hi <= 0.0 || lag_lo == lag_hi {
        return 0.0;
    }
    if r == 0.0 {
        if lag_lo <= 0.0 {
            return f64::INFINITY;
        }
        return (lag_lo.powf(-0.5) - lag_hi.powf(-0.5)) / (4.0 * PI.powf(1.5));
    }
    let d_hi = r / (2.0 * lag_hi.sqrt());
    if lag_lo <= 0.0 {
        return erfc(d_hi) / (4.0 * PI * r);
    }
    let d_lo = r / (2.0 * lag_lo.sqrt());
    let diff = if d_hi >= 0.5 {
        erfc(d_hi) - erfc(d_lo)
    } else {
        erf(d_lo) - erf(d_hi)
    };
    diff / (4.0 * PI * r)
}

/// `int_{t0}^{t1} Phi(x, t; y, tau) dtau` with `|x - y| = r`, in closed form.
pub fn time_integral_phi(r: f64, t0: f64, t1: f64, t: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::DegenerateDistance);
    }
    if t1 < t0 {
        return Err(Error::InvertedInterval);
    }
    if t0 < 0.0 || t1 > t {
        return Err(Error::InvalidArgument(format!(
            "time window [{t0}, {t1}] must lie in [0, {t}]"
        )));
    }
    Ok(lag_weight(r, t - t1, t - t0))
}
