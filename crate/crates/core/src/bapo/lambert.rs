//! Principal-branch Lambert W and the bandwidth-to-power ratio it yields.

use std::f64::consts::{E, LN_2};

use crate::error::{Error, Result};

const INV_E: f64 = 1.0 / E;

/// Principal branch `W0(x)` for `x ≥ -1/e`, by Halley iteration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::LambertDomain(x));
    }
    if x < -INV_E {
        // Rounding of -1/e itself lands within a few ulps.
        if x >= -INV_E * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(-1.0);
        }
        return Err(Error::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.32 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x * (1.0 + 4.0 / 3.0 * x) / (1.0 + 7.0 / 3.0 * x + 5.0 / 6.0 * x * x)
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1 == 0.0 {
            break;
        }
        let dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `ln(1+t) - t/(1+t)`.
pub(crate) fn phi(t: f64) -> f64 {
    if t < 1e-4 {
        let t2 = t * t;
        t2 * (0.5 - t * (2.0 / 3.0 - t * (0.75 - t * 0.8)))
    } else {
        t.ln_1p() - t / (1.0 + t)
    }
}

/// Solves `ln(1+t) - t/(1+t) = c` for `t > 0`.
pub(crate) fn ratio_from_c(c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    if c > 700.0 {
        return (1.0 + c).exp() - 1.0;
    }
    // t = -1/W0(-e^{-(1+c)}) - 1 = (1 + w)/(-w).
    let (w, one_plus_w) = if c < 1e-3 {
        // Branch-point expansion with p = sqrt(2(1 + e x)), 1 + e x = 1 - e^{-c}.
        let p = (-2.0 * (-c).exp_m1()).sqrt();
        let opw = p * (1.0 - p * (1.0 / 3.0 - p * (11.0 / 72.0 - p * 43.0 / 540.0)));
        (opw - 1.0, opw)
    } else {
        let w = lambert_w0(-(-(1.0 + c)).exp()).unwrap_or(-1.0);
        (w, 1.0 + w)
    };
    let mut t = one_plus_w / -w;
    for _ in 0..4 {
        let d = t / ((1.0 + t) * (1.0 + t));
        if !(d > 0.0) {
            break;
        }
        let step = (phi(t) - c) / d;
        let next = t - step;
        t = if next > 0.0 { next } else { 0.5 * t };
        if step.abs() <= 1e-15 * t {
            break;
        }
    }
    t
}

/// Bandwidth-to-power ratio target `t = h P / s` at the first-order optimum
/// of one link for bandwidth price `μ_j` and rate multiplier `ν_k`.
pub fn kkt_ratio(mu_j: f64, nu_k: f64, b: f64) -> Result<f64> {
    if mu_j == 0.0 {
        return Err(Error::ZeroBandwidthPrice);
    }
    if !(mu_j > 0.0) || !(nu_k >= 0.0) || !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("kkt_ratio(mu={mu_j}, nu={nu_k}, b={b})")));
    }
    Ok(ratio_from_c(mu_j * LN_2 / (b * (1.0 + nu_k))))
}
