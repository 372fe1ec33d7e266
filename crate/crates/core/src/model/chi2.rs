//! Noncentral chi-squared CDF and quantile for even degrees of freedom.
//!
//! The CDF is the Poisson mixture
//! `F(x; 2m, λ) = Σ_i e^{-λ/2} (λ/2)^i / i! · F_central(x; 2m + 2i)`, and
//! for even degrees of freedom the central CDF is itself a Poisson tail:
//! `F_central(x; 2n) = P[Poisson(x/2) >= n]`.

use crate::error::{Error, Result};

/// Truncation bound on the neglected Poisson mixture mass.
const TAIL_BOUND: f64 = 1e-12;
const MAX_TERMS: usize = 100_000;

/// Noncentrality `λ = 2(1-ω)/ω` of the normalized Rician power gain.
pub fn noncentrality(omega: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::PureLos);
    }
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidArgument(format!("omega must lie in (0, 1], got {omega}")));
    }
    Ok(2.0 * (1.0 - omega) / omega)
}

/// CDF of the noncentral chi-squared distribution with an even number of
/// degrees of freedom.
pub fn noncentral_chi2_cdf(x: f64, dof: u32, lambda: f64) -> Result<f64> {
    if dof == 0 || dof % 2 != 0 {
        return Err(Error::InvalidArgument(format!("only even dof supported, got {dof}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("noncentrality must be >= 0, got {lambda}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let m = (dof / 2) as usize;
    let half_x = 0.5 * x;
    let half_lambda = 0.5 * lambda;
    let ln_half_x = half_x.ln();

    // Running P[Poisson(x/2) <= n - 1] for n = m + i, built from log-space pmf terms.
    let mut ln_fact = 0.0;
    let mut below = 0.0;
    let mut j = 0usize;
    let mut advance_below = |upto: usize, below: &mut f64, j: &mut usize| {
        while *j < upto {
            if *j > 0 {
                ln_fact += (*j as f64).ln();
            }
            *below += (-half_x + *j as f64 * ln_half_x - ln_fact).exp();
            *j += 1;
        }
    };
    advance_below(m, &mut below, &mut j);

    if half_lambda == 0.0 {
        return Ok((1.0 - below).clamp(0.0, 1.0));
    }

    let ln_half_lambda = half_lambda.ln();
    let mut ln_i_fact = 0.0;
    let mut mass = 0.0;
    let mut cdf = 0.0;
    for i in 0..MAX_TERMS {
        if i > 0 {
            ln_i_fact += (i as f64).ln();
            advance_below(m + i, &mut below, &mut j);
        }
        let w = (-half_lambda + i as f64 * ln_half_lambda - ln_i_fact).exp();
        mass += w;
        cdf += w * (1.0 - below).max(0.0);
        // Past the mode the remaining weights decay at least geometrically
        // with ratio r, so their total is below w r / (1 - r).
        let r = half_lambda / (i + 1) as f64;
        if r < 1.0 && w * r / (1.0 - r) < TAIL_BOUND {
            return Ok(cdf.clamp(0.0, 1.0));
        }
    }
    Err(Error::NoConvergence { residual: 1.0 - mass })
}

/// Quantile of the noncentral chi-squared distribution: the `x` with
/// `F(x; dof, λ) = p`, located by bracketing and bisection.
pub fn inv_noncentral_chi2_cdf(p: f64, dof: u32, lambda: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability must lie in (0, 1), got {p}")));
    }
    let cdf = |x: f64| noncentral_chi2_cdf(x, dof, lambda);

    let mut lo = 0.0;
    let mut hi = (dof as f64 + lambda).max(1.0);
    let mut grow = 0;
    while cdf(hi)? < p {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoConvergence { residual: p - cdf(hi)? });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    let x = 0.5 * (lo + hi);
    if (hi - lo) <= 1e-8 * hi {
        Ok(x)
    } else {
        Err(Error::NoConvergence { residual: cdf(x)? - p })
    }
}

/// Effective power-gain multiplier of an outage-constrained Rician link.
///
/// The normalized gain `Z = |h|^2 / (g ω / 2)` is noncentral chi-squared with
/// two degrees of freedom, so the gain exceeded with probability `1 - ε` is
/// `g · (ω/2) · F^{-1}(ε; 2, λ)`. The `ω/2` scaling is part of the returned
/// factor. A pure LoS channel (`ω = 0`) has a deterministic gain: factor 1.
pub fn fading_factor(omega: f64, eps_out: f64) -> Result<f64> {
    if !(eps_out > 0.0 && eps_out < 1.0) {
        return Err(Error::InvalidArgument(format!("outage tolerance must lie in (0, 1), got {eps_out}")));
    }
    if omega == 0.0 {
        return Ok(1.0);
    }
    let lambda = noncentrality(omega)?;
    Ok(0.5 * omega * inv_noncentral_chi2_cdf(eps_out, 2, lambda)?)
}
