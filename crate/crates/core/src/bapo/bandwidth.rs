//! Bandwidth-only allocation for frozen communication powers.
//!
//! For rate multipliers `ν` every transmitter water-fills its band: link
//! `(j,k)` gets `s = h P / t(μ_j, ν_k)` with the price `μ_j` set so that the
//! fractions sum to one. The multipliers minimize the smooth convex dual
//! `Σ (1 + ν_k) R_k − ρ Σ ν_k`, whose gradient is `R − ρ`.

use std::f64::consts::LN_2;

use super::dual::decreasing_root;
use super::lambert::ratio_from_c;
use super::{BapoProblem, BapoSolution, BapoStats, DualState};
use crate::error::{Error, Result};
use crate::model::TRANSMITTERS;

fn water_fill(prob: &BapoProblem, p: &[Vec<f64>; TRANSMITTERS], nu: &[f64], mu: &mut [f64; TRANSMITTERS]) -> Result<[Vec<f64>; TRANSMITTERS]> {
    let k = prob.num_users();
    let mut s: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![0.0; k]);
    for j in 0..TRANSMITTERS {
        let act: Vec<usize> = (0..k).filter(|&i| p[j][i] > 0.0).collect();
        if act.is_empty() {
            s[j] = vec![1.0 / k as f64; k];
            continue;
        }
        let share = |c: f64| -> f64 { act.iter().map(|&i| prob.h[j][i] * p[j][i] / ratio_from_c(c / (1.0 + nu[i]))).sum() };
        let l0 = if mu[j] > 0.0 { mu[j].ln() } else { 0.0 };
        let l = decreasing_root(|l| share(l.exp()).ln(), l0, -700.0, 700.0)?;
        let c = l.exp();
        mu[j] = c;
        for &i in &act {
            s[j][i] = prob.h[j][i] * p[j][i] / ratio_from_c(c / (1.0 + nu[i]));
        }
        let tot: f64 = s[j].iter().sum();
        s[j].iter_mut().for_each(|v| *v /= tot);
    }
    Ok(s)
}

/// Optimal bandwidth fractions for the powers `power` (watts).
pub fn solve_bandwidth_only(prob: &BapoProblem, power: &[Vec<f64>; TRANSMITTERS]) -> Result<BapoSolution> {
    let k = prob.num_users();
    let mut mu = [0.0; TRANSMITTERS];
    let mut nu = vec![0.0; k];
    let dual = |s: &[Vec<f64>; TRANSMITTERS], nu: &[f64]| -> (f64, Vec<f64>) {
        let r = prob.user_rates_norm(power, s);
        let val = r.iter().zip(nu).map(|(ri, ni)| (1.0 + ni) * ri).sum::<f64>() - prob.rho * nu.iter().sum::<f64>();
        (val, r.iter().map(|ri| ri - prob.rho).collect())
    };
    let mut s = water_fill(prob, power, &nu, &mut mu)?;
    let (mut val, mut grad) = dual(&s, &nu);
    let mut alpha = 1.0;
    let mut iters = 0;
    let tol = 1e-11 * (1.0 + prob.rho);
    for _ in 0..5000 {
        iters += 1;
        let pg = nu.iter().zip(&grad).map(|(n, g)| ((n - g).max(0.0) - n).abs()).fold(0.0, f64::max);
        if pg <= tol {
            break;
        }
        if nu.iter().any(|v| *v > 1e7) {
            return Err(Error::RateUnattainable);
        }
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = nu.iter().zip(&grad).map(|(n, g)| (n - step * g).max(0.0)).collect();
            let mut mu_c = mu;
            // Prices outside the bracket only occur for runaway multipliers.
            let Ok(s_c) = water_fill(prob, power, &cand, &mut mu_c) else {
                step *= 0.5;
                continue;
            };
            let (v, g) = dual(&s_c, &cand);
            let dec: f64 = cand.iter().zip(&nu).zip(&grad).map(|((a, b), gi)| (a - b) * gi).sum();
            if v <= val + 1e-4 * dec {
                accepted = Some((cand, s_c, mu_c, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, s_c, mu_c, v, g)) = accepted else { break };
        let sv: Vec<f64> = cand.iter().zip(&nu).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = sv.iter().map(|v| v * v).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-8, 1e8) } else { (2.0 * step).min(1e8) };
        nu = cand;
        s = s_c;
        mu = mu_c;
        val = v;
        grad = g;
    }
    let rates = prob.user_rates_norm(power, &s);
    let short = rates.iter().map(|r| (prob.rho - r).max(0.0)).fold(0.0, f64::max);
    if short > 1e-6 * prob.rho.max(1e-12) {
        return Err(if nu.iter().any(|v| *v > 1e6) { Error::RateUnattainable } else { Error::NoConvergence { residual: short } });
    }
    let primal: f64 = rates.iter().sum();
    let duals = DualState { nu, mu: mu.map(|c| c * prob.b / LN_2), lambda: [0.0; TRANSMITTERS], step: 0.0, iteration: iters };
    let residual = ((val - primal) / primal.max(1e-12)).abs();
    let stats = BapoStats { dual_iterations: iters, ..Default::default() };
    Ok(prob.finish(power.clone(), s, duals, residual, stats))
}
