//! Reference solver: exponentiated-gradient (entropic mirror) ascent on
//! `(P, S)` over products of scaled simplices, with an augmented Lagrangian
//! for the rate floors. Multiplicative steps keep every iterate interior,
//! where the perspective rate function is smooth.

use std::f64::consts::LN_2;

use super::{BapoProblem, BapoSolution, BapoStats, DualState};
use crate::error::{Error, Result};
use crate::model::TRANSMITTERS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub max_inner: usize,
    pub max_outer: usize,
    /// Relative Frank-Wolfe gap at which an inner solve stops.
    pub tol: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { max_inner: 50_000, max_outer: 40, tol: 1e-7 }
    }
}

fn link_terms(s: f64, p: f64, h: f64) -> (f64, f64, f64) {
    // rate, ∂rate/∂P, ∂rate/∂s
    let x = if s > 0.0 {
        h * p / s
    } else if p > 0.0 {
        1e300
    } else {
        0.0
    };
    let rate = if s > 0.0 && p > 0.0 { s * x.ln_1p() / LN_2 } else { 0.0 };
    (rate, h / ((1.0 + x) * LN_2), x.ln_1p() / LN_2 - x / ((1.0 + x) * LN_2))
}

/// Maximizes the sum rate directly. With `fixed_power` only the bandwidth
/// fractions are optimized.
pub fn reference_solve(
    prob: &BapoProblem,
    fixed_power: Option<&[Vec<f64>; TRANSMITTERS]>,
    opts: &ReferenceOptions,
) -> Result<BapoSolution> {
    let k = prob.num_users();
    let fix_power = fixed_power.is_some();
    let nb = if fix_power { TRANSMITTERS } else { 2 * TRANSMITTERS };
    let power: [Vec<f64>; TRANSMITTERS] = match fixed_power {
        Some(p) => p.clone(),
        None => std::array::from_fn(|j| vec![prob.budget[j] / k as f64; k]),
    };
    // x = [s rows..., P rows...]
    let mut x = vec![1.0 / k as f64; nb * k];
    if !fix_power {
        for j in 0..TRANSMITTERS {
            x[(TRANSMITTERS + j) * k..(TRANSMITTERS + j + 1) * k].copy_from_slice(&power[j]);
        }
    }
    let split = |x: &[f64]| -> ([Vec<f64>; TRANSMITTERS], [Vec<f64>; TRANSMITTERS]) {
        let s = std::array::from_fn(|j| x[j * k..(j + 1) * k].to_vec());
        let p = if fix_power {
            power.clone()
        } else {
            std::array::from_fn(|j| x[(TRANSMITTERS + j) * k..(TRANSMITTERS + j + 1) * k].to_vec())
        };
        (s, p)
    };
    let block_total = |b: usize| if b < TRANSMITTERS { 1.0 } else { prob.budget[b - TRANSMITTERS] };

    let mut nu = vec![0.0; k];
    let mut c = 1.0;
    // Augmented Lagrangian value and gradient.
    let eval = |x: &[f64], nu: &[f64], c: f64, grad: &mut [f64]| -> (f64, Vec<f64>) {
        let (s, p) = split(x);
        let mut rates = vec![0.0; k];
        let mut terms = vec![(0.0, 0.0, 0.0); TRANSMITTERS * k];
        for j in 0..TRANSMITTERS {
            for i in 0..k {
                let t = link_terms(s[j][i], p[j][i], prob.h[j][i]);
                rates[i] += t.0;
                terms[j * k + i] = t;
            }
        }
        let mut val: f64 = rates.iter().sum();
        let mut weight = vec![1.0; k];
        for i in 0..k {
            let g = rates[i] - prob.rho;
            let m = (nu[i] - c * g).max(0.0);
            val -= (m * m - nu[i] * nu[i]) / (2.0 * c);
            weight[i] += m;
        }
        for j in 0..TRANSMITTERS {
            for i in 0..k {
                let (_, dp, ds) = terms[j * k + i];
                grad[j * k + i] = weight[i] * ds;
                if !fix_power {
                    grad[(TRANSMITTERS + j) * k + i] = weight[i] * dp;
                }
            }
        }
        (val, rates)
    };

    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut inner_total = 0;
    let mut last_viol = f64::INFINITY;
    let mut rates = Vec::new();
    let mut eta = 0.1;
    for _outer in 0..opts.max_outer {
        let (mut val, _) = eval(&x, &nu, c, &mut grad);
        for _ in 0..opts.max_inner {
            inner_total += 1;
            // Frank-Wolfe gap: bounds the distance to the optimum of this
            // (concave) subproblem.
            let mut fw = 0.0;
            for b in 0..nb {
                let (xb, gb) = (&x[b * k..(b + 1) * k], &grad[b * k..(b + 1) * k]);
                let gmax = gb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                fw += gmax * block_total(b) - xb.iter().zip(gb).map(|(a, g)| a * g).sum::<f64>();
            }
            if fw <= opts.tol * val.abs().max(1.0) {
                break;
            }
            let mut accepted = None;
            for _ in 0..60 {
                let mut cand = x.clone();
                for b in 0..nb {
                    let z = block_total(b);
                    if z <= 0.0 {
                        continue;
                    }
                    let gb = &grad[b * k..(b + 1) * k];
                    let gmax = gb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let blk = &mut cand[b * k..(b + 1) * k];
                    for (v, g) in blk.iter_mut().zip(gb) {
                        *v = (*v * (eta * (g - gmax)).exp()).max(1e-300);
                    }
                    let tot: f64 = blk.iter().sum();
                    blk.iter_mut().for_each(|v| *v *= z / tot);
                }
                let dir: f64 = cand.iter().zip(&x).zip(&grad).map(|((a, b), g)| (a - b) * g).sum();
                let mut g2 = vec![0.0; n];
                let (v2, _) = eval(&cand, &nu, c, &mut g2);
                if v2 >= val + 1e-4 * dir {
                    accepted = Some((cand, v2, g2));
                    eta *= 1.5;
                    break;
                }
                eta *= 0.5;
            }
            let Some((cand, v2, g2)) = accepted else { break };
            x = cand;
            grad = g2;
            val = v2;
        }
        let (_, r) = eval(&x, &nu, c, &mut grad);
        rates = r;
        let viol = rates.iter().map(|r| (prob.rho - r).max(0.0)).fold(0.0, f64::max);
        for i in 0..k {
            nu[i] = (nu[i] - c * (rates[i] - prob.rho)).max(0.0);
        }
        if viol <= 1e-10 * prob.rho.max(1e-12) {
            break;
        }
        if viol > 0.25 * last_viol {
            c *= 10.0;
        }
        last_viol = viol;
    }
    let viol = rates.iter().map(|r| (prob.rho - r).max(0.0)).fold(0.0, f64::max);
    if viol > 1e-6 * prob.rho.max(1e-12) {
        return Err(if nu.iter().any(|v| *v > 1e8) { Error::RateUnattainable } else { Error::NoConvergence { residual: viol } });
    }
    let (s, p) = split(&x);
    let duals = DualState { nu, mu: [0.0; TRANSMITTERS], lambda: [0.0; TRANSMITTERS], step: 0.0, iteration: inner_total };
    Ok(prob.finish(p, s, duals, f64::NAN, BapoStats::default()))
}
