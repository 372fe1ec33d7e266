//! Linear programs over bandwidth-to-power ratios.
//!
//! Fixing `t = h P / s` makes a link's bandwidth `(h/t) P` and its rate
//! `(h/t) log2(1+t) P` linear in `P`. Each `(j, k, t)` triple is therefore a
//! column of an LP with power rows, bandwidth rows and per-user rate rows.
//! Pricing the best ratio in closed form and adding columns until none has a
//! positive reduced cost solves the original concave problem exactly; the
//! leftover reduced cost bounds the gap.

use std::f64::consts::LN_2;

use super::lambert::ratio_from_c;
use super::simplex::{RowKind, Simplex};
use super::{BapoOptions, BapoProblem, BapoSolution, BapoStats, DualState};
use crate::error::{Error, Result};
use crate::model::TRANSMITTERS;

const RATIO_CAP: f64 = 1e9;
const DEFICIT_PENALTY: f64 = 1e6;
const SEED_FACTORS: [f64; 7] = [1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0, 4.0, 16.0, 64.0];

#[derive(Debug, Clone, Copy)]
struct Column {
    j: usize,
    k: usize,
    /// Bandwidth per watt `h/t`.
    a: f64,
    /// Normalized rate per watt.
    r: f64,
    /// Variable scaling: `P = x · scale`.
    scale: f64,
}

impl Column {
    fn new(j: usize, k: usize, h: f64, t: f64) -> Self {
        let a = h / t;
        let r = a * t.ln_1p() / LN_2;
        Self { j, k, a, r, scale: 1.0 / a.max(r).max(1.0) }
    }

    fn dense(&self, m: usize) -> Vec<f64> {
        let mut v = vec![0.0; m];
        v[self.j] = self.scale;
        v[TRANSMITTERS + self.j] = self.a * self.scale;
        if m > 2 * TRANSMITTERS {
            v[2 * TRANSMITTERS + self.k] = self.r * self.scale;
        }
        v
    }
}

/// Best reduced cost per unit bandwidth of link `(j,k)` over all ratios,
/// with the maximizing ratio.
fn price(h: f64, lambda: f64, mu: f64, nu: f64) -> (f64, f64) {
    let t = if lambda > 0.0 { ((1.0 + nu) * h / (lambda * LN_2) - 1.0).min(RATIO_CAP) } else { RATIO_CAP };
    if t <= 0.0 {
        return (0.0, -mu);
    }
    (t, (1.0 + nu) * t.ln_1p() / LN_2 - lambda * t / h - mu)
}

/// Upper bound on the normalized optimum from any `λ, μ, ν ≥ 0`:
/// `Σ λ_j budget_j + Σ (μ_j + max_{k,t} ψ_jk⁺) − ρ Σ ν_k`.
pub fn dual_bound(prob: &BapoProblem, lambda: &[f64; TRANSMITTERS], mu: &[f64; TRANSMITTERS], nu: &[f64]) -> f64 {
    let mut d = -prob.rho * nu.iter().sum::<f64>();
    for j in 0..TRANSMITTERS {
        d += lambda[j] * prob.budget[j];
        if prob.budget[j] == 0.0 {
            // No power: rays of this row are worthless, any μ_j ≥ 0 works.
            continue;
        }
        let worst = (0..prob.num_users()).map(|k| price(prob.h[j][k], lambda[j], mu[j], nu[k]).1).fold(0.0, f64::max);
        d += mu[j] + worst;
    }
    d
}

fn rows(prob: &BapoProblem) -> Vec<(RowKind, f64)> {
    let mut rows: Vec<(RowKind, f64)> = prob.budget.iter().map(|&b| (RowKind::Le, b)).collect();
    rows.extend((0..TRANSMITTERS).map(|_| (RowKind::Le, 1.0)));
    // A zero floor is never binding: leave the rate rows out.
    if prob.rho > 0.0 {
        rows.extend((0..prob.num_users()).map(|_| (RowKind::Ge, prob.rho)));
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedRatioLp {
    pub comm_power: [Vec<f64>; TRANSMITTERS],
    pub bandwidth: [Vec<f64>; TRANSMITTERS],
    /// Normalized sum rate.
    pub objective: f64,
}

/// The LP with a single ratio per link: power and bandwidth budgets as upper
/// bounds and the per-user rate floors.
pub fn fixed_ratio_lp(prob: &BapoProblem, t: &[Vec<f64>; TRANSMITTERS]) -> Result<FixedRatioLp> {
    let k = prob.num_users();
    let mut lp = Simplex::new(&rows(prob));
    let m = lp.num_rows();
    let mut cols = Vec::new();
    for j in 0..TRANSMITTERS {
        for i in 0..k {
            let c = Column::new(j, i, prob.h[j][i], t[j][i]);
            lp.add_column(&c.dense(m), c.r * c.scale);
            cols.push(c);
        }
    }
    let sol = lp.solve().map_err(|e| match e {
        Error::Lp(msg) if msg.starts_with("infeasible") => Error::RateUnattainable,
        e => e,
    })?;
    let mut p: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![0.0; k]);
    let mut s: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![0.0; k]);
    for (c, x) in cols.iter().zip(&sol.x) {
        p[c.j][c.k] += x * c.scale;
        s[c.j][c.k] += x * c.scale * c.a;
    }
    Ok(FixedRatioLp { comm_power: p, bandwidth: s, objective: sol.objective })
}

/// Exact BAPO optimum by column generation, seeded with the ratios `t` of the
/// dual phase and a geometric grid around the equal-split ratio.
pub fn lp_refine(prob: &BapoProblem, nu_star: &[f64], t: &[Vec<f64>; TRANSMITTERS], opts: &BapoOptions) -> Result<BapoSolution> {
    let k = prob.num_users();
    let mut lp = Simplex::new(&rows(prob));
    let m = lp.num_rows();
    let rate_rows = m > 2 * TRANSMITTERS;
    let n_def = if rate_rows { k } else { 0 };
    let mut cols: Vec<Column> = Vec::new();
    let add = |lp: &mut Simplex, cols: &mut Vec<Column>, c: Column| {
        lp.add_column(&c.dense(m), c.r * c.scale);
        cols.push(c);
    };
    for i in 0..n_def {
        let mut d = vec![0.0; m];
        d[2 * TRANSMITTERS + i] = 1.0;
        lp.add_column(&d, -DEFICIT_PENALTY);
    }
    for j in 0..TRANSMITTERS {
        if prob.budget[j] == 0.0 {
            continue;
        }
        for i in 0..k {
            let h = prob.h[j][i];
            let base = h * prob.budget[j];
            for f in SEED_FACTORS {
                add(&mut lp, &mut cols, Column::new(j, i, h, (base * f).min(RATIO_CAP)));
            }
            let td = t[j][i];
            if td > 0.0 && td.is_finite() {
                add(&mut lp, &mut cols, Column::new(j, i, h, td.min(RATIO_CAP)));
            }
        }
    }
    let _ = nu_star;

    let mut rounds = 0;
    let (mut lambda, mut mu, mut nu);
    let mut sol;
    loop {
        sol = lp.solve()?;
        rounds += 1;
        lambda = std::array::from_fn::<f64, TRANSMITTERS, _>(|j| sol.duals[j].max(0.0));
        mu = std::array::from_fn::<f64, TRANSMITTERS, _>(|j| sol.duals[TRANSMITTERS + j].max(0.0));
        nu = (0..k).map(|i| if rate_rows { (-sol.duals[2 * TRANSMITTERS + i]).max(0.0) } else { 0.0 }).collect::<Vec<f64>>();
        if rounds >= opts.max_lp_rounds {
            break;
        }
        let tol = opts.gap_tol * sol.objective.abs().max(1.0);
        let mut gap = 0.0;
        let mut new_cols = Vec::new();
        for j in 0..TRANSMITTERS {
            if prob.budget[j] == 0.0 {
                continue;
            }
            let mut worst: f64 = 0.0;
            for i in 0..k {
                let h = prob.h[j][i];
                let (ta, psi) = price(h, lambda[j], mu[j], nu[i]);
                worst = worst.max(psi);
                if psi > 0.01 * tol && ta > 0.0 {
                    new_cols.push(Column::new(j, i, h, ta));
                }
                if mu[j] > 0.0 {
                    let tb = ratio_from_c(mu[j] * LN_2 / (1.0 + nu[i])).min(RATIO_CAP);
                    let c = Column::new(j, i, h, tb);
                    if tb > 0.0 && (1.0 + nu[i]) * c.r - lambda[j] - mu[j] * c.a > 0.01 * tol * c.a {
                        new_cols.push(c);
                    }
                }
            }
            gap += worst;
        }
        if gap <= tol || new_cols.is_empty() {
            break;
        }
        for c in new_cols {
            add(&mut lp, &mut cols, c);
        }
    }

    let deficit: f64 = sol.x[..n_def].iter().sum();
    if deficit > 1e-9 * prob.rho.max(1e-9) * k as f64 {
        return Err(Error::RateUnattainable);
    }

    let mut p: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![0.0; k]);
    let mut s: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![0.0; k]);
    for (c, x) in cols.iter().zip(&sol.x[n_def..]) {
        p[c.j][c.k] += x * c.scale;
        s[c.j][c.k] += x * c.scale * c.a;
    }
    // Spend leftover power and bandwidth; rates only grow.
    for j in 0..TRANSMITTERS {
        let sp: f64 = p[j].iter().sum();
        let ss: f64 = s[j].iter().sum();
        if prob.budget[j] == 0.0 {
            p[j] = vec![0.0; k];
        } else if sp > 0.0 {
            let f = prob.budget[j] / sp;
            p[j].iter_mut().for_each(|v| *v *= f);
        } else {
            p[j] = vec![prob.budget[j] / k as f64; k];
        }
        if ss > 0.0 {
            s[j].iter_mut().for_each(|v| *v /= ss);
        } else {
            s[j] = vec![1.0 / k as f64; k];
        }
    }

    let primal: f64 = prob.user_rates_norm(&p, &s).iter().sum();
    let bound = dual_bound(prob, &lambda, &mu, &nu);
    let residual = ((bound - primal) / primal.max(1e-12)).max(0.0);
    let duals = DualState {
        nu,
        mu: mu.map(|v| v * prob.b),
        lambda: lambda.map(|v| v * prob.b),
        step: opts.step0,
        iteration: 0,
    };
    let stats = BapoStats { lp_rounds: rounds, lp_columns: cols.len(), ..Default::default() };
    Ok(prob.finish(p, s, duals, residual, stats))
}
