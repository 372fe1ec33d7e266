//! Dual phase: bandwidth prices, KKT ratios, the linear stage and the
//! subgradient update of the rate multipliers.

use std::f64::consts::LN_2;

use super::lambert::{kkt_ratio, phi};
use super::{BapoOptions, BapoProblem, DualState};
use crate::error::{Error, Result};
use crate::model::{Allocation, RateTable, ScenarioConfig, TRANSMITTERS};

/// Root of a non-increasing function of `ℓ`, starting near `l0`: bracket by
/// doubling steps, then Illinois regula falsi.
pub(crate) fn decreasing_root(mut f: impl FnMut(f64) -> f64, l0: f64, lo_cap: f64, hi_cap: f64) -> Result<f64> {
    let f0 = f(l0);
    if f0 == 0.0 {
        return Ok(l0);
    }
    let (mut a, mut fa, mut b, mut fb);
    let mut step = 1.0;
    if f0 > 0.0 {
        (a, fa) = (l0, f0);
        loop {
            b = (a + step).min(hi_cap);
            fb = f(b);
            if fb <= 0.0 {
                break;
            }
            if b >= hi_cap {
                return Err(Error::NoConvergence { residual: fb });
            }
            (a, fa) = (b, fb);
            step *= 2.0;
        }
    } else {
        (b, fb) = (l0, f0);
        loop {
            a = (b - step).max(lo_cap);
            fa = f(a);
            if fa >= 0.0 {
                break;
            }
            if a <= lo_cap {
                return Err(Error::NoConvergence { residual: fa });
            }
            (b, fb) = (a, fa);
            step *= 2.0;
        }
    }
    // fa ≥ 0 ≥ fb
    let mut side = 0i8;
    for _ in 0..200 {
        let x = if fa.is_finite() && fb.is_finite() && fa != fb { a - fa * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let x = if x > a && x < b { x } else { 0.5 * (a + b) };
        let fx = f(x);
        if fx == 0.0 || (b - a) <= 1e-15 * (1.0 + x.abs()) || fx.abs() < 1e-14 {
            return Ok(x);
        }
        if fx > 0.0 {
            (a, fa) = (x, fx);
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            (b, fb) = (x, fx);
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bandwidth price `μ_j` (bits/s) at which the KKT ratios `a_k = h_k / t_k`
/// have geometric mean `1 / budget`; this keeps `1/budget` inside
/// `[min a, max a]`, so the linear stage has a nonnegative solution.
pub fn solve_mu(h: &[f64], nu: &[f64], budget: f64, b: f64, start: Option<f64>) -> Result<f64> {
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument("bandwidth price needs a positive power budget".into()));
    }
    let n = h.len() as f64;
    let target = -budget.ln();
    let g = |l: f64| {
        let mu = l.exp();
        let mut acc = 0.0;
        for (hk, nk) in h.iter().zip(nu) {
            let t = kkt_ratio(mu, *nk, b).unwrap_or(f64::INFINITY);
            acc += (hk / t).ln();
        }
        acc / n - target
    };
    let l0 = match start {
        Some(m) if m > 0.0 => m.ln(),
        _ => {
            let hbar = (h.iter().map(|x| x.ln()).sum::<f64>() / n).exp();
            let nubar = nu.iter().sum::<f64>() / n;
            (phi(hbar * budget) * b * (1.0 + nubar) / LN_2).max(1e-300).ln()
        }
    };
    // Keep μ ln2 / (B(1+ν)) ≤ 700 so ratios stay finite.
    let nu_max = nu.iter().copied().fold(0.0, f64::max);
    let hi_cap = (700.0 * b * (1.0 + nu_max) / LN_2).ln();
    Ok(decreasing_root(g, l0, -700.0, hi_cap)?.exp())
}

/// Minimum-norm nonnegative `P` with `Σ P = budget` and `Σ a P = 1`.
fn min_norm_row(a: &[f64], budget: f64) -> Option<Vec<f64>> {
    let k = a.len();
    if budget == 0.0 {
        return Some(vec![0.0; k]);
    }
    let target = 1.0 / budget;
    let amin = a.iter().copied().fold(f64::INFINITY, f64::min);
    let amax = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if target < amin * (1.0 - 1e-12) || target > amax * (1.0 + 1e-12) {
        return None;
    }
    if (amax - amin) <= 1e-14 * amax {
        return Some(vec![budget / k as f64; k]);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| a[x].total_cmp(&a[y]));
    // The KKT point is P_k = (α + β a_k)_+ / (1 + a_k²): its support is a
    // half-line in a, i.e. a prefix or a suffix of the sorted order.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for n in 1..=k {
        for support in [&order[..n], &order[k - n..]] {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for &i in support {
                let w = 1.0 / (1.0 + a[i] * a[i]);
                s0 += w;
                s1 += w * a[i];
                s2 += w * a[i] * a[i];
            }
            let det = s0 * s2 - s1 * s1;
            if det <= 1e-14 * s0 * s2 {
                continue;
            }
            let alpha = (budget * s2 - s1) / det;
            let beta = (s0 - budget * s1) / det;
            let mut p = vec![0.0; k];
            let mut viol: f64 = 0.0;
            for i in 0..k {
                let g = alpha + beta * a[i];
                if support.contains(&i) {
                    p[i] = g / (1.0 + a[i] * a[i]);
                    viol = viol.max(-p[i] / budget);
                } else {
                    viol = viol.max(g * (1.0 + a[i] * a[i]).recip() / budget);
                }
            }
            if best.as_ref().is_none_or(|(v, _)| viol < *v) {
                best = Some((viol, p));
            }
            if viol <= 1e-12 {
                break;
            }
        }
        if best.as_ref().is_some_and(|(v, _)| *v <= 1e-12) {
            break;
        }
    }
    let (_, mut p) = best?;
    for v in p.iter_mut() {
        *v = v.max(0.0);
    }
    Some(p)
}

/// Powers and bandwidths consistent with the ratios `s = h P / t`, the power
/// budgets and the unit bandwidth of every transmitter.
pub(crate) fn linear_stage_rows(
    t: &[Vec<f64>; TRANSMITTERS],
    h: &[Vec<f64>; TRANSMITTERS],
    budget: [f64; TRANSMITTERS],
) -> Result<([Vec<f64>; TRANSMITTERS], [Vec<f64>; TRANSMITTERS])> {
    let k = h[0].len();
    let mut p: [Vec<f64>; TRANSMITTERS] = Default::default();
    let mut s: [Vec<f64>; TRANSMITTERS] = Default::default();
    for j in 0..TRANSMITTERS {
        if budget[j] == 0.0 {
            p[j] = vec![0.0; k];
            s[j] = vec![1.0 / k as f64; k];
            continue;
        }
        let a: Vec<f64> = (0..k).map(|i| h[j][i] / t[j][i]).collect();
        if a.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("ratios and gains must be positive".into()));
        }
        let row = min_norm_row(&a, budget[j]).ok_or(Error::LinearStageInfeasible { transmitter: j })?;
        s[j] = row.iter().zip(&a).map(|(pi, ai)| pi * ai).collect();
        p[j] = row;
    }
    Ok((p, s))
}

/// Linear stage on scenario units: returns the full allocation.
pub fn linear_stage(
    t: &[Vec<f64>; TRANSMITTERS],
    h: &[Vec<f64>; TRANSMITTERS],
    pos_power: [f64; TRANSMITTERS],
    cfg: &ScenarioConfig,
) -> Result<Allocation> {
    if h[0].len() < 2 {
        return Err(Error::InvalidArgument("the linear stage needs at least two users".into()));
    }
    let budget = pos_power.map(|p| (cfg.p_max - p).max(0.0));
    let (comm_power, bandwidth) = linear_stage_rows(t, h, budget)?;
    Ok(Allocation { comm_power, pos_power, bandwidth })
}

/// Projected subgradient step on the rate multipliers,
/// `ν_k ← [ν_k + s0/√i (R_th − R_k)]_+`.
pub fn subgradient_nu(state: &DualState, rates: &RateTable, r_th: f64) -> DualState {
    let iteration = state.iteration + 1;
    let step = state.step / (iteration as f64).sqrt();
    let nu = state.nu.iter().zip(&rates.user_rates).map(|(n, r)| (n + step * (r_th - r)).max(0.0)).collect();
    DualState { nu, iteration, ..state.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPhase {
    pub state: DualState,
    /// Final KKT ratios.
    pub t: [Vec<f64>; TRANSMITTERS],
    pub alloc: Allocation,
    pub rates: RateTable,
}

pub fn run_dual_phase(prob: &BapoProblem, opts: &BapoOptions) -> Result<DualPhase> {
    let k = prob.num_users();
    let mut state = DualState::new(k, opts.step0);
    let mut last: Option<DualPhase> = None;
    for _ in 0..opts.max_dual_iters.max(1) {
        let mut t: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![1.0; k]);
        for j in 0..TRANSMITTERS {
            if prob.budget[j] == 0.0 {
                state.mu[j] = 0.0;
                continue;
            }
            let start = (state.mu[j] > 0.0).then_some(state.mu[j]);
            state.mu[j] = solve_mu(&prob.h[j], &state.nu, prob.budget[j], prob.b, start)?;
            for i in 0..k {
                t[j][i] = kkt_ratio(state.mu[j], state.nu[i], prob.b)?;
            }
        }
        let (p, s) = linear_stage_rows(&t, &prob.h, prob.budget)?;
        for j in 0..TRANSMITTERS {
            let act: Vec<usize> = (0..k).filter(|&i| p[j][i] > 0.0).collect();
            state.lambda[j] = if act.is_empty() {
                0.0
            } else {
                act.iter().map(|&i| (1.0 + state.nu[i]) * prob.b * prob.h[j][i] / ((1.0 + t[j][i]) * LN_2)).sum::<f64>()
                    / act.len() as f64
            };
        }
        let sol = prob.finish(p, s, state.clone(), f64::NAN, Default::default());
        let next = subgradient_nu(&state, &sol.rates, prob.rho * prob.b);
        let moved = next.nu.iter().zip(&state.nu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        last = Some(DualPhase { state: state.clone(), t, alloc: sol.alloc, rates: sol.rates });
        state = DualState { mu: state.mu, lambda: state.lambda, ..next };
        if moved < opts.nu_tol {
            break;
        }
    }
    let mut phase = last.expect("at least one dual iteration");
    phase.state.iteration = state.iteration;
    Ok(phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn min_norm_row_satisfies_equalities(a in prop::collection::vec(0.05f64..20.0, 2..8), frac in 0.0f64..1.0) {
            let amin = a.iter().copied().fold(f64::INFINITY, f64::min);
            let amax = a.iter().copied().fold(0.0, f64::max);
            prop_assume!(amax > amin * 1.001);
            // Budget whose reciprocal lies inside [amin, amax].
            let budget = 1.0 / (amin + frac * (amax - amin));
            let p = min_norm_row(&a, budget).unwrap();
            prop_assert!(p.iter().all(|v| *v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - budget).abs() <= 1e-10 * budget);
            prop_assert!((p.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn min_norm_row_is_minimal() {
        // Compare with a dense parametrization of the feasible segment for K = 3.
        let a = [0.5, 1.5, 4.0];
        let budget = 1.0;
        let p = min_norm_row(&a, budget).unwrap();
        let norm = |q: &[f64]| q.iter().zip(&a).map(|(x, y)| x * x * (1.0 + y * y)).sum::<f64>();
        // Σ P = 1, Σ a P = 1: P = P0 + τ d with d ⟂ both rows.
        let d = [a[1] - a[2], a[2] - a[0], a[0] - a[1]];
        let mut best = f64::INFINITY;
        for i in -200000..=200000 {
            let tau = i as f64 * 1e-5;
            let q = [p[0] + tau * d[0], p[1] + tau * d[1], p[2] + tau * d[2]];
            if q.iter().all(|v| *v >= 0.0) {
                best = best.min(norm(&q));
            }
        }
        assert!(norm(&p) <= best + 1e-12);
    }

    #[test]
    fn infeasible_row_detected() {
        assert!(min_norm_row(&[2.0, 3.0], 1.0).is_none());
        assert!(min_norm_row(&[0.1, 0.2], 1.0).is_none());
        assert_eq!(min_norm_row(&[2.0, 3.0], 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn symmetric_split() {
        let h: [Vec<f64>; 4] = std::array::from_fn(|_| vec![10.0, 10.0]);
        let t: [Vec<f64>; 4] = std::array::from_fn(|_| vec![10.0 * 0.6, 10.0 * 0.6]);
        let (p, s) = linear_stage_rows(&t, &h, [0.6; 4]).unwrap();
        for j in 0..4 {
            assert!((p[j][0] - 0.3).abs() < 1e-14 && (p[j][1] - 0.3).abs() < 1e-14);
            assert!((s[j][0] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn full_positioning_power_row() {
        let cfg = ScenarioConfig::reference();
        let h: [Vec<f64>; 4] = std::array::from_fn(|_| vec![10.0, 20.0, 30.0]);
        let t: [Vec<f64>; 4] = std::array::from_fn(|_| vec![4.0, 15.0, 60.0]);
        let alloc = linear_stage(&t, &h, [1.0, 0.5, 0.5, 0.5], &cfg.with_users(&[0, 1, 2])).unwrap();
        assert_eq!(alloc.comm_power[0], vec![0.0; 3]);
        assert!((alloc.bandwidth[0].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(alloc.constraint_violation(1.0) < 1e-10);
        for j in 1..4 {
            for k in 0..3 {
                assert!((alloc.bandwidth[j][k] - h[j][k] * alloc.comm_power[j][k] / t[j][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subgradient_rules() {
        let st = DualState::new(2, 1e-7);
        let rates = RateTable::from_links(std::array::from_fn(|_| vec![1e6, 3e5]));
        let next = subgradient_nu(&st, &rates, 2.5e6);
        assert_eq!(next.nu[0], 0.0);
        assert!(next.nu[1] > 0.0);
        assert_eq!(next.iteration, 1);
        let again = subgradient_nu(&next, &rates, 2.5e6);
        let step2 = 1e-7 / 2f64.sqrt();
        assert!((again.nu[1] - next.nu[1] - step2 * (2.5e6 - 1.2e6)).abs() < 1e-12);
    }

    #[test]
    fn mu_geometric_mean_rule() {
        let h = [30.0, 300.0, 3000.0, 50.0];
        let nu = [0.0, 0.4, 1.0, 0.0];
        let mu = solve_mu(&h, &nu, 0.7, 1e6, None).unwrap();
        let mean: f64 = h.iter().zip(&nu).map(|(hk, nk)| (hk / kkt_ratio(mu, *nk, 1e6).unwrap()).ln()).sum::<f64>() / 4.0;
        assert!((mean + 0.7f64.ln()).abs() < 1e-10);
    }
}
