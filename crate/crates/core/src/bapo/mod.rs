//! Bandwidth and communication-power allocation for a fixed UAV position and
//! fixed positioning powers.
//!
//! Internally rates are measured in units of the communication bandwidth
//! (bits/s/Hz) so that the link rate is `s log2(1 + h P / s)`. The solver
//! chain is: bandwidth prices and KKT ratios, the linear stage, subgradient
//! updates of the rate multipliers, then an exact linear program over
//! bandwidth-to-power ratios (column generation) that certifies optimality
//! through its duality gap. A projected-ascent solver over `(P, S)` serves as
//! reference and fallback.

mod bandwidth;
mod dual;
mod lambert;
mod lp;
mod reference;
pub mod simplex;

pub use bandwidth::solve_bandwidth_only;
pub use dual::{linear_stage, run_dual_phase, solve_mu, subgradient_nu, DualPhase};
pub use lambert::{kkt_ratio, lambert_w0};
pub use lp::{dual_bound, fixed_ratio_lp, lp_refine, FixedRatioLp};
pub use reference::{reference_solve, ReferenceOptions};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{link_rate_from_gain, LinkGains};
use crate::model::{Allocation, Position3, RateTable, ScenarioConfig, TRANSMITTERS};

/// Multipliers of the partial Lagrangian: `nu` (per-user rate), `mu`
/// (per-transmitter bandwidth, bits/s) and `lambda` (per-transmitter power,
/// bits/s per watt).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub nu: Vec<f64>,
    pub mu: [f64; TRANSMITTERS],
    pub lambda: [f64; TRANSMITTERS],
    /// Base subgradient step `s0`; iteration `i` uses `s0 / sqrt(i)`.
    pub step: f64,
    pub iteration: usize,
}

impl DualState {
    pub fn new(k: usize, step: f64) -> Self {
        Self { nu: vec![0.0; k], mu: [0.0; TRANSMITTERS], lambda: [0.0; TRANSMITTERS], step, iteration: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BapoStats {
    pub dual_iterations: usize,
    pub lp_rounds: usize,
    pub lp_columns: usize,
    pub reference_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BapoSolution {
    pub alloc: Allocation,
    pub rates: RateTable,
    /// Sum rate, bits/s.
    pub objective: f64,
    pub nu_final: Vec<f64>,
    /// Relative duality gap of the returned allocation.
    pub kkt_residual: f64,
    pub duals: DualState,
    pub stats: BapoStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BapoOptions {
    pub step0: f64,
    pub max_dual_iters: usize,
    pub nu_tol: f64,
    pub max_lp_rounds: usize,
    /// Stop column generation once the certified gap falls below this
    /// fraction of the objective.
    pub gap_tol: f64,
}

impl Default for BapoOptions {
    fn default() -> Self {
        Self { step0: 1e-7, max_dual_iters: 500, nu_tol: 1e-4, max_lp_rounds: 100, gap_tol: 1e-9 }
    }
}

/// One BAPO instance in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct BapoProblem {
    /// Full-band SNR per watt.
    pub h: [Vec<f64>; TRANSMITTERS],
    /// Communication power budget `Pmax − P̄_j`.
    pub budget: [f64; TRANSMITTERS],
    pub pos_power: [f64; TRANSMITTERS],
    /// Rate floor `R_th / B`.
    pub rho: f64,
    /// `B`, Hz.
    pub b: f64,
}

impl BapoProblem {
    pub fn new(gains: &LinkGains, pos_power: [f64; TRANSMITTERS], cfg: &ScenarioConfig) -> Result<Self> {
        let mut budget = [0.0; TRANSMITTERS];
        for j in 0..TRANSMITTERS {
            let p = pos_power[j];
            if !(p >= 0.0) || p > cfg.p_max * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!("positioning power {p} outside [0, Pmax]")));
            }
            budget[j] = (cfg.p_max - p).max(0.0);
        }
        if gains.h.iter().flatten().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidArgument("channel gains must be positive".into()));
        }
        Ok(Self { h: gains.h.clone(), budget, pos_power, rho: cfg.r_th / gains.bandwidth_hz, b: gains.bandwidth_hz })
    }

    pub fn num_users(&self) -> usize {
        self.h[0].len()
    }

    /// Normalized rates per user for powers `p` and fractions `s`.
    pub fn user_rates_norm(&self, p: &[Vec<f64>; TRANSMITTERS], s: &[Vec<f64>; TRANSMITTERS]) -> Vec<f64> {
        (0..self.num_users())
            .map(|k| (0..TRANSMITTERS).map(|j| link_rate_from_gain(s[j][k], p[j][k], self.h[j][k], 1.0)).sum())
            .collect()
    }

    pub(crate) fn finish(
        &self,
        p: [Vec<f64>; TRANSMITTERS],
        s: [Vec<f64>; TRANSMITTERS],
        duals: DualState,
        kkt_residual: f64,
        stats: BapoStats,
    ) -> BapoSolution {
        let alloc = Allocation { comm_power: p, pos_power: self.pos_power, bandwidth: s };
        let link_rates = std::array::from_fn(|j| {
            (0..self.num_users())
                .map(|k| link_rate_from_gain(alloc.bandwidth[j][k], alloc.comm_power[j][k], self.h[j][k], self.b))
                .collect()
        });
        let rates = RateTable::from_links(link_rates);
        BapoSolution { objective: rates.sum_rate, rates, alloc, nu_final: duals.nu.clone(), kkt_residual, duals, stats }
    }
}

/// Optimal bandwidth and communication power at UAV position `u`.
pub fn solve_bapo(u: &Position3, pos_power: [f64; TRANSMITTERS], cfg: &ScenarioConfig) -> Result<BapoSolution> {
    let gains = LinkGains::new(u, cfg)?;
    solve_bapo_with_gains(&gains, pos_power, cfg, &BapoOptions::default())
}

pub fn solve_bapo_with_gains(
    gains: &LinkGains,
    pos_power: [f64; TRANSMITTERS],
    cfg: &ScenarioConfig,
    opts: &BapoOptions,
) -> Result<BapoSolution> {
    let prob = BapoProblem::new(gains, pos_power, cfg)?;
    solve_problem(&prob, opts)
}

pub fn solve_problem(prob: &BapoProblem, opts: &BapoOptions) -> Result<BapoSolution> {
    let phase = run_dual_phase(prob, opts)?;
    match lp_refine(prob, &phase.state.nu, &phase.t, opts) {
        Ok(mut sol) => {
            sol.stats.dual_iterations = phase.state.iteration;
            Ok(sol)
        }
        Err(Error::RateUnattainable) => Err(Error::RateUnattainable),
        Err(_) => {
            let mut sol = reference_solve(prob, None, &ReferenceOptions::default())?;
            sol.stats.reference_fallback = true;
            sol.stats.dual_iterations = phase.state.iteration;
            Ok(sol)
        }
    }
}
