//! Annealed Gibbs search over the discretized positioning powers of the
//! three ground stations. Each candidate `P̂` is scored by `J(P̂)`, the sum
//! rate reached by alternating BAPO and the placement update; infeasible
//! candidates score `−∞`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bapo::solve_bapo;
use crate::error::{Error, Result};
use crate::locgeom::{accuracy_thresholds, cone_contains, regions_for, FeasibleRegion};
use crate::model::{Allocation, Position3, RateTable, ScenarioConfig};
use crate::placement::{find_feasible_u, is_feasible, solve_udo};
use crate::solution::{Diagnostics, Method, Solution, Stopwatch, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Grid step of the positioning powers, W.
    pub delta_p: f64,
    pub t0: f64,
    pub alpha: f64,
    pub max_outer: usize,
    /// Alternation stops when one round gains less than this, bits/s.
    pub inner_tol: f64,
    pub seed: u64,
    /// Stop after this many outer iterations without a new best.
    pub patience: usize,
}

impl GibbsConfig {
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        Self { delta_p: cfg.p_max / 20.0, t0: 0.95, alpha: 0.95, max_outer: 60, inner_tol: 10.0, seed: cfg.seed, patience: 5 }
    }

    pub fn validate(&self, p_max: f64) -> Result<()> {
        let err = |path: &str, msg: &str| Err(Error::Config { path: format!("gibbs.{path}"), msg: msg.into() });
        if !(self.delta_p > 0.0 && self.delta_p <= p_max * (1.0 + 1e-12)) {
            return err("delta_p", "must lie in (0, p_max]");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err("alpha", "must lie in (0, 1)");
        }
        if !(self.t0 > 0.0) {
            return err("t0", "must be > 0");
        }
        if self.max_outer == 0 {
            return err("max_outer", "must be >= 1");
        }
        Ok(())
    }
}

/// The power grid `{0, ΔP, …, n ΔP}`, `n ΔP ≤ Pmax`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerGrid {
    pub delta_p: f64,
    pub top: usize,
}

impl PowerGrid {
    pub fn new(delta_p: f64, p_max: f64) -> Self {
        Self { delta_p, top: (p_max / delta_p + 1e-9).floor() as usize }
    }

    pub fn power(&self, idx: [usize; 3]) -> [f64; 3] {
        idx.map(|i| i as f64 * self.delta_p)
    }

    /// Nearest grid index of each component.
    pub fn index(&self, p: [f64; 3]) -> [usize; 3] {
        p.map(|v| ((v / self.delta_p).round().max(0.0) as usize).min(self.top))
    }
}

/// UAV position, allocation and rates behind a candidate's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub uav: Position3,
    pub alloc: Allocation,
    pub rates: RateTable,
    /// Objective after every alternation round.
    pub bcd_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: [usize; 3],
    pub pos_power_bs: [f64; 3],
    /// `J(P̂)`, bits/s, `−∞` when infeasible.
    pub value: f64,
    pub solution: Option<CandidateSolution>,
    /// BAPO plus placement solves spent on this candidate.
    pub inner_calls: usize,
}

impl Candidate {
    pub fn new(index: [usize; 3], grid: &PowerGrid) -> Self {
        Self { index, pos_power_bs: grid.power(index), value: f64::NEG_INFINITY, solution: None, inner_calls: 0 }
    }

    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }
}

/// `p_hat` and its neighbours differing by one grid step in one component,
/// the origin first. Off-grid neighbours are dropped.
pub fn candidate_set(p_hat: [usize; 3], grid: &PowerGrid) -> Vec<Candidate> {
    let mut out = vec![Candidate::new(p_hat, grid)];
    for c in 0..3 {
        if p_hat[c] < grid.top {
            let mut up = p_hat;
            up[c] += 1;
            out.push(Candidate::new(up, grid));
        }
        if p_hat[c] > 0 {
            let mut down = p_hat;
            down[c] -= 1;
            out.push(Candidate::new(down, grid));
        }
    }
    out
}

/// Raises every component by one step, clipped at the top of the grid.
/// `None` when already at the top everywhere.
pub fn escalate(p_hat: [usize; 3], grid: &PowerGrid) -> Option<[usize; 3]> {
    if p_hat.iter().all(|&i| i >= grid.top) {
        return None;
    }
    Some(p_hat.map(|i| (i + 1).min(grid.top)))
}

/// How the UAV position is chosen inside a candidate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UavMode {
    /// Alternate BAPO with the placement update.
    Optimize,
    /// Keep the UAV at this position (checked against the cones).
    Fixed(Position3),
}

/// Everything a candidate evaluation needs besides the candidate.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub cfg: &'a ScenarioConfig,
    pub eps: Vec<f64>,
    pub inner_tol: f64,
    pub mode: UavMode,
    pub max_rounds: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(cfg: &'a ScenarioConfig, inner_tol: f64, mode: UavMode) -> Result<Self> {
        Ok(Self { cfg, eps: accuracy_thresholds(cfg)?, inner_tol, mode, max_rounds: 50 })
    }

    fn regions(&self, p: [f64; 3]) -> Option<Vec<FeasibleRegion>> {
        regions_for(p, &self.eps, self.cfg).ok()
    }
}

/// Scores `cand` by alternating BAPO and the placement update until a round
/// gains less than `inner_tol`. `warm` replaces the cold-start position when
/// it lies inside every cone.
pub fn evaluate_candidate(cand: &Candidate, warm: Option<&Position3>, ev: &Evaluator) -> Candidate {
    let mut out = cand.clone();
    out.value = f64::NEG_INFINITY;
    out.solution = None;
    let cfg = ev.cfg;
    let Some(regions) = ev.regions(cand.pos_power_bs) else { return out };
    let p = cand.pos_power_bs;
    let pos = [p[0], p[1], p[2], cfg.uav_pos_power];
    let alt = cfg.altitude_bounds;

    let mut u = match ev.mode {
        UavMode::Fixed(u) => {
            if !regions.iter().all(|r| cone_contains(r, &u).unwrap_or(false)) {
                return out;
            }
            u
        }
        UavMode::Optimize => match warm.filter(|w| is_feasible(&regions, alt, w)) {
            Some(w) => *w,
            None => match find_feasible_u(&regions, alt) {
                Ok(u) => u,
                Err(_) => return out,
            },
        },
    };

    let mut trace = Vec::new();
    let mut best: Option<(Position3, Allocation, RateTable)> = None;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..ev.max_rounds {
        out.inner_calls += 1;
        let Ok(sol) = solve_bapo(&u, pos, cfg) else { break };
        let (next_u, value) = match ev.mode {
            UavMode::Fixed(_) => (u, sol.objective),
            UavMode::Optimize => {
                out.inner_calls += 1;
                match solve_udo(&u, &sol.alloc, &regions, cfg) {
                    Ok(st) => (st.u, st.objective),
                    Err(_) => break,
                }
            }
        };
        let rates = match crate::model::evaluate_rates(&next_u, &sol.alloc, cfg) {
            Ok(r) => r,
            Err(_) => break,
        };
        trace.push(value);
        best = Some((next_u, sol.alloc, rates));
        u = next_u;
        if value - prev < ev.inner_tol || matches!(ev.mode, UavMode::Fixed(_)) {
            break;
        }
        prev = value;
    }
    if let Some((uav, alloc, rates)) = best {
        out.value = rates.sum_rate;
        out.solution = Some(CandidateSolution { uav, alloc, rates, bcd_trace: trace });
    }
    out
}

/// Softmax of `values / temperature` with `−∞` mapped to probability 0.
pub fn softmax_probabilities(values: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let top = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::AllCandidatesInfeasible);
    }
    let w: Vec<f64> =
        values.iter().map(|&v| if v.is_finite() { ((v - top) / temperature).exp() } else { 0.0 }).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Transfer probabilities: the finite values are standardized to zero mean
/// and unit deviation before the softmax so that the temperature is
/// independent of the rate scale.
pub fn transfer_probabilities(values: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::AllCandidatesInfeasible);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let sd = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let z: Vec<f64> = values.iter().map(|&v| if v.is_finite() { (v - mean) / scale } else { v }).collect();
    softmax_probabilities(&z, temperature)
}

/// Draws a candidate index from [`transfer_probabilities`].
pub fn transfer_sample(cands: &[Candidate], temperature: f64, rng: &mut impl Rng) -> Result<usize> {
    let values: Vec<f64> = cands.iter().map(|c| c.value).collect();
    let probs = transfer_probabilities(&values, temperature)?;
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last = i;
            acc += p;
            if r < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Starting point `(2ΔP, 2ΔP, 2ΔP)`, clipped to the grid.
pub fn initial_p_hat(grid: &PowerGrid) -> [usize; 3] {
    [2usize.min(grid.top); 3]
}

/// Temperature after `n` outer iterations.
pub fn temperature(t0: f64, alpha: f64, n: usize) -> f64 {
    t0 * alpha.powi(n as i32)
}

/// Gibbs search with a chosen UAV mode; shared by the proposed method and
/// the fixed-position baseline.
pub fn run_with_mode(cfg: &ScenarioConfig, gibbs: &GibbsConfig, mode: UavMode, method: Method) -> Result<Solution> {
    let clock = Stopwatch::start();
    cfg.validate()?;
    gibbs.validate(cfg.p_max)?;
    let ev = Evaluator::new(cfg, gibbs.inner_tol, mode)?;
    let grid = PowerGrid::new(gibbs.delta_p, cfg.p_max);
    let mut rng = ChaCha8Rng::seed_from_u64(gibbs.seed);
    let mut p_hat = initial_p_hat(&grid);
    let mut t = gibbs.t0;
    let mut cache: BTreeMap<[usize; 3], Candidate> = BTreeMap::new();
    let mut best: Option<Candidate> = None;
    let mut diag = Diagnostics::default();
    let mut stall = 0;

    for it in 0..gibbs.max_outer {
        diag.outer_iterations = it + 1;
        let mut cands = candidate_set(p_hat, &grid);
        diag.candidate_evaluations += cands.len();
        let fresh: Vec<Candidate> = cands
            .par_iter()
            .filter(|c| !cache.contains_key(&c.index))
            .map(|c| evaluate_candidate(c, None, &ev))
            .collect();
        for c in fresh {
            diag.inner_solver_calls += c.inner_calls;
            cache.insert(c.index, c);
        }
        for c in cands.iter_mut() {
            *c = cache[&c.index].clone();
        }

        let mut improved = false;
        for c in cands.iter().filter(|c| c.is_feasible()) {
            if best.as_ref().is_none_or(|b| c.value > b.value) {
                best = Some(c.clone());
                improved = true;
            }
        }

        let chosen = match transfer_sample(&cands, t, &mut rng) {
            Ok(i) => cands[i].index,
            Err(_) => match escalate(p_hat, &grid) {
                Some(next) => next,
                None if best.is_some() => break,
                None => return Err(Error::TerminalInfeasible),
            },
        };
        p_hat = chosen;
        diag.trace.push(TraceRow {
            iteration: it,
            temperature: t,
            best_objective: best.as_ref().map(|b| b.value),
            chosen: grid.power(chosen),
        });
        t *= gibbs.alpha;
        if best.is_some() {
            stall = if improved { 0 } else { stall + 1 };
            if stall >= gibbs.patience {
                break;
            }
        }
    }

    let best = best.ok_or(Error::TerminalInfeasible)?;
    let sol = best.solution.expect("feasible candidates carry a solution");
    clock.stamp(&mut diag);
    Ok(Solution { method, uav: sol.uav, alloc: sol.alloc, rates: sol.rates, objective: best.value, diagnostics: diag })
}

/// The proposed method: Gibbs search over `P̂` with the alternating inner
/// loop.
pub fn run(cfg: &ScenarioConfig, gibbs: &GibbsConfig) -> Result<Solution> {
    run_with_mode(cfg, gibbs, UavMode::Optimize, Method::Proposed)
}
