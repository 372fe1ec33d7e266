//! Benchmarks: particle swarm, equal power allocation, UAV at the user
//! centroid, and the CRLB fourth-anchor grid study.

mod crlb_grid;
mod pso;

pub use crlb_grid::{crlb_errors, crlb_grid_study, AnchorScheme, CrlbCell, CrlbMap, GridStudyConfig};
pub use pso::{pso_solve, pso_solve_with_init, Bounds, Fitness, Particle, PsoConfig};

use crate::bapo::{solve_bandwidth_only, BapoProblem};
use crate::error::{Error, Result};
use crate::gibbs::{run_with_mode, GibbsConfig, UavMode};
use crate::locgeom::{accuracy_thresholds, regions_for};
use crate::model::{evaluate_rates, Allocation, LinkGains, Position3, ScenarioConfig, TRANSMITTERS};
use crate::placement::{find_feasible_u, solve_udo};
use crate::solution::{Diagnostics, Method, Solution, Stopwatch};

/// Alternation rounds of the EPA inner loop.
const EPA_ROUNDS: usize = 50;

/// Equal power allocation: half of `Pmax` to positioning on every
/// transmitter, the rest split evenly over the users; bandwidth and UAV
/// position optimized by alternation.
pub fn epa_solve(cfg: &ScenarioConfig) -> Result<Solution> {
    let clock = Stopwatch::start();
    cfg.validate()?;
    let k = cfg.num_users();
    let half = 0.5 * cfg.p_max;
    let pos = [half; TRANSMITTERS];
    let power: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| vec![half / k as f64; k]);
    let eps = accuracy_thresholds(cfg)?;
    let regions = regions_for([half; 3], &eps, cfg)?;
    let u0 = find_feasible_u(&regions, cfg.altitude_bounds)?;
    // Place the UAV for an even bandwidth split before the first solve.
    let even = Allocation { comm_power: power.clone(), pos_power: pos, bandwidth: std::array::from_fn(|_| vec![1.0 / k as f64; k]) };
    let mut u = solve_udo(&u0, &even, &regions, cfg)?.u;
    let mut diag = Diagnostics { inner_solver_calls: 1, ..Default::default() };
    let mut best = None;
    let mut prev = f64::NEG_INFINITY;
    for round in 0..EPA_ROUNDS {
        diag.outer_iterations = round + 1;
        let prob = BapoProblem::new(&LinkGains::new(&u, cfg)?, pos, cfg)?;
        let sol = solve_bandwidth_only(&prob, &power)?;
        let st = solve_udo(&u, &sol.alloc, &regions, cfg)?;
        diag.inner_solver_calls += 2;
        let rates = evaluate_rates(&st.u, &sol.alloc, cfg)?;
        let gain = rates.sum_rate - prev;
        prev = rates.sum_rate;
        u = st.u;
        best = Some((st.u, sol.alloc, rates));
        if gain < 10.0 {
            break;
        }
    }
    let (uav, alloc, rates) = best.ok_or(Error::TerminalInfeasible)?;
    clock.stamp(&mut diag);
    Ok(Solution { method: Method::Epa, uav, objective: rates.sum_rate, alloc, rates, diagnostics: diag })
}

/// Horizontal centroid of the users at 500 m.
pub fn ucd_position(cfg: &ScenarioConfig) -> Position3 {
    let k = cfg.num_users() as f64;
    let x = cfg.users.iter().map(|w| w.x).sum::<f64>() / k;
    let y = cfg.users.iter().map(|w| w.y).sum::<f64>() / k;
    Position3::new(x, y, 500.0)
}

/// UAV frozen at [`ucd_position`]; positioning powers by Gibbs search and
/// BAPO as in the proposed method.
pub fn ucd_solve(cfg: &ScenarioConfig, gibbs: &GibbsConfig) -> Result<Solution> {
    run_with_mode(cfg, gibbs, UavMode::Fixed(ucd_position(cfg)), Method::Ucd)
}
