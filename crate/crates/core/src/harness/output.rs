//! Result files and the post-hoc solution check.
//!
//! CSV schemas (header always written):
//!
//! - `runs.csv`: `label, method, rep, seed, p_max, zeta, users, status,
//!   objective, uav_x, uav_y, uav_h, pbar_1, pbar_2, pbar_3, pbar_u,
//!   min_rate, outer_iterations, inner_solver_calls, candidate_evaluations,
//!   fitness_evaluations, solution_file, message`
//! - `timing.csv`: `label, method, rep, wall_time_s, cpu_time_s`
//! - `trace/<label>.csv`: `iteration, temperature, best_objective,
//!   chosen_1, chosen_2, chosen_3`
//! - `crlb_<scheme>_<axis>.csv`: `x, y, err_m, best_anchor_x, best_anchor_y`
//! - `region.csv`: `pos_power, altitude, user, status, point, x, y`
//! - `region_area.csv`: `pos_power, altitude, pitch_m, feasible_cells,
//!   area_m2`
//!
//! Timing lives only in `timing.csv`, so every other file is reproducible
//! byte for byte.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::RunRecord;
use crate::baselines::CrlbMap;
use crate::error::{Error, Result};
use crate::locgeom::{accuracy_thresholds, cone_contains, regions_for};
use crate::model::{evaluate_rates, ScenarioConfig, UAV};
use crate::solution::{Method, Solution};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RUNS_HEADER: [&str; 23] = [
    "label",
    "method",
    "rep",
    "seed",
    "p_max",
    "zeta",
    "users",
    "status",
    "objective",
    "uav_x",
    "uav_y",
    "uav_h",
    "pbar_1",
    "pbar_2",
    "pbar_3",
    "pbar_u",
    "min_rate",
    "outer_iterations",
    "inner_solver_calls",
    "candidate_evaluations",
    "fitness_evaluations",
    "solution_file",
    "message",
];

pub(crate) fn write_runs(dir: &Path, records: &[RunRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let uav = r.uav.map(|u| [u.x, u.y, u.h]);
        let p = r.pos_power;
        vec![
            r.label.clone(),
            r.method.clone(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.p_max.to_string(),
            r.zeta.to_string(),
            r.users.to_string(),
            r.status.name().to_string(),
            opt(r.objective),
            opt(uav.map(|u| u[0])),
            opt(uav.map(|u| u[1])),
            opt(uav.map(|u| u[2])),
            opt(p.map(|p| p[0])),
            opt(p.map(|p| p[1])),
            opt(p.map(|p| p[2])),
            opt(p.map(|p| p[UAV])),
            opt(r.min_rate),
            r.outer_iterations.to_string(),
            r.inner_solver_calls.to_string(),
            r.candidate_evaluations.to_string(),
            r.fitness_evaluations.to_string(),
            r.solution_file.clone().unwrap_or_default(),
            r.message.clone().unwrap_or_default(),
        ]
    });
    write_csv(&dir.join("runs.csv"), &RUNS_HEADER, rows)?;
    let timing = records.iter().map(|r| (r.label.clone(), r.method.clone(), r.rep, r.wall_time_s, r.cpu_time_s));
    write_csv(&dir.join("timing.csv"), &["label", "method", "rep", "wall_time_s", "cpu_time_s"], timing)
}

pub(crate) fn write_trace(path: &Path, sol: &Solution) -> Result<()> {
    let rows = sol.diagnostics.trace.iter().map(|t| (t.iteration, t.temperature, t.best_objective, t.chosen[0], t.chosen[1], t.chosen[2]));
    write_csv(path, &["iteration", "temperature", "best_objective", "chosen_1", "chosen_2", "chosen_3"], rows)
}

/// Two maps per scheme: horizontal and vertical error.
pub(crate) fn write_crlb_map(dir: &Path, map: &CrlbMap) -> Result<()> {
    for (axis, pick) in [("horizontal", 0usize), ("vertical", 1)] {
        let rows = map.cells.iter().map(|c| {
            let err = if pick == 0 { c.horizontal } else { c.vertical };
            (c.x, c.y, err, c.best_anchor[0], c.best_anchor[1])
        });
        let path = dir.join(format!("crlb_{}_{axis}.csv", map.scheme.name()));
        write_csv(&path, &["x", "y", "err_m", "best_anchor_x", "best_anchor_y"], rows)?;
    }
    Ok(())
}

/// Re-checks every constraint of the joint problem on `sol`: power and
/// bandwidth budgets, the fixed UAV positioning power, altitude bounds, the
/// rate floor, the reported rates and every user's accuracy cone.
pub fn validate_solution(sol: &Solution, cfg: &ScenarioConfig) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidSolution(m));
    if sol.alloc.num_users() != cfg.num_users() || sol.rates.user_rates.len() != cfg.num_users() {
        return bad("user count mismatch".into());
    }
    let v = sol.alloc.constraint_violation(cfg.p_max);
    if !(v <= 1e-8) {
        return bad(format!("budget violation {v:e}"));
    }
    // Equal power allocation fixes the UAV at half the budget as well.
    let uav_power = if sol.method == Method::Epa { 0.5 * cfg.p_max } else { cfg.uav_pos_power };
    if (sol.alloc.pos_power[UAV] - uav_power).abs() > 1e-12 {
        return bad("UAV positioning power differs from the method's fixed value".into());
    }
    let [lo, hi] = cfg.altitude_bounds;
    if !(sol.uav.h >= lo * (1.0 - 1e-12) && sol.uav.h <= hi * (1.0 + 1e-12)) {
        return bad(format!("altitude {} outside [{lo}, {hi}]", sol.uav.h));
    }
    let rates = evaluate_rates(&sol.uav, &sol.alloc, cfg)?;
    let scale = rates.sum_rate.abs().max(1.0);
    if (rates.sum_rate - sol.objective).abs() > 1e-9 * scale || (rates.sum_rate - sol.rates.sum_rate).abs() > 1e-9 * scale {
        return bad(format!("reported sum rate {} differs from recomputed {}", sol.objective, rates.sum_rate));
    }
    let min = rates.min_user_rate();
    if min < cfg.r_th * (1.0 - 1e-6) {
        return bad(format!("user rate {min} below floor {}", cfg.r_th));
    }
    let eps = accuracy_thresholds(cfg)?;
    let p = sol.alloc.pos_power;
    let regions = regions_for([p[0], p[1], p[2]], &eps, cfg).map_err(|e| Error::InvalidSolution(format!("accuracy region: {e}")))?;
    for (k, r) in regions.iter().enumerate() {
        if !cone_contains(r, &sol.uav)? {
            return bad(format!("UAV outside the accuracy cone of user {k}"));
        }
    }
    Ok(())
}

/// Writes `sol` and checks that the file reads back into a valid solution.
pub fn persist_solution(path: &Path, sol: &Solution, cfg: &ScenarioConfig) -> Result<()> {
    write_json(path, sol)?;
    let back: Solution = serde_json::from_str(&fs::read_to_string(path)?)?;
    validate_solution(&back, cfg)
}
