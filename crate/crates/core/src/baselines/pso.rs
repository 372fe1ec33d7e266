//! Particle swarm over `(x, y, h, P̄1, P̄2, P̄3)`. A particle's fitness is the
//! BAPO sum rate at its position and powers; particles outside the cones
//! are ranked below every feasible one by their total cone violation.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bapo::solve_bapo;
use crate::error::{Error, Result};
use crate::locgeom::{accuracy_thresholds, region_for_user};
use crate::model::{Allocation, Position3, RateTable, ScenarioConfig};
use crate::solution::{Diagnostics, Method, Solution, Stopwatch};

pub const DIM: usize = 6;
pub type Particle = [f64; DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    /// Stop as soon as the best feasible fitness reaches this, bits/s.
    #[serde(default)]
    pub target: Option<f64>,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self { swarm_size: 30, iterations: 300, inertia: 0.7, cognitive: 1.5, social: 1.5, seed: 1, target: None }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, msg: &str| Err(Error::Config { path: format!("pso.{path}"), msg: msg.into() });
        if self.swarm_size < 2 {
            return err("swarm_size", "must be >= 2");
        }
        if self.iterations == 0 {
            return err("iterations", "must be >= 1");
        }
        if !(self.inertia > 0.0 && self.cognitive > 0.0 && self.social > 0.0) {
            return err("inertia", "coefficients must be > 0");
        }
        Ok(())
    }
}

/// Feasible particles compare by sum rate; infeasible ones rank below all
/// feasible ones and compare by negated violation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub feasible: bool,
    pub score: f64,
}

impl Fitness {
    pub const WORST: Fitness = Fitness { feasible: false, score: f64::NEG_INFINITY };

    fn cmp(&self, other: &Fitness) -> Ordering {
        self.feasible.cmp(&other.feasible).then(self.score.total_cmp(&other.score))
    }

    pub fn beats(&self, other: &Fitness) -> bool {
        self.cmp(other) == Ordering::Greater
    }
}

pub(crate) struct Scored {
    pub fitness: Fitness,
    pub outcome: Option<(Allocation, RateTable)>,
    /// Whether BAPO ran.
    pub solved: bool,
}

/// Search box of the particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: Particle,
    pub hi: Particle,
}

impl Bounds {
    /// Horizontal box covering stations and users, the altitude bounds and
    /// `[0, Pmax]` for each power.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        let pts = cfg.bs.iter().chain(&cfg.users);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let [h0, h1] = cfg.altitude_bounds;
        Self { lo: [x0, y0, h0, 0.0, 0.0, 0.0], hi: [x1, y1, h1, cfg.p_max, cfg.p_max, cfg.p_max] }
    }

    fn clamp(&self, x: &mut Particle, v: &mut Particle) {
        for d in 0..DIM {
            if x[d] < self.lo[d] {
                x[d] = self.lo[d];
                v[d] = 0.0;
            } else if x[d] > self.hi[d] {
                x[d] = self.hi[d];
                v[d] = 0.0;
            }
        }
    }
}

pub(crate) fn evaluate(x: &Particle, eps: &[f64], cfg: &ScenarioConfig) -> Scored {
    let u = Position3::new(x[0], x[1], x[2]);
    let p = [x[3], x[4], x[5]];
    let mut violation = 0.0;
    for (k, &e) in eps.iter().enumerate() {
        match region_for_user(k, p, e, cfg) {
            Ok(r) => violation += (-r.margin(&u)).max(0.0),
            Err(Error::InfeasibleAccuracy { eps, ub, .. }) => violation += 1.0 + (eps / ub).ln(),
            // Silent anchors and degenerate thresholds: a flat penalty.
            Err(_) => violation += 3.0,
        }
    }
    if violation > 0.0 {
        return Scored { fitness: Fitness { feasible: false, score: -violation }, outcome: None, solved: false };
    }
    match solve_bapo(&u, [p[0], p[1], p[2], cfg.uav_pos_power], cfg) {
        Ok(sol) => {
            Scored { fitness: Fitness { feasible: true, score: sol.objective }, outcome: Some((sol.alloc, sol.rates)), solved: true }
        }
        Err(_) => Scored { fitness: Fitness { feasible: false, score: 0.0 }, outcome: None, solved: true },
    }
}

/// PSO with particles seeded from `init` first and uniform draws for the
/// rest of the swarm.
pub fn pso_solve_with_init(cfg: &ScenarioConfig, pso: &PsoConfig, init: &[Particle]) -> Result<Solution> {
    let clock = Stopwatch::start();
    cfg.validate()?;
    pso.validate()?;
    let eps = accuracy_thresholds(cfg)?;
    let bounds = Bounds::for_scenario(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(pso.seed);
    let n = pso.swarm_size;

    let mut xs: Vec<Particle> = Vec::with_capacity(n);
    let mut vs: Vec<Particle> = Vec::with_capacity(n);
    for i in 0..n {
        let mut x: Particle = std::array::from_fn(|d| rng.random_range(bounds.lo[d]..=bounds.hi[d]));
        if let Some(p) = init.get(i) {
            x = *p;
        }
        let v: Particle = std::array::from_fn(|d| 0.1 * (bounds.hi[d] - bounds.lo[d]) * rng.random_range(-1.0..=1.0));
        xs.push(x);
        vs.push(v);
    }
    let vmax: Particle = std::array::from_fn(|d| 0.2 * (bounds.hi[d] - bounds.lo[d]));

    let mut pbest = xs.clone();
    let mut pfit = vec![Fitness::WORST; n];
    let mut gbest = xs[0];
    let mut gfit = Fitness::WORST;
    let mut goutcome: Option<(Allocation, RateTable)> = None;
    let mut diag = Diagnostics::default();

    for it in 0..pso.iterations {
        diag.outer_iterations = it + 1;
        let scored: Vec<Scored> = xs.par_iter().map(|x| evaluate(x, &eps, cfg)).collect();
        diag.fitness_evaluations += n;
        diag.inner_solver_calls += scored.iter().filter(|s| s.solved).count();
        for (i, s) in scored.into_iter().enumerate() {
            if s.fitness.beats(&pfit[i]) {
                pfit[i] = s.fitness;
                pbest[i] = xs[i];
            }
            if s.fitness.beats(&gfit) {
                gfit = s.fitness;
                gbest = xs[i];
                goutcome = s.outcome;
            }
        }
        if let (Some(t), true) = (pso.target, gfit.feasible) {
            if gfit.score >= t {
                break;
            }
        }
        if it + 1 == pso.iterations {
            break;
        }
        for i in 0..n {
            for d in 0..DIM {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = pso.inertia * vs[i][d]
                    + pso.cognitive * r1 * (pbest[i][d] - xs[i][d])
                    + pso.social * r2 * (gbest[d] - xs[i][d]);
                vs[i][d] = v.clamp(-vmax[d], vmax[d]);
                xs[i][d] += vs[i][d];
            }
            let (x, v) = (&mut xs[i], &mut vs[i]);
            bounds.clamp(x, v);
        }
    }

    let (alloc, rates) = goutcome.ok_or(Error::TerminalInfeasible)?;
    clock.stamp(&mut diag);
    Ok(Solution {
        method: Method::Pso,
        uav: Position3::new(gbest[0], gbest[1], gbest[2]),
        objective: rates.sum_rate,
        alloc,
        rates,
        diagnostics: diag,
    })
}

pub fn pso_solve(cfg: &ScenarioConfig, pso: &PsoConfig) -> Result<Solution> {
    pso_solve_with_init(cfg, pso, &[])
}
