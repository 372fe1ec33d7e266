//! UAV position update for frozen allocations.
//!
//! With `e_k = ‖u − w_k‖²`, the UAV link rate `A ln(1 + q e^{-ι/2})` is
//! convex and decreasing in `e_k`, so its tangent in `e_k` is a global
//! lower bound. Summed over users the surrogate is `const − Σ_k c_k e_k`,
//! a concave quadratic in `u` whose maximizer over a convex set is the
//! projection of the `c`-weighted centroid of the users. The cones and the
//! altitude slab enter exactly; the rate floors enter through the same
//! tangent, which turns each into a ball around its user.

mod project;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locgeom::FeasibleRegion;
use crate::model::{channel_gain, Allocation, LinkGains, LinkKind, Position3, ScenarioConfig, TRANSMITTERS, UAV};
use project::{contains_all, dykstra, pull_inside, ConvexSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementState {
    pub u: Position3,
    /// Sum rate at `u`, bits/s.
    pub objective: f64,
    pub iterate: usize,
    pub trust_radius: f64,
    /// Set once the trust region collapsed or the surrogate is stationary.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementOptions {
    pub trust0: f64,
    pub min_trust: f64,
    pub grow: f64,
    pub shrink: f64,
    pub max_steps: usize,
    /// Stop when one step gains less than this, bits/s.
    pub improve_tol: f64,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self { trust0: 100.0, min_trust: 1e-3, grow: 1.5, shrink: 0.5, max_steps: 100, improve_tol: 1e-3 }
    }
}

const MAX_TRUST: f64 = 1e4;
const DYKSTRA_SWEEPS: usize = 4000;
const RESTORE_STEPS: usize = 50;

/// Per-user rates as a function of the UAV position, allocation frozen.
#[derive(Debug, Clone)]
pub struct RateModel {
    users: Vec<Vector3<f64>>,
    /// Rate delivered by the ground stations, bits/s.
    ground: Vec<f64>,
    /// `s B / ln 2` of each UAV link.
    amp: Vec<f64>,
    /// SNR of each UAV link at unit distance.
    q: Vec<f64>,
    /// Half the air-to-ground pathloss exponent.
    m: f64,
    r_th: f64,
}

impl RateModel {
    pub fn new(alloc: &Allocation, cfg: &ScenarioConfig) -> Result<Self> {
        if alloc.num_users() != cfg.num_users() {
            return Err(Error::InvalidArgument("allocation and scenario disagree on user count".into()));
        }
        let ch = &cfg.channel;
        let (fg, fa) = ch.fading_factors()?;
        // Ground gains do not depend on the UAV; any position away from the
        // users serves to build them.
        let probe = Position3::new(0.0, 0.0, 1e6);
        let gains = LinkGains::with_factors(&probe, cfg, fg, fa)?;
        let g_unit = channel_gain(1.0, LinkKind::A2G, fa, ch)?;
        let k = cfg.num_users();
        let mut ground = vec![0.0; k];
        for (j, row) in gains.h.iter().enumerate().take(TRANSMITTERS - 1) {
            for (i, g) in ground.iter_mut().enumerate() {
                *g += crate::model::link_rate_from_gain(alloc.bandwidth[j][i], alloc.comm_power[j][i], row[i], ch.b_comm);
            }
        }
        let mut amp = vec![0.0; k];
        let mut q = vec![0.0; k];
        for i in 0..k {
            let (s, p) = (alloc.bandwidth[UAV][i], alloc.comm_power[UAV][i]);
            if s > 0.0 && p > 0.0 {
                amp[i] = s * ch.b_comm / std::f64::consts::LN_2;
                q[i] = g_unit * p / s;
            }
        }
        Ok(Self {
            users: cfg.users.iter().map(|w| w.to_vector()).collect(),
            ground,
            amp,
            q,
            m: 0.5 * ch.iota_a,
            r_th: cfg.r_th,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    fn sq_dist(&self, k: usize, u: &Vector3<f64>) -> f64 {
        (u - self.users[k]).norm_squared()
    }

    fn uav_rate(&self, k: usize, e: f64) -> f64 {
        if self.amp[k] == 0.0 {
            return 0.0;
        }
        self.amp[k] * (self.q[k] * e.powf(-self.m)).ln_1p()
    }

    /// `dR/de`, never positive.
    fn uav_slope(&self, k: usize, e: f64) -> f64 {
        if self.amp[k] == 0.0 {
            return 0.0;
        }
        -self.amp[k] * self.m * self.q[k] / (e.powf(self.m + 1.0) + self.q[k] * e)
    }

    pub fn user_rates(&self, u: &Vector3<f64>) -> Vec<f64> {
        (0..self.num_users()).map(|k| self.ground[k] + self.uav_rate(k, self.sq_dist(k, u))).collect()
    }

    pub fn sum_rate(&self, u: &Vector3<f64>) -> f64 {
        self.user_rates(u).iter().sum()
    }

    /// Gradient of the sum rate with respect to `u`.
    pub fn gradient(&self, u: &Vector3<f64>) -> Vector3<f64> {
        (0..self.num_users())
            .map(|k| (u - self.users[k]) * (2.0 * self.uav_slope(k, self.sq_dist(k, u))))
            .sum()
    }

    /// Worst shortfall below the rate floor, bits/s (0 when all floors hold
    /// up to a relative `1e-9`).
    pub fn rate_shortfall(&self, u: &Vector3<f64>) -> f64 {
        let worst = self.user_rates(u).iter().map(|r| self.r_th - r).fold(0.0, f64::max);
        if worst <= 1e-9 * self.r_th {
            0.0
        } else {
            worst
        }
    }
}

fn base_sets<'a>(regions: &'a [FeasibleRegion], alt: [f64; 2]) -> Vec<ConvexSet<'a>> {
    let mut sets: Vec<ConvexSet> = regions.iter().map(ConvexSet::Cone).collect();
    sets.push(ConvexSet::Slab { lo: alt[0], hi: alt[1] });
    sets
}

/// Smallest normalized cone margin at `u`.
pub fn min_margin(regions: &[FeasibleRegion], u: &Position3) -> f64 {
    regions.iter().map(|r| r.margin(u)).fold(f64::INFINITY, f64::min)
}

/// Whether `u` satisfies every cone and the altitude bounds, without
/// tolerance.
pub fn is_feasible(regions: &[FeasibleRegion], alt: [f64; 2], u: &Position3) -> bool {
    contains_all(&base_sets(regions, alt), &u.to_vector())
}

/// A point strictly inside every cone within the altitude bounds, found by
/// maximizing the smallest cone margin over a coarse grid and polishing by
/// coordinate ascent.
pub fn find_feasible_u(regions: &[FeasibleRegion], alt: [f64; 2]) -> Result<Position3> {
    if regions.is_empty() {
        return Err(Error::InvalidArgument("no regions".into()));
    }
    let [lo, hi] = alt;
    let mid = 0.5 * (lo + hi);
    if regions.len() == 1 {
        // The margin is maximal along the whole axis.
        let r = &regions[0];
        let a = r.axis();
        if a.z > 0.0 {
            let w = r.user.to_vector();
            let p = Position3::from_vector(&(w + a * ((mid - w.z) / a.z)));
            if r.margin(&p) > 0.0 {
                return Ok(p);
            }
        }
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in regions {
        x0 = x0.min(r.user.x);
        x1 = x1.max(r.user.x);
        y0 = y0.min(r.user.y);
        y1 = y1.max(r.user.y);
    }
    let (x0, x1, y0, y1) = (x0 - hi, x1 + hi, y0 - hi, y1 + hi);
    const NXY: usize = 31;
    const NH: usize = 9;
    let mut best = (f64::NEG_INFINITY, Position3::new(0.0, 0.0, mid));
    for ih in 0..NH {
        let h = lo + (hi - lo) * ih as f64 / (NH - 1) as f64;
        for ix in 0..NXY {
            let x = x0 + (x1 - x0) * ix as f64 / (NXY - 1) as f64;
            for iy in 0..NXY {
                let y = y0 + (y1 - y0) * iy as f64 / (NXY - 1) as f64;
                let p = Position3::new(x, y, h);
                let m = min_margin(regions, &p);
                if m > best.0 {
                    best = (m, p);
                }
            }
        }
    }
    let (mut m, mut p) = best;
    let mut step = (x1 - x0) / (NXY - 1) as f64;
    let dirs: [(f64, f64, f64); 10] = [
        (1.0, 0.0, 0.0),
        (-1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0),
        (0.0, 0.0, -1.0),
        (1.0, 1.0, 0.0),
        (1.0, -1.0, 0.0),
        (-1.0, 1.0, 0.0),
        (-1.0, -1.0, 0.0),
    ];
    while step > 1e-3 {
        let mut improved = false;
        for (dx, dy, dh) in dirs {
            let q = Position3::new(p.x + dx * step, p.y + dy * step, (p.h + dh * step).clamp(lo, hi));
            let mq = min_margin(regions, &q);
            if mq > m {
                m = mq;
                p = q;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    if m > 0.0 {
        Ok(p)
    } else {
        Err(Error::EmptyIntersection)
    }
}

fn stay(state: &PlacementState, converged: bool) -> PlacementState {
    PlacementState { iterate: state.iterate + 1, converged, ..*state }
}

/// Pushes `u` toward the users whose rate floor is violated while keeping
/// it inside the cones and altitude bounds.
fn restore(state: &PlacementState, model: &RateModel, regions: &[FeasibleRegion], alt: [f64; 2]) -> PlacementState {
    let mut u = state.u.to_vector();
    let mut radius = state.trust_radius;
    let score = |u: &Vector3<f64>| {
        model.user_rates(u).iter().map(|r| r - model.r_th).fold(f64::INFINITY, f64::min)
    };
    let mut cur = score(&u);
    for _ in 0..RESTORE_STEPS {
        if cur >= -1e-9 * model.r_th || radius < 1e-3 {
            break;
        }
        let rates = model.user_rates(&u);
        let worst = (0..rates.len()).min_by(|&a, &b| rates[a].total_cmp(&rates[b])).unwrap_or(0);
        let mut sets = base_sets(regions, alt);
        sets.push(ConvexSet::Ball { center: u, radius });
        let x = dykstra(&model.users[worst], &sets, DYKSTRA_SWEEPS, 1e-9);
        let x = pull_inside(&u, &x, &sets);
        let s = score(&x);
        if s > cur {
            u = x;
            cur = s;
        } else {
            radius *= 0.5;
        }
    }
    PlacementState {
        u: Position3::from_vector(&u),
        objective: model.sum_rate(&u),
        iterate: state.iterate + 1,
        trust_radius: radius,
        converged: false,
    }
}

fn step_with_model(
    state: &PlacementState,
    model: &RateModel,
    regions: &[FeasibleRegion],
    alt: [f64; 2],
    opts: &PlacementOptions,
) -> PlacementState {
    let u = state.u.to_vector();
    if model.rate_shortfall(&u) > 0.0 {
        return restore(state, model, regions, alt);
    }
    let f0 = model.sum_rate(&u);
    let rates = model.user_rates(&u);
    let k = model.num_users();
    let mut weight = vec![0.0; k];
    let mut target = Vector3::zeros();
    let mut sets = base_sets(regions, alt);
    for i in 0..k {
        let e0 = model.sq_dist(i, &u);
        let d = model.uav_slope(i, e0);
        weight[i] = -d;
        target += model.users[i] * -d;
        if model.r_th > 0.0 && d < 0.0 {
            let slack = (rates[i] - model.r_th).max(0.0);
            sets.push(ConvexSet::Ball { center: model.users[i], radius: (e0 + slack / -d).sqrt() });
        }
    }
    let wsum: f64 = weight.iter().sum();
    if !(wsum > 0.0) {
        return stay(state, true);
    }
    target /= wsum;
    let mut radius = state.trust_radius;
    while radius >= opts.min_trust {
        let mut s = sets.clone();
        s.push(ConvexSet::Ball { center: u, radius });
        let x = dykstra(&target, &s, DYKSTRA_SWEEPS, 1e-9 * radius.min(1.0));
        let x = pull_inside(&u, &x, &s);
        if (x - u).norm() <= 1e-9 {
            return PlacementState { trust_radius: radius, ..stay(state, true) };
        }
        let f = model.sum_rate(&x);
        if f >= f0 {
            return PlacementState {
                u: Position3::from_vector(&x),
                objective: f,
                iterate: state.iterate + 1,
                trust_radius: (radius * opts.grow).min(MAX_TRUST),
                converged: false,
            };
        }
        radius *= opts.shrink;
    }
    PlacementState { trust_radius: radius, ..stay(state, true) }
}

/// One surrogate maximization from a feasible state.
pub fn sca_step(
    state: &PlacementState,
    alloc: &Allocation,
    regions: &[FeasibleRegion],
    cfg: &ScenarioConfig,
) -> Result<PlacementState> {
    let model = RateModel::new(alloc, cfg)?;
    check_start(&state.u, regions, cfg.altitude_bounds)?;
    Ok(step_with_model(state, &model, regions, cfg.altitude_bounds, &PlacementOptions::default()))
}

fn check_start(u: &Position3, regions: &[FeasibleRegion], alt: [f64; 2]) -> Result<()> {
    if !is_feasible(regions, alt, u) {
        return Err(Error::InvalidArgument(format!("start position {:?} outside the feasible set", u)));
    }
    Ok(())
}

/// Iterates [`sca_step`] from `u0`.
pub fn solve_udo(u0: &Position3, alloc: &Allocation, regions: &[FeasibleRegion], cfg: &ScenarioConfig) -> Result<PlacementState> {
    Ok(solve_udo_traced(u0, alloc, regions, cfg, &PlacementOptions::default())?.0)
}

/// [`solve_udo`] returning the objective after every step (the first
/// entry is the objective at `u0`).
pub fn solve_udo_traced(
    u0: &Position3,
    alloc: &Allocation,
    regions: &[FeasibleRegion],
    cfg: &ScenarioConfig,
    opts: &PlacementOptions,
) -> Result<(PlacementState, Vec<f64>)> {
    let alt = cfg.altitude_bounds;
    check_start(u0, regions, alt)?;
    let model = RateModel::new(alloc, cfg)?;
    let mut state = PlacementState {
        u: *u0,
        objective: model.sum_rate(&u0.to_vector()),
        iterate: 0,
        trust_radius: opts.trust0,
        converged: false,
    };
    let mut trace = vec![state.objective];
    for _ in 0..opts.max_steps {
        let prev = state.objective;
        state = step_with_model(&state, &model, regions, alt, opts);
        trace.push(state.objective);
        // A restoration step may lower the objective; keep going after it.
        if state.converged || (state.objective >= prev && state.objective - prev < opts.improve_tol) {
            break;
        }
    }
    Ok((state, trace))
}
