//! Per-user UAV feasibility regions.
//!
//! Bounding `det(C)` below by `D1` turns the accuracy constraint
//! `opt-D1 ≥ ε_k` into `|α·(q_u − q_1)| ≥ √(ε_k D1)`. Inside the domain where
//! `det(H)` keeps the sign `s`, this is the second-order cone
//!
//! ```text
//! a·(u − w_k) ≥ τ ‖u − w_k‖,   a = s·α,   τ = √(ε_k D1) + s·c2
//! ```
//!
//! with `c2 = α·q_1`. The per-case thresholds are `ε̃ = s·τ`.

use nalgebra::{Matrix2, Vector3};
use serde::Serialize;

use super::{toa_variance, unit_from, AnchorKind};
use crate::error::{Error, Result};
use crate::model::{Position3, ScenarioConfig};

pub const DEFAULT_PROBE_ALTITUDE: f64 = 300.0;

// Relative slack on the cone inequality, in units of c1·‖u − w‖.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseSign {
    /// det(H) > 0
    Positive,
    /// det(H) < 0
    Negative,
}

impl CaseSign {
    pub fn value(self) -> f64 {
        match self {
            CaseSign::Positive => 1.0,
            CaseSign::Negative => -1.0,
        }
    }

    pub fn of(x: f64) -> Self {
        if x >= 0.0 {
            CaseSign::Positive
        } else {
            CaseSign::Negative
        }
    }
}

/// `α = (q2 − q1) × (q3 − q1)`, the cofactors of the last Jacobian row.
pub fn alpha_coeffs(frame: &super::GeometryFrame) -> Vector3<f64> {
    let [q1, q2, q3] = frame.q_bs;
    alpha_from_units(&q1, &q2, &q3)
}

fn alpha_from_units(q1: &Vector3<f64>, q2: &Vector3<f64>, q3: &Vector3<f64>) -> Vector3<f64> {
    let (a, b) = (q2 - q1, q3 - q1);
    Vector3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

/// Sign of det(H) with the UAV right above the user at `probe_alt`.
pub fn det_sign(user: &Position3, bs: &[Position3; 3], probe_alt: f64) -> Result<CaseSign> {
    let probe = Position3::new(user.x, user.y, probe_alt);
    let frame = super::geometry_frame(&probe, user, bs)?;
    let det = alpha_coeffs(&frame).dot(&frame.q_uav) - alpha_coeffs(&frame).dot(&frame.q_bs[0]);
    if det.abs() < 1e-14 {
        return Err(Error::CoplanarProbe);
    }
    Ok(CaseSign::of(det))
}

/// Power-independent part of a user's region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeGeometry {
    pub alpha: Vector3<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub case_sign: CaseSign,
    pub user: Position3,
}

pub fn cone_geometry(user: &Position3, bs: &[Position3; 3]) -> Result<ConeGeometry> {
    let q = [unit_from(user, &bs[0])?, unit_from(user, &bs[1])?, unit_from(user, &bs[2])?];
    let alpha = alpha_from_units(&q[0], &q[1], &q[2]);
    Ok(ConeGeometry {
        alpha,
        c1: alpha.norm(),
        c2: alpha.dot(&q[0]),
        c3: alpha.x.hypot(alpha.y),
        case_sign: det_sign(user, bs, DEFAULT_PROBE_ALTITUDE)?,
        user: *user,
    })
}

/// `D1 = σ1²σ2²σ3²` for one user.
pub fn bs_d1(user: &Position3, pos_power_bs: [f64; 3], cfg: &ScenarioConfig) -> Result<f64> {
    let mut d1 = 1.0;
    for n in 0..3 {
        d1 *= toa_variance(&cfg.bs[n], user, pos_power_bs[n], AnchorKind::Bs, &cfg.channel)?;
    }
    Ok(d1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyBounds {
    pub lb: f64,
    pub ub: f64,
    pub case_sign: CaseSign,
}

impl AccuracyBounds {
    pub fn interpolate(&self, zeta: f64) -> f64 {
        self.lb + zeta * (self.ub - self.lb)
    }
}

fn bounds_from(geo: &ConeGeometry, d1: f64, user: usize) -> Result<AccuracyBounds> {
    let s = geo.case_sign.value();
    let hi = geo.c1 - s * geo.c2;
    let lo = (geo.c3 - s * geo.c2).max(0.0);
    if !(hi > lo) {
        return Err(Error::EmptyAccuracyInterval { user });
    }
    Ok(AccuracyBounds { lb: lo * lo / d1, ub: hi * hi / d1, case_sign: geo.case_sign })
}

/// The open interval of `ε_k` for which the region is a nonempty cone with
/// bounded horizontal sections.
pub fn accuracy_bounds(user_idx: usize, pos_power_bs: [f64; 3], cfg: &ScenarioConfig) -> Result<AccuracyBounds> {
    let user = cfg.users.get(user_idx).ok_or_else(|| Error::InvalidArgument(format!("no user {user_idx}")))?;
    let geo = cone_geometry(user, &cfg.bs)?;
    bounds_from(&geo, bs_d1(user, pos_power_bs, cfg)?, user_idx)
}

/// Ground-station positioning power at which the bounds behind the default
/// thresholds are evaluated, W.
pub const THRESHOLD_REFERENCE_POWER: f64 = 0.15;

/// Per-user thresholds `ε_k`: the explicit overrides when present, otherwise
/// `lb_k + ζ (ub_k − lb_k)` with the bounds taken at
/// [`THRESHOLD_REFERENCE_POWER`].
pub fn accuracy_thresholds(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    if let Some(o) = &cfg.accuracy_overrides {
        return Ok(o.clone());
    }
    (0..cfg.num_users())
        .map(|k| Ok(accuracy_bounds(k, [THRESHOLD_REFERENCE_POWER; 3], cfg)?.interpolate(cfg.zeta)))
        .collect()
}

/// Regions of every user for ground positioning powers `pos_power_bs`.
pub fn regions_for(pos_power_bs: [f64; 3], eps: &[f64], cfg: &ScenarioConfig) -> Result<Vec<FeasibleRegion>> {
    eps.iter().enumerate().map(|(k, &e)| region_for_user(k, pos_power_bs, e, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleRegion {
    pub alpha: Vector3<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d1: f64,
    pub case_sign: CaseSign,
    pub eps_tilde: f64,
    pub eps_k: f64,
    pub user: Position3,
}

impl FeasibleRegion {
    pub fn from_geometry(geo: &ConeGeometry, d1: f64, eps_k: f64, user_idx: usize) -> Result<Self> {
        if !(eps_k >= 0.0) || !(d1 > 0.0) {
            return Err(Error::InvalidArgument(format!("eps_k = {eps_k}, D1 = {d1}")));
        }
        let s = geo.case_sign.value();
        let tau = (eps_k * d1).sqrt() + s * geo.c2;
        if tau > geo.c1 * (1.0 + 1e-12) {
            let hi = geo.c1 - s * geo.c2;
            return Err(Error::InfeasibleAccuracy { user: user_idx, eps: eps_k, ub: hi * hi / d1 });
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "user {user_idx}: accuracy threshold {eps_k} leaves a non-convex region"
            )));
        }
        Ok(Self {
            alpha: geo.alpha,
            c1: geo.c1,
            c2: geo.c2,
            c3: geo.c3,
            d1,
            case_sign: geo.case_sign,
            eps_tilde: s * tau.min(geo.c1),
            eps_k,
            user: geo.user,
        })
    }

    /// Cone axis `s·α` (not normalized).
    pub fn axis(&self) -> Vector3<f64> {
        self.alpha * self.case_sign.value()
    }

    /// Cone threshold `τ = s·ε̃`, in `(0, c1]`.
    pub fn threshold(&self) -> f64 {
        self.case_sign.value() * self.eps_tilde
    }

    /// Cosine of the cone half-angle.
    pub fn cos_half_angle(&self) -> f64 {
        (self.threshold() / self.c1).min(1.0)
    }

    /// `(a·v/‖v‖ − τ)/c1`: positive strictly inside, in `[-2, 1]`.
    pub fn margin(&self, u: &Position3) -> f64 {
        let v = u.to_vector() - self.user.to_vector();
        let n = v.norm();
        if !(n > 0.0) {
            return f64::NEG_INFINITY;
        }
        (self.axis().dot(&v) / n - self.threshold()) / self.c1
    }

    /// Euclidean projection of `p` onto the cone.
    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let w = self.user.to_vector();
        let v = p - w;
        let axis = self.axis() / self.c1;
        let cos_t = self.cos_half_angle();
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let x = axis.dot(&v);
        let perp = v - axis * x;
        let r = perp.norm();
        if r * cos_t <= x * sin_t {
            return *p;
        }
        let dir = if r > 0.0 { axis * cos_t + perp * (sin_t / r) } else { axis * cos_t };
        let along = x * cos_t + r * sin_t;
        if along <= 0.0 {
            return w;
        }
        w + dir * along
    }
}

/// Region of `cfg.users[user_idx]` for BS positioning powers `pos_power_bs`.
pub fn region_for_user(user_idx: usize, pos_power_bs: [f64; 3], eps_k: f64, cfg: &ScenarioConfig) -> Result<FeasibleRegion> {
    let user = cfg.users.get(user_idx).ok_or_else(|| Error::InvalidArgument(format!("no user {user_idx}")))?;
    let geo = cone_geometry(user, &cfg.bs)?;
    FeasibleRegion::from_geometry(&geo, bs_d1(user, pos_power_bs, cfg)?, eps_k, user_idx)
}

pub fn cone_contains(region: &FeasibleRegion, u: &Position3) -> Result<bool> {
    let v = u.to_vector() - region.user.to_vector();
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::ConeVertex);
    }
    Ok(region.axis().dot(&v) - region.threshold() * n >= -BOUNDARY_TOL * region.c1 * n)
}

/// Boundary conic `a x² + b xy + c y² + d x + e y + f = 0` in coordinates
/// relative to the user, `(x_u − x_k, y_u − y_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    /// `(x_k, y_k)` of the user.
    pub origin: [f64; 2],
}

impl Conic {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }

    /// Ellipse centre in relative coordinates.
    pub fn center(&self) -> [f64; 2] {
        let det = 4.0 * self.a * self.c - self.b * self.b;
        [(self.b * self.e - 2.0 * self.c * self.d) / det, (self.b * self.d - 2.0 * self.a * self.e) / det]
    }

    /// `n` boundary points in absolute horizontal coordinates.
    pub fn polyline(&self, n: usize) -> Vec<[f64; 2]> {
        let [x0, y0] = self.center();
        let rhs = -self.eval(x0, y0);
        let m = Matrix2::new(self.a, self.b / 2.0, self.b / 2.0, self.c);
        let eig = m.symmetric_eigen();
        let r = [(rhs / eig.eigenvalues[0]).sqrt(), (rhs / eig.eigenvalues[1]).sqrt()];
        let (e1, e2) = (eig.eigenvectors.column(0), eig.eigenvectors.column(1));
        (0..n)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / n as f64;
                let (c, s) = (th.cos() * r[0], th.sin() * r[1]);
                [self.origin[0] + x0 + c * e1[0] + s * e2[0], self.origin[1] + y0 + c * e1[1] + s * e2[1]]
            })
            .collect()
    }
}

/// Horizontal section of the cone at altitude `h`.
pub fn ellipse_at_altitude(region: &FeasibleRegion, h: f64) -> Result<Conic> {
    let tau = region.threshold();
    if !(tau > region.c3 * (1.0 + 1e-9)) {
        return Err(Error::UnboundedRegion);
    }
    let a = region.axis();
    let z = h - region.user.h;
    let t2 = tau * tau;
    let conic = Conic {
        a: t2 - a.x * a.x,
        b: -2.0 * a.x * a.y,
        c: t2 - a.y * a.y,
        d: -2.0 * a.x * a.z * z,
        e: -2.0 * a.y * a.z * z,
        f: (t2 - a.z * a.z) * z * z,
        origin: [region.user.x, region.user.y],
    };
    if z == 0.0 {
        return Err(Error::EmptyAtAltitude);
    }
    // The quadric also contains the mirror nappe; keep the section only if
    // its centre lies on the feasible one and it has positive extent.
    let [x0, y0] = conic.center();
    if a.dot(&Vector3::new(x0, y0, z)) <= 0.0 || !(conic.eval(x0, y0) < 0.0) {
        return Err(Error::EmptyAtAltitude);
    }
    Ok(conic)
}

#[cfg(test)]
mod tests {
    use super::super::{det_c_split, geometry_frame, opt_d1, tdoa_covariance, ToaVariances};
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mirrored() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::reference();
        for b in cfg.bs.iter_mut() {
            b.x = -b.x;
        }
        for w in cfg.users.iter_mut() {
            w.x = -w.x;
        }
        cfg
    }

    fn random_frame(rng: &mut ChaCha8Rng) -> super::super::GeometryFrame {
        let mut p = || Position3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(0.0..300.0));
        let user = p();
        let bs = [p(), p(), p()];
        geometry_frame(&p(), &user, &bs).unwrap()
    }

    #[test]
    fn cofactor_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let f = random_frame(&mut rng);
            let alpha = alpha_coeffs(&f);
            assert!((alpha.dot(&(f.q_uav - f.q_bs[0])) - f.det_h()).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_degenerate_and_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut f = random_frame(&mut rng);
        let a = alpha_coeffs(&f);
        f.q_bs.swap(1, 2);
        assert_relative_eq!(alpha_coeffs(&f), -a, epsilon = 1e-15);
        f.q_bs[1] = f.q_bs[0];
        assert_eq!(alpha_coeffs(&f), Vector3::zeros());
    }

    #[test]
    fn reference_users_are_case_two_and_mirror_flips() {
        let cfg = ScenarioConfig::reference();
        let m = mirrored();
        for k in 0..cfg.users.len() {
            assert_eq!(det_sign(&cfg.users[k], &cfg.bs, 300.0).unwrap(), CaseSign::Negative);
            assert_eq!(det_sign(&m.users[k], &m.bs, 300.0).unwrap(), CaseSign::Positive);
        }
        let sym = [Position3::new(100.0, 0.0, 10.0), Position3::new(-50.0, 86.6, 10.0), Position3::new(-50.0, -86.6, 10.0)];
        let s = det_sign(&Position3::new(0.0, 0.0, 0.0), &sym, 300.0).unwrap();
        let f = geometry_frame(&Position3::new(0.0, 0.0, 300.0), &Position3::new(0.0, 0.0, 0.0), &sym).unwrap();
        assert_eq!(s, CaseSign::of(f.det_h()));
        assert!(f.det_h().abs() > 1e-3);
    }

    #[test]
    fn probe_in_bs_plane_is_rejected() {
        // User and ground stations in a vertical plane that also holds the probe.
        let bs = [Position3::new(0.0, -100.0, 0.0), Position3::new(0.0, 100.0, 0.0), Position3::new(0.0, 0.0, 100.0)];
        assert_eq!(det_sign(&Position3::new(0.0, 20.0, 10.0), &bs, 300.0), Err(Error::CoplanarProbe));
    }

    #[test]
    fn bounds_symmetric_layout_cases_coincide() {
        let geo = ConeGeometry {
            alpha: Vector3::new(0.3, -0.2, 1.0),
            c1: Vector3::new(0.3, -0.2, 1.0).norm(),
            c2: 0.0,
            c3: 0.3f64.hypot(0.2),
            case_sign: CaseSign::Positive,
            user: Position3::new(0.0, 0.0, 0.0),
        };
        let neg = ConeGeometry { case_sign: CaseSign::Negative, ..geo };
        assert_eq!(bounds_from(&geo, 1.0, 0).unwrap().lb, bounds_from(&neg, 1.0, 0).unwrap().lb);
        assert_eq!(bounds_from(&geo, 1.0, 0).unwrap().ub, bounds_from(&neg, 1.0, 0).unwrap().ub);
    }

    #[test]
    fn reference_bounds_formula() {
        let cfg = ScenarioConfig::reference();
        for k in 0..cfg.users.len() {
            let b = accuracy_bounds(k, [0.15; 3], &cfg).unwrap();
            let v = ToaVariances::at(&cfg.users[k], &Position3::new(0.0, 0.0, 300.0), &cfg.bs, [0.15, 0.15, 0.15, 1.0], &cfg.channel).unwrap();
            let d1 = det_c_split(&v).0;
            let geo = cone_geometry(&cfg.users[k], &cfg.bs).unwrap();
            assert_relative_eq!(b.ub, (geo.c1 + geo.c2).powi(2) / d1, max_relative = 1e-12);
            assert_relative_eq!(b.lb, (geo.c3 + geo.c2).max(0.0).powi(2) / d1, max_relative = 1e-12);
            assert!(b.lb < b.interpolate(0.5) && b.interpolate(0.5) < b.ub);
        }
    }

    #[test]
    fn region_endpoints() {
        let cfg = ScenarioConfig::reference();
        let b = accuracy_bounds(0, [0.15; 3], &cfg).unwrap();
        let at_lb = region_for_user(0, [0.15; 3], b.lb, &cfg).unwrap();
        assert_eq!(ellipse_at_altitude(&at_lb, 300.0), Err(Error::UnboundedRegion));
        let above = region_for_user(0, [0.15; 3], b.lb * 1.01 + b.ub * 1e-6, &cfg).unwrap();
        assert!(ellipse_at_altitude(&above, 300.0).is_ok());

        let at_ub = region_for_user(0, [0.15; 3], b.ub, &cfg).unwrap();
        let w = at_ub.user.to_vector();
        let on_axis = Position3::from_vector(&(w + at_ub.axis() / at_ub.c1 * 200.0));
        assert!(cone_contains(&at_ub, &on_axis).unwrap());
        let off = Position3::new(on_axis.x + 5.0, on_axis.y, on_axis.h);
        assert!(!cone_contains(&at_ub, &off).unwrap());
        assert!(matches!(region_for_user(0, [0.15; 3], b.ub * 1.001, &cfg), Err(Error::InfeasibleAccuracy { .. })));
    }

    #[test]
    fn membership_axis_antipode_vertex() {
        let cfg = ScenarioConfig::reference();
        let b = accuracy_bounds(2, [0.15; 3], &cfg).unwrap();
        let r = region_for_user(2, [0.15; 3], b.interpolate(0.7), &cfg).unwrap();
        let w = r.user.to_vector();
        let dir = r.axis() / r.c1;
        assert!(cone_contains(&r, &Position3::from_vector(&(w + dir * 300.0))).unwrap());
        assert!(!cone_contains(&r, &Position3::from_vector(&(w - dir * 300.0))).unwrap());
        assert_eq!(cone_contains(&r, &r.user), Err(Error::ConeVertex));
    }

    // Oracle: opt-D1 ≥ ε evaluated from variances and the Jacobian, restricted
    // to the domain where det(H) has the region's sign.
    fn agreement(cfg: &ScenarioConfig, k: usize, seed: u64) -> (usize, usize) {
        let p = [0.15; 3];
        let b = accuracy_bounds(k, p, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut checked, mut agree) = (0, 0);
        while checked < 1000 {
            let zeta: f64 = rng.random_range(0.05..0.95);
            let eps = b.interpolate(zeta);
            let r = region_for_user(k, p, eps, cfg).unwrap();
            let u = Position3::new(rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0), rng.random_range(100.0..1000.0));
            let frame = geometry_frame(&u, &cfg.users[k], &cfg.bs).unwrap();
            if CaseSign::of(frame.det_h()) != r.case_sign {
                continue;
            }
            let v = ToaVariances::at(&cfg.users[k], &u, &cfg.bs, [p[0], p[1], p[2], 1.0], &cfg.channel).unwrap();
            let metric = opt_d1(&frame, det_c_split(&v).0).unwrap();
            if ((metric - eps) / eps).abs() < 1e-6 {
                continue;
            }
            checked += 1;
            if cone_contains(&r, &u).unwrap() == (metric >= eps) {
                agree += 1;
            }
        }
        (checked, agree)
    }

    #[test]
    fn cone_matches_metric_oracle_both_cases() {
        for (cfg, seed) in [(ScenarioConfig::reference(), 1), (mirrored(), 2)] {
            for k in 0..cfg.users.len() {
                let (n, a) = agreement(&cfg, k, seed + 10 * k as u64);
                assert_eq!(n, a, "user {k}");
            }
        }
    }

    #[test]
    fn above_ub_nothing_qualifies() {
        let cfg = ScenarioConfig::reference();
        let p = [0.15; 3];
        let b = accuracy_bounds(1, p, &cfg).unwrap();
        let eps = b.ub * 1.0001;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20000 {
            let u = Position3::new(rng.random_range(-1500.0..1500.0), rng.random_range(-1500.0..1500.0), rng.random_range(1.0..3000.0));
            let frame = geometry_frame(&u, &cfg.users[1], &cfg.bs).unwrap();
            let v = ToaVariances::at(&cfg.users[1], &u, &cfg.bs, [0.15, 0.15, 0.15, 1.0], &cfg.channel).unwrap();
            if CaseSign::of(frame.det_h()) == b.case_sign {
                assert!(opt_d1(&frame, det_c_split(&v).0).unwrap() < eps);
            }
        }
    }

    #[test]
    fn circle_when_axis_vertical() {
        let geo = ConeGeometry {
            alpha: Vector3::new(0.0, 0.0, 2.0),
            c1: 2.0,
            c2: 0.0,
            c3: 0.0,
            case_sign: CaseSign::Positive,
            user: Position3::new(10.0, -5.0, 0.0),
        };
        let r = FeasibleRegion::from_geometry(&geo, 1.0, 1.0, 0).unwrap();
        let c = ellipse_at_altitude(&r, 100.0).unwrap();
        assert_eq!((c.b, c.d, c.e), (0.0, 0.0, 0.0));
        assert_eq!(c.a, c.c);
        // τ = 1, |a| = 2: half-angle 60°, radius = 100·tan 60°.
        let radius = (-c.f / c.a).sqrt();
        assert_relative_eq!(radius, 100.0 * 3f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn conic_boundary_lies_on_cone() {
        for cfg in [ScenarioConfig::reference(), mirrored()] {
            for k in 0..cfg.users.len() {
                let b = accuracy_bounds(k, [0.15; 3], &cfg).unwrap();
                let r = region_for_user(k, [0.15; 3], b.interpolate(0.7), &cfg).unwrap();
                let Ok(c) = ellipse_at_altitude(&r, 200.0) else { continue };
                assert!(c.discriminant() < 0.0);
                for p in c.polyline(360) {
                    let v = Vector3::new(p[0] - r.user.x, p[1] - r.user.y, 200.0 - r.user.h);
                    let gap = r.axis().dot(&v) - r.threshold() * v.norm();
                    assert!(gap.abs() < 1e-8 * r.c1 * v.norm(), "user {k}: {gap}");
                }
            }
        }
    }

    #[test]
    fn ellipse_grows_with_bs_power() {
        let cfg = ScenarioConfig::reference();
        let b = accuracy_bounds(0, [0.15; 3], &cfg).unwrap();
        let eps = b.interpolate(0.7);
        let area = |p: f64| {
            let r = region_for_user(0, [p; 3], eps, &cfg).unwrap();
            let c = ellipse_at_altitude(&r, 200.0).unwrap();
            let rhs = -c.eval(c.center()[0], c.center()[1]);
            std::f64::consts::PI * rhs / (c.a * c.c - c.b * c.b / 4.0).sqrt()
        };
        assert!(area(0.3) > area(0.2) && area(0.2) > area(0.15));
    }

    #[test]
    fn projection_properties() {
        let cfg = ScenarioConfig::reference();
        let b = accuracy_bounds(3, [0.15; 3], &cfg).unwrap();
        let r = region_for_user(3, [0.15; 3], b.interpolate(0.5), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let p = Vector3::new(rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0));
            let q = r.project(&p);
            let v = q - r.user.to_vector();
            if v.norm() > 1e-9 {
                assert!(r.axis().dot(&v) >= r.threshold() * v.norm() - 1e-9 * r.c1 * v.norm());
            }
            // Projection onto a convex cone: residual orthogonal to the result.
            assert!((p - q).dot(&v).abs() < 1e-6 * (1.0 + p.norm() * v.norm()));
            assert!((r.project(&q) - q).norm() < 1e-9);
        }
    }

    #[test]
    fn covariance_unused_by_region_path() {
        // The region only depends on BS variances: the UAV variance is absent.
        let cfg = ScenarioConfig::reference();
        let v = ToaVariances::at(&cfg.users[0], &Position3::new(0.0, 0.0, 300.0), &cfg.bs, [0.15, 0.15, 0.15, 0.2], &cfg.channel).unwrap();
        let d1 = bs_d1(&cfg.users[0], [0.15; 3], &cfg).unwrap();
        assert_relative_eq!(d1, det_c_split(&v).0, max_relative = 1e-14);
        assert!(tdoa_covariance(&v).c.determinant() > d1);
    }
}
