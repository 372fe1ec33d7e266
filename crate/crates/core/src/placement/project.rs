//! Euclidean projection onto an intersection of cones, an altitude slab and
//! balls (Dykstra's alternating scheme).

use nalgebra::Vector3;

use crate::locgeom::FeasibleRegion;

#[derive(Debug, Clone, Copy)]
pub(crate) enum ConvexSet<'a> {
    Cone(&'a FeasibleRegion),
    Slab { lo: f64, hi: f64 },
    Ball { center: Vector3<f64>, radius: f64 },
}

impl ConvexSet<'_> {
    pub(crate) fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match *self {
            ConvexSet::Cone(r) => r.project(p),
            ConvexSet::Slab { lo, hi } => Vector3::new(p.x, p.y, p.z.clamp(lo, hi)),
            ConvexSet::Ball { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n <= radius {
                    *p
                } else {
                    center + d * (radius / n)
                }
            }
        }
    }

    /// Membership without tolerance.
    pub(crate) fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            ConvexSet::Cone(r) => {
                let v = p - r.user.to_vector();
                let n = v.norm();
                n > 0.0 && r.axis().dot(&v) >= r.threshold() * n
            }
            ConvexSet::Slab { lo, hi } => p.z >= lo && p.z <= hi,
            ConvexSet::Ball { center, radius } => (p - center).norm() <= radius,
        }
    }
}

pub(crate) fn contains_all(sets: &[ConvexSet], p: &Vector3<f64>) -> bool {
    sets.iter().all(|s| s.contains(p))
}

/// Approximate projection of `x0` onto `∩ sets`. The result may violate
/// the sets by round-off; callers needing exact membership pull it back
/// toward a known interior point with [`pull_inside`].
pub(crate) fn dykstra(x0: &Vector3<f64>, sets: &[ConvexSet], max_sweeps: usize, tol: f64) -> Vector3<f64> {
    let mut x = *x0;
    let mut incr = vec![Vector3::zeros(); sets.len()];
    for _ in 0..max_sweeps {
        let mut moved: f64 = 0.0;
        for (set, p) in sets.iter().zip(incr.iter_mut()) {
            let y = set.project(&(x + *p));
            *p += x - y;
            moved = moved.max((y - x).norm());
            x = y;
        }
        if moved <= tol {
            break;
        }
    }
    x
}

/// Largest step along `from → to` (by bisection) that stays in every set.
/// `from` must itself be a member.
pub(crate) fn pull_inside(from: &Vector3<f64>, to: &Vector3<f64>, sets: &[ConvexSet]) -> Vector3<f64> {
    if contains_all(sets, to) {
        return *to;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if contains_all(sets, &(from + (to - from) * mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    from + (to - from) * lo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dykstra_projects_onto_ball_slab_intersection() {
        let sets = [
            ConvexSet::Ball { center: Vector3::zeros(), radius: 1.0 },
            ConvexSet::Slab { lo: 0.5, hi: 2.0 },
        ];
        let x = dykstra(&Vector3::new(3.0, 0.0, 0.0), &sets, 10_000, 1e-14);
        // Nearest point of the spherical cap: on the rim circle at z = 0.5.
        let rim = Vector3::new((0.75f64).sqrt(), 0.0, 0.5);
        assert!((x - rim).norm() < 1e-6, "{x:?}");
    }

    #[test]
    fn pull_inside_stays_feasible() {
        let sets = [ConvexSet::Ball { center: Vector3::zeros(), radius: 1.0 }];
        let p = pull_inside(&Vector3::zeros(), &Vector3::new(2.0, 0.0, 0.0), &sets);
        assert!(contains_all(&sets, &p));
        assert!((p.x - 1.0).abs() < 1e-12);
    }
}
