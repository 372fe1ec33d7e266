//! TDoA localization geometry: ToA variances, the TDoA covariance, the
//! Jacobian of the TDoA vector, D-optimality metrics and the CRLB.
//!
//! Anchor 1 (the first ground station) is the TDoA reference. All Jacobian
//! rows are differences of unit vectors and therefore dimensionless; the CRLB
//! converts the resulting time-domain covariance to meters with the speed of
//! light.

mod region;

pub use region::{
    accuracy_bounds, accuracy_thresholds, alpha_coeffs, bs_d1, cone_contains, cone_geometry, det_sign,
    ellipse_at_altitude, region_for_user, regions_for, AccuracyBounds, CaseSign, Conic, ConeGeometry,
    FeasibleRegion, DEFAULT_PROBE_ALTITUDE, THRESHOLD_REFERENCE_POWER,
};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::{ChannelParams, Position3, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorKind {
    /// Ground station: G2G pathloss plus the NLoS variance floor.
    Bs,
    /// UAV: A2G pathloss, no NLoS floor.
    Uav,
}

/// ToA measurement variance `ψ B̄ N0 d^ι / (β P̄)` (+ `σ²_nlos` for ground
/// stations), s^2.
pub fn toa_variance(anchor: &Position3, user: &Position3, pos_power: f64, kind: AnchorKind, ch: &ChannelParams) -> Result<f64> {
    if pos_power <= 0.0 {
        return Err(Error::SilentAnchor);
    }
    let d = anchor.distance(user);
    if !(d > 0.0) {
        return Err(Error::ZeroDistanceAnchor);
    }
    let (iota, floor) = match kind {
        AnchorKind::Bs => (ch.iota_g, ch.sigma_nlos2),
        AnchorKind::Uav => (ch.iota_a, 0.0),
    };
    let inv_snr = ch.b_pos * ch.n0 * d.powf(iota) / (ch.beta * pos_power);
    Ok(ch.psi * inv_snr + floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToaVariances {
    pub sigma2_bs: [f64; 3],
    pub sigma2_uav: f64,
}

impl ToaVariances {
    /// Variances seen by `user` with the UAV at `u` and positioning powers
    /// `[P̄1, P̄2, P̄3, P̄u]`.
    pub fn at(user: &Position3, u: &Position3, bs: &[Position3; 3], pos_power: [f64; 4], ch: &ChannelParams) -> Result<Self> {
        let mut sigma2_bs = [0.0; 3];
        for n in 0..3 {
            sigma2_bs[n] = toa_variance(&bs[n], user, pos_power[n], AnchorKind::Bs, ch)?;
        }
        let sigma2_uav = toa_variance(u, user, pos_power[3], AnchorKind::Uav, ch)?;
        Ok(Self { sigma2_bs, sigma2_uav })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaCovariance {
    pub c: Matrix3<f64>,
}

/// Covariance of `[Δτ2, Δτ3, Δτu]`: every entry carries the reference
/// variance `σ1²`, the diagonal adds the variance of the other anchor.
pub fn tdoa_covariance(v: &ToaVariances) -> TdoaCovariance {
    let s1 = v.sigma2_bs[0];
    let mut c = Matrix3::from_element(s1);
    c[(0, 0)] += v.sigma2_bs[1];
    c[(1, 1)] += v.sigma2_bs[2];
    c[(2, 2)] += v.sigma2_uav;
    TdoaCovariance { c }
}

/// `det(C) = D1 + D2` with `D1 = σ1²σ2²σ3²` and
/// `D2 = σu²(σ2²σ3² + σ1²σ3² + σ1²σ2²)`.
pub fn det_c_split(v: &ToaVariances) -> (f64, f64) {
    let [s1, s2, s3] = v.sigma2_bs;
    (s1 * s2 * s3, v.sigma2_uav * (s2 * s3 + s1 * s3 + s1 * s2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryFrame {
    /// Unit vectors from the user to each ground station.
    pub q_bs: [Vector3<f64>; 3],
    /// Unit vector from the user to the UAV.
    pub q_uav: Vector3<f64>,
    /// Rows `q2 - q1`, `q3 - q1`, `qu - q1`.
    pub jacobian: Matrix3<f64>,
}

impl GeometryFrame {
    pub fn det_h(&self) -> f64 {
        self.jacobian.determinant()
    }
}

pub(crate) fn unit_from(user: &Position3, anchor: &Position3) -> Result<Vector3<f64>> {
    let d = anchor.to_vector() - user.to_vector();
    let n = d.norm();
    if !(n > 0.0) {
        return Err(Error::ZeroDistanceAnchor);
    }
    Ok(d / n)
}

pub fn geometry_frame(u: &Position3, user: &Position3, bs: &[Position3; 3]) -> Result<GeometryFrame> {
    let q_bs = [unit_from(user, &bs[0])?, unit_from(user, &bs[1])?, unit_from(user, &bs[2])?];
    let q_uav = unit_from(user, u)?;
    let jacobian = Matrix3::from_rows(&[
        (q_bs[1] - q_bs[0]).transpose(),
        (q_bs[2] - q_bs[0]).transpose(),
        (q_uav - q_bs[0]).transpose(),
    ]);
    Ok(GeometryFrame { q_bs, q_uav, jacobian })
}

/// D-optimality `det(HᵀC⁻¹H) = det²(H)/det(C)`.
pub fn opt_d(frame: &GeometryFrame, cov: &TdoaCovariance) -> Result<f64> {
    let det_c = cov.c.determinant();
    if !(det_c > 0.0) || cov.c.cholesky().is_none() {
        return Err(Error::SingularCovariance);
    }
    Ok(frame.det_h().powi(2) / det_c)
}

/// The UAV-variance-free surrogate `det²(H)/D1`.
pub fn opt_d1(frame: &GeometryFrame, d1: f64) -> Result<f64> {
    if !(d1 > 0.0) {
        return Err(Error::InvalidArgument(format!("D1 must be > 0, got {d1}")));
    }
    Ok(frame.det_h().powi(2) / d1)
}

/// Fisher information `HᵀC⁻¹H` (time domain).
pub fn fisher_information(frame: &GeometryFrame, cov: &TdoaCovariance) -> Result<Matrix3<f64>> {
    let c_inv = cov.c.cholesky().ok_or(Error::SingularCovariance)?.inverse();
    let h = &frame.jacobian;
    Ok(h.transpose() * c_inv * h)
}

/// Horizontal and vertical CRLB position errors in meters.
pub fn crlb(frame: &GeometryFrame, cov: &TdoaCovariance) -> Result<(f64, f64)> {
    // |det H| is scale-free (unit-vector rows); below this the inverse is noise.
    if frame.det_h().abs() < 1e-12 {
        return Err(Error::Unlocalizable);
    }
    let fim = fisher_information(frame, cov)?;
    let inv = fim.try_inverse().ok_or(Error::Unlocalizable)?;
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    let (xx, yy, zz) = (inv[(0, 0)] * c2, inv[(1, 1)] * c2, inv[(2, 2)] * c2);
    if !(xx >= 0.0 && yy >= 0.0 && zz >= 0.0) || !(xx + yy + zz).is_finite() {
        return Err(Error::Unlocalizable);
    }
    Ok(((xx + yy).sqrt(), zz.sqrt()))
}
