//! Physical scenario, channel constants and the outage-rate link model.

mod chi2;
mod rates;

pub use chi2::{fading_factor, inv_noncentral_chi2_cdf, noncentral_chi2_cdf, noncentrality};
pub use rates::{channel_gain, evaluate_rates, link_rate, link_rate_from_gain, LinkGains, LinkKind};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of transmitters: three ground stations and the UAV.
pub const TRANSMITTERS: usize = 4;
/// Row index of the UAV in per-transmitter arrays.
pub const UAV: usize = 3;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;

/// A point in meters: horizontal `x`, `y` and altitude `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, h: f64) -> Self {
        Self { x, y, h }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.h)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.h.is_finite()
    }
}

impl From<[f64; 3]> for Position3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Position3> for [f64; 3] {
    fn from(p: Position3) -> Self {
        [p.x, p.y, p.h]
    }
}

/// Channel and positioning-signal constants, all linear-scale SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Power gain at the 1 m reference distance.
    pub beta: f64,
    /// Ground-to-ground pathloss exponent.
    pub iota_g: f64,
    /// Air-to-ground pathloss exponent.
    pub iota_a: f64,
    /// Multipath power ratio of ground-to-ground links.
    pub omega_g: f64,
    /// Multipath power ratio of air-to-ground links.
    pub omega_a: f64,
    /// Outage tolerance.
    pub eps_out: f64,
    /// Noise power density, W/Hz.
    pub n0: f64,
    /// Communication bandwidth, Hz.
    pub b_comm: f64,
    /// Positioning-signal bandwidth, Hz.
    pub b_pos: f64,
    /// Positioning-signal design constant, s^2.
    pub psi: f64,
    /// ToA variance from NLoS multipath on ground links, s^2.
    pub sigma_nlos2: f64,
}

impl ChannelParams {
    /// Channel constants of the reference evaluation scenario.
    pub fn reference() -> Self {
        Self {
            beta: db_to_linear(-38.89),
            iota_g: 2.3,
            iota_a: 2.0,
            omega_g: 1.0,
            omega_a: 0.2,
            eps_out: 0.1,
            n0: dbm_per_hz_to_watts(-157.0),
            b_comm: 1e6,
            b_pos: 1.8e5,
            psi: 5.8e-16,
            sigma_nlos2: 6e-18,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, path: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config { path: format!("channel.{path}"), msg: msg.to_string() })
            }
        };
        check(self.beta > 0.0 && self.beta.is_finite(), "beta", "must be > 0")?;
        check(self.iota_g >= 1.0, "iota_g", "must be >= 1")?;
        check(self.iota_a >= 1.0, "iota_a", "must be >= 1")?;
        check((0.0..=1.0).contains(&self.omega_g), "omega_g", "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.omega_a), "omega_a", "must lie in [0, 1]")?;
        check(self.omega_a <= self.omega_g, "omega_a", "must not exceed omega_g")?;
        check(self.eps_out > 0.0 && self.eps_out < 1.0, "eps_out", "must lie in (0, 1)")?;
        check(self.n0 > 0.0, "n0", "must be > 0")?;
        check(self.b_comm > 0.0, "b_comm", "must be > 0")?;
        check(self.b_pos > 0.0, "b_pos", "must be > 0")?;
        check(self.psi > 0.0, "psi", "must be > 0")?;
        check(self.sigma_nlos2 >= 0.0, "sigma_nlos2", "must be >= 0")?;
        Ok(())
    }

    /// Outage fading factors `(ground-to-ground, air-to-ground)`.
    pub fn fading_factors(&self) -> Result<(f64, f64)> {
        Ok((fading_factor(self.omega_g, self.eps_out)?, fading_factor(self.omega_a, self.eps_out)?))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub bs: [Position3; 3],
    pub users: Vec<Position3>,
    pub channel: ChannelParams,
    /// Per-transmitter power budget, W.
    pub p_max: f64,
    /// Minimum per-user rate, bits/s.
    pub r_th: f64,
    /// Fixed positioning power of the UAV, W.
    pub uav_pos_power: f64,
    /// Interpolation factor between the feasible accuracy bounds.
    pub zeta: f64,
    /// Explicit per-user D-optimality thresholds, s^-6.
    #[serde(default)]
    pub accuracy_overrides: Option<Vec<f64>>,
    /// `[h_min, h_max]` for the UAV, meters.
    pub altitude_bounds: [f64; 2],
    pub seed: u64,
}

impl ScenarioConfig {
    /// The seven-user evaluation scenario with default limits.
    pub fn reference() -> Self {
        Self {
            bs: [
                Position3::new(-400.0, -350.0, 10.0),
                Position3::new(-450.0, 400.0, 10.0),
                Position3::new(350.0, 250.0, 10.0),
            ],
            users: vec![
                Position3::new(-60.0, -110.0, 12.0),
                Position3::new(150.0, -70.0, 29.0),
                Position3::new(-350.0, 30.0, 22.0),
                Position3::new(-140.0, -60.0, 26.0),
                Position3::new(-250.0, 130.0, 15.0),
                Position3::new(-280.0, -210.0, 17.0),
                Position3::new(-220.0, 260.0, 32.0),
            ],
            channel: ChannelParams::reference(),
            p_max: 1.0,
            r_th: 2.5e6,
            uav_pos_power: 0.2,
            zeta: 0.7,
            accuracy_overrides: None,
            altitude_bounds: [100.0, 1000.0],
            seed: 1,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, msg: String| Err(Error::Config { path: path.to_string(), msg });
        self.channel.validate()?;
        if self.users.len() < 2 {
            return err("users", format!("need at least 2 users, got {}", self.users.len()));
        }
        for (i, b) in self.bs.iter().enumerate() {
            if !b.is_finite() || b.h < 0.0 {
                return err(&format!("bs[{i}]"), "must be finite with h >= 0".into());
            }
        }
        for (i, w) in self.users.iter().enumerate() {
            if !w.is_finite() || w.h < 0.0 {
                return err(&format!("users[{i}]"), "must be finite with h >= 0".into());
            }
        }
        let (a, b, c) = (self.bs[0], self.bs[1], self.bs[2]);
        let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        let scale = a.distance(&b).max(a.distance(&c)).max(1.0);
        if cross.abs() < 1e-9 * scale * scale {
            return err("bs", "base stations are collinear in the horizontal plane".into());
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return err("p_max", format!("must be > 0, got {}", self.p_max));
        }
        if !(self.uav_pos_power >= 0.0 && self.uav_pos_power < self.p_max) {
            return err("uav_pos_power", "must satisfy 0 <= uav_pos_power < p_max".into());
        }
        if !(self.r_th >= 0.0) {
            return err("r_th", format!("must be >= 0, got {}", self.r_th));
        }
        if !(self.zeta >= 0.0 && self.zeta <= 1.0) {
            return err("zeta", format!("must lie in [0, 1], got {}", self.zeta));
        }
        if let Some(o) = &self.accuracy_overrides {
            if o.len() != self.users.len() {
                return err("accuracy_overrides", "one threshold per user required".into());
            }
            if o.iter().any(|e| !(*e > 0.0)) {
                return err("accuracy_overrides", "thresholds must be > 0".into());
            }
        }
        let [lo, hi] = self.altitude_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return err("altitude_bounds", "need 0 < h_min < h_max".into());
        }
        Ok(())
    }

    /// The same scenario restricted to a subset of users.
    pub fn with_users(&self, idx: &[usize]) -> Self {
        let mut out = self.clone();
        out.users = idx.iter().map(|&i| self.users[i]).collect();
        out.accuracy_overrides = self.accuracy_overrides.as_ref().map(|o| idx.iter().map(|&i| o[i]).collect());
        out
    }
}

/// Communication power, positioning power and bandwidth fractions of the
/// four transmitters (rows `0..3` ground stations, row [`UAV`] the UAV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub comm_power: [Vec<f64>; TRANSMITTERS],
    pub pos_power: [f64; TRANSMITTERS],
    pub bandwidth: [Vec<f64>; TRANSMITTERS],
}

impl Allocation {
    pub fn zeros(k: usize, pos_power: [f64; TRANSMITTERS]) -> Self {
        Self {
            comm_power: std::array::from_fn(|_| vec![0.0; k]),
            pos_power,
            bandwidth: std::array::from_fn(|_| vec![1.0 / k as f64; k]),
        }
    }

    pub fn num_users(&self) -> usize {
        self.comm_power[0].len()
    }

    /// Largest violation of the power budget, bandwidth simplex and sign
    /// constraints.
    pub fn constraint_violation(&self, p_max: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..TRANSMITTERS {
            let p: f64 = self.comm_power[j].iter().sum::<f64>() + self.pos_power[j];
            worst = worst.max((p - p_max).abs());
            let s: f64 = self.bandwidth[j].iter().sum();
            worst = worst.max((s - 1.0).abs());
            for v in self.comm_power[j].iter().chain(&self.bandwidth[j]) {
                worst = worst.max(-v);
            }
            worst = worst.max(-self.pos_power[j]);
        }
        worst
    }
}

/// Per-link and per-user rates in bits/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub link_rates: [Vec<f64>; TRANSMITTERS],
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
}

impl RateTable {
    pub fn from_links(link_rates: [Vec<f64>; TRANSMITTERS]) -> Self {
        let k = link_rates[0].len();
        let user_rates: Vec<f64> = (0..k).map(|u| link_rates.iter().map(|row| row[u]).sum()).collect();
        let sum_rate = user_rates.iter().sum();
        Self { link_rates, user_rates, sum_rate }
    }

    pub fn min_user_rate(&self) -> f64 {
        self.user_rates.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
