use super::{Allocation, ChannelParams, Position3, RateTable, ScenarioConfig, TRANSMITTERS, UAV};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// Ground station to ground user.
    G2G,
    /// UAV to ground user.
    A2G,
}

impl LinkKind {
    pub fn exponent(self, ch: &ChannelParams) -> f64 {
        match self {
            LinkKind::G2G => ch.iota_g,
            LinkKind::A2G => ch.iota_a,
        }
    }
}

/// Outage SNR per watt when the whole band is used:
/// `factor · β / (B N0 d^ι)`.
pub fn channel_gain(dist: f64, kind: LinkKind, factor: f64, ch: &ChannelParams) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::CoLocated);
    }
    Ok(factor * ch.beta / (ch.b_comm * ch.n0 * dist.powf(kind.exponent(ch))))
}

/// `s B log2(1 + h p / s)` with the zero-bandwidth and zero-power limits
/// taken as 0.
#[inline]
pub fn link_rate_from_gain(s: f64, p: f64, gain: f64, b: f64) -> f64 {
    if s <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    s * b * (gain * p / s).ln_1p() / std::f64::consts::LN_2
}

/// Outage-constrained achievable rate of one link, bits/s.
pub fn link_rate(s: f64, p: f64, dist: f64, kind: LinkKind, ch: &ChannelParams) -> Result<f64> {
    if s < 0.0 || p < 0.0 {
        return Err(Error::InvalidArgument("bandwidth fraction and power must be >= 0".into()));
    }
    let omega = match kind {
        LinkKind::G2G => ch.omega_g,
        LinkKind::A2G => ch.omega_a,
    };
    let factor = super::fading_factor(omega, ch.eps_out)?;
    let h = channel_gain(dist, kind, factor, ch)?;
    Ok(link_rate_from_gain(s, p, h, ch.b_comm))
}

/// Full-band outage SNR per watt for every transmitter/user pair at a given
/// UAV position.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub h: [Vec<f64>; TRANSMITTERS],
    pub bandwidth_hz: f64,
}

impl LinkGains {
    pub fn new(u: &Position3, cfg: &ScenarioConfig) -> Result<Self> {
        let (fg, fa) = cfg.channel.fading_factors()?;
        Self::with_factors(u, cfg, fg, fa)
    }

    pub fn with_factors(u: &Position3, cfg: &ScenarioConfig, fg: f64, fa: f64) -> Result<Self> {
        let ch = &cfg.channel;
        let mut h: [Vec<f64>; TRANSMITTERS] = std::array::from_fn(|_| Vec::with_capacity(cfg.users.len()));
        for w in &cfg.users {
            for (j, b) in cfg.bs.iter().enumerate() {
                h[j].push(channel_gain(b.distance(w), LinkKind::G2G, fg, ch)?);
            }
            h[UAV].push(channel_gain(u.distance(w), LinkKind::A2G, fa, ch)?);
        }
        Ok(Self { h, bandwidth_hz: ch.b_comm })
    }

    pub fn num_users(&self) -> usize {
        self.h[0].len()
    }

    pub fn rates(&self, alloc: &Allocation) -> RateTable {
        let link_rates = std::array::from_fn(|j| {
            (0..self.num_users())
                .map(|k| link_rate_from_gain(alloc.bandwidth[j][k], alloc.comm_power[j][k], self.h[j][k], self.bandwidth_hz))
                .collect()
        });
        RateTable::from_links(link_rates)
    }
}

/// Rate table of an allocation with the UAV at `u`.
pub fn evaluate_rates(u: &Position3, alloc: &Allocation, cfg: &ScenarioConfig) -> Result<RateTable> {
    if alloc.num_users() != cfg.num_users() {
        return Err(Error::InvalidArgument("allocation and scenario disagree on user count".into()));
    }
    Ok(LinkGains::new(u, cfg)?.rates(alloc))
}
