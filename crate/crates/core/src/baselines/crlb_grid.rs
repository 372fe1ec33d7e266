//! Placement of a fourth anchor (UAV or ground station) minimizing the 3D
//! CRLB of a ground target, evaluated over a square grid of targets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locgeom::{crlb, geometry_frame, tdoa_covariance, toa_variance, AnchorKind, ToaVariances};
use crate::model::{ChannelParams, Position3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorScheme {
    /// UAV at a fixed altitude: A2G variance, no NLoS floor.
    Uav4th,
    /// Ground station at a fixed height: G2G variance with the NLoS floor.
    Ground4th,
}

impl AnchorScheme {
    pub fn name(self) -> &'static str {
        match self {
            AnchorScheme::Uav4th => "uav",
            AnchorScheme::Ground4th => "ground",
        }
    }

    fn kind(self) -> AnchorKind {
        match self {
            AnchorScheme::Uav4th => AnchorKind::Uav,
            AnchorScheme::Ground4th => AnchorKind::Bs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStudyConfig {
    /// Target grid pitch, m.
    pub cell: f64,
    /// Altitude of the fourth anchor, m.
    pub fourth_anchor_alt: f64,
    /// Positioning power of every anchor, W.
    pub anchor_pos_power: f64,
    /// Pitch of the exhaustive fourth-anchor search, m.
    pub search_pitch: f64,
    /// The map covers `[-half_extent, half_extent]²`, m.
    pub half_extent: f64,
    /// Target altitude, m.
    pub target_alt: f64,
}

impl GridStudyConfig {
    /// Desk-scale map: 50 m grid and search pitch over a 1 km square.
    pub fn desk(scheme: AnchorScheme) -> Self {
        Self {
            cell: 50.0,
            fourth_anchor_alt: match scheme {
                AnchorScheme::Uav4th => 100.0,
                AnchorScheme::Ground4th => 10.0,
            },
            anchor_pos_power: 1.0,
            search_pitch: 50.0,
            half_extent: 500.0,
            target_alt: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, msg: &str| Err(Error::Config { path: format!("grid.{path}"), msg: msg.into() });
        let divides = |pitch: f64| {
            let n = 2.0 * self.half_extent / pitch;
            (n - n.round()).abs() < 1e-9
        };
        if !(self.cell > 0.0 && self.search_pitch > 0.0 && self.half_extent > 0.0) {
            return err("cell", "pitches and extent must be > 0");
        }
        if !divides(self.cell) || !divides(self.search_pitch) {
            return err("cell", "pitches must divide the map extent");
        }
        if !(self.anchor_pos_power > 0.0) {
            return err("anchor_pos_power", "must be > 0");
        }
        Ok(())
    }

    fn axis(&self, pitch: f64) -> Vec<f64> {
        let n = (2.0 * self.half_extent / pitch).round() as usize;
        (0..=n).map(|i| -self.half_extent + pitch * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbCell {
    pub x: f64,
    pub y: f64,
    /// Errors at the best fourth-anchor position, m; NaN when every
    /// candidate position leaves the target unlocalizable.
    pub horizontal: f64,
    pub vertical: f64,
    pub best_anchor: [f64; 2],
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbMap {
    pub scheme: AnchorScheme,
    pub cells: Vec<CrlbCell>,
}

impl CrlbMap {
    /// `(min, max)` of the horizontal and vertical errors over regular cells.
    pub fn ranges(&self) -> ([f64; 2], [f64; 2]) {
        let mut h = [f64::INFINITY, f64::NEG_INFINITY];
        let mut v = [f64::INFINITY, f64::NEG_INFINITY];
        for c in self.cells.iter().filter(|c| !c.singular) {
            h = [h[0].min(c.horizontal), h[1].max(c.horizontal)];
            v = [v[0].min(c.vertical), v[1].max(c.vertical)];
        }
        (h, v)
    }
}

/// Horizontal and vertical CRLB errors of `target` with the fourth anchor at
/// `fourth`.
pub fn crlb_errors(
    target: &Position3,
    fourth: &Position3,
    bs: &[Position3; 3],
    scheme: AnchorScheme,
    power: f64,
    ch: &ChannelParams,
) -> Result<(f64, f64)> {
    let frame = geometry_frame(fourth, target, bs)?;
    let mut sigma2_bs = [0.0; 3];
    for n in 0..3 {
        sigma2_bs[n] = toa_variance(&bs[n], target, power, AnchorKind::Bs, ch)?;
    }
    let sigma2_uav = toa_variance(fourth, target, power, scheme.kind(), ch)?;
    crlb(&frame, &tdoa_covariance(&ToaVariances { sigma2_bs, sigma2_uav }))
}

/// For every target cell, the fourth-anchor horizontal position minimizing
/// the 3D error `√(h² + v²)` and the errors there.
pub fn crlb_grid_study(bs: &[Position3; 3], ch: &ChannelParams, study: &GridStudyConfig, scheme: AnchorScheme) -> Result<CrlbMap> {
    study.validate()?;
    let targets = study.axis(study.cell);
    let search = study.axis(study.search_pitch);
    let anchors: Vec<Position3> = search
        .iter()
        .flat_map(|&x| search.iter().map(move |&y| Position3::new(x, y, study.fourth_anchor_alt)))
        .collect();
    let pts: Vec<(f64, f64)> = targets.iter().flat_map(|&x| targets.iter().map(move |&y| (x, y))).collect();
    let cells = pts
        .par_iter()
        .map(|&(x, y)| {
            let target = Position3::new(x, y, study.target_alt);
            let mut best: Option<(f64, f64, f64, [f64; 2])> = None;
            for a in &anchors {
                let Ok((h, v)) = crlb_errors(&target, a, bs, scheme, study.anchor_pos_power, ch) else { continue };
                let e = h.hypot(v);
                if best.is_none_or(|b| e < b.0) {
                    best = Some((e, h, v, [a.x, a.y]));
                }
            }
            match best {
                Some((_, h, v, a)) => CrlbCell { x, y, horizontal: h, vertical: v, best_anchor: a, singular: false },
                None => CrlbCell { x, y, horizontal: f64::NAN, vertical: f64::NAN, best_anchor: [f64::NAN; 2], singular: true },
            }
        })
        .collect();
    Ok(CrlbMap { scheme, cells })
}
