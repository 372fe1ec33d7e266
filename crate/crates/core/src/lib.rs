//! Joint 3D placement of a UAV anchor/base station and communication and
//! positioning resource allocation for a network of three ground base
//! stations plus one UAV serving `K` ground users.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: scenario description, outage-rate link model and the
//!   noncentral chi-squared machinery behind it.
//! - [`locgeom`]: TDoA localization geometry, D-optimality metrics, CRLB and
//!   the closed-form conic feasibility region of the UAV.
//! - [`bapo`]: bandwidth and communication power allocation for a fixed UAV
//!   position (dual/Lambert-W structure plus a linear program).
//! - [`placement`]: UAV position update by successive convex approximation
//!   over the intersection of the per-user feasibility cones.
//! - [`gibbs`]: annealed Gibbs search over the discretized positioning powers
//!   of the ground stations, wrapping the alternating inner loop.
//! - [`baselines`]: PSO, equal power allocation, UAV-at-centroid and the
//!   CRLB anchor-placement grid study.
//! - [`harness`]: configuration loading, experiments and result persistence.

pub mod bapo;
pub mod baselines;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod locgeom;
pub mod model;
pub mod placement;
pub mod solution;

pub use error::{Error, Result};
pub use model::{Allocation, ChannelParams, Position3, RateTable, ScenarioConfig};
pub use solution::{Diagnostics, Method, Solution};
