//! Simulation and analysis of OFDM-based multi-relay position-based
//! forwarding (OMR) in duty-cycled wireless sensor networks.
//!
//! The crate is split along the layers of the model:
//! - [`field`]: Poisson node deployment, sleep schedules and strip geometry
//! - [`channel`]: aggregate channel power, detection condition, coverage contours
//! - [`engine`]: the per-hop forwarding state machine and end-to-end trials
//! - [`analytic`]: recursive statistical model of hop dynamics
//! - [`bcl`]: contention-based beaconless baseline (GeRaF-style)
//! - [`metrics`]: energy, delay, energy-delay product and normalized cost
//! - [`concurrent`]: two concurrent flows sharing a destination

// config checks written as `!(x > 0.0)` also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bcl;
pub mod channel;
pub mod concurrent;
pub mod engine;
pub mod error;
pub mod field;
pub mod metrics;
pub mod rng;
pub mod units;

pub use error::{Error, Result};
pub use field::Point2D;
