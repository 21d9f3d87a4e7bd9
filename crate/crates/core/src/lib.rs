//! Learned risk-field motion planning.
//!
//! A multi-modal Gaussian predictor forecasts surrounding agents, an
//! exponential risk field turns map distances and predicted occupancy into
//! per-point risk, and a lattice planner picks the cheapest candidate. The
//! risk and cost parameters are fitted by imitating expert demonstrations.

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod planner;
pub mod predictor;
pub mod registry;
pub mod riskfield;
pub mod scenario;
pub mod training;

pub use error::{Error, Result};
