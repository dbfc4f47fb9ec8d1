//! Strongly driven two-level band model.
//!
//! A linear band crossing with gap Δ is driven by a few-cycle pulse. The
//! crate synthesizes the pulse, moves electrons through k-space by Bloch
//! acceleration, propagates the two-level state, and evaluates residual
//! populations and currents over the (γ, M) parameter plane.

pub mod analytics;
pub mod config;
pub mod constants;
pub mod error;
pub mod model;
pub mod observables;
pub mod output;
pub mod propagator;
pub mod pulse;
pub mod sweep;

pub use constants::Constants;
pub use error::{Error, Result};
pub use model::{
    compute_report, AdiabaticityReport, DriveParams, MaterialSpec, Regime, RegimeThresholds,
};
