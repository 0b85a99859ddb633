//! Continuous-time vehicle dynamics and their discrete-time integration.
//!
//! Two plants: a longitudinal car-following model with first-order actuator
//! lag ([`acc`]) and a planar dynamic bicycle model with linear tire forces
//! ([`lane`]). Both are integrated with explicit Euler at the configured time
//! step. All functions are pure; callers own the state values.

use thiserror::Error;

use crate::scalar::Real;

pub mod acc;
pub mod lane;

pub use acc::{acc_derivative, acc_step, AccParams, AccRate, AccState};
pub use lane::{lane_derivative, lane_forces, lane_step, LaneParams, LaneRate, LaneState};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlantError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("longitudinal speed must be positive")]
    NonPositiveSpeed,
    #[error("time step must be positive")]
    NonPositiveDt,
    #[error("invalid plant parameter: {0}")]
    InvalidParam(&'static str),
}

/// Saturate a control input to `[lo, hi]`. Identity when already inside.
pub fn clamp_action<T: Real>(a: T, lo: T, hi: T) -> T {
    debug_assert!(lo < hi);
    a.max(lo).min(hi)
}
