//! Car-following (gap-keeping) plant.
//!
//! State-space model: the spacing and velocity errors to a lead vehicle
//! driving at constant speed, plus the actual acceleration of the controlled
//! vehicle, which tracks the commanded acceleration through a first-order
//! lag.

use super::PlantError;
use crate::scalar::Real;

/// Car-following state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccState<T> {
    /// Spacing error [m]: actual gap minus safe gap.
    pub e: T,
    /// Velocity error [m/s]: lead speed minus own speed.
    pub e_v: T,
    /// Actual acceleration of the controlled vehicle [m/s²].
    pub a_r: T,
}

impl<T: Real> AccState<T> {
    pub fn new(e: T, e_v: T, a_r: T) -> Self {
        Self { e, e_v, a_r }
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.e_v.is_finite() && self.a_r.is_finite()
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.e, self.e_v, self.a_r]
    }
}

/// Car-following parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccParams<T> {
    /// Constant headway time [s].
    pub h: T,
    /// Actuator lag constant [s].
    pub tau: T,
    /// Control bounds [m/s²].
    pub u_max: T,
    pub u_min: T,
    /// Standstill safety distance [m]. Informational: the spacing error is
    /// simulated directly, so this never enters the dynamics.
    pub d0: T,
}

impl<T: Real> Default for AccParams<T> {
    fn default() -> Self {
        Self {
            h: T::one(),
            tau: T::lit(0.4),
            u_max: T::lit(2.0),
            u_min: T::lit(-3.0),
            d0: T::zero(),
        }
    }
}

impl<T: Real> AccParams<T> {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.h > T::zero()) {
            return Err(PlantError::InvalidParam("h must be positive"));
        }
        if !(self.tau > T::zero()) {
            return Err(PlantError::InvalidParam("tau must be positive"));
        }
        if !(self.u_min < self.u_max) {
            return Err(PlantError::InvalidParam("u_min must be below u_max"));
        }
        Ok(())
    }
}

/// Time derivative of [`AccState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccRate<T> {
    pub e: T,
    pub e_v: T,
    pub a_r: T,
}

/// Continuous-time dynamics: ė = e_v − h·a_r, ė_v = −a_r, ȧ_r = (u_r − a_r)/τ.
///
/// The lead vehicle drives at constant speed, so its acceleration drops out
/// of the velocity-error equation.
pub fn acc_derivative<T: Real>(
    s: &AccState<T>,
    u_r: T,
    p: &AccParams<T>,
) -> Result<AccRate<T>, PlantError> {
    if !s.is_finite() {
        return Err(PlantError::NonFinite("state"));
    }
    if !u_r.is_finite() {
        return Err(PlantError::NonFinite("control"));
    }
    Ok(AccRate {
        e: s.e_v - p.h * s.a_r,
        e_v: -s.a_r,
        a_r: (u_r - s.a_r) / p.tau,
    })
}

/// One explicit-Euler step of the car-following dynamics.
pub fn acc_step<T: Real>(
    s: &AccState<T>,
    u_r: T,
    p: &AccParams<T>,
    dt: T,
) -> Result<AccState<T>, PlantError> {
    if !(dt > T::zero()) {
        return Err(PlantError::NonPositiveDt);
    }
    let rate = acc_derivative(s, u_r, p)?;
    Ok(AccState {
        e: s.e + dt * rate.e,
        e_v: s.e_v + dt * rate.e_v,
        a_r: s.a_r + dt * rate.a_r,
    })
}
