//! Lane-change plant: planar dynamic bicycle model with linear tire forces.
//!
//! Longitudinal motion is frozen (constant body-frame forward speed); the
//! controlled quantity is the front steering angle, which reaches the wheels
//! through a first-order lag stored in `delta_old`.

use super::PlantError;
use crate::scalar::Real;

/// Lateral-dynamics state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneState<T> {
    /// Lateral offset from the target centerline [m].
    pub e: T,
    /// Heading angle relative to the lane direction [rad].
    pub phi: T,
    /// Longitudinal body velocity [m/s]; must stay positive.
    pub u: T,
    /// Lateral body velocity [m/s].
    pub v: T,
    /// Yaw rate [rad/s].
    pub omega: T,
    /// Steering angle currently at the wheels [rad] (lagged command).
    pub delta_old: T,
}

impl<T: Real> LaneState<T> {
    pub fn new(e: T, phi: T, u: T, v: T, omega: T, delta_old: T) -> Self {
        Self { e, phi, u, v, omega, delta_old }
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite()
            && self.phi.is_finite()
            && self.u.is_finite()
            && self.v.is_finite()
            && self.omega.is_finite()
            && self.delta_old.is_finite()
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.e, self.phi, self.u, self.v, self.omega, self.delta_old]
    }
}

/// Bicycle-model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneParams<T> {
    /// Vehicle mass [kg].
    pub m: T,
    /// Yaw inertia [kg·m²].
    pub iz: T,
    /// Front/rear cornering stiffness [N/rad]; negative by convention.
    pub kf: T,
    pub kr: T,
    /// Centroid-to-axle distances [m].
    pub lf: T,
    pub lr: T,
    /// Steering lag constant [s].
    pub tau: T,
    /// Steering bounds [rad].
    pub delta_max: T,
    pub delta_min: T,
}

impl<T: Real> Default for LaneParams<T> {
    fn default() -> Self {
        let delta_max = T::lit(5.0_f64.to_radians());
        Self {
            m: T::lit(1470.0),
            iz: T::lit(2400.0),
            kf: T::lit(-100_000.0),
            kr: T::lit(-100_000.0),
            lf: T::lit(1.085),
            lr: T::lit(2.503),
            tau: T::lit(0.1),
            delta_max,
            delta_min: -delta_max,
        }
    }
}

impl<T: Real> LaneParams<T> {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.m > T::zero() && self.iz > T::zero()) {
            return Err(PlantError::InvalidParam("m and Iz must be positive"));
        }
        if !(self.lf > T::zero() && self.lr > T::zero()) {
            return Err(PlantError::InvalidParam("lf and lr must be positive"));
        }
        if !(self.kf < T::zero() && self.kr < T::zero()) {
            return Err(PlantError::InvalidParam("kf and kr must be negative"));
        }
        if !(self.tau > T::zero()) {
            return Err(PlantError::InvalidParam("tau must be positive"));
        }
        if !(self.delta_min < self.delta_max) {
            return Err(PlantError::InvalidParam("delta_min must be below delta_max"));
        }
        Ok(())
    }
}

/// Time derivative of [`LaneState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneRate<T> {
    pub e: T,
    pub phi: T,
    pub u: T,
    pub v: T,
    pub omega: T,
    pub delta_old: T,
}

/// Linear tire forces for small slip angles.
///
/// Front: F_Y1 = kf·((v + lf·ω)/u − δ); rear: F_Y2 = kr·(v − lr·ω)/u.
/// The steering angle sits inside the front slip angle, so a positive δ at
/// zero sideslip produces a positive (leftward) front force for negative kf.
pub fn lane_forces<T: Real>(
    s: &LaneState<T>,
    delta: T,
    p: &LaneParams<T>,
) -> Result<(T, T), PlantError> {
    if !(s.u > T::zero()) {
        return Err(PlantError::NonPositiveSpeed);
    }
    let f_y1 = p.kf * ((s.v + p.lf * s.omega) / s.u - delta);
    let f_y2 = p.kr * (s.v - p.lr * s.omega) / s.u;
    Ok((f_y1, f_y2))
}

/// Continuous-time lateral dynamics with frozen longitudinal speed.
pub fn lane_derivative<T: Real>(
    s: &LaneState<T>,
    delta: T,
    p: &LaneParams<T>,
) -> Result<LaneRate<T>, PlantError> {
    if !s.is_finite() {
        return Err(PlantError::NonFinite("state"));
    }
    if !delta.is_finite() {
        return Err(PlantError::NonFinite("control"));
    }
    let (f_y1, f_y2) = lane_forces(s, delta, p)?;
    let cos_d = delta.cos();
    Ok(LaneRate {
        e: s.v * s.phi.cos() + s.u * s.phi.sin(),
        phi: s.omega,
        u: T::zero(),
        v: -s.u * s.omega + (f_y1 * cos_d + f_y2) / p.m,
        omega: (p.lf * f_y1 * cos_d - p.lr * f_y2) / p.iz,
        delta_old: (delta - s.delta_old) / p.tau,
    })
}

/// One explicit-Euler step of the lateral dynamics.
pub fn lane_step<T: Real>(
    s: &LaneState<T>,
    delta: T,
    p: &LaneParams<T>,
    dt: T,
) -> Result<LaneState<T>, PlantError> {
    if !(dt > T::zero()) {
        return Err(PlantError::NonPositiveDt);
    }
    let rate = lane_derivative(s, delta, p)?;
    Ok(LaneState {
        e: s.e + dt * rate.e,
        phi: s.phi + dt * rate.phi,
        u: s.u,
        v: s.v + dt * rate.v,
        omega: s.omega + dt * rate.omega,
        delta_old: s.delta_old + dt * rate.delta_old,
    })
}
