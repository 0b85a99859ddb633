//! Desk-scale control laboratory for studying how integral-action reward
//! shaping affects steady-state error in continuous-control reinforcement
//! learning.
//!
//! The crate bundles:
//! - two vehicle plants (car following and lane change) with explicit-Euler
//!   integration ([`plant`]),
//! - four reward families, including two PI variants that penalize an
//!   accumulated error integral ([`reward`]),
//! - a fixed-length episodic environment with trajectory metrics ([`env`]),
//! - small fully-connected networks with analytic backprop and an Adam-style
//!   optimizer ([`nn`]),
//! - a from-scratch DDPG trainer ([`ddpg`]),
//! - an open-loop trajectory optimizer over the same costs ([`trajopt`]),
//! - a configuration and experiment harness ([`config`], [`harness`]).
//!
//! The numeric core is generic over [`scalar::Real`] (f32 or f64); the f64
//! aliases below are what the harness and CLI use.

pub mod scalar;

pub mod ddpg;
pub mod env;
pub mod nn;
pub mod plant;
pub mod reward;

pub use scalar::Real;

/// f64 car-following state, the precision the experiments run at.
pub type AccState = plant::AccState<f64>;
pub type AccParams = plant::AccParams<f64>;
pub type LaneState = plant::LaneState<f64>;
pub type LaneParams = plant::LaneParams<f64>;
pub type RewardWeights = reward::RewardWeights<f64>;
pub type Normalizers = reward::Normalizers<f64>;
pub type KappaParams = reward::KappaParams<f64>;
pub type ErrorAccumulator = reward::ErrorAccumulator<f64>;
pub type EnvConfig = env::EnvConfig<f64>;
pub type Env = env::Env<f64>;
pub type EpisodeLog = env::EpisodeLog<f64>;
