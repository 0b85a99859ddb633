//! Episode-level environment: reset, step (integrate → reward → log),
//! fixed-length termination, and trajectory metrics.
//!
//! Episodes always run exactly `episode_len` steps. The only exception is an
//! optional training-time guard that freezes a diverged plant and pins the
//! remaining rewards at the worst value seen, keeping replay contents
//! bounded without changing episode length.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::plant::{
    acc_derivative, acc_step, clamp_action, lane_derivative, lane_step, AccParams, AccState,
    LaneParams, LaneState, PlantError,
};
use crate::reward::{
    compute_reward, AccumMethod, ErrorAccumulator, KappaParams, Normalizers, RewardError,
    RewardKind, RewardWeights,
};
use crate::scalar::Real;

/// Window (in steps) used by the default steady-state error metric.
pub const SSE_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("episode log is empty")]
    EmptyLog,
    #[error("metric window must be in 1..=len")]
    BadWindow,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which plant the environment simulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlantKind {
    Acc,
    LaneChange,
}

impl PlantKind {
    pub fn state_fields(self) -> &'static [&'static str] {
        match self {
            PlantKind::Acc => &["e", "e_v", "a_r"],
            PlantKind::LaneChange => &["e", "phi", "u", "v", "omega", "delta_old"],
        }
    }

    pub fn state_dim(self) -> usize {
        self.state_fields().len()
    }
}

/// Plant parameters, tagged by kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlantConfig<T> {
    Acc(AccParams<T>),
    Lane(LaneParams<T>),
}

impl<T: Real> PlantConfig<T> {
    pub fn kind(&self) -> PlantKind {
        match self {
            PlantConfig::Acc(_) => PlantKind::Acc,
            PlantConfig::Lane(_) => PlantKind::LaneChange,
        }
    }

    pub fn action_bounds(&self) -> (T, T) {
        match self {
            PlantConfig::Acc(p) => (p.u_min, p.u_max),
            PlantConfig::Lane(p) => (p.delta_min, p.delta_max),
        }
    }

    fn validate(&self) -> Result<(), PlantError> {
        match self {
            PlantConfig::Acc(p) => p.validate(),
            PlantConfig::Lane(p) => p.validate(),
        }
    }
}

/// Reward family plus all of its per-plant parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardSpec<T> {
    pub kind: RewardKind,
    pub weights: RewardWeights<T>,
    pub normalizers: Normalizers<T>,
    /// Accumulation gate for PI method 1 [timestep index].
    pub t_threshold: usize,
    /// Sigmoid scale for PI method 2.
    pub kappa_a: T,
}

impl<T: Real> RewardSpec<T> {
    /// Car-following defaults: equal thirds, e_nmax 15 m, c_nmax 60 m,
    /// threshold step 125, sigmoid scale 1/10, w4 0.1 (PI1) / 0.05 (PI2).
    pub fn acc_default(kind: RewardKind) -> Self {
        let w4 = match kind {
            RewardKind::PiMethod1 => T::lit(0.1),
            RewardKind::PiMethod2 => T::lit(0.05),
            _ => T::zero(),
        };
        Self {
            kind,
            weights: RewardWeights::thirds(w4),
            normalizers: Normalizers {
                err_nmax: T::lit(15.0),
                act_max: T::lit(2.0),
                act_min: T::lit(-3.0),
                c_nmax: T::lit(60.0),
                tau: T::lit(0.4),
            },
            t_threshold: 125,
            kappa_a: T::lit(0.1),
        }
    }

    /// Lane-change defaults: y_nmax 4 m, c_nmax 15 m, threshold step 30,
    /// sigmoid scale 1/10, w4 0.1 (PI1) / 0.5 (PI2).
    pub fn lane_default(kind: RewardKind) -> Self {
        let w4 = match kind {
            RewardKind::PiMethod1 => T::lit(0.1),
            RewardKind::PiMethod2 => T::lit(0.5),
            _ => T::zero(),
        };
        let delta_max = T::lit(5.0_f64.to_radians());
        Self {
            kind,
            weights: RewardWeights::thirds(w4),
            normalizers: Normalizers {
                err_nmax: T::lit(4.0),
                act_max: delta_max,
                act_min: -delta_max,
                c_nmax: T::lit(15.0),
                tau: T::lit(0.1),
            },
            t_threshold: 30,
            kappa_a: T::lit(0.1),
        }
    }

    fn fresh_accumulator(&self, episode_len: usize) -> Result<Option<ErrorAccumulator<T>>, RewardError> {
        match self.kind {
            RewardKind::PiMethod1 => Ok(Some(ErrorAccumulator::new(AccumMethod::Threshold {
                t_threshold: self.t_threshold,
            }))),
            RewardKind::PiMethod2 => Ok(Some(ErrorAccumulator::new(AccumMethod::Sigmoid(
                KappaParams::new(self.kappa_a, episode_len)?,
            )))),
            _ => Ok(None),
        }
    }
}

/// Full environment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig<T> {
    pub plant: PlantConfig<T>,
    pub dt: T,
    pub episode_len: usize,
    pub initial: Vec<T>,
    pub reward: RewardSpec<T>,
    /// Per-component nominal magnitudes dividing the raw state to form the
    /// observation the agent sees.
    pub obs_scale: Vec<T>,
    pub seed: u64,
    /// Additive initial-state jitter as a fraction of `obs_scale`; 0 disables.
    pub initial_jitter: T,
    /// Training-time divergence guard threshold, in multiples of err_nmax.
    pub divergence_factor: T,
}

impl<T: Real> EnvConfig<T> {
    /// Car-following environment per the reference parameter table.
    pub fn acc(kind: RewardKind) -> Self {
        Self {
            plant: PlantConfig::Acc(AccParams::default()),
            dt: T::lit(0.1),
            episode_len: 600,
            initial: vec![T::lit(5.0), T::lit(5.0), T::zero()],
            reward: RewardSpec::acc_default(kind),
            obs_scale: vec![T::lit(15.0), T::lit(15.0), T::lit(3.0)],
            seed: 0,
            initial_jitter: T::zero(),
            divergence_factor: T::lit(10.0),
        }
    }

    /// Lane-change environment per the reference parameter table.
    pub fn lane(kind: RewardKind) -> Self {
        let delta_max = T::lit(5.0_f64.to_radians());
        Self {
            plant: PlantConfig::Lane(LaneParams::default()),
            dt: T::lit(0.1),
            episode_len: 150,
            initial: vec![
                T::lit(4.0),
                T::zero(),
                T::lit(30.0),
                T::zero(),
                T::zero(),
                T::zero(),
            ],
            reward: RewardSpec::lane_default(kind),
            obs_scale: vec![
                T::lit(4.0),
                T::one(),
                T::lit(30.0),
                T::lit(5.0),
                T::one(),
                delta_max,
            ],
            seed: 0,
            initial_jitter: T::zero(),
            divergence_factor: T::lit(10.0),
        }
    }

    pub fn kind(&self) -> PlantKind {
        self.plant.kind()
    }

    pub fn action_bounds(&self) -> (T, T) {
        self.plant.action_bounds()
    }

    pub fn obs_dim(&self) -> usize {
        self.kind().state_dim()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.plant.validate()?;
        self.reward.weights.validate()?;
        self.reward.normalizers.validate()?;
        if self.episode_len == 0 {
            return Err(EnvError::InvalidConfig("episode_len must be positive".into()));
        }
        if !(self.dt > T::zero()) {
            return Err(EnvError::InvalidConfig("dt must be positive".into()));
        }
        let dim = self.kind().state_dim();
        if self.initial.len() != dim {
            return Err(EnvError::InvalidConfig(format!(
                "initial state has {} components, plant needs {dim}",
                self.initial.len()
            )));
        }
        if self.obs_scale.len() != dim {
            return Err(EnvError::InvalidConfig(format!(
                "obs_scale has {} components, plant needs {dim}",
                self.obs_scale.len()
            )));
        }
        if self.obs_scale.iter().any(|s| !(*s > T::zero())) {
            return Err(EnvError::InvalidConfig("obs_scale must be positive".into()));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidConfig("initial state must be finite".into()));
        }
        if let PlantKind::LaneChange = self.kind() {
            if !(self.initial[2] > T::zero()) {
                return Err(EnvError::InvalidConfig(
                    "lane initial longitudinal speed must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn scale_obs(&self, raw: &[T]) -> Vec<T> {
        raw.iter().zip(&self.obs_scale).map(|(v, s)| *v / *s).collect()
    }

    pub fn unscale_obs(&self, obs: &[T]) -> Vec<T> {
        obs.iter().zip(&self.obs_scale).map(|(v, s)| *v * *s).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum PlantState<T> {
    Acc(AccState<T>),
    Lane(LaneState<T>),
}

impl<T: Real> PlantState<T> {
    fn from_vec(kind: PlantKind, v: &[T]) -> Self {
        match kind {
            PlantKind::Acc => PlantState::Acc(AccState::new(v[0], v[1], v[2])),
            PlantKind::LaneChange => {
                PlantState::Lane(LaneState::new(v[0], v[1], v[2], v[3], v[4], v[5]))
            }
        }
    }

    fn to_vec(&self) -> Vec<T> {
        match self {
            PlantState::Acc(s) => s.to_vec(),
            PlantState::Lane(s) => s.to_vec(),
        }
    }

    fn error(&self) -> T {
        match self {
            PlantState::Acc(s) => s.e,
            PlantState::Lane(s) => s.e,
        }
    }
}

/// Per-step auxiliary outputs exposed alongside the observation.
#[derive(Clone, Debug)]
pub struct StepInfo<T> {
    /// Raw (unscaled) post-step plant state.
    pub state: Vec<T>,
    /// Actuator rate used in the reward's state-rate term.
    pub rate: T,
    /// Accumulated error integral after this step (0 for non-PI kinds).
    pub c_i: T,
    /// Whether the training-time divergence guard is active.
    pub truncated: bool,
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct Step<T> {
    pub obs: Vec<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
}

/// One recorded step of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct LogStep<T> {
    pub t: usize,
    pub state: Vec<T>,
    pub action: T,
    pub reward: T,
    pub rate: T,
    pub c_i: T,
}

/// Full-trajectory record of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog<T> {
    pub plant: PlantKind,
    pub steps: Vec<LogStep<T>>,
}

impl<T: Real> EpisodeLog<T> {
    pub fn new(plant: PlantKind) -> Self {
        Self { plant, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Mean |tracking error| over the final `window` steps.
    pub fn steady_state_error(&self, window: usize) -> Result<T, EnvError> {
        if self.is_empty() {
            return Err(EnvError::EmptyLog);
        }
        if window == 0 || window > self.len() {
            return Err(EnvError::BadWindow);
        }
        let tail = &self.steps[self.len() - window..];
        let sum = tail.iter().fold(T::zero(), |s, step| s + step.state[0].abs());
        Ok(sum / T::lit(window as f64))
    }

    /// |tracking error| at the final step.
    pub fn final_abs_error(&self) -> Result<T, EnvError> {
        self.steps.last().map(|s| s.state[0].abs()).ok_or(EnvError::EmptyLog)
    }

    /// Sum of rewards over the episode, no discounting.
    pub fn undiscounted_return(&self) -> T {
        self.steps.iter().fold(T::zero(), |s, step| s + step.reward)
    }

    /// Largest |actuator rate| over the episode.
    pub fn peak_rate(&self) -> Result<T, EnvError> {
        if self.is_empty() {
            return Err(EnvError::EmptyLog);
        }
        Ok(self.steps.iter().fold(T::zero(), |m, step| m.max(step.rate.abs())))
    }

    /// CSV with columns `t, <state fields...>, action, reward, rate, c_I`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for field in self.plant.state_fields() {
            out.push(',');
            out.push_str(field);
        }
        out.push_str(",action,reward,rate,c_I\n");
        for step in &self.steps {
            out.push_str(&step.t.to_string());
            for v in &step.state {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push_str(&format!(",{},{},{},{}\n", step.action, step.reward, step.rate, step.c_i));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EnvError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// The episodic environment. One instance is single-threaded; independent
/// instances are safe to run in parallel.
#[derive(Clone, Debug)]
pub struct Env<T: Real> {
    cfg: EnvConfig<T>,
    state: PlantState<T>,
    accumulator: Option<ErrorAccumulator<T>>,
    t: usize,
    done: bool,
    truncated: bool,
    worst_reward: T,
    training_truncation: bool,
    rng: ChaCha8Rng,
}

impl<T: Real> Env<T> {
    pub fn new(cfg: EnvConfig<T>) -> Result<Self, EnvError> {
        cfg.validate()?;
        let state = PlantState::from_vec(cfg.kind(), &cfg.initial);
        let accumulator = cfg.reward.fresh_accumulator(cfg.episode_len)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            state,
            accumulator,
            t: 0,
            done: false,
            truncated: false,
            worst_reward: T::zero(),
            training_truncation: false,
            rng,
        })
    }

    /// Enable the divergence guard (training only; evaluation never truncates).
    pub fn set_training_truncation(&mut self, on: bool) {
        self.training_truncation = on;
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.cfg
    }

    pub fn kind(&self) -> PlantKind {
        self.cfg.kind()
    }

    pub fn action_bounds(&self) -> (T, T) {
        self.cfg.action_bounds()
    }

    pub fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    pub fn episode_len(&self) -> usize {
        self.cfg.episode_len
    }

    pub fn current_step(&self) -> usize {
        self.t
    }

    /// Start a fresh episode and return the initial observation.
    pub fn reset(&mut self) -> Vec<T> {
        let mut initial = self.cfg.initial.clone();
        if self.cfg.initial_jitter > T::zero() {
            for (v, s) in initial.iter_mut().zip(&self.cfg.obs_scale) {
                let u = T::lit(self.rng.gen_range(-1.0..1.0));
                *v = *v + self.cfg.initial_jitter * *s * u;
            }
            // Jitter must not push the lane model below stall speed.
            if self.cfg.kind() == PlantKind::LaneChange && !(initial[2] > T::zero()) {
                initial[2] = self.cfg.initial[2];
            }
        }
        self.state = PlantState::from_vec(self.cfg.kind(), &initial);
        self.accumulator = self
            .cfg
            .reward
            .fresh_accumulator(self.cfg.episode_len)
            .expect("validated at construction");
        self.t = 0;
        self.done = false;
        self.truncated = false;
        self.worst_reward = T::zero();
        self.cfg.scale_obs(&self.state.to_vec())
    }

    /// Advance one step: clamp the action, integrate the plant, evaluate the
    /// reward at the post-step error, and advance the accumulator.
    pub fn step(&mut self, action: T) -> Result<Step<T>, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let (lo, hi) = self.action_bounds();
        let a = clamp_action(action, lo, hi);

        let (reward, rate) = if self.truncated {
            // Plant frozen after divergence; keep feeding the worst reward.
            (self.worst_reward, T::zero())
        } else {
            let (rate, next_state) = match (&self.state, &self.cfg.plant) {
                (PlantState::Acc(s), PlantConfig::Acc(p)) => {
                    let rate = acc_derivative(s, a, p)?.a_r;
                    (rate, PlantState::Acc(acc_step(s, a, p, self.cfg.dt)?))
                }
                (PlantState::Lane(s), PlantConfig::Lane(p)) => {
                    let rate = lane_derivative(s, a, p)?.delta_old;
                    (rate, PlantState::Lane(lane_step(s, a, p, self.cfg.dt)?))
                }
                _ => unreachable!("state kind always matches plant kind"),
            };
            let err = next_state.error();
            let (reward, next_acc) = compute_reward(
                self.cfg.reward.kind,
                err,
                a,
                rate,
                self.accumulator,
                &self.cfg.reward.weights,
                &self.cfg.reward.normalizers,
            )?;
            self.accumulator = next_acc;
            self.state = next_state;
            self.worst_reward = self.worst_reward.min(reward);
            if self.training_truncation
                && err.abs() > self.cfg.divergence_factor * self.cfg.reward.normalizers.err_nmax
            {
                self.truncated = true;
            }
            (reward, rate)
        };

        self.t += 1;
        self.done = self.t == self.cfg.episode_len;
        let state = self.state.to_vec();
        Ok(Step {
            obs: self.cfg.scale_obs(&state),
            reward,
            done: self.done,
            info: StepInfo {
                state,
                rate,
                c_i: self.accumulator.map_or(T::zero(), |acc| acc.c_i),
                truncated: self.truncated,
            },
        })
    }

    /// Run one full episode under `policy(step_index, observation)`,
    /// returning the trajectory log.
    pub fn rollout<F>(&mut self, mut policy: F) -> Result<EpisodeLog<T>, EnvError>
    where
        F: FnMut(usize, &[T]) -> T,
    {
        let mut obs = self.reset();
        let mut log = EpisodeLog::new(self.kind());
        for t in 0..self.episode_len() {
            let action = policy(t, &obs);
            let (lo, hi) = self.action_bounds();
            let step = self.step(action)?;
            log.steps.push(LogStep {
                t,
                state: step.info.state.clone(),
                action: clamp_action(action, lo, hi),
                reward: step.reward,
                rate: step.info.rate,
                c_i: step.info.c_i,
            });
            obs = step.obs;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::quadratic_reward;
    use rand::Rng;

    #[test]
    fn acc_reset_returns_scaled_initial() {
        let mut env = Env::new(EnvConfig::<f64>::acc(RewardKind::Quadratic)).unwrap();
        let obs = env.reset();
        assert_eq!(obs, vec![5.0 / 15.0, 5.0 / 15.0, 0.0]);
    }

    #[test]
    fn lane_reset_returns_scaled_initial() {
        let mut env = Env::new(EnvConfig::<f64>::lane(RewardKind::Quadratic)).unwrap();
        let obs = env.reset();
        assert_eq!(obs.len(), 6);
        assert_eq!(obs[0], 1.0);
        assert_eq!(obs[2], 1.0);
    }

    #[test]
    fn resets_are_deterministic() {
        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.initial_jitter = 0.1;
        cfg.seed = 42;
        let mut a = Env::new(cfg.clone()).unwrap();
        let mut b = Env::new(cfg).unwrap();
        for _ in 0..5 {
            assert_eq!(a.reset(), b.reset());
        }
    }

    #[test]
    fn first_acc_step_matches_hand_composition() {
        let cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        let mut env = Env::new(cfg.clone()).unwrap();
        env.reset();
        let step = env.step(0.0).unwrap();
        assert_eq!(step.info.state, vec![5.5, 5.0, 0.0]);
        let expect = quadratic_reward(5.5, 0.0, 0.0, &cfg.reward.weights, &cfg.reward.normalizers);
        assert_eq!(step.reward, expect);
        assert!(!step.done);
    }

    #[test]
    fn lane_zero_steering_keeps_offset_and_reward() {
        let mut env = Env::new(EnvConfig::<f64>::lane(RewardKind::Quadratic)).unwrap();
        env.reset();
        let first = env.step(0.0).unwrap();
        let second = env.step(0.0).unwrap();
        assert_eq!(first.info.state[0], 4.0);
        assert_eq!(second.info.state[0], 4.0);
        assert_eq!(first.reward, second.reward);
    }

    #[test]
    fn rewards_never_positive() {
        for kind in [
            RewardKind::Quadratic,
            RewardKind::Absolute,
            RewardKind::PiMethod1,
            RewardKind::PiMethod2,
        ] {
            let mut env = Env::new(EnvConfig::<f64>::acc(kind)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            env.reset();
            for _ in 0..env.episode_len() {
                let step = env.step(rng.gen_range(-3.0..2.0)).unwrap();
                assert!(step.reward <= 0.0);
            }
        }
    }

    #[test]
    fn episode_ends_exactly_at_len_and_rejects_extra_steps() {
        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.episode_len = 10;
        let mut env = Env::new(cfg).unwrap();
        env.reset();
        for t in 0..10 {
            let step = env.step(0.5).unwrap();
            assert_eq!(step.done, t == 9);
        }
        assert!(matches!(env.step(0.5), Err(EnvError::EpisodeFinished)));
    }

    #[test]
    fn pi_accumulator_is_non_decreasing() {
        for kind in [RewardKind::PiMethod1, RewardKind::PiMethod2] {
            let mut env = Env::new(EnvConfig::<f64>::acc(kind)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            env.reset();
            let mut prev = 0.0;
            for _ in 0..env.episode_len() {
                let step = env.step(rng.gen_range(-3.0..2.0)).unwrap();
                assert!(step.info.c_i >= prev);
                prev = step.info.c_i;
            }
            assert!(prev > 0.0);
        }
    }

    #[test]
    fn observation_scaling_is_bijective() {
        let cfg = EnvConfig::<f64>::lane(RewardKind::Quadratic);
        let raw = vec![2.5, 0.1, 28.0, -0.4, 0.05, -0.02];
        let round = cfg.unscale_obs(&cfg.scale_obs(&raw));
        for (a, b) in raw.iter().zip(&round) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn same_actions_give_bitwise_identical_logs() {
        let cfg = EnvConfig::<f64>::acc(RewardKind::PiMethod2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let actions: Vec<f64> = (0..600).map(|_| rng.gen_range(-3.0..2.0)).collect();
        let run = || {
            let mut env = Env::new(cfg.clone()).unwrap();
            env.rollout(|t, _| actions[t]).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.reward.to_bits(), y.reward.to_bits());
            assert_eq!(x.c_i.to_bits(), y.c_i.to_bits());
            for (u, v) in x.state.iter().zip(&y.state) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn steady_state_error_metric() {
        let mut log = EpisodeLog::<f64>::new(PlantKind::Acc);
        for t in 0..10 {
            let e = if t < 8 { 1.0 } else { [0.2, 0.4][t - 8] };
            log.steps.push(LogStep { t, state: vec![e, 0.0, 0.0], action: 0.0, reward: 0.0, rate: 0.0, c_i: 0.0 });
        }
        assert!((log.steady_state_error(2).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(log.final_abs_error().unwrap(), 0.4);

        let constant: EpisodeLog<f64> = EpisodeLog {
            plant: PlantKind::Acc,
            steps: (0..5)
                .map(|t| LogStep { t, state: vec![-0.27, 0.0, 0.0], action: 0.0, reward: 0.0, rate: 0.0, c_i: 0.0 })
                .collect::<Vec<_>>(),
        };
        assert!((constant.steady_state_error(5).unwrap() - 0.27).abs() < 1e-15);

        let empty = EpisodeLog::<f64>::new(PlantKind::Acc);
        assert!(matches!(empty.steady_state_error(1), Err(EnvError::EmptyLog)));
        assert!(matches!(log.steady_state_error(0), Err(EnvError::BadWindow)));
        assert!(matches!(log.steady_state_error(11), Err(EnvError::BadWindow)));
    }

    #[test]
    fn undiscounted_return_matches_oracle() {
        let mut log = EpisodeLog::<f64>::new(PlantKind::Acc);
        assert_eq!(log.undiscounted_return(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rewards: Vec<f64> = (0..100).map(|_| -rng.gen_range(0.0..2.0)).collect();
        for (t, &r) in rewards.iter().enumerate() {
            log.steps.push(LogStep { t, state: vec![0.0, 0.0, 0.0], action: 0.0, reward: r, rate: 0.0, c_i: 0.0 });
        }
        let oracle: f64 = rewards.iter().sum();
        assert!((log.undiscounted_return() - oracle).abs() < 1e-12);

        let mut small = EpisodeLog::<f64>::new(PlantKind::Acc);
        for (t, r) in [-1.0, -2.0].into_iter().enumerate() {
            small.steps.push(LogStep { t, state: vec![0.0; 3], action: 0.0, reward: r, rate: 0.0, c_i: 0.0 });
        }
        assert_eq!(small.undiscounted_return(), -3.0);
    }

    #[test]
    fn peak_rate_examples() {
        let mut env = Env::new(EnvConfig::<f64>::acc(RewardKind::Quadratic)).unwrap();
        let zero_log = env.rollout(|_, _| 0.0).unwrap();
        assert_eq!(zero_log.peak_rate().unwrap(), 0.0);

        // One full-throttle step from a_r = 0 with tau = 0.4 commands 5 m/s^3.
        let mut env = Env::new(EnvConfig::<f64>::acc(RewardKind::Quadratic)).unwrap();
        env.reset();
        let step = env.step(2.0).unwrap();
        assert_eq!(step.info.rate, 5.0);

        let mut log = EpisodeLog::<f64>::new(PlantKind::Acc);
        for (t, r) in [0.5, -1.5, 1.0].into_iter().enumerate() {
            log.steps.push(LogStep { t, state: vec![0.0; 3], action: 0.0, reward: 0.0, rate: r, c_i: 0.0 });
        }
        assert_eq!(log.peak_rate().unwrap(), 1.5);
    }

    #[test]
    fn csv_schema_is_exact() {
        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.episode_len = 2;
        let mut env = Env::new(cfg).unwrap();
        let log = env.rollout(|_, _| 1.0).unwrap();
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,e,e_v,a_r,action,reward,rate,c_I");
        assert_eq!(lines.count(), 2);

        let mut cfg = EnvConfig::<f64>::lane(RewardKind::Quadratic);
        cfg.episode_len = 1;
        let mut env = Env::new(cfg).unwrap();
        let log = env.rollout(|_, _| 0.0).unwrap();
        assert!(log.to_csv().starts_with("t,e,phi,u,v,omega,delta_old,action,reward,rate,c_I\n"));
    }

    #[test]
    fn training_truncation_freezes_and_pins_worst_reward() {
        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.episode_len = 50;
        // Tiny nominal error so the guard fires immediately from the initial error.
        cfg.reward.normalizers.err_nmax = 0.01;
        let mut env = Env::new(cfg).unwrap();
        env.set_training_truncation(true);
        env.reset();
        let first = env.step(2.0).unwrap();
        assert!(first.info.truncated);
        let frozen_state = first.info.state.clone();
        let mut count = 1;
        let mut last_reward = first.reward;
        while count < 50 {
            let step = env.step(-3.0).unwrap();
            assert_eq!(step.info.state, frozen_state);
            assert_eq!(step.reward, last_reward);
            last_reward = step.reward;
            count += 1;
        }
        assert!(env.step(0.0).is_err());
    }

    #[test]
    fn eval_mode_never_truncates() {
        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.episode_len = 20;
        cfg.reward.normalizers.err_nmax = 0.01;
        let mut env = Env::new(cfg).unwrap();
        env.reset();
        for _ in 0..20 {
            let step = env.step(2.0).unwrap();
            assert!(!step.info.truncated);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.initial = vec![1.0, 2.0];
        assert!(Env::new(cfg).is_err());

        let mut cfg = EnvConfig::<f64>::lane(RewardKind::Quadratic);
        cfg.initial[2] = 0.0;
        assert!(Env::new(cfg).is_err());

        let mut cfg = EnvConfig::<f64>::acc(RewardKind::Quadratic);
        cfg.episode_len = 0;
        assert!(Env::new(cfg).is_err());
    }
}
