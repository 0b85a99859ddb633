//! Deterministic-policy actor-critic training (DDPG) built on the [`nn`]
//! primitives: uniform experience replay, additive exploration noise, TD
//! targets from slowly tracking target networks, and one critic plus one
//! actor gradient step per environment step.
//!
//! A training run is strictly single-threaded and a deterministic function
//! of (environment seed, agent seed). Seed sweeps parallelize across runs,
//! never inside one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::env::{Env, EnvConfig, EnvError, EpisodeLog, SSE_WINDOW};
use crate::nn::{soft_update, Adam, Gradients, Mlp, NnError, OutputHead};
use crate::plant::clamp_action;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
}

/// Exploration noise added to the deterministic policy output.
///
/// Scales are fractions of the action range, so the same numbers mean the
/// same thing on both plants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseConfig<T> {
    Gaussian { sigma: T, decay: T, sigma_min: T },
    OrnsteinUhlenbeck { theta: T, sigma: T, dt: T },
}

impl<T: Real> Default for NoiseConfig<T> {
    fn default() -> Self {
        NoiseConfig::Gaussian { sigma: T::lit(0.3), decay: T::lit(0.995), sigma_min: T::zero() }
    }
}

/// Agent hyperparameters. The reference publication reports none of these,
/// so everything here is a conventional, config-overridable choice.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig<T> {
    pub gamma: T,
    pub lr_actor: T,
    pub lr_critic: T,
    pub tau_soft: T,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps collected before updates begin.
    pub warmup_steps: usize,
    /// Env steps between update pairs (1 = update every step).
    pub update_every: usize,
    pub noise: NoiseConfig<T>,
    pub episodes: usize,
    /// Episodes between noise-free evaluations.
    pub eval_interval: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl<T: Real> Default for AgentConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.99),
            lr_actor: T::lit(1e-4),
            lr_critic: T::lit(1e-3),
            tau_soft: T::lit(0.005),
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            update_every: 1,
            noise: NoiseConfig::default(),
            episodes: 300,
            eval_interval: 10,
            hidden: vec![64, 64],
            seed: 1,
        }
    }
}

impl<T: Real> AgentConfig<T> {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(TrainError::InvalidConfig("gamma must be in (0, 1]".into()));
        }
        if !(self.tau_soft > T::zero() && self.tau_soft <= T::one()) {
            return Err(TrainError::InvalidConfig("tau_soft must be in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(TrainError::InvalidConfig("capacities must be positive".into()));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(TrainError::InvalidConfig("batch exceeds buffer capacity".into()));
        }
        if self.episodes == 0 || self.eval_interval == 0 || self.update_every == 0 {
            return Err(TrainError::InvalidConfig("episode/eval/update counts must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(TrainError::InvalidConfig("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One (s, a, r, s', done) record.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub obs: Vec<T>,
    pub action: T,
    pub reward: T,
    pub next_obs: Vec<T>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<Transition<T>>,
    capacity: usize,
    cursor: usize,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self { items: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform index draws (with replacement) from the stored items.
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn get(&self, idx: usize) -> &Transition<T> {
        &self.items[idx]
    }
}

/// Runtime exploration-noise state.
#[derive(Clone, Debug)]
pub struct NoiseProcess<T> {
    cfg: NoiseConfig<T>,
    /// Action range (hi − lo) converting fractional scales to action units.
    range: T,
    sigma_now: T,
    ou_state: T,
    rng: ChaCha8Rng,
}

impl<T: Real> NoiseProcess<T> {
    pub fn new(cfg: NoiseConfig<T>, action_range: T, seed: u64) -> Self {
        let sigma_now = match cfg {
            NoiseConfig::Gaussian { sigma, .. } => sigma,
            NoiseConfig::OrnsteinUhlenbeck { sigma, .. } => sigma,
        };
        Self {
            cfg,
            range: action_range,
            sigma_now,
            ou_state: T::zero(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Current scale as a fraction of the action range (curve logging).
    pub fn sigma_fraction(&self) -> T {
        self.sigma_now
    }

    pub fn reset_episode(&mut self) {
        self.ou_state = T::zero();
    }

    /// Apply the per-episode decay schedule (Gaussian only).
    pub fn end_episode(&mut self) {
        if let NoiseConfig::Gaussian { decay, sigma_min, .. } = self.cfg {
            self.sigma_now = (self.sigma_now * decay).max(sigma_min);
        }
    }

    pub fn sample(&mut self) -> T {
        let unit: f64 = self.rng.sample(StandardNormal);
        let unit = T::lit(unit);
        match self.cfg {
            NoiseConfig::Gaussian { .. } => self.sigma_now * self.range * unit,
            NoiseConfig::OrnsteinUhlenbeck { theta, sigma, dt } => {
                let drift = -theta * self.ou_state * dt;
                let diffusion = sigma * self.range * dt.sqrt() * unit;
                self.ou_state = self.ou_state + drift + diffusion;
                self.ou_state
            }
        }
    }
}

/// Deterministic policy action with optional exploration noise, clamped to
/// the action bounds.
pub fn act<T: Real>(
    actor: &Mlp<T>,
    obs: &[T],
    noise: Option<&mut NoiseProcess<T>>,
    lo: T,
    hi: T,
) -> Result<T, NnError> {
    let mut a = actor.forward(obs)?[0];
    if let Some(n) = noise {
        a = a + n.sample();
    }
    Ok(clamp_action(a, lo, hi))
}

/// Critic input layout: scaled observation followed by the action divided by
/// its largest bound magnitude.
pub fn critic_input<T: Real>(obs: &[T], action: T, act_scale: T) -> Vec<T> {
    let mut x = Vec::with_capacity(obs.len() + 1);
    x.extend_from_slice(obs);
    x.push(action / act_scale);
    x
}

/// Bootstrapped targets y_i = r_i + γ·(1 − done_i)·Q'(s'_i, μ'(s'_i)).
pub fn td_target<T: Real>(
    critic_target: &Mlp<T>,
    actor_target: &Mlp<T>,
    batch: &[Transition<T>],
    gamma: T,
    act_scale: T,
) -> Result<Vec<T>, NnError> {
    batch
        .iter()
        .map(|tr| {
            if tr.done {
                return Ok(tr.reward);
            }
            let a_next = actor_target.forward(&tr.next_obs)?[0];
            let q_next = critic_target.forward(&critic_input(&tr.next_obs, a_next, act_scale))?[0];
            Ok(tr.reward + gamma * q_next)
        })
        .collect()
}

/// Mean-squared-error gradient of the critic against fixed targets.
/// Returns the gradients and the pre-step loss.
pub fn critic_gradient<T: Real>(
    critic: &Mlp<T>,
    batch: &[Transition<T>],
    targets: &[T],
    act_scale: T,
) -> Result<(Gradients<T>, T), TrainError> {
    debug_assert_eq!(batch.len(), targets.len());
    let n = T::lit(batch.len() as f64);
    let mut grads = Gradients::zeros_like(critic);
    let mut loss = T::zero();
    for (tr, y) in batch.iter().zip(targets) {
        let x = critic_input(&tr.obs, tr.action, act_scale);
        let (q, cache) = critic.forward_cached(&x)?;
        let diff = q[0] - *y;
        loss += diff * diff;
        let dl = T::lit(2.0) * diff / n;
        let (g, _) = critic.backward(&cache, &[dl])?;
        grads.add_assign(&g);
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(TrainError::Diverged(format!("critic loss {loss}")));
    }
    Ok((grads, loss))
}

/// One adaptive-moment step on the critic MSE. Returns the pre-step loss.
pub fn update_critic<T: Real>(
    critic: &mut Mlp<T>,
    opt: &mut Adam<T>,
    batch: &[Transition<T>],
    targets: &[T],
    act_scale: T,
) -> Result<T, TrainError> {
    let (grads, loss) = critic_gradient(critic, batch, targets, act_scale)?;
    opt.apply(critic, &grads)?;
    Ok(loss)
}

/// Gradient of the mean critic value J = E[Q(s, μ(s))] with respect to the
/// actor parameters, chained through the critic's action input.
/// Returns (∂J/∂θ, J).
pub fn actor_gradient<T: Real>(
    actor: &Mlp<T>,
    critic: &Mlp<T>,
    batch: &[Transition<T>],
    act_scale: T,
) -> Result<(Gradients<T>, T), TrainError> {
    let n = T::lit(batch.len() as f64);
    let obs_dim = actor.input_dim();
    let mut grads = Gradients::zeros_like(actor);
    let mut objective = T::zero();
    for tr in batch {
        let (a, actor_cache) = actor.forward_cached(&tr.obs)?;
        let x = critic_input(&tr.obs, a[0], act_scale);
        let (q, critic_cache) = critic.forward_cached(&x)?;
        objective += q[0];
        let (_, input_grad) = critic.backward(&critic_cache, &[T::one()])?;
        let dq_da = input_grad[obs_dim] / act_scale;
        let (g, _) = actor.backward(&actor_cache, &[dq_da / n])?;
        grads.add_assign(&g);
    }
    objective /= n;
    if !objective.is_finite() {
        return Err(TrainError::Diverged(format!("actor objective {objective}")));
    }
    Ok((grads, objective))
}

/// One gradient-ascent step on the actor objective. Returns the pre-step
/// objective estimate.
pub fn update_actor<T: Real>(
    actor: &mut Mlp<T>,
    opt: &mut Adam<T>,
    critic: &Mlp<T>,
    batch: &[Transition<T>],
    act_scale: T,
) -> Result<T, TrainError> {
    let (mut grads, objective) = actor_gradient(actor, critic, batch, act_scale)?;
    grads.scale(-T::one()); // ascend
    opt.apply(actor, &grads)?;
    Ok(objective)
}

/// One learning-curve row per training episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow<T> {
    pub episode: usize,
    /// Undiscounted return of the (noisy) training episode.
    pub undiscounted_return: T,
    /// Steady-state error of the most recent noise-free evaluation.
    pub steady_state_error: T,
    /// Exploration scale during the episode, as a fraction of action range.
    pub noise_sigma: T,
}

/// CSV with columns `episode,undiscounted_return,steady_state_error,noise_sigma`.
pub fn curve_to_csv<T: Real>(rows: &[CurveRow<T>]) -> String {
    let mut out = String::from("episode,undiscounted_return,steady_state_error,noise_sigma\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.episode, r.undiscounted_return, r.steady_state_error, r.noise_sigma
        ));
    }
    out
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct TrainResult<T> {
    /// Policy selected by best noise-free evaluation return.
    pub policy: Mlp<T>,
    /// Policy at the last episode, regardless of evaluation.
    pub final_policy: Mlp<T>,
    /// Episode index whose evaluation selected `policy`.
    pub selected_episode: usize,
    pub curve: Vec<CurveRow<T>>,
}

/// Per-episode metrics of a noise-free evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics<T> {
    pub steady_state_error: T,
    pub final_abs_error: T,
    pub undiscounted_return: T,
    pub peak_rate: T,
}

/// Noise-free rollouts of a trained policy.
#[derive(Clone, Debug)]
pub struct EvalResult<T> {
    pub logs: Vec<EpisodeLog<T>>,
    pub metrics: Vec<EvalMetrics<T>>,
}

fn sse_window(episode_len: usize) -> usize {
    SSE_WINDOW.min(episode_len)
}

/// Evaluate a policy without exploration noise or divergence truncation.
pub fn evaluate<T: Real>(
    policy: &Mlp<T>,
    env_cfg: &EnvConfig<T>,
    episodes: usize,
) -> Result<EvalResult<T>, TrainError> {
    let mut cfg = env_cfg.clone();
    cfg.initial_jitter = T::zero();
    let mut env = Env::new(cfg)?;
    let window = sse_window(env.episode_len());
    let mut logs = Vec::with_capacity(episodes);
    let mut metrics = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let log = env.rollout(|_, obs| {
            policy.forward(obs).expect("policy width matches observation")[0]
        })?;
        metrics.push(EvalMetrics {
            steady_state_error: log.steady_state_error(window)?,
            final_abs_error: log.final_abs_error()?,
            undiscounted_return: log.undiscounted_return(),
            peak_rate: log.peak_rate()?,
        });
        logs.push(log);
    }
    Ok(EvalResult { logs, metrics })
}

/// Full DDPG training loop. Deterministic per (env seed, agent seed).
pub fn train<T: Real>(
    env_cfg: &EnvConfig<T>,
    agent_cfg: &AgentConfig<T>,
) -> Result<TrainResult<T>, TrainError> {
    agent_cfg.validate()?;
    let mut env = Env::new(env_cfg.clone())?;
    env.set_training_truncation(true);

    let obs_dim = env.obs_dim();
    let (lo, hi) = env.action_bounds();
    let act_scale = lo.abs().max(hi.abs());

    let mut actor_sizes = vec![obs_dim];
    actor_sizes.extend_from_slice(&agent_cfg.hidden);
    actor_sizes.push(1);
    let mut critic_sizes = vec![obs_dim + 1];
    critic_sizes.extend_from_slice(&agent_cfg.hidden);
    critic_sizes.push(1);

    let mut master = ChaCha8Rng::seed_from_u64(agent_cfg.seed);
    let actor_seed: u64 = master.gen();
    let critic_seed: u64 = master.gen();
    let noise_seed: u64 = master.gen();
    let sample_seed: u64 = master.gen();

    let mut actor = Mlp::init(actor_seed, &actor_sizes, OutputHead::TanhBounded { lo, hi })?;
    let mut critic = Mlp::init(critic_seed, &critic_sizes, OutputHead::Identity)?;
    let mut actor_target = actor.clone();
    let mut critic_target = critic.clone();
    let mut actor_opt = Adam::new(agent_cfg.lr_actor, &actor);
    let mut critic_opt = Adam::new(agent_cfg.lr_critic, &critic);

    let mut noise = NoiseProcess::new(agent_cfg.noise, hi - lo, noise_seed);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut buffer = ReplayBuffer::new(agent_cfg.buffer_capacity);

    let window = sse_window(env.episode_len());
    let mut curve = Vec::with_capacity(agent_cfg.episodes);
    let mut batch: Vec<Transition<T>> = Vec::with_capacity(agent_cfg.batch_size);
    let mut total_steps = 0usize;

    let mut best_policy = actor.clone();
    let mut best_return = T::neg_infinity();
    let mut best_episode = 0usize;
    let mut latest_eval_sse = T::nan();

    for episode in 0..agent_cfg.episodes {
        noise.reset_episode();
        let mut obs = env.reset();
        let mut episode_return = T::zero();

        for _ in 0..env.episode_len() {
            let action = act(&actor, &obs, Some(&mut noise), lo, hi)?;
            let step = env.step(action)?;
            episode_return += step.reward;
            buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: step.reward,
                next_obs: step.obs.clone(),
                done: step.done,
            });
            obs = step.obs;
            total_steps += 1;

            let warm = total_steps > agent_cfg.warmup_steps && buffer.len() >= agent_cfg.batch_size;
            if warm && total_steps % agent_cfg.update_every == 0 {
                batch.clear();
                for idx in buffer.sample_indices(&mut sample_rng, agent_cfg.batch_size) {
                    batch.push(buffer.get(idx).clone());
                }
                let targets =
                    td_target(&critic_target, &actor_target, &batch, agent_cfg.gamma, act_scale)?;
                update_critic(&mut critic, &mut critic_opt, &batch, &targets, act_scale)?;
                update_actor(&mut actor, &mut actor_opt, &critic, &batch, act_scale)?;
                soft_update(&mut critic_target, &critic, agent_cfg.tau_soft)?;
                soft_update(&mut actor_target, &actor, agent_cfg.tau_soft)?;
            }
        }

        if episode % agent_cfg.eval_interval == 0 || episode + 1 == agent_cfg.episodes {
            let eval = evaluate(&actor, env_cfg, 1)?;
            let m = eval.metrics[0];
            latest_eval_sse = m.steady_state_error;
            if m.undiscounted_return > best_return {
                best_return = m.undiscounted_return;
                best_policy = actor.clone();
                best_episode = episode;
            }
        }

        curve.push(CurveRow {
            episode,
            undiscounted_return: episode_return,
            steady_state_error: latest_eval_sse,
            noise_sigma: noise.sigma_fraction(),
        });
        noise.end_episode();
    }

    Ok(TrainResult {
        policy: best_policy,
        final_policy: actor,
        selected_episode: best_episode,
        curve,
    })
}
