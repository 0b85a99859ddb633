//! Reward families for the control tasks.
//!
//! Four kinds: quadratic and absolute-value costs over normalized error,
//! action, and state-rate terms, plus two "PI" variants that add a penalty on
//! an accumulated error integral — the reward-side analogue of the I term in
//! PID control. All rewards are negated costs, so every value is ≤ 0 and the
//! maximum 0 is reached only at the goal with no actuation.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("absolute error must be non-negative")]
    NegativeAbsError,
    #[error("PI reward kinds require an error accumulator")]
    MissingAccumulator,
    #[error("invalid reward parameter: {0}")]
    InvalidParam(&'static str),
}

/// Weights on the error, action, state-rate, and integral terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights<T> {
    pub w1: T,
    pub w2: T,
    pub w3: T,
    /// Weight on the integral penalty; ignored by the non-PI kinds.
    pub w4: T,
}

impl<T: Real> RewardWeights<T> {
    /// Equal thirds on error/action/rate plus the given integral weight.
    pub fn thirds(w4: T) -> Self {
        let third = T::one() / T::lit(3.0);
        Self { w1: third, w2: third, w3: third, w4 }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        for w in [self.w1, self.w2, self.w3, self.w4] {
            if !(w >= T::zero()) {
                return Err(RewardError::InvalidParam("weights must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Normalization constants that bring each penalty term to order one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizers<T> {
    /// Nominal maximum tracking error [plant units].
    pub err_nmax: T,
    /// Control bounds; the action term divides by `act_max`, the rate term by
    /// `(act_max − act_min)/tau`.
    pub act_max: T,
    pub act_min: T,
    /// Accumulator normalizer.
    pub c_nmax: T,
    /// Actuator lag constant entering the rate normalizer.
    pub tau: T,
}

impl<T: Real> Normalizers<T> {
    /// Largest state-rate reachable through the first-order actuator lag.
    pub fn rate_nmax(&self) -> T {
        (self.act_max - self.act_min) / self.tau
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.err_nmax > T::zero()) {
            return Err(RewardError::InvalidParam("err_nmax must be positive"));
        }
        if !(self.c_nmax > T::zero()) {
            return Err(RewardError::InvalidParam("c_nmax must be positive"));
        }
        if !(self.tau > T::zero()) {
            return Err(RewardError::InvalidParam("tau must be positive"));
        }
        if !(self.act_min < self.act_max) {
            return Err(RewardError::InvalidParam("act_min must be below act_max"));
        }
        Ok(())
    }
}

/// Which reward family to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RewardKind {
    Quadratic,
    Absolute,
    /// Quadratic plus integral penalty, accumulation gated by a step threshold.
    PiMethod1,
    /// Quadratic plus integral penalty, accumulation weighted by a sigmoid ramp.
    PiMethod2,
}

impl RewardKind {
    pub fn is_pi(self) -> bool {
        matches!(self, RewardKind::PiMethod1 | RewardKind::PiMethod2)
    }

    pub fn label(self) -> &'static str {
        match self {
            RewardKind::Quadratic => "qua",
            RewardKind::Absolute => "abs",
            RewardKind::PiMethod1 => "qua-pi1",
            RewardKind::PiMethod2 => "qua-pi2",
        }
    }
}

/// Parameters of the sigmoid ramp κ(t) = 1 / (1 + a·e^(T/2 − t)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaParams<T> {
    /// Sigmoid scale.
    pub a: T,
    /// Episode length in timesteps.
    pub episode_len: usize,
}

impl<T: Real> KappaParams<T> {
    pub fn new(a: T, episode_len: usize) -> Result<Self, RewardError> {
        if !(a > T::zero()) {
            return Err(RewardError::InvalidParam("kappa scale a must be positive"));
        }
        if episode_len == 0 {
            return Err(RewardError::InvalidParam("episode length must be positive"));
        }
        Ok(Self { a, episode_len })
    }
}

/// Sigmoid weight κ(t) ∈ (0, 1), increasing in t with κ(T/2) = 1/(1+a).
///
/// Evaluated through the complementary form when the exponent is positive, so
/// T/2 − t in the thousands cannot overflow the exponential.
pub fn kappa<T: Real>(t: usize, kp: &KappaParams<T>) -> T {
    let z = T::lit(kp.episode_len as f64 / 2.0) - T::lit(t as f64);
    if z <= T::zero() {
        // e^z ≤ 1 here; direct form is safe.
        T::one() / (T::one() + kp.a * z.exp())
    } else {
        // κ = e^(−z) / (e^(−z) + a); e^(−z) underflows harmlessly to 0.
        let w = (-z).exp();
        w / (w + kp.a)
    }
}

/// How the error integral accumulates over an episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AccumMethod<T> {
    /// Sum |error| only from `t_threshold` onward (zero before).
    Threshold { t_threshold: usize },
    /// Sum κ(t)·|error| from the start.
    Sigmoid(KappaParams<T>),
}

/// Running integral-of-error term c_I with its step counter.
///
/// Updates are pure: [`accumulate`] returns the advanced accumulator and the
/// caller threads it through the episode. Reset simply constructs a new one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorAccumulator<T> {
    pub c_i: T,
    pub t: usize,
    pub method: AccumMethod<T>,
}

impl<T: Real> ErrorAccumulator<T> {
    pub fn new(method: AccumMethod<T>) -> Self {
        Self { c_i: T::zero(), t: 0, method }
    }
}

/// Advance the accumulator with one step's absolute error.
pub fn accumulate<T: Real>(
    acc: &ErrorAccumulator<T>,
    abs_err: T,
) -> Result<ErrorAccumulator<T>, RewardError> {
    if !(abs_err >= T::zero()) {
        return Err(RewardError::NegativeAbsError);
    }
    let c_i = match acc.method {
        AccumMethod::Threshold { t_threshold } => {
            if acc.t >= t_threshold {
                acc.c_i + abs_err
            } else {
                T::zero()
            }
        }
        AccumMethod::Sigmoid(kp) => acc.c_i + kappa(acc.t, &kp) * abs_err,
    };
    Ok(ErrorAccumulator { c_i, t: acc.t + 1, method: acc.method })
}

/// Quadratic cost, negated: −[w1(err/eₙ)² + w2(act/aₘ)² + w3(rate/rₙ)²].
pub fn quadratic_reward<T: Real>(
    err: T,
    action: T,
    rate: T,
    w: &RewardWeights<T>,
    n: &Normalizers<T>,
) -> T {
    let e = err / n.err_nmax;
    let a = action / n.act_max;
    let r = rate / n.rate_nmax();
    -(w.w1 * e * e + w.w2 * a * a + w.w3 * r * r)
}

/// Absolute-value cost, negated: −[w1|err/eₙ| + w2|act/aₘ| + w3|rate/rₙ|].
pub fn absolute_reward<T: Real>(
    err: T,
    action: T,
    rate: T,
    w: &RewardWeights<T>,
    n: &Normalizers<T>,
) -> T {
    let e = (err / n.err_nmax).abs();
    let a = (action / n.act_max).abs();
    let r = (rate / n.rate_nmax()).abs();
    -(w.w1 * e + w.w2 * a + w.w3 * r)
}

/// Integral penalty −w4·(c_I/c_nmax)².
pub fn integral_penalty<T: Real>(acc: &ErrorAccumulator<T>, w4: T, c_nmax: T) -> T {
    let c = acc.c_i / c_nmax;
    -(w4 * c * c)
}

/// Evaluate one reward of the given kind, advancing the accumulator for the
/// PI kinds. Non-PI kinds pass the accumulator through untouched.
pub fn compute_reward<T: Real>(
    kind: RewardKind,
    err: T,
    action: T,
    rate: T,
    acc: Option<ErrorAccumulator<T>>,
    w: &RewardWeights<T>,
    n: &Normalizers<T>,
) -> Result<(T, Option<ErrorAccumulator<T>>), RewardError> {
    match kind {
        RewardKind::Quadratic => Ok((quadratic_reward(err, action, rate, w, n), acc)),
        RewardKind::Absolute => Ok((absolute_reward(err, action, rate, w, n), acc)),
        RewardKind::PiMethod1 | RewardKind::PiMethod2 => {
            let acc = acc.ok_or(RewardError::MissingAccumulator)?;
            let acc = accumulate(&acc, err.abs())?;
            let reward =
                quadratic_reward(err, action, rate, w, n) + integral_penalty(&acc, w.w4, n.c_nmax);
            Ok((reward, Some(acc)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn acc_norms() -> Normalizers<f64> {
        Normalizers { err_nmax: 15.0, act_max: 2.0, act_min: -3.0, c_nmax: 60.0, tau: 0.4 }
    }

    #[test]
    fn quadratic_hand_values() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        assert_eq!(quadratic_reward(0.0, 0.0, 0.0, &w, &n), 0.0);
        assert!((quadratic_reward(15.0, 0.0, 0.0, &w, &n) + 1.0 / 3.0).abs() < 1e-15);
        let r = quadratic_reward(5.0, 2.0, 0.0, &w, &n);
        let expect = -(1.0 / 3.0 * (1.0 / 9.0) + 1.0 / 3.0);
        assert!((r - expect).abs() < 1e-15, "{r} vs {expect}");
        assert!((expect + 0.370).abs() < 1e-3);
    }

    #[test]
    fn absolute_hand_values() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        assert_eq!(absolute_reward(0.0, 0.0, 0.0, &w, &n), 0.0);
        assert!((absolute_reward(15.0, 0.0, 0.0, &w, &n) + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            absolute_reward(-15.0, 0.0, 0.0, &w, &n),
            absolute_reward(15.0, 0.0, 0.0, &w, &n)
        );
    }

    #[test]
    fn kappa_midpoint_exact() {
        let kp = KappaParams::new(0.1f64, 600).unwrap();
        let k = kappa(300, &kp);
        assert!((k - 10.0 / 11.0).abs() < 1e-12, "kappa(T/2) = {k}");
    }

    #[test]
    fn kappa_early_steps_underflow_to_zero_without_overflow() {
        let kp = KappaParams::new(0.1, 600).unwrap();
        let k: f64 = kappa(0, &kp);
        assert!(k.is_finite());
        assert!(k >= 0.0 && k < 1e-120, "kappa(0) = {k}");
        // Exponents of ±1e4 must stay finite too.
        let kp = KappaParams::new(0.1f64, 20_000).unwrap();
        assert!(kappa(0, &kp).is_finite());
        assert!(kappa(20_000, &kp).is_finite());
    }

    #[test]
    fn kappa_monotone_and_bounded() {
        let kp = KappaParams::new(0.1f64, 600).unwrap();
        let mut prev = -1.0;
        for t in 0..=600 {
            let k = kappa(t, &kp);
            assert!(k > 0.0 && k <= 1.0);
            assert!(k >= prev, "not monotone at t={t}");
            // Strictly increasing until the sigmoid saturates to 1.0 in f64.
            if prev < 1.0 - 1e-12 {
                assert!(k > prev, "not strictly increasing at t={t}");
            }
            prev = k;
        }
    }

    #[test]
    fn kappa_large_t_approaches_one() {
        let kp = KappaParams::new(0.1, 600).unwrap();
        assert!(kappa(100_000, &kp) > 1.0 - 1e-12);
    }

    #[test]
    fn accumulate_method1_gating() {
        let m = AccumMethod::Threshold { t_threshold: 125 };
        let acc = ErrorAccumulator::<f64>::new(m);
        let next = accumulate(&acc, 5.0).unwrap();
        assert_eq!(next.c_i, 0.0);
        assert_eq!(next.t, 1);

        let at_threshold = ErrorAccumulator { c_i: 0.0, t: 125, method: m };
        let next = accumulate(&at_threshold, 0.3).unwrap();
        assert_eq!(next.c_i, 0.3);
    }

    #[test]
    fn accumulate_method2_midpoint() {
        let kp = KappaParams::new(0.1f64, 600).unwrap();
        let acc = ErrorAccumulator { c_i: 1.0, t: 300, method: AccumMethod::Sigmoid(kp) };
        let next = accumulate(&acc, 1.0).unwrap();
        assert!((next.c_i - (1.0 + 10.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn accumulate_rejects_negative() {
        let acc = ErrorAccumulator::<f64>::new(AccumMethod::Threshold { t_threshold: 0 });
        assert_eq!(accumulate(&acc, -1.0), Err(RewardError::NegativeAbsError));
    }

    #[test]
    fn method1_matches_direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t_threshold in [0usize, 30, 125] {
            let errs: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..5.0)).collect();
            let mut acc = ErrorAccumulator::new(AccumMethod::Threshold { t_threshold });
            for (t, &e) in errs.iter().enumerate() {
                acc = accumulate(&acc, e).unwrap();
                let expect: f64 = errs[..=t]
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k >= t_threshold)
                    .map(|(_, v)| *v)
                    .sum();
                if t < t_threshold {
                    assert_eq!(acc.c_i, 0.0);
                } else {
                    let scale = expect.abs().max(1.0);
                    assert!((acc.c_i - expect).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn method2_matches_direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kp = KappaParams::new(0.1, 600).unwrap();
        let errs: Vec<f64> = (0..600).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mut acc = ErrorAccumulator::new(AccumMethod::Sigmoid(kp));
        for (t, &e) in errs.iter().enumerate() {
            acc = accumulate(&acc, e).unwrap();
            let expect: f64 = errs[..=t]
                .iter()
                .enumerate()
                .map(|(k, v)| kappa(k, &kp) * v)
                .sum();
            let scale = expect.abs().max(1e-300);
            assert!((acc.c_i - expect).abs() <= 1e-12 * scale, "t={t}: {} vs {expect}", acc.c_i);
        }
    }

    #[test]
    fn integral_penalty_hand_values() {
        let m = AccumMethod::<f64>::Threshold { t_threshold: 0 };
        let zero = ErrorAccumulator { c_i: 0.0, t: 0, method: m };
        assert_eq!(integral_penalty(&zero, 0.1, 60.0), 0.0);
        let full = ErrorAccumulator { c_i: 60.0, t: 500, method: m };
        assert!((integral_penalty(&full, 0.1, 60.0) + 0.1).abs() < 1e-15);
        let half = ErrorAccumulator { c_i: 30.0, t: 500, method: m };
        assert!((integral_penalty(&half, 0.05, 60.0) + 0.0125).abs() < 1e-15);
    }

    #[test]
    fn compute_reward_quadratic_is_plain_quadratic() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        let (r, acc) = compute_reward(RewardKind::Quadratic, 5.0, 1.0, 2.0, None, &w, &n).unwrap();
        assert_eq!(r, quadratic_reward(5.0, 1.0, 2.0, &w, &n));
        assert!(acc.is_none());
    }

    #[test]
    fn compute_reward_pi1_below_threshold_equals_quadratic() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        let acc = ErrorAccumulator::new(AccumMethod::Threshold { t_threshold: 125 });
        let (r, next) =
            compute_reward(RewardKind::PiMethod1, 5.0, 1.0, 2.0, Some(acc), &w, &n).unwrap();
        assert_eq!(r, quadratic_reward(5.0, 1.0, 2.0, &w, &n));
        assert_eq!(next.unwrap().c_i, 0.0);
    }

    #[test]
    fn compute_reward_pi2_with_vanishing_kappa_equals_quadratic() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        // a → ∞ forces κ → 0, so the integral term vanishes.
        let kp = KappaParams::new(1e300, 600).unwrap();
        let acc = ErrorAccumulator::new(AccumMethod::Sigmoid(kp));
        let (r, _) =
            compute_reward(RewardKind::PiMethod2, 5.0, 1.0, 2.0, Some(acc), &w, &n).unwrap();
        assert_eq!(r, quadratic_reward(5.0, 1.0, 2.0, &w, &n));
    }

    #[test]
    fn compute_reward_pi_requires_accumulator() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        let err = compute_reward(RewardKind::PiMethod1, 1.0, 0.0, 0.0, None, &w, &n);
        assert_eq!(err, Err(RewardError::MissingAccumulator));
    }

    #[test]
    fn pi_reward_strictly_below_quadratic_when_accumulated() {
        let w = RewardWeights::thirds(0.1);
        let n = acc_norms();
        let acc = ErrorAccumulator {
            c_i: 2.0,
            t: 200,
            method: AccumMethod::Threshold { t_threshold: 125 },
        };
        let (pi, _) =
            compute_reward(RewardKind::PiMethod1, 1.0, 0.5, 0.5, Some(acc), &w, &n).unwrap();
        let qua = quadratic_reward(1.0, 0.5, 0.5, &w, &n);
        assert!(pi < qua);
    }

    proptest! {
        #[test]
        fn rewards_are_never_positive(
            err in -40.0f64..40.0,
            action in -3.0f64..3.0,
            rate in -20.0f64..20.0,
            c in 0.0f64..200.0,
        ) {
            let w = RewardWeights::thirds(0.1);
            let n = acc_norms();
            prop_assert!(quadratic_reward(err, action, rate, &w, &n) <= 0.0);
            prop_assert!(absolute_reward(err, action, rate, &w, &n) <= 0.0);
            let acc = ErrorAccumulator {
                c_i: c,
                t: 200,
                method: AccumMethod::Threshold { t_threshold: 125 },
            };
            let (r, _) = compute_reward(
                RewardKind::PiMethod1, err, action, rate, Some(acc), &w, &n,
            ).unwrap();
            prop_assert!(r <= 0.0);
        }

        #[test]
        fn reward_zero_only_at_goal(
            err in prop::sample::select(vec![0.0f64, 0.5, -0.5]),
            action in prop::sample::select(vec![0.0f64, 0.25]),
            rate in prop::sample::select(vec![0.0f64, 1.0]),
        ) {
            let w = RewardWeights::thirds(0.1);
            let n = acc_norms();
            let r = quadratic_reward(err, action, rate, &w, &n);
            if err == 0.0 && action == 0.0 && rate == 0.0 {
                prop_assert_eq!(r, 0.0);
            } else {
                prop_assert!(r < 0.0);
            }
        }
    }
}
