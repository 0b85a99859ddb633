//! Minimal fully-connected networks with analytic backpropagation, an
//! adaptive-moment optimizer, and target-network soft updates.
//!
//! Hidden layers use the rectified-linear activation; the output head is
//! either the identity (critic) or a tanh scaled affinely into the action
//! bounds (actor). Everything is plain `Vec`-backed scalar code: the
//! networks here are small enough that cache-friendly loops beat any linear
//! algebra dependency.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("need at least an input and an output layer")]
    TooFewLayers,
    #[error("zero-width layer")]
    ZeroWidthLayer,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("stale forward cache")]
    StaleCache,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint io: {0}")]
    Io(String),
}

/// Output nonlinearity of the last layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputHead<T> {
    Identity,
    /// `lo + (hi − lo)·(tanh(z) + 1)/2`, keeping outputs strictly inside the
    /// bounds with a nonvanishing gradient at the edges.
    TanhBounded { lo: T, hi: T },
}

#[derive(Clone, Debug, PartialEq)]
struct Layer<T> {
    /// Row-major weights, `w[o * inputs + i]`.
    w: Vec<T>,
    b: Vec<T>,
    inputs: usize,
    outputs: usize,
}

/// Fully-connected network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    head: OutputHead<T>,
    sizes: Vec<usize>,
    /// Bumped on every parameter mutation so stale forward caches are caught.
    version: u64,
}

/// Intermediate activations from one forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Vec<T>,
    /// Post-activation values per layer (last entry is the pre-head output).
    acts: Vec<Vec<T>>,
    /// tanh(z) of the head, when the head is bounded.
    head_tanh: Option<Vec<T>>,
    version: u64,
}

/// Parameter gradients shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    w: Vec<Vec<T>>,
    b: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            w: net.layers.iter().map(|l| vec![T::zero(); l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![T::zero(); l.b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.w.iter_mut().chain(self.b.iter_mut()) {
            for x in g.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|g| g.iter().all(|x| x.is_finite()))
    }

    /// Flattened view for tests and diagnostics.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

fn dot<T: Real>(row: &[T], x: &[T]) -> T {
    // Four independent accumulators so the reduction pipelines; the order is
    // fixed, which keeps results bit-reproducible run to run.
    let mut acc = [T::zero(); 4];
    let mut chunks = row.chunks_exact(4).zip(x.chunks_exact(4));
    for (r, v) in &mut chunks {
        acc[0] = acc[0] + r[0] * v[0];
        acc[1] = acc[1] + r[1] * v[1];
        acc[2] = acc[2] + r[2] * v[2];
        acc[3] = acc[3] + r[3] * v[3];
    }
    let mut tail = T::zero();
    let rem = row.len() - row.len() % 4;
    for (r, v) in row[rem..].iter().zip(&x[rem..]) {
        tail = tail + *r * *v;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

impl<T: Real> Mlp<T> {
    /// Build a network with weights drawn uniformly from ±1/√fan_in.
    pub fn init(seed: u64, sizes: &[usize], head: OutputHead<T>) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::TooFewLayers);
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(NnError::ZeroWidthLayer);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let limit = 1.0 / (inputs as f64).sqrt();
            let w = (0..inputs * outputs)
                .map(|_| T::lit(rng.gen_range(-limit..limit)))
                .collect();
            let b = (0..outputs).map(|_| T::lit(rng.gen_range(-limit..limit))).collect();
            layers.push(Layer { w, b, inputs, outputs });
        }
        Ok(Self { layers, head, sizes: sizes.to_vec(), version: 0 })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> OutputHead<T> {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Total parameter count, Σ (n_in + 1)·n_out.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| (l.inputs + 1) * l.outputs).sum()
    }

    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Overwrite parameters from a flat vector (test and tooling helper).
    pub fn set_params_flat(&mut self, flat: &[T]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::ShapeMismatch("flat parameter length"));
        }
        let mut at = 0;
        for l in self.layers.iter_mut() {
            let (nw, nb) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            l.b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        self.version += 1;
        Ok(())
    }

    fn apply_head(&self, z: &[T]) -> (Vec<T>, Option<Vec<T>>) {
        match self.head {
            OutputHead::Identity => (z.to_vec(), None),
            OutputHead::TanhBounded { lo, hi } => {
                let half = T::lit(0.5);
                let tanh: Vec<T> = z.iter().map(|v| v.tanh()).collect();
                let y = tanh.iter().map(|t| lo + (hi - lo) * (*t + T::one()) * half).collect();
                (y, Some(tanh))
            }
        }
    }

    /// Evaluate the network.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Evaluate and keep the activations needed for a backward pass.
    pub fn forward_cached(&self, x: &[T]) -> Result<(Vec<T>, ForwardCache<T>), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::ShapeMismatch("input width"));
        }
        let n_layers = self.layers.len();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(n_layers);
        let mut current: &[T] = x;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = vec![T::zero(); layer.outputs];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                *zo = layer.b[o] + dot(row, current);
            }
            if idx + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = v.max(T::zero());
                }
            }
            acts.push(z);
            current = acts.last().unwrap();
        }
        let (y, head_tanh) = self.apply_head(acts.last().unwrap());
        let cache = ForwardCache { input: x.to_vec(), acts, head_tanh, version: self.version };
        Ok((y, cache))
    }

    /// Reverse-mode gradients of a scalar loss given ∂L/∂output.
    ///
    /// Returns the parameter gradients and ∂L/∂input (the latter is what
    /// chains a critic's action sensitivity into the actor).
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &[T],
    ) -> Result<(Gradients<T>, Vec<T>), NnError> {
        if cache.version != self.version || cache.acts.len() != self.layers.len() {
            return Err(NnError::StaleCache);
        }
        if output_grad.len() != self.output_dim() {
            return Err(NnError::ShapeMismatch("output gradient width"));
        }

        // Through the head into the last pre-head output.
        let mut delta: Vec<T> = match (&self.head, &cache.head_tanh) {
            (OutputHead::Identity, _) => output_grad.to_vec(),
            (OutputHead::TanhBounded { lo, hi }, Some(tanh)) => {
                let half = T::lit(0.5);
                output_grad
                    .iter()
                    .zip(tanh)
                    .map(|(g, t)| *g * (*hi - *lo) * half * (T::one() - *t * *t))
                    .collect()
            }
            (OutputHead::TanhBounded { .. }, None) => return Err(NnError::StaleCache),
        };

        let mut grads = Gradients::zeros_like(self);
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let below: &[T] = if idx == 0 { &cache.input } else { &cache.acts[idx - 1] };

            let gw = &mut grads.w[idx];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, a) in row.iter_mut().zip(below) {
                    *g = *d * *a;
                }
            }
            grads.b[idx].copy_from_slice(&delta);

            // ∂L/∂(layer input), then through the ReLU of the layer below.
            let mut down = vec![T::zero(); layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, w) in down.iter_mut().zip(row) {
                    *g += *d * *w;
                }
            }
            if idx > 0 {
                for (g, z) in down.iter_mut().zip(&cache.acts[idx - 1]) {
                    if *z <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            delta = down;
        }
        Ok((grads, delta))
    }
}

/// Adaptive-moment gradient descent with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T, net: &Mlp<T>) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One descent step. Rejects non-finite gradients so a diverging run
    /// surfaces at the trainer instead of silently corrupting parameters.
    pub fn apply(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        if grads.w.len() != net.layers.len() {
            return Err(NnError::ShapeMismatch("gradient layer count"));
        }
        for (idx, layer) in net.layers.iter().enumerate() {
            if grads.w[idx].len() != layer.w.len() || grads.b[idx].len() != layer.b.len() {
                return Err(NnError::ShapeMismatch("gradient tensor shape"));
            }
        }
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        self.step += 1;
        let t = T::lit(self.step as f64);
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        let one = T::one();
        for (idx, layer) in net.layers.iter_mut().enumerate() {
            for (param_set, grad_set, m_set, v_set) in [
                (&mut layer.w, &grads.w[idx], &mut self.m.w[idx], &mut self.v.w[idx]),
                (&mut layer.b, &grads.b[idx], &mut self.m.b[idx], &mut self.v.b[idx]),
            ] {
                for (((p, g), m), v) in
                    param_set.iter_mut().zip(grad_set).zip(m_set.iter_mut()).zip(v_set.iter_mut())
                {
                    *m = self.beta1 * *m + (one - self.beta1) * *g;
                    *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        net.version += 1;
        Ok(())
    }
}

/// Polyak update θ' ← τ·θ_online + (1−τ)·θ_target, elementwise.
pub fn soft_update<T: Real>(target: &mut Mlp<T>, online: &Mlp<T>, tau: T) -> Result<(), NnError> {
    if target.sizes != online.sizes {
        return Err(NnError::ShapeMismatch("network sizes"));
    }
    let one = T::one();
    for (t_layer, o_layer) in target.layers.iter_mut().zip(&online.layers) {
        for (t, o) in t_layer.w.iter_mut().zip(&o_layer.w) {
            *t = tau * *o + (one - tau) * *t;
        }
        for (t, o) in t_layer.b.iter_mut().zip(&o_layer.b) {
            *t = tau * *o + (one - tau) * *t;
        }
    }
    target.version += 1;
    Ok(())
}

const CHECKPOINT_MAGIC: &str = "steadyrl-mlp v1";

/// Plain-text tensor dump. Values go through the shortest round-trip
/// formatting, so save → load reproduces parameters bit for bit.
pub fn save_checkpoint<T: Real>(net: &Mlp<T>, path: &Path) -> Result<(), NnError> {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    out.push_str("sizes");
    for s in &net.sizes {
        out.push(' ');
        out.push_str(&s.to_string());
    }
    out.push('\n');
    match net.head {
        OutputHead::Identity => out.push_str("head identity\n"),
        OutputHead::TanhBounded { lo, hi } => {
            out.push_str(&format!("head tanh {lo} {hi}\n"));
        }
    }
    for (idx, layer) in net.layers.iter().enumerate() {
        out.push_str(&format!("layer {idx}\n"));
        for o in 0..layer.outputs {
            let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
            let mut line = String::new();
            for v in row {
                line.push_str(&v.to_string());
                line.push(' ');
            }
            line.push_str(&layer.b[o].to_string());
            out.push_str(&line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| NnError::Io(e.to_string()))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Mlp<T>, NnError> {
    let text = std::fs::read_to_string(path).map_err(|e| NnError::Io(e.to_string()))?;
    let mut lines = text.lines();
    let magic = lines.next().ok_or_else(|| NnError::BadCheckpoint("empty file".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(NnError::BadCheckpoint(format!("unknown header `{magic}`")));
    }
    let sizes_line = lines.next().ok_or_else(|| NnError::BadCheckpoint("missing sizes".into()))?;
    let mut parts = sizes_line.split_whitespace();
    if parts.next() != Some("sizes") {
        return Err(NnError::BadCheckpoint("missing sizes line".into()));
    }
    let sizes: Vec<usize> = parts
        .map(|p| p.parse().map_err(|_| NnError::BadCheckpoint(format!("bad size `{p}`"))))
        .collect::<Result<_, _>>()?;
    if sizes.len() < 2 {
        return Err(NnError::BadCheckpoint("need at least two layer sizes".into()));
    }

    let parse_scalar = |s: &str| -> Result<T, NnError> {
        s.parse::<T>().map_err(|_| NnError::BadCheckpoint(format!("bad value `{s}`")))
    };

    let head_line = lines.next().ok_or_else(|| NnError::BadCheckpoint("missing head".into()))?;
    let head_parts: Vec<&str> = head_line.split_whitespace().collect();
    let head = match head_parts.as_slice() {
        ["head", "identity"] => OutputHead::Identity,
        ["head", "tanh", lo, hi] => {
            OutputHead::TanhBounded { lo: parse_scalar(lo)?, hi: parse_scalar(hi)? }
        }
        _ => return Err(NnError::BadCheckpoint(format!("bad head line `{head_line}`"))),
    };

    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (idx, pair) in sizes.windows(2).enumerate() {
        let (inputs, outputs) = (pair[0], pair[1]);
        let tag = lines.next().ok_or_else(|| NnError::BadCheckpoint("missing layer tag".into()))?;
        if tag != format!("layer {idx}") {
            return Err(NnError::BadCheckpoint(format!("expected `layer {idx}`, got `{tag}`")));
        }
        let mut w = Vec::with_capacity(inputs * outputs);
        let mut b = Vec::with_capacity(outputs);
        for _ in 0..outputs {
            let row = lines.next().ok_or_else(|| NnError::BadCheckpoint("missing row".into()))?;
            let vals: Vec<T> =
                row.split_whitespace().map(parse_scalar).collect::<Result<_, _>>()?;
            if vals.len() != inputs + 1 {
                return Err(NnError::BadCheckpoint(format!(
                    "row has {} values, expected {}",
                    vals.len(),
                    inputs + 1
                )));
            }
            w.extend_from_slice(&vals[..inputs]);
            b.push(vals[inputs]);
        }
        layers.push(Layer { w, b, inputs, outputs });
    }
    Ok(Mlp { layers, head, sizes, version: 0 })
}
