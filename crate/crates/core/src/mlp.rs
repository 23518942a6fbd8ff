//! Feed-forward binary classifier `f(x; theta)` with a logistic link.
//!
//! Parameters live in one flat vector, laid out layer by layer as the
//! row-major weight block followed by the bias block. The scalar network
//! output is the logit; `pi = sigmoid(logit)` is the class-1 probability.
//! Reverse-mode differentiation provides both the per-sample parameter
//! Jacobian of the logit (the GGN ingredient) and the exact gradient of the
//! MAP training objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Real};

/// Probabilities are clamped to this floor (and `1 -` it) inside logarithms;
/// saturated relu units would otherwise produce infinite loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Elu => {
                if z >= T::zero() {
                    z
                } else {
                    z.exp() - T::one()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output<T: Real>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Elu => {
                if a >= T::zero() {
                    T::one()
                } else {
                    a + T::one()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

/// Architecture of the classifier network; the output is always scalar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    /// The architecture used for the regret experiments: two hidden layers of
    /// 32 relu units.
    pub fn default_classifier(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: vec![32, 32],
            activation: Activation::Relu,
        }
    }

    /// `(fan_in, fan_out)` per layer, ending in the scalar output layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, 1));
        dims
    }

    /// Total parameter count `sum (fan_in + 1) * fan_out`.
    pub fn parameter_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fi, fo)| (fi + 1) * fo)
            .sum()
    }
}

/// A flat parameter vector paired with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlpParams<T>", bound(deserialize = "T: Real"))]
pub struct MlpParams<T> {
    flat: Vec<T>,
    spec: MlpSpec,
}

/// Unvalidated wire form of [`MlpParams`].
#[derive(Deserialize)]
struct RawMlpParams<T> {
    flat: Vec<T>,
    spec: MlpSpec,
}

impl<T: Real> TryFrom<RawMlpParams<T>> for MlpParams<T> {
    type Error = Error;

    fn try_from(raw: RawMlpParams<T>) -> Result<Self> {
        MlpParams::from_flat(raw.spec, raw.flat)
    }
}

impl<T: Real> MlpParams<T> {
    /// Wrap an existing flat vector; its length must match the spec.
    pub fn from_flat(spec: MlpSpec, flat: Vec<T>) -> Result<Self> {
        if flat.len() != spec.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.parameter_count(),
                got: flat.len(),
            });
        }
        Ok(Self { flat, spec })
    }

    /// All-zero parameters (logit 0, probability 1/2 everywhere).
    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.parameter_count();
        Self {
            flat: vec![T::zero(); n],
            spec,
        }
    }

    /// Symmetric uniform init, per layer in `+-sqrt(6 / (fan_in + fan_out))`.
    pub fn init_uniform<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut flat = Vec::with_capacity(spec.parameter_count());
        for (fan_in, fan_out) in spec.layer_dims() {
            let bound = (T::cast(6.0) / T::cast_usize(fan_in + fan_out)).sqrt();
            for _ in 0..fan_in * fan_out {
                flat.push(T::uniform_in(rng, -bound, bound));
            }
            flat.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Self { flat, spec }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn flat(&self) -> &[T] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [T] {
        &mut self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Forward pass: `(logit, probability)`.
    pub fn forward(&self, x: &[T]) -> Result<(T, T)> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        let logit = self.forward_trace(x, None);
        Ok((logit, sigmoid(logit)))
    }

    /// Logit only, without the dimension check (callers on the hot path have
    /// validated the input shape already).
    pub fn logit(&self, x: &[T]) -> T {
        self.forward_trace(x, None)
    }

    /// Forward pass recording hidden activations into `trace` when given.
    fn forward_trace(&self, x: &[T], mut trace: Option<&mut Vec<Vec<T>>>) -> T {
        let dims = self.spec.layer_dims();
        let n_layers = dims.len();
        let act = self.spec.activation;

        let mut cur: Vec<T> = x.to_vec();
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = &self.flat[offset..offset + fan_in * fan_out];
            let b = &self.flat[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;

            let mut next = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = crate::linalg::dot(row, &cur) + b[o];
                next.push(if l + 1 == n_layers { z } else { act.apply(z) });
            }
            if l + 1 < n_layers {
                if let Some(t) = trace.as_deref_mut() {
                    t.push(next.clone());
                }
            }
            cur = next;
        }
        cur[0]
    }

    /// Accumulate `seed * d(logit)/d(theta)` into `grad`.
    ///
    /// `grad` must have length `parameter_count`. Returns the logit.
    pub fn accumulate_logit_gradient(&self, x: &[T], seed: T, grad: &mut [T]) -> T {
        debug_assert_eq!(grad.len(), self.flat.len());
        let dims = self.spec.layer_dims();
        let act = self.spec.activation;

        let mut hidden: Vec<Vec<T>> = Vec::with_capacity(dims.len().saturating_sub(1));
        let logit = self.forward_trace(x, Some(&mut hidden));

        // layer parameter offsets
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for &(fi, fo) in &dims {
            offsets.push(off);
            off += (fi + 1) * fo;
        }

        // upstream gradient w.r.t. the current layer's outputs
        let mut d_out = vec![seed];
        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let input: &[T] = if l == 0 { x } else { &hidden[l - 1] };
            let w = &self.flat[offsets[l]..offsets[l] + fan_in * fan_out];

            // output layer is linear; hidden layers apply the activation
            let dz: Vec<T> = if l + 1 == dims.len() {
                d_out.clone()
            } else {
                d_out
                    .iter()
                    .zip(&hidden[l])
                    .map(|(&d, &a)| d * act.grad_from_output(a))
                    .collect()
            };

            let gw = &mut grad[offsets[l]..offsets[l] + (fan_in + 1) * fan_out];
            let (gw_w, gw_b) = gw.split_at_mut(fan_in * fan_out);
            for o in 0..fan_out {
                let d = dz[o];
                if d != T::zero() {
                    let row = &mut gw_w[o * fan_in..(o + 1) * fan_in];
                    for (g, &inp) in row.iter_mut().zip(input) {
                        *g += d * inp;
                    }
                    gw_b[o] += d;
                }
            }

            if l > 0 {
                let mut d_in = vec![T::zero(); fan_in];
                for o in 0..fan_out {
                    let d = dz[o];
                    if d != T::zero() {
                        let row = &w[o * fan_in..(o + 1) * fan_in];
                        for (di, &wv) in d_in.iter_mut().zip(row) {
                            *di += d * wv;
                        }
                    }
                }
                d_out = d_in;
            }
        }
        logit
    }

    /// Exact gradient of the logit w.r.t. every parameter.
    pub fn param_jacobian(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        let mut grad = vec![T::zero(); self.flat.len()];
        self.accumulate_logit_gradient(x, T::one(), &mut grad);
        Ok(grad)
    }

    /// Squared parameter norm.
    pub fn norm_sq(&self) -> T {
        crate::linalg::dot(&self.flat, &self.flat)
    }
}

fn clamp_prob<T: Real>(p: T) -> T {
    let lo = T::cast(PROB_CLAMP);
    p.max(lo).min(T::one() - lo)
}

/// MAP objective on a labeled set:
///
/// `loss = -(1/N) sum_n [z ln pi + (1-z) ln(1-pi)] + (delta/2) ||theta||^2 / N`
///
/// together with its exact gradient.
pub fn loss_and_grad<T: Real>(
    params: &MlpParams<T>,
    labeled: &LabeledSet<T>,
    prior_precision: T,
) -> Result<(T, Vec<T>)> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("loss_and_grad labeled set"));
    }
    let n = T::cast_usize(labeled.len());
    let inv_n = n.recip();
    let mut grad = vec![T::zero(); params.len()];
    let mut nll = T::zero();
    for (x, &z) in labeled.base().points().iter().zip(labeled.labels()) {
        let logit = params.logit(x);
        let p = sigmoid(logit);
        let pc = clamp_prob(p);
        nll -= if z { pc.ln() } else { (T::one() - pc).ln() };
        let target = if z { T::one() } else { T::zero() };
        params.accumulate_logit_gradient(x, (p - target) * inv_n, &mut grad);
    }
    let mut loss = nll * inv_n;
    let half = T::cast(0.5);
    loss += half * prior_precision * params.norm_sq() * inv_n;
    let scale = prior_precision * inv_n;
    for (g, &t) in grad.iter_mut().zip(params.flat()) {
        *g += scale * t;
    }
    Ok((loss, grad))
}

/// Loss only (full-batch), used for convergence tracking.
pub fn loss_only<T: Real>(
    params: &MlpParams<T>,
    labeled: &LabeledSet<T>,
    prior_precision: T,
) -> Result<T> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("loss labeled set"));
    }
    let n = T::cast_usize(labeled.len());
    let mut nll = T::zero();
    for (x, &z) in labeled.base().points().iter().zip(labeled.labels()) {
        let p = clamp_prob(sigmoid(params.logit(x)));
        nll -= if z { p.ln() } else { (T::one() - p).ln() };
    }
    Ok((nll + T::cast(0.5) * prior_precision * params.norm_sq()) / n)
}
