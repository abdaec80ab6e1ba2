//! Dense feed-forward networks with hand-written backpropagation, and the
//! Adadelta optimizer used to train them.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Fully connected layer computing `a · Wᵀ + b` over a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    fn forward(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((input.nrows(), self.fan_out()));
        general_mat_mul(1.0, &input, &self.weights.t(), 0.0, &mut out);
        out += &self.bias;
        out
    }
}

/// A stack of dense layers with leaky-ReLU between layers and an identity
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass. `inputs[l]` is the input of layer
/// `l`; `pre[l]` its pre-activation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// Gradients with the same shapes as an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return input(format!("invalid layer dimensions {dims:?}"));
        }
        let layers = dims
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    /// Rebuilds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return input("network needs at least one layer");
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return input("layer shapes do not chain");
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.fan_out()) {
            return input("bias length does not match layer width");
        }
        Ok(Self { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return input(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut a = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            a.mapv_inplace(leaky);
            a = layer.forward(a.view());
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(a.view());
            inputs.push(a);
            a = if l + 1 < self.layers.len() {
                z.mapv(leaky)
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Ok((a, MlpCache { inputs, pre }))
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the output rows) and
    /// returns parameter gradients plus the gradient w.r.t. the input rows.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let mut delta = grad_out.clone();
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut gw = Array2::zeros(layer.weights.raw_dim());
            general_mat_mul(1.0, &delta.t(), &cache.inputs[l], 0.0, &mut gw);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense {
                weights: gw,
                bias: gb,
            });
            let mut prev = Array2::zeros((delta.nrows(), layer.fan_in()));
            general_mat_mul(1.0, &delta, &layer.weights, 0.0, &mut prev);
            if l > 0 {
                prev.zip_mut_with(&cache.pre[l - 1], |g, &z| *g *= leaky_grad(z));
            }
            delta = prev;
        }
        grads.reverse();
        (MlpGrads { layers: grads }, delta)
    }

    /// Smallest |pre-activation| over hidden units in a cached pass; used by
    /// finite-difference checks to avoid the leaky-ReLU kink.
    pub fn min_abs_hidden_preactivation(cache: &MlpCache) -> f64 {
        let hidden = cache.pre.len().saturating_sub(1);
        cache.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weights.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    /// Flat read-only view of every parameter, weights then bias per layer.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Adds `delta` to the parameter at flat index `index` (ordering of
    /// [`Mlp::flat_params`]).
    pub fn perturb(&mut self, index: usize, delta: f64) {
        let mut offset = index;
        for t in self.tensors_mut() {
            if offset < t.len() {
                t[offset] += delta;
                return;
            }
            offset -= t.len();
        }
        panic!("parameter index {index} out of range");
    }
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }

    pub(crate) fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weights.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }
}

/// Serializable form of a dense layer: row-major `out × in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseRecord {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Dense> for DenseRecord {
    fn from(d: &Dense) -> Self {
        Self {
            fan_in: d.fan_in(),
            fan_out: d.fan_out(),
            weights: d.weights.iter().copied().collect(),
            bias: d.bias.to_vec(),
        }
    }
}

impl TryFrom<DenseRecord> for Dense {
    type Error = Error;

    fn try_from(r: DenseRecord) -> Result<Self> {
        let weights = Array2::from_shape_vec((r.fan_out, r.fan_in), r.weights)
            .map_err(|e| Error::Input(format!("bad weight shape: {e}")))?;
        if r.bias.len() != r.fan_out {
            return input("bias length does not match fan_out");
        }
        Ok(Dense {
            weights,
            bias: Array1::from(r.bias),
        })
    }
}

/// Adadelta hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaParams {
    pub learning_rate: f64,
    pub rho: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdadeltaParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.007,
            rho: 0.99,
            weight_decay: 0.04,
            eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    square_avg: Vec<f64>,
    acc_delta: Vec<f64>,
}

/// Adadelta with weight decay folded into the gradient.
///
/// Per parameter: `g += λθ`, `v = ρv + (1−ρ)g²`,
/// `Δ = √(u+ε)/√(v+ε) · g`, `u = ρu + (1−ρ)Δ²`, `θ −= lr·Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub params: AdadeltaParams,
    slots: Vec<Slot>,
}

impl Adadelta {
    pub fn new(params: AdadeltaParams) -> Self {
        Self {
            params,
            slots: Vec::new(),
        }
    }

    /// Updates `param` in place. `slot` identifies the tensor so its running
    /// averages persist across calls.
    pub fn step_tensor(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) {
        assert_eq!(param.len(), grad.len(), "parameter/gradient shape mismatch");
        while self.slots.len() <= slot {
            self.slots.push(Slot {
                square_avg: Vec::new(),
                acc_delta: Vec::new(),
            });
        }
        let s = &mut self.slots[slot];
        if s.square_avg.len() != param.len() {
            s.square_avg = vec![0.0; param.len()];
            s.acc_delta = vec![0.0; param.len()];
        }
        let AdadeltaParams {
            learning_rate,
            rho,
            weight_decay,
            eps,
        } = self.params;
        for i in 0..param.len() {
            let g = grad[i] + weight_decay * param[i];
            s.square_avg[i] = rho * s.square_avg[i] + (1.0 - rho) * g * g;
            let delta = (s.acc_delta[i] + eps).sqrt() / (s.square_avg[i] + eps).sqrt() * g;
            s.acc_delta[i] = rho * s.acc_delta[i] + (1.0 - rho) * delta * delta;
            param[i] -= learning_rate * delta;
        }
    }

    /// One descent step on every tensor of `net`. Non-finite gradients are
    /// rejected before any parameter changes.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads, epoch: usize) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite gradient".into(),
            });
        }
        let grads: Vec<&[f64]> = grads.tensors().collect();
        for (slot, (param, grad)) in net.tensors_mut().zip(grads).enumerate() {
            self.step_tensor(slot, param, grad);
        }
        Ok(())
    }
}
