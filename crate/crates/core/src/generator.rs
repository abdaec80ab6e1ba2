//! The subspace generator: a dense network from uniform latent noise to
//! binary feature masks, trained by minimizing MMD² between a batch and its
//! masked copy.
//!
//! Masks come from the upper-softmax `u(softmax(x) − 1/d)`. The step has no
//! useful derivative, so backpropagation evaluates the loss gradient at the
//! binary mask and passes it through the softmax Jacobian instead
//! (straight-through).

use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{input, Error, Result};
use crate::kernel::{mmd2_with_grads, KernelSpec, MmdVariant};
use crate::kernel_learning::{self, AutoencoderNet};
use crate::lens::{LensDistribution, SubspaceMask};
use crate::nn::{Adadelta, AdadeltaParams, Mlp, MlpCache, MlpGrads};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_rho: f64,
    pub weight_decay: f64,
    /// One encoder update per this many batch updates when kernel learning.
    pub encoder_period: usize,
    pub kernel_learning: bool,
    pub mmd_variant: MmdVariant,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 500,
            learning_rate: 0.007,
            decay_rho: 0.99,
            weight_decay: 0.04,
            encoder_period: 5,
            kernel_learning: false,
            mmd_variant: MmdVariant::UnbiasedCrossFull,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return input("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return input("learning_rate must be positive");
        }
        if !(self.decay_rho > 0.0 && self.decay_rho < 1.0) {
            return input("decay_rho must lie in (0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return input("weight_decay must be nonnegative");
        }
        if self.encoder_period == 0 {
            return input("encoder_period must be positive");
        }
        if self.kernel_learning && self.encoder_period < 2 {
            return input("kernel learning needs encoder_period ≥ 2 so the generator is updated");
        }
        Ok(())
    }

    pub fn optimizer_params(&self) -> AdadeltaParams {
        AdadeltaParams {
            learning_rate: self.learning_rate,
            rho: self.decay_rho,
            weight_decay: self.weight_decay,
            eps: 1e-6,
        }
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b).max(1)
}

/// `[⌈d/16⌉, ⌈d/8⌉, ⌈d/4⌉, ⌈d/2⌉, d, d]`, each at least 1.
pub fn generator_layer_dims(d: usize) -> Vec<usize> {
    vec![
        ceil_div(d, 16),
        ceil_div(d, 8),
        ceil_div(d, 4),
        ceil_div(d, 2),
        d,
        d,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub mlp: Mlp,
    pub rng_seed: u64,
}

impl GeneratorNet {
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        if d < 2 {
            return input(format!("generator needs at least 2 features, got {d}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            mlp: Mlp::new(&generator_layer_dims(d), &mut rng)?,
            rng_seed: seed,
        })
    }

    pub fn from_mlp(mlp: Mlp, rng_seed: u64) -> Result<Self> {
        if mlp.output_dim() < 2 {
            return input("generator output must have at least 2 features");
        }
        Ok(Self { mlp, rng_seed })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.mlp.dims()
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Uniform `[0, 1)` latent noise, one row per draw.
    pub fn noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_fn((rows, self.latent_dim()), |_| rng.random::<f64>())
    }
}

fn softmax_into(logits: ArrayView1<'_, f64>, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits.iter()) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Bits of the upper-softmax given logits and their softmax.
fn upper_softmax_bits(logits: ArrayView1<'_, f64>, soft: &[f64]) -> Vec<u8> {
    let threshold = 1.0 / soft.len() as f64;
    let mut bits: Vec<u8> = soft.iter().map(|&s| u8::from(s - threshold > 0.0)).collect();
    if bits.iter().all(|&b| b == 0) {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        bits[best] = 1;
    }
    bits
}

/// `u(softmax(x) − 1/d)`; an all-zero result (exactly uniform softmax) is
/// repaired by setting the first maximal coordinate.
pub fn upper_softmax(pre_activation: &[f64]) -> Result<SubspaceMask> {
    let d = pre_activation.len();
    if d < 2 {
        return input(format!("upper softmax needs at least 2 coordinates, got {d}"));
    }
    if pre_activation.iter().any(|v| !v.is_finite()) {
        return input("upper softmax input is not finite");
    }
    let logits = ArrayView1::from(pre_activation);
    let mut soft = vec![0.0; d];
    softmax_into(logits, &mut soft);
    SubspaceMask::new(upper_softmax_bits(logits, &soft))
}

/// Result of a batched generator forward pass.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub logits: Array2<f64>,
    /// Softmax of the logits, one row per latent vector.
    pub relaxed: Array2<f64>,
    /// Binary masks as 0/1 values, one row per latent vector.
    pub masks: Array2<f64>,
    pub cache: MlpCache,
}

impl GeneratorOutput {
    pub fn mask(&self, row: usize) -> SubspaceMask {
        SubspaceMask::new(self.masks.row(row).iter().map(|&v| v as u8).collect())
            .expect("upper softmax never emits an all-zero mask")
    }
}

pub fn generator_forward_batch(net: &GeneratorNet, noise: ArrayView2<'_, f64>) -> Result<GeneratorOutput> {
    let (logits, cache) = net.mlp.forward_cached(noise)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return input("generator produced non-finite logits");
    }
    let (rows, d) = logits.dim();
    let mut relaxed = Array2::zeros((rows, d));
    let mut masks = Array2::zeros((rows, d));
    let mut soft = vec![0.0; d];
    for i in 0..rows {
        softmax_into(logits.row(i), &mut soft);
        let bits = upper_softmax_bits(logits.row(i), &soft);
        for j in 0..d {
            relaxed[[i, j]] = soft[j];
            masks[[i, j]] = f64::from(bits[j]);
        }
    }
    Ok(GeneratorOutput {
        logits,
        relaxed,
        masks,
        cache,
    })
}

/// Single latent vector → `(mask, relaxed, cache)`.
pub fn generator_forward(net: &GeneratorNet, z: &[f64]) -> Result<(SubspaceMask, Vec<f64>, MlpCache)> {
    if z.len() != net.latent_dim() {
        return input(format!(
            "latent vector has length {}, generator expects {}",
            z.len(),
            net.latent_dim()
        ));
    }
    let noise = ArrayView2::from_shape((1, z.len()), z).map_err(|e| Error::Input(e.to_string()))?;
    let out = generator_forward_batch(net, noise)?;
    Ok((out.mask(0), out.relaxed.row(0).to_vec(), out.cache))
}

/// Which mask values enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Binary masks in the loss, softmax Jacobian in the backward pass.
    StraightThrough,
    /// Softmax outputs in place of the masks; gradients are then exact for
    /// this smooth surrogate.
    Relaxed,
}

pub(crate) struct MaskedPass {
    pub loss: f64,
    pub gen_grads: MlpGrads,
    /// Gradient of the MMD term w.r.t. the encoder, when requested.
    pub encoder_grads: Option<MlpGrads>,
}

/// MMD² between `batch` and its masked copy plus gradients for the
/// generator and (optionally) the encoder of a composed kernel.
pub(crate) fn masked_mmd_pass(
    net: &GeneratorNet,
    batch: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    bandwidth2: f64,
    encoder: Option<&Mlp>,
    variant: MmdVariant,
    mode: MaskMode,
    need_encoder_grads: bool,
) -> Result<MaskedPass> {
    let n = batch.nrows();
    if n < 2 {
        return input(format!("batch needs at least 2 rows, got {n}"));
    }
    if noise.nrows() != n {
        return input(format!("noise has {} rows, batch has {n}", noise.nrows()));
    }
    if batch.ncols() != net.output_dim() {
        return input(format!(
            "batch has {} columns, generator emits {}",
            batch.ncols(),
            net.output_dim()
        ));
    }
    let out = generator_forward_batch(net, noise)?;
    let used = match mode {
        MaskMode::StraightThrough => &out.masks,
        MaskMode::Relaxed => &out.relaxed,
    };
    let masked = used * &batch;

    let (loss, grad_masked, encoder_grads) = match encoder {
        None => {
            let g = mmd2_with_grads(batch, masked.view(), bandwidth2, variant, false);
            (g.value, g.grad_b, None)
        }
        Some(enc) => {
            let (fa, cache_a) = enc.forward_cached(batch)?;
            let (fb, cache_b) = enc.forward_cached(masked.view())?;
            let g = mmd2_with_grads(fa.view(), fb.view(), bandwidth2, variant, need_encoder_grads);
            let (enc_b, grad_masked) = enc.backward(&cache_b, &g.grad_b);
            let enc_grads = g.grad_a.map(|ga| {
                let (mut enc_a, _) = enc.backward(&cache_a, &ga);
                enc_a.add_assign(&enc_b);
                enc_a
            });
            (g.value, grad_masked, enc_grads)
        }
    };
    if !loss.is_finite() {
        return input("MMD² loss is not finite");
    }

    // ∂L/∂mask = ∂L/∂(mask ⊙ x) ⊙ x, then through the softmax Jacobian.
    let grad_mask = grad_masked * &batch;
    let mut grad_logits = Array2::zeros(out.relaxed.raw_dim());
    for ((mut gl, gm), s) in grad_logits
        .rows_mut()
        .into_iter()
        .zip(grad_mask.rows())
        .zip(out.relaxed.rows())
    {
        let inner = gm.dot(&s);
        for ((g, &m), &si) in gl.iter_mut().zip(gm.iter()).zip(s.iter()) {
            *g = si * (m - inner);
        }
    }
    let (gen_grads, _) = net.mlp.backward(&out.cache, &grad_logits);
    Ok(MaskedPass {
        loss,
        gen_grads,
        encoder_grads,
    })
}

/// Straight-through MMD² loss and generator gradients for one batch.
pub fn vgan_loss_and_grad(
    net: &GeneratorNet,
    batch: &DataMatrix,
    noise: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    variant: MmdVariant,
) -> Result<(f64, MlpGrads)> {
    vgan_loss_and_grad_with_mode(net, batch, noise, spec, variant, MaskMode::StraightThrough)
}

pub fn vgan_loss_and_grad_with_mode(
    net: &GeneratorNet,
    batch: &DataMatrix,
    noise: ArrayView2<'_, f64>,
    spec: &KernelSpec,
    variant: MmdVariant,
    mode: MaskMode,
) -> Result<(f64, MlpGrads)> {
    let pass = masked_mmd_pass(
        net,
        batch.view(),
        noise,
        spec.bandwidth2(),
        spec.composed_encoder.as_deref(),
        variant,
        mode,
        false,
    )?;
    Ok((pass.loss, pass.gen_grads))
}

/// One Adadelta descent step.
pub fn adadelta_step(net: &mut Mlp, grads: &MlpGrads, state: &mut Adadelta, epoch: usize) -> Result<()> {
    state.step(net, grads, epoch)
}

/// Everything produced by a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: GeneratorNet,
    pub autoencoder: Option<AutoencoderNet>,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    /// Bandwidth² of the base Gaussian kernel at the end of training.
    pub bandwidth2: f64,
}

/// Stops training once the wall clock passes a deadline.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    pub at: Instant,
    pub budget_seconds: f64,
}

impl Deadline {
    pub(crate) fn check(deadline: Option<Deadline>) -> Result<()> {
        match deadline {
            Some(d) if Instant::now() > d.at => Err(Error::Timeout {
                budget_seconds: d.budget_seconds,
            }),
            _ => Ok(()),
        }
    }
}

/// Seeds for network initialization and for the training stream.
pub(crate) fn training_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let init = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = ChaCha8Rng::seed_from_u64(seed);
    stream.set_stream(1);
    (init, stream)
}

/// Row batches for one epoch: a seeded shuffle cut into chunks of
/// `min(batch_size, n)`. A trailing chunk of a single row is dropped.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.min(n))
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

pub(crate) fn check_training_data(data: &DataMatrix) -> Result<()> {
    if data.ncols() < 2 {
        return input(format!("training needs at least 2 features, got {}", data.ncols()));
    }
    if data.nrows() < 2 {
        return input(format!("training needs at least 2 rows, got {}", data.nrows()));
    }
    Ok(())
}

pub fn train_vgan(data: &DataMatrix, config: &TrainConfig, spec: &KernelSpec) -> Result<TrainOutcome> {
    train_vgan_until(data, config, spec, None)
}

/// [`train_vgan`] that gives up with [`Error::Timeout`] past `deadline`.
pub fn train_vgan_until(
    data: &DataMatrix,
    config: &TrainConfig,
    spec: &KernelSpec,
    deadline: Option<Deadline>,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_training_data(data)?;
    if config.kernel_learning {
        return kernel_learning::train_with_kernel_learning(data, config, spec, deadline);
    }
    let (mut init_rng, mut rng) = training_rngs(config.seed);
    let mut generator = GeneratorNet {
        mlp: Mlp::new(&generator_layer_dims(data.ncols()), &mut init_rng)?,
        rng_seed: config.seed,
    };
    let mut optimizer = Adadelta::new(config.optimizer_params());
    let encoder = spec.composed_encoder.as_deref();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        Deadline::check(deadline)?;
        let mut total = 0.0;
        let batches = epoch_batches(data.nrows(), config.batch_size, &mut rng);
        for rows in &batches {
            let batch = data.select_rows(rows);
            let noise = generator.noise(rows.len(), &mut rng);
            let pass = masked_mmd_pass(
                &generator,
                batch.view(),
                noise.view(),
                spec.bandwidth2(),
                encoder,
                config.mmd_variant,
                MaskMode::StraightThrough,
                false,
            )
            .map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
            adadelta_step(&mut generator.mlp, &pass.gen_grads, &mut optimizer, epoch)?;
            total += pass.loss;
        }
        loss_history.push(total / batches.len() as f64);
    }
    Ok(TrainOutcome {
        generator,
        autoencoder: None,
        loss_history,
        bandwidth2: spec.bandwidth2(),
    })
}

/// Draws `count` masks from the generator and deduplicates them.
pub fn sample_lens(net: &GeneratorNet, count: usize, seed: u64) -> Result<LensDistribution> {
    if count == 0 {
        return input("sample count must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = net.noise(count, &mut rng);
    let out = generator_forward_batch(net, noise.view())?;
    LensDistribution::from_draws((0..count).map(|i| out.mask(i)))
}
