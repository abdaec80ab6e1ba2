//! Adversarial kernel learning: an autoencoder whose encoder shapes the
//! kernel `k(E(x), E(y))`. The encoder and decoder ascend
//! `MMD²_{k∘E} − Σᵢ ‖xᵢ − D(E(xᵢ))‖₂` while the generator descends the MMD
//! term, alternating one encoder update with `encoder_period − 1` generator
//! updates.

use std::sync::Arc;

use ndarray::ArrayView2;
use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DataMatrix;
use crate::error::{input, Error, Result};
use crate::generator::{
    adadelta_step, check_training_data, epoch_batches, generator_layer_dims, masked_mmd_pass,
    training_rngs, Deadline, GeneratorNet, MaskMode, TrainConfig, TrainOutcome,
};
use crate::kernel::{median_heuristic_rows, KernelSpec, MmdVariant};
use crate::nn::{Adadelta, Mlp, MlpGrads};

/// Rows used to re-derive the encoder-space bandwidth during training.
const BANDWIDTH_ROWS: usize = 500;

/// `[d, ⌈d/2⌉, ⌈d/4⌉, ⌈d/8⌉]`, each at least 1.
pub fn encoder_layer_dims(d: usize) -> Vec<usize> {
    vec![d, d.div_ceil(2).max(1), d.div_ceil(4).max(1), d.div_ceil(8).max(1)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderNet {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
}

impl AutoencoderGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.encoder.flat();
        v.extend(self.decoder.flat());
        v
    }
}

impl AutoencoderNet {
    pub fn new(d: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let dims = encoder_layer_dims(d);
        let mut rev = dims.clone();
        rev.reverse();
        Ok(Self {
            encoder: Mlp::new(&dims, rng)?,
            decoder: Mlp::new(&rev, rng)?,
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() || encoder.input_dim() != decoder.output_dim() {
            return input("encoder and decoder shapes do not match");
        }
        Ok(Self { encoder, decoder })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    /// Adds `delta` to a parameter, indexing encoder parameters first.
    pub fn perturb(&mut self, index: usize, delta: f64) {
        let n_enc = self.encoder.num_params();
        if index < n_enc {
            self.encoder.perturb(index, delta);
        } else {
            self.decoder.perturb(index - n_enc, delta);
        }
    }

    /// `Σᵢ ‖xᵢ − D(E(xᵢ))‖₂`.
    pub fn reconstruction_error(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        let rec = self.decoder.forward(self.encoder.forward(x)?.view())?;
        Ok((&x - &rec)
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .sum())
    }

    /// Reconstruction error and its parameter gradients.
    fn reconstruction_with_grads(&self, x: ArrayView2<'_, f64>) -> Result<(f64, AutoencoderGrads)> {
        let (latent, enc_cache) = self.encoder.forward_cached(x)?;
        let (rec, dec_cache) = self.decoder.forward_cached(latent.view())?;
        let mut residual = &x - &rec;
        let mut total = 0.0;
        // ∂‖x − x̂‖/∂x̂ = −(x − x̂)/‖x − x̂‖, taken as 0 at an exact match
        for mut r in residual.rows_mut() {
            let norm = r.dot(&r).sqrt();
            total += norm;
            if norm > 0.0 {
                r.mapv_inplace(|v| -v / norm);
            } else {
                r.fill(0.0);
            }
        }
        let (decoder, grad_latent) = self.decoder.backward(&dec_cache, &residual);
        let (encoder, _) = self.encoder.backward(&enc_cache, &grad_latent);
        Ok((total, AutoencoderGrads { encoder, decoder }))
    }
}

/// Encoder forward pass for one row.
pub fn encode(ae: &AutoencoderNet, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != ae.input_dim() {
        return input(format!(
            "encoder expects {} features, got {}",
            ae.input_dim(),
            x.len()
        ));
    }
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Input(e.to_string()))?;
    Ok(ae.encoder.forward(view)?.row(0).to_vec())
}

pub fn median_heuristic_in_encoder_space(ae: &AutoencoderNet, data: &DataMatrix) -> Result<f64> {
    let encoded = ae.encoder.forward(data.view())?;
    median_heuristic_rows(encoded.view())
}

/// Loss terms and gradients of the kernel-learning objective for one batch.
#[derive(Debug, Clone)]
pub struct KlPass {
    /// `mmd2 − reconstruction`
    pub loss: f64,
    pub mmd2: f64,
    pub reconstruction: f64,
    /// Gradient of the MMD term w.r.t. the generator (to be descended).
    pub gen_grads: MlpGrads,
    /// Gradient of the full loss w.r.t. the autoencoder (to be ascended).
    pub ae_grads: AutoencoderGrads,
}

pub fn kl_loss_and_grads(
    gen: &GeneratorNet,
    ae: &AutoencoderNet,
    batch: &DataMatrix,
    noise: ArrayView2<'_, f64>,
    base_spec: &KernelSpec,
    variant: MmdVariant,
) -> Result<KlPass> {
    kl_loss_and_grads_with_mode(gen, ae, batch, noise, base_spec, variant, MaskMode::StraightThrough)
}

pub fn kl_loss_and_grads_with_mode(
    gen: &GeneratorNet,
    ae: &AutoencoderNet,
    batch: &DataMatrix,
    noise: ArrayView2<'_, f64>,
    base_spec: &KernelSpec,
    variant: MmdVariant,
    mode: MaskMode,
) -> Result<KlPass> {
    if batch.ncols() != ae.input_dim() {
        return input("batch width does not match the autoencoder");
    }
    let pass = masked_mmd_pass(
        gen,
        batch.view(),
        noise,
        base_spec.bandwidth2(),
        Some(&ae.encoder),
        variant,
        mode,
        true,
    )?;
    let (reconstruction, rec_grads) = ae.reconstruction_with_grads(batch.view())?;
    let loss = pass.loss - reconstruction;
    if !loss.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            message: "kernel-learning loss is not finite".into(),
        });
    }
    let mut encoder = pass.encoder_grads.expect("encoder gradients requested");
    let mut rec_enc = rec_grads.encoder;
    rec_enc.scale(-1.0);
    encoder.add_assign(&rec_enc);
    let mut decoder = rec_grads.decoder;
    decoder.scale(-1.0);
    Ok(KlPass {
        loss,
        mmd2: pass.loss,
        reconstruction,
        gen_grads: pass.gen_grads,
        ae_grads: AutoencoderGrads { encoder, decoder },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateTarget {
    Encoder,
    Generator,
}

/// Update counters of the alternating schedule: `encoder_iters` encoder
/// ascents, then `generator_iters` generator descents, then both counters
/// reset.
#[derive(Debug, Clone)]
pub struct Alternation {
    encoder_iters: usize,
    generator_iters: usize,
    trained_encoder: usize,
    trained_generator: usize,
}

impl Alternation {
    pub fn new(encoder_iters: usize, generator_iters: usize) -> Self {
        Self {
            encoder_iters,
            generator_iters,
            trained_encoder: 0,
            trained_generator: 0,
        }
    }

    pub fn for_period(encoder_period: usize) -> Self {
        Self::new(1, encoder_period.saturating_sub(1))
    }

    /// Which network the next batch updates, or `None` if the schedule is
    /// exhausted (only possible with zero generator iterations).
    pub fn next_target(&mut self) -> Option<UpdateTarget> {
        if self.trained_encoder < self.encoder_iters {
            self.trained_encoder += 1;
            Some(UpdateTarget::Encoder)
        } else if self.trained_generator < self.generator_iters {
            self.trained_generator += 1;
            if self.trained_generator >= self.generator_iters && self.trained_encoder >= self.encoder_iters {
                self.trained_encoder = 0;
                self.trained_generator = 0;
            }
            Some(UpdateTarget::Generator)
        } else {
            None
        }
    }
}

fn negated(g: &MlpGrads) -> MlpGrads {
    let mut g = g.clone();
    g.scale(-1.0);
    g
}

/// The base kernel's bandwidth is re-derived in encoder space, so the
/// caller's bandwidth is not used here.
pub(crate) fn train_with_kernel_learning(
    data: &DataMatrix,
    config: &TrainConfig,
    _spec: &KernelSpec,
    deadline: Option<Deadline>,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_training_data(data)?;
    let d = data.ncols();
    let (mut init_rng, mut rng) = training_rngs(config.seed);
    let mut generator = GeneratorNet {
        mlp: Mlp::new(&generator_layer_dims(d), &mut init_rng)?,
        rng_seed: config.seed,
    };
    let mut ae = AutoencoderNet::new(d, &mut init_rng)?;

    let mut sub_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sub_rng.set_stream(2);
    let bandwidth_rows = if data.nrows() > BANDWIDTH_ROWS {
        let mut idx = index::sample(&mut sub_rng, data.nrows(), BANDWIDTH_ROWS).into_vec();
        idx.sort_unstable();
        data.select_rows(&idx)
    } else {
        data.clone()
    };
    let mut bandwidth2 = median_heuristic_in_encoder_space(&ae, &bandwidth_rows)?;

    let mut gen_opt = Adadelta::new(config.optimizer_params());
    let mut enc_opt = Adadelta::new(config.optimizer_params());
    let mut dec_opt = Adadelta::new(config.optimizer_params());
    let mut schedule = Alternation::for_period(config.encoder_period);
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        Deadline::check(deadline)?;
        let batches = epoch_batches(data.nrows(), config.batch_size, &mut rng);
        let mut total = 0.0;
        for rows in &batches {
            let batch = data.select_rows(rows);
            let noise = generator.noise(rows.len(), &mut rng);
            let to_training = |e: Error| Error::Training {
                epoch,
                message: e.to_string(),
            };
            match schedule.next_target() {
                Some(UpdateTarget::Encoder) => {
                    let base = KernelSpec::gaussian(bandwidth2)?;
                    let pass = kl_loss_and_grads(&generator, &ae, &batch, noise.view(), &base, config.mmd_variant)
                        .map_err(to_training)?;
                    // ascent: descend the negated gradient
                    adadelta_step(&mut ae.encoder, &negated(&pass.ae_grads.encoder), &mut enc_opt, epoch)?;
                    adadelta_step(&mut ae.decoder, &negated(&pass.ae_grads.decoder), &mut dec_opt, epoch)?;
                    bandwidth2 = median_heuristic_in_encoder_space(&ae, &bandwidth_rows).map_err(to_training)?;
                    total += pass.mmd2;
                }
                Some(UpdateTarget::Generator) => {
                    let pass = masked_mmd_pass(
                        &generator,
                        batch.view(),
                        noise.view(),
                        bandwidth2,
                        Some(&ae.encoder),
                        config.mmd_variant,
                        MaskMode::StraightThrough,
                        false,
                    )
                    .map_err(to_training)?;
                    adadelta_step(&mut generator.mlp, &pass.gen_grads, &mut gen_opt, epoch)?;
                    total += pass.loss;
                }
                None => unreachable!("validated encoder_period ≥ 2"),
            }
        }
        loss_history.push(total / batches.len() as f64);
    }
    Ok(TrainOutcome {
        generator,
        autoencoder: Some(ae),
        loss_history,
        bandwidth2,
    })
}

/// Composed kernel for a trained autoencoder.
pub fn composed_spec(ae: &AutoencoderNet, bandwidth2: f64) -> Result<KernelSpec> {
    KernelSpec::composed(bandwidth2, Arc::new(ae.encoder.clone()))
}

/// `Σᵢ ‖xᵢ − D(E(xᵢ))‖₂` for a data matrix.
pub fn reconstruction_error(ae: &AutoencoderNet, data: &DataMatrix) -> Result<f64> {
    ae.reconstruction_error(data.view())
}
