//! Experiment runners: lens recovery on the two-view population, the
//! one-class outlier benchmark, timing runs and the myopicity check, each
//! emitting a tidy CSV table.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{OdMethod, RunConfig};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::generator::{sample_lens, train_vgan_until, Deadline, TrainConfig, TrainOutcome};
use crate::kernel::{median_heuristic_subsampled, myopicity_test, KernelSpec, MmdTestResult};
use crate::kernel_learning::{composed_spec, AutoencoderNet};
use crate::lens::{LensDistribution, SubspaceMask};
use crate::model::Model;
use crate::od::{auc, ensemble_scores, feature_bagging_lens, one_class_split};
use crate::synthetic::{gen_synthetic_population, sub_seed, uniform_noise, SyntheticSpec};

// tags separating the random streams derived from one seed
const TAG_BANDWIDTH: u64 = 1;
const TAG_LENS: u64 = 2;
const TAG_POPULATION: u64 = 3;
const TAG_SPLIT: u64 = 4;
const TAG_TEST: u64 = 5;
const TAG_SUBSAMPLE: u64 = 6;
const TAG_BAGGING: u64 = 7;
const TAG_NOISE: u64 = 8;

/// Writes serializable rows as CSV with a header, to a file or to stdout.
pub fn write_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn error_text(e: &Error) -> String {
    e.to_string().replace(['\n', '\r'], " ")
}

/// Gaussian kernel with the median-heuristic bandwidth of a seeded
/// subsample of at most `max_rows` rows.
pub fn median_kernel(data: &DataMatrix, max_rows: usize, seed: u64) -> Result<KernelSpec> {
    KernelSpec::gaussian(median_heuristic_subsampled(data, max_rows, sub_seed(seed, TAG_BANDWIDTH))?)
}

/// Trains a generator on `data` with a median-heuristic Gaussian kernel.
pub fn fit_generator(
    data: &DataMatrix,
    train: &TrainConfig,
    bandwidth_rows: usize,
    deadline: Option<Deadline>,
) -> Result<TrainOutcome> {
    let spec = median_kernel(data, bandwidth_rows, train.seed)?;
    train_vgan_until(data, train, &spec, deadline)
}

fn kernel_for(autoencoder: Option<&AutoencoderNet>, bandwidth2: f64) -> Result<KernelSpec> {
    match autoencoder {
        Some(ae) => composed_spec(ae, bandwidth2),
        None => KernelSpec::gaussian(bandwidth2),
    }
}

/// The kernel a trained model was fitted with.
pub fn model_kernel(model: &Model) -> Result<KernelSpec> {
    kernel_for(model.autoencoder.as_ref(), model.bandwidth2)
}

pub fn outcome_kernel(outcome: &TrainOutcome) -> Result<KernelSpec> {
    kernel_for(outcome.autoencoder.as_ref(), outcome.bandwidth2)
}

/// Seed for drawing the lens of a run.
pub fn lens_seed(seed: u64) -> u64 {
    sub_seed(seed, TAG_LENS)
}

/// Lens drawn from a trained generator, seeded from the run seed.
pub fn lens_of(outcome: &TrainOutcome, samples: usize, seed: u64) -> Result<LensDistribution> {
    sample_lens(&outcome.generator, samples, lens_seed(seed))
}

/// Seeded subsample of at most `max_rows` rows, in original order.
pub fn subsample(data: &DataMatrix, max_rows: usize, seed: u64) -> DataMatrix {
    if data.nrows() <= max_rows {
        return data.clone();
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(sub_seed(seed, TAG_SUBSAMPLE));
    let mut idx = rand::seq::index::sample(&mut rng, data.nrows(), max_rows).into_vec();
    idx.sort_unstable();
    data.select_rows(&idx)
}

/// Outcome of one myopicity check with lens diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MyopicityRow {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub num_permutations: usize,
    pub rows: usize,
    pub lens_size: usize,
    pub identity_frequency: f64,
}

/// Permutation test of `data` against its lens projection on a seeded
/// subsample of at most `max_rows` rows.
pub fn run_myopicity(
    data: &DataMatrix,
    lens: &LensDistribution,
    spec: &KernelSpec,
    alpha: f64,
    num_permutations: usize,
    max_rows: usize,
    seed: u64,
) -> Result<MyopicityRow> {
    let rows = subsample(data, max_rows, seed);
    let MmdTestResult {
        statistic,
        p_value,
        alpha,
        reject,
        num_permutations,
    } = myopicity_test(&rows, lens, spec, alpha, num_permutations, sub_seed(seed, TAG_TEST))?;
    Ok(MyopicityRow {
        statistic,
        p_value,
        alpha,
        reject,
        num_permutations,
        rows: rows.nrows(),
        lens_size: lens.len(),
        identity_frequency: lens.identity_frequency(),
    })
}

/// One (mixing weight, repetition) cell of the lens-recovery experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensRow {
    #[serde(rename = "F")]
    pub f: f64,
    pub rep: usize,
    #[serde(rename = "Fhat_S1")]
    pub fhat_s1: Option<f64>,
    #[serde(rename = "Fhat_S2")]
    pub fhat_s2: Option<f64>,
    pub other: Option<f64>,
    pub error: String,
}

/// Splits lens mass into the plane view (support a nonempty subset of the
/// first two features), the axis view (exactly the third feature) and the
/// rest, normalized over all reported mass.
pub fn attribute_views(lens: &LensDistribution) -> (f64, f64, f64) {
    let (mut plane, mut axis, mut other) = (0.0, 0.0, 0.0);
    for e in lens.entries() {
        match e.mask.bits() {
            [_, _, 0] => plane += e.probability,
            [0, 0, 1] => axis += e.probability,
            _ => other += e.probability,
        }
    }
    let total = plane + axis + other;
    (plane / total, axis / total, other / total)
}

fn lens_cell(f: f64, rep: usize, config: &RunConfig) -> Result<(f64, f64, f64)> {
    let seed = config.seed().wrapping_add(rep as u64);
    let data = gen_synthetic_population(&SyntheticSpec {
        n: config.population_size,
        f,
        seed: sub_seed(seed, TAG_POPULATION),
    })?;
    let train = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let outcome = fit_generator(&data, &train, config.bandwidth_rows, None)?;
    let lens = lens_of(&outcome, config.lens_samples, seed)?;
    Ok(attribute_views(&lens))
}

/// Trains on a fresh population per (F, repetition) and reports how the
/// sampled lens splits between the two views. Failed cells are recorded
/// and the run continues.
pub fn run_lens_experiment(config: &RunConfig) -> Vec<LensRow> {
    let cells: Vec<(f64, usize)> = config
        .f_values
        .iter()
        .flat_map(|&f| (0..config.repetitions).map(move |r| (f, r)))
        .collect();
    cells
        .par_iter()
        .map(|&(f, rep)| match lens_cell(f, rep, config) {
            Ok((s1, s2, other)) => LensRow {
                f,
                rep,
                fhat_s1: Some(s1),
                fhat_s2: Some(s2),
                other: Some(other),
                error: String::new(),
            },
            Err(e) => LensRow {
                f,
                rep,
                fhat_s1: None,
                fhat_s2: None,
                other: None,
                error: error_text(&e),
            },
        })
        .collect()
}

/// One repetition of the one-class benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdBenchRow {
    pub method: String,
    pub detector: String,
    pub rep: usize,
    pub auc: Option<f64>,
    pub wallclock_seconds: f64,
    pub myopicity_reject: Option<bool>,
    pub lens_size: Option<usize>,
    pub error: String,
}

impl OdBenchRow {
    /// Row without the timing column, for reproducibility comparisons.
    pub fn without_timing(&self) -> OdBenchRow {
        OdBenchRow {
            wallclock_seconds: 0.0,
            ..self.clone()
        }
    }
}

struct OdCell {
    auc: f64,
    myopicity_reject: Option<bool>,
    lens_size: usize,
}

fn od_cell(data: &DataMatrix, labels: &[u8], rep: usize, config: &RunConfig) -> Result<OdCell> {
    let seed = config.seed().wrapping_add(rep as u64);
    let split = one_class_split(data, labels, config.train_ratio, sub_seed(seed, TAG_SPLIT))?;
    let d = data.ncols();
    let (lens, myopicity_reject) = match config.method {
        OdMethod::Full => (
            LensDistribution::from_weights(vec![(SubspaceMask::full(d), 1.0)])?,
            None,
        ),
        OdMethod::Fb => (
            feature_bagging_lens(d, config.fb_subspaces, sub_seed(seed, TAG_BAGGING))?,
            None,
        ),
        OdMethod::Vgan => {
            let train = TrainConfig {
                seed,
                ..config.train.clone()
            };
            let outcome = fit_generator(&split.train, &train, config.bandwidth_rows, None)?;
            let lens = lens_of(&outcome, config.lens_samples, seed)?;
            let spec = outcome_kernel(&outcome)?;
            let test = run_myopicity(
                &split.train,
                &lens,
                &spec,
                config.alpha,
                config.num_permutations,
                config.myopicity_rows,
                seed,
            )?;
            (lens, Some(test.reject))
        }
    };
    let scores = ensemble_scores(&split, &lens, config.detector, config.k())?;
    Ok(OdCell {
        auc: auc(&scores.scores, &split.test_labels)?,
        myopicity_reject,
        lens_size: lens.len(),
    })
}

/// One-class protocol per repetition: split, build the subspace source,
/// score the test rows with the weighted ensemble and report the AUC.
pub fn run_od_benchmark(data: &DataMatrix, labels: &[u8], config: &RunConfig) -> Vec<OdBenchRow> {
    (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let start = Instant::now();
            let result = od_cell(data, labels, rep, config);
            let wallclock_seconds = start.elapsed().as_secs_f64();
            let base = OdBenchRow {
                method: config.method.name().to_string(),
                detector: config.detector.name().to_string(),
                rep,
                auc: None,
                wallclock_seconds,
                myopicity_reject: None,
                lens_size: None,
                error: String::new(),
            };
            match result {
                Ok(c) => OdBenchRow {
                    auc: Some(c.auc),
                    myopicity_reject: c.myopicity_reject,
                    lens_size: Some(c.lens_size),
                    ..base
                },
                Err(e) => OdBenchRow {
                    error: error_text(&e),
                    ..base
                },
            }
        })
        .collect()
}

/// One width of the timing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityRow {
    pub d: usize,
    pub n: usize,
    pub epochs: usize,
    pub seconds: f64,
    /// `ok`, `timeout` or an error message.
    pub status: String,
    pub final_loss: Option<f64>,
}

/// A timing row plus the loss history of that run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityRun {
    pub row: ScalabilityRow,
    pub loss_history: Vec<f64>,
}

/// Times training on `n × d` uniform noise for every width, on a single
/// worker thread. Only training is timed; an exceeded budget marks the row
/// and the run moves on.
pub fn run_scalability(config: &RunConfig) -> Result<Vec<ScalabilityRun>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        config
            .d_values
            .iter()
            .map(|&d| {
                let n = config.scalability_rows;
                let data = uniform_noise(n, d, sub_seed(config.seed(), TAG_NOISE ^ (d as u64) << 8))?;
                let spec = median_kernel(&data, config.bandwidth_rows, config.seed())?;
                let start = Instant::now();
                let deadline = config.budget_seconds.map(|b| Deadline {
                    at: start + std::time::Duration::from_secs_f64(b),
                    budget_seconds: b,
                });
                let result = train_vgan_until(&data, &config.train, &spec, deadline);
                let seconds = start.elapsed().as_secs_f64();
                let (status, loss_history) = match result {
                    Ok(o) => ("ok".to_string(), o.loss_history),
                    Err(Error::Timeout { .. }) => ("timeout".to_string(), Vec::new()),
                    Err(e) => (error_text(&e), Vec::new()),
                };
                Ok(ScalabilityRun {
                    row: ScalabilityRow {
                        d,
                        n,
                        epochs: config.train.epochs,
                        seconds,
                        status,
                        final_loss: loss_history.last().copied(),
                    },
                    loss_history,
                })
            })
            .collect()
    })
}
