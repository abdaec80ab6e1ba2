//! Command-line front end: `myosub <command> --config <file.json>`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};

use myosub::config::{Command, RunConfig};
use myosub::data::read_csv;
use myosub::experiments::{
    fit_generator, lens_seed, median_kernel, model_kernel, run_lens_experiment, run_myopicity, run_od_benchmark,
    run_scalability, write_rows,
};
use myosub::generator::{sample_lens, Deadline};
use myosub::model::{write_loss_history, Model};
use myosub::{Error, LensDistribution, MmdVariant, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliCommand {
    Train,
    Sample,
    TestMyopicity,
    OdBench,
    SynthLens,
    Scalability,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Train => Command::Train,
            CliCommand::Sample => Command::Sample,
            CliCommand::TestMyopicity => Command::TestMyopicity,
            CliCommand::OdBench => Command::OdBench,
            CliCommand::SynthLens => Command::SynthLens,
            CliCommand::Scalability => Command::Scalability,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliVariant {
    UnbiasedCrossFull,
    PaperEq6CrossOffdiag,
}

/// Generative subspace selection, myopicity testing and subspace
/// outlier-detection ensembles.
#[derive(Debug, Parser)]
#[command(name = "myosub", version)]
struct Cli {
    command: CliCommand,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run seed; overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; overrides `output_path`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch_size", alias = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "learning_rate", alias = "learning-rate")]
    learning_rate: Option<f64>,
    #[arg(long = "decay_rho", alias = "decay-rho")]
    decay_rho: Option<f64>,
    #[arg(long = "weight_decay", alias = "weight-decay")]
    weight_decay: Option<f64>,
    #[arg(long = "encoder_period", alias = "encoder-period")]
    encoder_period: Option<usize>,
    #[arg(long = "kernel_learning", alias = "kernel-learning")]
    kernel_learning: Option<bool>,
    #[arg(long = "mmd_variant", alias = "mmd-variant", value_enum)]
    mmd_variant: Option<CliVariant>,
}

impl Cli {
    fn apply(&self, config: &mut RunConfig) {
        let t = &mut config.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.decay_rho {
            t.decay_rho = v;
        }
        if let Some(v) = self.weight_decay {
            t.weight_decay = v;
        }
        if let Some(v) = self.encoder_period {
            t.encoder_period = v;
        }
        if let Some(v) = self.kernel_learning {
            t.kernel_learning = v;
        }
        if let Some(v) = self.mmd_variant {
            t.mmd_variant = match v {
                CliVariant::UnbiasedCrossFull => MmdVariant::UnbiasedCrossFull,
                CliVariant::PaperEq6CrossOffdiag => MmdVariant::PaperEq6CrossOffdiag,
            };
        }
        if let Some(out) = &self.out {
            config.output_path = Some(out.clone());
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MYOSUB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Input(format!("MYOSUB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Input(format!("cannot configure worker threads: {e}")))
}

fn deadline(config: &RunConfig) -> Option<Deadline> {
    config.budget_seconds.map(|b| Deadline {
        at: Instant::now() + Duration::from_secs_f64(b),
        budget_seconds: b,
    })
}

fn run(command: Command, config: &RunConfig) -> Result<()> {
    let out = config.output_path.as_deref();
    match command {
        Command::Train => {
            let data = read_csv(config.dataset_path.as_deref().expect("validated"))?;
            let outcome = fit_generator(&data.features, &config.train, config.bandwidth_rows, deadline(config))?;
            let model = Model::from_outcome(&outcome, &config.train);
            model.save(out.expect("validated"))?;
            if let Some(path) = config.loss_history_path() {
                write_loss_history(&path, &outcome.loss_history)?;
            }
            eprintln!(
                "trained {} epochs, final mean loss {}",
                outcome.loss_history.len(),
                outcome.loss_history.last().map_or("n/a".to_string(), f64::to_string)
            );
        }
        Command::Sample => {
            let model = Model::load(config.model_path.as_deref().expect("validated"))?;
            let lens = sample_lens(&model.generator, config.lens_samples, lens_seed(config.seed()))?;
            lens.write_csv(out.expect("validated"))?;
            eprintln!(
                "{} distinct masks, identity frequency {}",
                lens.len(),
                lens.identity_frequency()
            );
        }
        Command::TestMyopicity => {
            let data = read_csv(config.dataset_path.as_deref().expect("validated"))?.features;
            let (lens, spec) = match (&config.model_path, &config.lens_path) {
                (Some(m), _) => {
                    let model = Model::load(m)?;
                    let lens = sample_lens(&model.generator, config.lens_samples, lens_seed(config.seed()))?;
                    (lens, model_kernel(&model)?)
                }
                (None, Some(l)) => (
                    LensDistribution::read_csv(l)?,
                    median_kernel(&data, config.bandwidth_rows, config.seed())?,
                ),
                (None, None) => unreachable!("validated"),
            };
            let row = run_myopicity(
                &data,
                &lens,
                &spec,
                config.alpha,
                config.num_permutations,
                config.myopicity_rows,
                config.seed(),
            )?;
            write_rows(out, &[row])?;
        }
        Command::OdBench => {
            let data = read_csv(config.dataset_path.as_deref().expect("validated"))?;
            if data.labels.len() != data.features.nrows() {
                return Err(Error::Input("od-bench needs a label column".into()));
            }
            write_rows(out, &run_od_benchmark(&data.features, &data.labels, config))?;
        }
        Command::SynthLens => write_rows(out, &run_lens_experiment(config))?,
        Command::Scalability => {
            let runs = run_scalability(config)?;
            let rows: Vec<_> = runs.into_iter().map(|r| r.row).collect();
            write_rows(out, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let result = configure_threads()
        .and_then(|()| RunConfig::load(&cli.config))
        .and_then(|mut config| {
            cli.apply(&mut config);
            config.validate(command)?;
            run(command, &config)
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
