#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use spgd::baseline::BaselineLoss;
use spgd::data::TableFormat;
use spgd::model::{ModelKind, OutputHead};
use spgd::optimizer::{Schedule, Seeding};
use spgd::LossSpec;

use config::{DataSource, MethodKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input data; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running or writing outputs; exit code 1.
    #[error(transparent)]
    Runtime(spgd::Error),
}

impl CliError {
    pub fn usage(e: spgd::Error) -> Self {
        CliError::Usage(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<spgd::Error> for CliError {
    fn from(e: spgd::Error) -> Self {
        match e {
            spgd::Error::InvalidConfig(_) | spgd::Error::Parse { .. } | spgd::Error::Empty(_) => CliError::usage(e),
            other => CliError::Runtime(other),
        }
    }
}

/// Train, evaluate and inspect particle-ensemble classifiers.
#[derive(Debug, Parser)]
#[command(name = "spgd", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one ensemble and write checkpoint, trace and summary.
    Train(RunArgs),
    /// Run the k-fold protocol with grid selection and report test accuracy.
    Cv(CvArgs),
    /// Accuracy and loss of a checkpoint on a dataset, as JSON on stdout.
    Eval(CheckpointArgs),
    /// Margin distribution, bound curve and decision grid of a checkpoint.
    Diag(DiagArgs),
    /// Write a synthetic double-circle dataset as CSV.
    GenData(GenDataArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_baseline_loss(s: &str) -> Result<BaselineLoss, String> {
    match s {
        "cross_entropy" | "cross-entropy" | "ce" => Ok(BaselineLoss::CrossEntropy),
        other => parse_enum::<LossSpec>(other).map(BaselineLoss::Surrogate),
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Data file; replaces the data source of the config.
    #[arg(long, conflicts_with_all = ["n_per_class", "noise", "data_seed"])]
    data: Option<PathBuf>,
    /// Table format: csv or libsvm.
    #[arg(long, value_parser = parse_enum::<TableFormat>, requires = "data")]
    format: Option<TableFormat>,
    /// Zero-based label column (CSV); defaults to the last column.
    #[arg(long, requires = "data")]
    label_column: Option<usize>,
    /// Keep the raw feature scale of a data file.
    #[arg(long, requires = "data")]
    no_standardize: bool,
    /// Double-circle points per class.
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Double-circle radial noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Double-circle generator seed.
    #[arg(long)]
    data_seed: Option<u64>,
}

impl DataArgs {
    fn apply(&self, source: &mut DataSource) {
        if let Some(path) = &self.data {
            *source = DataSource::File {
                path: path.clone(),
                format: self.format.unwrap_or(TableFormat::Csv),
                label_column: self.label_column,
                standardize: !self.no_standardize,
            };
            return;
        }
        if self.n_per_class.is_none() && self.noise.is_none() && self.data_seed.is_none() {
            return;
        }
        if matches!(source, DataSource::File { .. }) {
            *source = RunConfig::synthetic().data;
        }
        if let DataSource::DoubleCircle {
            n_per_class,
            noise_sigma,
            seed,
        } = source
        {
            *n_per_class = self.n_per_class.unwrap_or(*n_per_class);
            *noise_sigma = self.noise.unwrap_or(*noise_sigma);
            *seed = self.data_seed.unwrap_or(*seed);
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config, or TOML when the file ends in `.toml`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of initialisation, sampling and fold assignment.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    data: DataArgs,
    /// linear_tanh, log_reg or mlp3.
    #[arg(long, value_parser = parse_enum::<ModelKind>)]
    model: Option<ModelKind>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// tanh_scalar or softmax.
    #[arg(long, value_parser = parse_enum::<OutputHead>)]
    output: Option<OutputHead>,
    #[arg(long)]
    no_bias: bool,
    #[arg(long, value_enum)]
    method: Option<MethodKind>,
    #[arg(long)]
    particles: Option<usize>,
    /// fresh or shared seeds for spgd_resampling.
    #[arg(long, value_parser = parse_enum::<Seeding>)]
    seeding: Option<Seeding>,
    /// exp or log.
    #[arg(long, value_parser = parse_enum::<LossSpec>)]
    loss: Option<LossSpec>,
    /// cross_entropy, exp or log.
    #[arg(long, value_parser = parse_baseline_loss)]
    baseline_loss: Option<BaselineLoss>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// constant or inverse_sqrt.
    #[arg(long, value_parser = parse_enum::<Schedule>)]
    schedule: Option<Schedule>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    preconditioner: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// `α` of the smooth margin in trace records.
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::synthetic(),
        };
        self.data.apply(&mut c.data);
        let m = &mut c.model;
        if let Some(kind) = self.model {
            m.kind = kind;
        }
        m.hidden_dim = self.hidden_dim.or(m.hidden_dim);
        m.output = self.output.or(m.output);
        m.use_bias &= !self.no_bias;
        c.method = self.method.unwrap_or(c.method);
        c.particles = self.particles.unwrap_or(c.particles);
        c.seeding = self.seeding.unwrap_or(c.seeding);
        c.baseline_loss = self.baseline_loss.or(c.baseline_loss);
        let t = &mut c.train;
        t.seed = self.seed;
        t.loss = self.loss.unwrap_or(t.loss);
        t.steps = self.steps.unwrap_or(t.steps);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.schedule = self.schedule.unwrap_or(t.schedule);
        t.momentum = self.momentum.unwrap_or(t.momentum);
        t.preconditioner = self.preconditioner.unwrap_or(t.preconditioner);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.eval_every = self.eval_every.unwrap_or(t.eval_every);
        t.alpha = self.alpha.unwrap_or(t.alpha);
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of folds and runs.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    grid_learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_momenta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_particles: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    grid_epochs: Option<Vec<usize>>,
}

impl CvArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = self.run.resolve()?;
        c.cv.k = self.k.unwrap_or(c.cv.k);
        let g = &mut c.cv.grid;
        if let Some(v) = &self.grid_learning_rates {
            g.learning_rates = v.clone();
        }
        if let Some(v) = &self.grid_momenta {
            g.momenta = v.clone();
        }
        if let Some(v) = &self.grid_particles {
            g.particles = v.clone();
        }
        if let Some(v) = &self.grid_epochs {
            g.epochs = v.clone();
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct CheckpointArgs {
    /// Directory written by `train`; supplies checkpoint and config.
    #[arg(long, required_unless_present = "checkpoint")]
    run: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Config naming the data source; defaults to the run's config echo.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

impl CheckpointArgs {
    fn resolve(&self) -> Result<(PathBuf, RunConfig), CliError> {
        let checkpoint = match (&self.checkpoint, &self.run) {
            (Some(path), _) => path.clone(),
            (None, Some(run)) => run.join(commands::CHECKPOINT_FILE),
            (None, None) => return Err(CliError::Usage("need --run or --checkpoint".into())),
        };
        let echo = self.run.as_ref().map(|r| r.join(commands::CONFIG_FILE));
        let mut c = match (&self.config, echo) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(path)) if path.exists() => RunConfig::from_file(&path)?,
            _ => RunConfig::synthetic(),
        };
        self.data.apply(&mut c.data);
        Ok((checkpoint, c))
    }
}

#[derive(Debug, Args)]
struct DiagArgs {
    #[command(flatten)]
    source: CheckpointArgs,
    /// `α` of the smooth margin.
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated margin thresholds in (0, 1].
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,
    /// Cells per axis of the decision grid.
    #[arg(long)]
    grid_resolution: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    grid_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    grid_hi: Option<f64>,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 100)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => commands::train(&args.resolve()?),
        Command::Cv(args) => commands::cv(&args.resolve()?),
        Command::Eval(args) => {
            let (checkpoint, config) = args.resolve()?;
            commands::eval(&checkpoint, &config)
        }
        Command::Diag(args) => {
            let (checkpoint, mut config) = args.source.resolve()?;
            let d = &mut config.diagnostics;
            d.alpha = args.alpha.unwrap_or(d.alpha);
            d.rho_grid = args.rho_grid.or(d.rho_grid.take());
            d.grid_resolution = args.grid_resolution.unwrap_or(d.grid_resolution);
            d.grid_lo = args.grid_lo.unwrap_or(d.grid_lo);
            d.grid_hi = args.grid_hi.unwrap_or(d.grid_hi);
            let out = match (args.out, &args.source.run) {
                (Some(out), _) => out,
                (None, Some(run)) => run.clone(),
                (None, None) => config.output_dir.clone(),
            };
            commands::diag(&checkpoint, &config, &out)
        }
        Command::GenData(args) => commands::gen_data(args.n_per_class, args.noise, args.seed, &args.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
