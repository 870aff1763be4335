//! Run configuration: everything needed to reproduce a run, loadable from
//! JSON or TOML and echoed back next to the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spgd::baseline::{BaselineConfig, BaselineLoss};
use spgd::data::{gen_double_circle, load_table, standardize, TableFormat};
use spgd::experiment::{Grid, Method, ModelTemplate};
use spgd::model::{ModelKind, OutputHead};
use spgd::optimizer::{Seeding, TrainConfig};
use spgd::{Dataset, ModelSpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    DoubleCircle {
        #[serde(default = "default_n_per_class")]
        n_per_class: usize,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: TableFormat,
        /// Zero-based label column for CSV; defaults to the last column.
        #[serde(default)]
        label_column: Option<usize>,
        /// Z-score every feature with statistics of the whole file.
        #[serde(default = "default_true")]
        standardize: bool,
    },
}

fn default_n_per_class() -> usize {
    100
}

fn default_noise() -> f64 {
    0.1
}

fn default_format() -> TableFormat {
    TableFormat::Csv
}

fn default_true() -> bool {
    true
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset, CliError> {
        match self {
            DataSource::DoubleCircle {
                n_per_class,
                noise_sigma,
                seed,
            } => gen_double_circle(*n_per_class, *noise_sigma, *seed).map_err(CliError::usage),
            DataSource::File {
                path,
                format,
                label_column,
                standardize: z,
            } => {
                let data = load_table(path, *format, *label_column).map_err(CliError::usage)?;
                Ok(if *z { standardize(&data, &[]).0 } else { data })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden width of `mlp3`; defaults to the input dimension.
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    /// Output head; `linear_tanh` always uses tanh, the others default to softmax.
    #[serde(default)]
    pub output: Option<OutputHead>,
    #[serde(default = "default_true")]
    pub use_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::LinearTanh,
            hidden_dim: None,
            output: None,
            use_bias: true,
        }
    }
}

impl ModelConfig {
    pub fn build(&self, data: &Dataset) -> Result<ModelSpec, CliError> {
        let (n, c) = (data.n_features(), data.num_classes());
        let mut spec = match self.kind {
            ModelKind::LinearTanh => ModelSpec::linear_tanh(n, self.use_bias),
            ModelKind::LogReg => ModelSpec::logreg(n, c).with_bias(self.use_bias),
            ModelKind::Mlp3 => ModelSpec::mlp3(
                n,
                c,
                self.hidden_dim.unwrap_or(n),
                self.output.unwrap_or(OutputHead::Softmax),
            )
            .with_bias(self.use_bias),
        };
        if let Some(output) = self.output {
            spec.output = output;
        }
        spec.validate().map_err(CliError::usage)?;
        Ok(spec)
    }

    pub fn template(&self) -> ModelTemplate {
        match self.kind {
            ModelKind::LinearTanh => ModelTemplate::LinearTanh,
            ModelKind::LogReg => ModelTemplate::LogReg,
            ModelKind::Mlp3 => ModelTemplate::Mlp3 {
                output: self.output.unwrap_or(OutputHead::Softmax),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    #[default]
    SpgdPractical,
    SpgdResampling,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagConfig {
    /// `α` of the smooth margin.
    pub alpha: f64,
    /// Margin thresholds; defaults to 0.02, 0.04, ..., 1.
    pub rho_grid: Option<Vec<f64>>,
    /// Cells per axis of the decision grid (2-D data only).
    pub grid_resolution: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            alpha: 0.05,
            rho_grid: None,
            grid_resolution: 101,
            grid_lo: -3.0,
            grid_hi: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub grid: Grid,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            grid: Grid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub method: MethodKind,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Seed sampling of the residual-map variant.
    #[serde(default)]
    pub seeding: Seeding,
    /// Objective of the `baseline` method; defaults to cross-entropy for
    /// softmax heads and the SPGD surrogate otherwise.
    #[serde(default)]
    pub baseline_loss: Option<BaselineLoss>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub diagnostics: DiagConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_particles() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("spgd-out")
}

impl RunConfig {
    /// A synthetic double-circle run with every other field at its default.
    pub fn synthetic() -> Self {
        RunConfig {
            data: DataSource::DoubleCircle {
                n_per_class: default_n_per_class(),
                noise_sigma: default_noise(),
                seed: 0,
            },
            model: ModelConfig::default(),
            method: MethodKind::default(),
            particles: default_particles(),
            seeding: Seeding::default(),
            baseline_loss: None,
            train: TrainConfig::default(),
            diagnostics: DiagConfig::default(),
            cv: CvConfig::default(),
            output_dir: default_output_dir(),
        }
    }

    /// JSON, or TOML when the extension is `.toml`.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(CliError::usage)?;
        if self.particles == 0 {
            return Err(CliError::Usage("particles must be >= 1".into()));
        }
        if !(self.diagnostics.alpha > 0.0) {
            return Err(CliError::Usage("diagnostics.alpha must be > 0".into()));
        }
        Ok(())
    }

    pub fn baseline_loss(&self, spec: &ModelSpec) -> BaselineLoss {
        self.baseline_loss.unwrap_or(match spec.output {
            OutputHead::Softmax => BaselineLoss::CrossEntropy,
            OutputHead::TanhScalar => BaselineLoss::Surrogate(self.train.loss),
        })
    }

    pub fn baseline_config(&self, spec: ModelSpec) -> BaselineConfig {
        let t = &self.train;
        BaselineConfig {
            steps: t.steps,
            learning_rate: t.learning_rate,
            schedule: t.schedule,
            momentum: t.momentum,
            batch_size: t.batch_size,
            seed: t.seed,
            eval_every: t.eval_every,
            alpha: t.alpha,
            ..BaselineConfig::new(spec, self.baseline_loss(&spec))
        }
    }

    pub fn cv_method(&self, spec: &ModelSpec) -> Result<Method, CliError> {
        let model = self.model.template();
        match self.method {
            MethodKind::SpgdPractical => Ok(Method::Spgd {
                model,
                loss: self.train.loss,
            }),
            MethodKind::Baseline => Ok(Method::Baseline {
                model,
                loss: self.baseline_loss(spec),
            }),
            MethodKind::SpgdResampling => Err(CliError::Usage(
                "cv supports the spgd_practical and baseline methods".into(),
            )),
        }
    }
}
