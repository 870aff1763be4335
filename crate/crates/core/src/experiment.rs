//! The k-run evaluation protocol: for run `i`, fold `i` validates, fold
//! `i + 1 (mod k)` tests, the rest trains. Each run selects hyper-parameters
//! from a grid by validation accuracy and reports test accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{train_single, BaselineConfig, BaselineLoss};
use crate::data::{kfold_protocol, standardize, Dataset};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{ModelKind, ModelSpec, OutputHead};
use crate::optimizer::{train_practical, TrainConfig};
use crate::rng;

/// Model family; dimensions are filled in from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTemplate {
    LinearTanh,
    LogReg,
    /// Hidden width equal to the input dimension.
    Mlp3 { output: OutputHead },
}

impl ModelTemplate {
    pub fn build(self, data: &Dataset) -> ModelSpec {
        let (n, c) = (data.n_features(), data.num_classes());
        match self {
            ModelTemplate::LinearTanh => ModelSpec::linear_tanh(n, true),
            ModelTemplate::LogReg => ModelSpec::logreg(n, c),
            ModelTemplate::Mlp3 { output } => ModelSpec::mlp3(n, c, n, output),
        }
    }

    pub fn kind(self) -> ModelKind {
        match self {
            ModelTemplate::LinearTanh => ModelKind::LinearTanh,
            ModelTemplate::LogReg => ModelKind::LogReg,
            ModelTemplate::Mlp3 { .. } => ModelKind::Mlp3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Spgd { model: ModelTemplate, loss: LossSpec },
    Baseline { model: ModelTemplate, loss: BaselineLoss },
}

impl Method {
    /// Column label in the style of the accuracy table.
    pub fn label(&self) -> String {
        match self {
            Method::Spgd { model: ModelTemplate::LogReg, .. } => "SPGD(logreg)".into(),
            Method::Spgd { loss, .. } => format!("SPGD({})", loss.name()),
            Method::Baseline { model: ModelTemplate::LogReg, .. } => "LogReg".into(),
            Method::Baseline { loss: BaselineLoss::Surrogate(l), .. } => format!("MLP({})", l.name()),
            Method::Baseline { loss: BaselineLoss::CrossEntropy, .. } => "MLP(log)".into(),
        }
    }

    /// The six accuracy-table columns.
    pub fn table_columns() -> Vec<Method> {
        let mlp = ModelTemplate::Mlp3 { output: OutputHead::Softmax };
        vec![
            Method::Baseline { model: ModelTemplate::LogReg, loss: BaselineLoss::CrossEntropy },
            Method::Spgd { model: ModelTemplate::LogReg, loss: LossSpec::Logistic },
            Method::Baseline { model: mlp, loss: BaselineLoss::Surrogate(LossSpec::Exponential) },
            Method::Spgd { model: mlp, loss: LossSpec::Exponential },
            Method::Baseline { model: mlp, loss: BaselineLoss::CrossEntropy },
            Method::Spgd { model: mlp, loss: LossSpec::Logistic },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub particles: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub momenta: Vec<f64>,
    pub particles: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            learning_rates: vec![0.3, 0.1, 0.03, 0.01],
            momenta: vec![0.0, 0.9],
            particles: vec![10, 30],
            epochs: vec![50, 200],
        }
    }
}

impl Grid {
    /// Every combination; baselines ignore the particle count.
    pub fn points(&self, method: &Method) -> Vec<HyperParams> {
        let particles: &[usize] = match method {
            Method::Spgd { .. } => &self.particles,
            Method::Baseline { .. } => &[1],
        };
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &momentum in &self.momenta {
                for &m in particles {
                    for &epochs in &self.epochs {
                        out.push(HyperParams {
                            learning_rate,
                            momentum,
                            particles: m,
                            epochs,
                        });
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.momenta.is_empty() || self.particles.is_empty() || self.epochs.is_empty() {
            return Err(Error::InvalidConfig("hyper-parameter grid has an empty axis".into()));
        }
        Ok(())
    }
}

/// Train one configuration and return a classifier for evaluation.
pub fn fit(method: &Method, hp: &HyperParams, train: &Dataset, seed: u64) -> Result<ParticleEnsemble> {
    let steps = hp.epochs * train.n_samples();
    match *method {
        Method::Spgd { model, loss } => {
            let spec = model.build(train);
            let config = TrainConfig {
                loss,
                steps,
                learning_rate: hp.learning_rate,
                momentum: hp.momentum,
                seed,
                ..TrainConfig::default()
            };
            Ok(train_practical(&spec, train, &config, hp.particles)?.ensemble)
        }
        Method::Baseline { model, loss } => {
            let spec = model.build(train);
            let config = BaselineConfig {
                steps,
                learning_rate: hp.learning_rate,
                momentum: hp.momentum,
                seed,
                ..BaselineConfig::new(spec, loss)
            };
            let (theta, _) = train_single(&config, train)?;
            ParticleEnsemble::dirac(spec, &theta.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: usize,
    pub selected: HyperParams,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
    /// Configurations that diverged and were skipped.
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: String,
    pub k: usize,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    pub std: f64,
}

impl CvReport {
    /// Mean and sample standard deviation of per-run test accuracies.
    pub fn from_runs(method: String, k: usize, runs: Vec<RunResult>) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
        let n = acc.len() as f64;
        let mean = acc.iter().sum::<f64>() / n;
        let std = if acc.len() > 1 {
            (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        CvReport { method, k, runs, mean, std }
    }

    pub fn test_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }

    /// `0.971 (0.0174)`.
    pub fn table_cell(&self) -> String {
        format!("{:.3} ({:.4})", self.mean, self.std)
    }
}

/// One run of the protocol.
pub fn run_once(dataset: &Dataset, method: &Method, grid: &Grid, k: usize, run_index: usize, seed: u64) -> Result<RunResult> {
    grid.validate()?;
    let splits = kfold_protocol(dataset, k, run_index, seed)?;
    let (train, held_out, _) = standardize(&splits.train, &[splits.valid, splits.test]);
    let (valid, test) = (&held_out[0], &held_out[1]);
    let run_seed = rng::derive_seed(seed, run_index as u64);

    let mut best: Option<(f64, HyperParams, ParticleEnsemble)> = None;
    let mut diverged = 0;
    for hp in grid.points(method) {
        let model = match fit(method, &hp, &train, run_seed) {
            Ok(model) => model,
            Err(Error::Diverged { .. } | Error::NonFinite { .. }) => {
                diverged += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let acc = model.accuracy(valid)?;
        let better = match &best {
            None => true,
            Some((best_acc, best_hp, _)) => {
                acc > *best_acc || (acc == *best_acc && hp.learning_rate < best_hp.learning_rate)
            }
        };
        if better {
            best = Some((acc, hp, model));
        }
    }
    let (valid_accuracy, selected, model) = best.ok_or_else(|| {
        Error::InvalidConfig(format!("every grid point diverged in run {run_index}"))
    })?;
    Ok(RunResult {
        run_index,
        selected,
        valid_accuracy,
        test_accuracy: model.accuracy(test)?,
        diverged,
    })
}

/// All `k` runs, executed in parallel; each run owns its seed stream.
pub fn cross_validate(dataset: &Dataset, method: &Method, grid: &Grid, k: usize, seed: u64) -> Result<CvReport> {
    let runs = (0..k)
        .into_par_iter()
        .map(|run| run_once(dataset, method, grid, k, run, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_runs(method.label(), k, runs))
}
