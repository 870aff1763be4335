//! Single-model SGD baselines (logistic regression, MLP).
//!
//! Trained with the margin surrogate, this is the particle method on a
//! point mass: the update below is written so that a one-particle SPGD run
//! without momentum reproduces it bit for bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diagnostics;
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{init_params, ModelSpec, OutputHead, ParamVector, Workspace};
use crate::optimizer::{Schedule, TraceRecord, TrainTrace, DEFAULT_TRACE_ALPHA};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineLoss {
    /// `−ln p_y`; softmax heads only.
    CrossEntropy,
    /// `l(−margin)`, the same objective as the particle method with `M = 1`.
    Surrogate(LossSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub spec: ModelSpec,
    pub loss: BaselineLoss,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_schedule() -> Schedule {
    Schedule::Constant
}

fn default_batch() -> usize {
    1
}

fn default_alpha() -> f64 {
    DEFAULT_TRACE_ALPHA
}

impl BaselineConfig {
    pub fn new(spec: ModelSpec, loss: BaselineLoss) -> Self {
        BaselineConfig {
            spec,
            loss,
            steps: 1000,
            learning_rate: 0.1,
            schedule: Schedule::Constant,
            momentum: 0.0,
            batch_size: 1,
            seed: 0,
            eval_every: 0,
            alpha: DEFAULT_TRACE_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        if self.loss == BaselineLoss::CrossEntropy && self.spec.output != OutputHead::Softmax {
            return Err(Error::InvalidConfig(
                "cross-entropy needs a softmax output".into(),
            ));
        }
        Ok(())
    }

    fn step_size(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::InverseSqrt => self.learning_rate / ((step + 1) as f64).sqrt(),
        }
    }
}

/// Objective value and its derivative at one sample; `grad` receives
/// `∇_θ` of the inner quantity (margin or log-probability).
fn sample_objective(
    config: &BaselineConfig,
    theta: &[f64],
    data: &Dataset,
    j: usize,
    grad: &mut [f64],
    ws: &mut Workspace,
) -> (f64, f64) {
    let spec = &config.spec;
    match config.loss {
        BaselineLoss::Surrogate(loss) => {
            let m = spec.margin_grad_into(theta, data.x(j), spec.target(data.label(j)), grad, ws);
            let l = loss.eval(-m);
            // d/dm l(−m) = −l'(−m)
            (l.value, -l.d1)
        }
        BaselineLoss::CrossEntropy => {
            let lp = spec.log_prob_grad_into(theta, data.x(j), data.label(j), grad, ws);
            (-lp, -1.0)
        }
    }
}

/// SGD driver mirroring [`crate::optimizer::PracticalTrainer`].
pub struct SgdTrainer<'a> {
    config: BaselineConfig,
    data: &'a Dataset,
    theta: Vec<f64>,
    velocity: Vec<f64>,
    sampler: ChaCha8Rng,
    step: usize,
    ws: Workspace,
}

impl<'a> SgdTrainer<'a> {
    pub fn new(config: &BaselineConfig, data: &'a Dataset) -> Result<Self> {
        config.validate()?;
        Error::check_dim("feature vector", config.spec.input_dim, data.n_features())?;
        let theta = init_params(&config.spec, config.seed).0;
        Ok(SgdTrainer {
            velocity: vec![0.0; theta.len()],
            theta,
            sampler: rng::stream(config.seed, rng::SAMPLING_STREAM),
            config: config.clone(),
            data,
            step: 0,
            ws: Workspace::default(),
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn step(&mut self) -> Result<()> {
        let gamma = self.config.momentum;
        let eta = self.config.step_size(self.step);
        let at: Vec<f64> = if gamma == 0.0 {
            self.theta.clone()
        } else {
            self.theta.iter().zip(&self.velocity).map(|(t, v)| t + gamma * v).collect()
        };
        let d = self.theta.len();
        let mut acc = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let batch = self.config.batch_size;
        for _ in 0..batch {
            let j = self.sampler.random_range(0..self.data.n_samples());
            let (_, dl) = sample_objective(&self.config, &at, self.data, j, &mut grad, &mut self.ws);
            let scale = eta * dl;
            for (a, g) in acc.iter_mut().zip(&grad) {
                *a += scale * g;
            }
        }
        let b = batch as f64;
        for (t, (v, a)) in self.theta.iter_mut().zip(self.velocity.iter_mut().zip(&acc)) {
            *v = gamma * *v - a / b;
            *t += *v;
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: self.step,
                particle: 0,
            });
        }
        self.step += 1;
        Ok(())
    }

    pub fn record(&self) -> Result<TraceRecord> {
        objective_record(&self.config, &self.theta, self.data, self.step)
    }
}

/// Trace record for a single model under the baseline objective.
pub fn objective_record(config: &BaselineConfig, theta: &[f64], data: &Dataset, step: usize) -> Result<TraceRecord> {
    let dirac = ParticleEnsemble::dirac(config.spec, theta)?;
    let mut grad = vec![0.0; theta.len()];
    let mut total = vec![0.0; theta.len()];
    let mut ws = Workspace::default();
    let mut value = 0.0;
    let n = data.n_samples() as f64;
    for j in 0..data.n_samples() {
        let (l, dl) = sample_objective(config, theta, data, j, &mut grad, &mut ws);
        value += l;
        for (t, g) in total.iter_mut().zip(&grad) {
            *t += dl * g / n;
        }
    }
    let margins = dirac.margins(data)?;
    Ok(TraceRecord {
        step,
        loss: value / n,
        accuracy: dirac.accuracy(data)?,
        optimality_norm: total.iter().map(|v| v * v).sum(),
        smooth_margin: diagnostics::smooth_margin_of(&margins, config.alpha)?,
    })
}

pub fn train_single(config: &BaselineConfig, data: &Dataset) -> Result<(ParamVector, TrainTrace)> {
    let mut trainer = SgdTrainer::new(config, data)?;
    let mut trace = TrainTrace::default();
    trace.push_checked(trainer.record()?)?;
    for step in 1..=config.steps {
        trainer.step()?;
        let due = step == config.steps || (config.eval_every > 0 && step % config.eval_every == 0);
        if due {
            trace.push_checked(trainer.record()?)?;
        }
    }
    Ok((ParamVector(trainer.theta), trace))
}
