//! Stochastic particle gradient descent.
//!
//! [`train_practical`] moves a fixed set of particles (no resampling) and is
//! the method used for real training. [`train_resampling`] builds the
//! residual transport map explicitly and re-pushes seeds through it at every
//! step; it costs `O(T²)` gradient evaluations and serves as the reference.
//!
//! The per-particle update at sample `(x', y')` is
//! `θ_i ← θ_i + (η_k / c) · l'(−m̄) · ∇_θ margin(θ_i, x', y')`, where `m̄` is
//! the margin of the ensemble's mean prediction.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diagnostics;
use crate::ensemble::{init_ensemble, ParticleEnsemble, ResidualLayer, ResidualTransportMap};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{init_params_with, MarginTarget, ModelSpec, Workspace};
use crate::rng;

/// Training aborts once the full-batch loss exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Default `α` for the smooth margin recorded in traces.
pub const DEFAULT_TRACE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `η_k = η / sqrt(k + 1)`.
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub steps: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub momentum: f64,
    /// Scalar `c` of the preconditioner `A = c·I`.
    pub preconditioner: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Trace a record every this many steps (0: only the first and last).
    pub eval_every: usize,
    /// `α` of the smooth margin in trace records.
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossSpec::Exponential,
            steps: 1000,
            learning_rate: 0.1,
            schedule: Schedule::Constant,
            momentum: 0.0,
            preconditioner: 1.0,
            batch_size: 1,
            seed: 0,
            eval_every: 0,
            alpha: DEFAULT_TRACE_ALPHA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.preconditioner > 0.0 && self.preconditioner.is_finite()) {
            return fail(format!("preconditioner must be > 0, got {}", self.preconditioner));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.alpha > 0.0) {
            return fail(format!("alpha must be > 0, got {}", self.alpha));
        }
        Ok(())
    }

    pub fn step_size(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::InverseSqrt => self.learning_rate / ((step + 1) as f64).sqrt(),
        }
    }

    fn record_due(&self, step: usize) -> bool {
        step == 0 || step == self.steps || (self.eval_every > 0 && step.is_multiple_of(self.eval_every))
    }
}

/// Per-particle Nesterov velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: Vec<f64>,
}

impl MomentumState {
    pub fn zeros(ensemble: &ParticleEnsemble) -> Self {
        MomentumState {
            velocity: vec![0.0; ensemble.values().len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub optimality_norm: f64,
    pub smooth_margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Push a record, failing if its loss shows divergence.
    pub(crate) fn push_checked(&mut self, record: TraceRecord) -> Result<()> {
        self.records.push(record);
        if !record.loss.is_finite() || record.loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                step: record.step,
                loss: record.loss,
                trace: Box::new(self.clone()),
            });
        }
        Ok(())
    }
}

/// Margins of every particle at `(x, y)` with their gradients written row by
/// row into `grads`. Returns the margin of the mean prediction.
pub(crate) fn margins_and_grads(
    ensemble: &ParticleEnsemble,
    x: &[f64],
    y: MarginTarget,
    grads: &mut [f64],
    ws: &mut Workspace,
) -> f64 {
    let spec = ensemble.spec();
    let d = ensemble.dim();
    let mut sum = 0.0;
    for (theta, grad) in ensemble.rows().zip(grads.chunks_exact_mut(d)) {
        sum += spec.margin_grad_into(theta, x, y, grad, ws);
    }
    sum / ensemble.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDirection {
    /// Row `i` is `l'(−m̄) ∇_θ margin(θ_i, x', y')`, i.e. `−s(θ_i, x', y')`.
    pub direction: Vec<f64>,
    /// `l'(−m̄)`.
    pub coeff: f64,
}

pub fn stochastic_update_direction(
    ensemble: &ParticleEnsemble,
    loss: LossSpec,
    x: &[f64],
    y: MarginTarget,
) -> Result<UpdateDirection> {
    let spec = ensemble.spec();
    Error::check_dim("feature vector", spec.input_dim, x.len())?;
    // validates the target against the head
    spec.margin(ensemble.particle(0), x, y)?;
    let mut direction = vec![0.0; ensemble.values().len()];
    let mbar = margins_and_grads(ensemble, x, y, &mut direction, &mut Workspace::default());
    let coeff = loss.derivative(-mbar);
    for v in direction.iter_mut() {
        *v *= coeff;
    }
    Ok(UpdateDirection { direction, coeff })
}

/// One Nesterov-accelerated step on the samples `batch` (indices into
/// `data`). Returns the residual coefficient `η_k l'(−m̄) / c` of each sample.
///
/// With momentum `γ`, the direction is evaluated at `θ + γv`, then
/// `v ← γv + g` and `θ ← θ + v`; `γ = 0` is the plain particle update.
pub fn spgd_step(
    ensemble: &mut ParticleEnsemble,
    momentum: &mut MomentumState,
    config: &TrainConfig,
    data: &Dataset,
    batch: &[usize],
    step_index: usize,
) -> Result<Vec<f64>> {
    Error::check_dim("momentum", ensemble.values().len(), momentum.velocity.len())?;
    Error::check_dim("feature vector", ensemble.spec().input_dim, data.n_features())?;
    if batch.is_empty() {
        return Err(Error::Precondition("empty sample batch".into()));
    }
    let gamma = config.momentum;
    let eta = config.step_size(step_index);
    let spec = *ensemble.spec();

    let lookahead;
    let at: &ParticleEnsemble = if gamma == 0.0 {
        ensemble
    } else {
        let mut shifted = ensemble.clone();
        for (t, v) in shifted.values_mut().iter_mut().zip(&momentum.velocity) {
            *t += gamma * v;
        }
        lookahead = shifted;
        &lookahead
    };

    let len = at.values().len();
    let mut acc = vec![0.0; len];
    let mut grads = vec![0.0; len];
    let mut ws = Workspace::default();
    let mut coeffs = Vec::with_capacity(batch.len());
    for &j in batch {
        let y = spec.target(data.label(j));
        let mbar = margins_and_grads(at, data.x(j), y, &mut grads, &mut ws);
        let coeff = eta * config.loss.derivative(-mbar) / config.preconditioner;
        for (a, g) in acc.iter_mut().zip(&grads) {
            *a += coeff * g;
        }
        coeffs.push(coeff);
    }

    let b = batch.len() as f64;
    let d = ensemble.dim();
    for (k, (t, v)) in ensemble
        .values_mut()
        .iter_mut()
        .zip(momentum.velocity.iter_mut())
        .enumerate()
    {
        *v = gamma * *v + acc[k] / b;
        *t += *v;
        if !t.is_finite() {
            return Err(Error::NonFinite {
                step: step_index,
                particle: k / d,
            });
        }
    }
    Ok(coeffs)
}

/// Step-by-step driver of the practical (no resampling) variant.
pub struct PracticalTrainer<'a> {
    data: &'a Dataset,
    config: TrainConfig,
    ensemble: ParticleEnsemble,
    momentum: MomentumState,
    sampler: ChaCha8Rng,
    map: ResidualTransportMap,
    step: usize,
    batch: Vec<usize>,
}

impl<'a> PracticalTrainer<'a> {
    pub fn new(spec: &ModelSpec, data: &'a Dataset, config: &TrainConfig, m: usize) -> Result<Self> {
        let ensemble = init_ensemble(spec, m, config.seed)?;
        Self::from_ensemble(ensemble, data, config)
    }

    pub fn from_ensemble(ensemble: ParticleEnsemble, data: &'a Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Error::check_dim("feature vector", ensemble.spec().input_dim, data.n_features())?;
        if data.num_classes() > ensemble.spec().num_classes {
            return Err(Error::InvalidConfig(format!(
                "model has {} classes, data has {}",
                ensemble.spec().num_classes,
                data.num_classes()
            )));
        }
        let mut map = ResidualTransportMap::identity(*ensemble.spec(), data);
        map.replayable = config.momentum == 0.0 && config.batch_size == 1;
        Ok(PracticalTrainer {
            data,
            momentum: MomentumState::zeros(&ensemble),
            sampler: rng::stream(config.seed, rng::SAMPLING_STREAM),
            config: config.clone(),
            ensemble,
            map,
            step: 0,
            batch: Vec::with_capacity(config.batch_size),
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let n = self.data.n_samples();
        self.batch.clear();
        for _ in 0..self.config.batch_size {
            self.batch.push(self.sampler.random_range(0..n));
        }
        let coeffs = spgd_step(
            &mut self.ensemble,
            &mut self.momentum,
            &self.config,
            self.data,
            &self.batch,
            self.step,
        )?;
        if self.map.replayable {
            self.map.push(ResidualLayer {
                coeff: coeffs[0],
                sample_index: self.batch[0],
            });
        }
        self.step += 1;
        Ok(())
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    pub fn map(&self) -> &ResidualTransportMap {
        &self.map
    }

    pub fn record(&self) -> Result<TraceRecord> {
        diagnostics::trace_record(&self.ensemble, self.data, self.config.loss, self.config.alpha, self.step)
    }

    pub fn into_parts(self) -> (ParticleEnsemble, ResidualTransportMap) {
        (self.ensemble, self.map)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub ensemble: ParticleEnsemble,
    /// Initial particles; replaying `map` on them reproduces `ensemble`.
    pub seeds: ParticleEnsemble,
    pub map: ResidualTransportMap,
    pub trace: TrainTrace,
}

pub fn train_practical(spec: &ModelSpec, data: &Dataset, config: &TrainConfig, m: usize) -> Result<TrainOutput> {
    let mut trainer = PracticalTrainer::new(spec, data, config, m)?;
    let seeds = trainer.ensemble().clone();
    let mut trace = TrainTrace::default();
    trace.push_checked(trainer.record()?)?;
    for step in 1..=config.steps {
        trainer.step()?;
        if step != 0 && config.record_due(step) {
            trace.push_checked(trainer.record()?)?;
        }
    }
    let (ensemble, map) = trainer.into_parts();
    Ok(TrainOutput {
        ensemble,
        seeds,
        map,
        trace,
    })
}

/// Where the particles of each resampling step come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// Fresh draws from the initial distribution at every step.
    #[default]
    Fresh,
    /// The same initial draws at every step.
    Shared,
}

fn draw_seeds(spec: &ModelSpec, m: usize, rng: &mut ChaCha8Rng) -> Result<ParticleEnsemble> {
    let mut values = Vec::with_capacity(m * spec.param_dim());
    for _ in 0..m {
        values.extend(init_params_with(spec, rng).0);
    }
    ParticleEnsemble::new(*spec, m, values)
}

fn push_through(map: &ResidualTransportMap, seeds: &ParticleEnsemble, data: &Dataset, step: usize) -> Result<ParticleEnsemble> {
    let mut out = seeds.clone();
    let d = out.dim();
    let mut grad = vec![0.0; d];
    let mut ws = Workspace::default();
    for (i, theta) in out.values_mut().chunks_exact_mut(d).enumerate() {
        map.apply_row(theta, data, &mut grad, &mut ws);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step, particle: i });
        }
    }
    Ok(out)
}

/// Reference variant: the map is grown one residual layer per step and the
/// particles of step `k` are seeds pushed through `φ_k`.
pub fn train_resampling(
    spec: &ModelSpec,
    data: &Dataset,
    config: &TrainConfig,
    m: usize,
    seeding: Seeding,
) -> Result<TrainOutput> {
    config.validate()?;
    if config.momentum != 0.0 || config.batch_size != 1 {
        return Err(Error::InvalidConfig(
            "the residual-map variant needs momentum = 0 and batch_size = 1".into(),
        ));
    }
    Error::check_dim("feature vector", spec.input_dim, data.n_features())?;
    let shared = init_ensemble(spec, m, config.seed)?;
    let mut resampler = rng::stream(config.seed, rng::RESAMPLING_STREAM);
    let mut sampler = rng::stream(config.seed, rng::SAMPLING_STREAM);
    let next_seeds = |rng: &mut ChaCha8Rng| -> Result<ParticleEnsemble> {
        match seeding {
            Seeding::Shared => Ok(shared.clone()),
            Seeding::Fresh => draw_seeds(spec, m, rng),
        }
    };

    let mut map = ResidualTransportMap::identity(*spec, data);
    let mut trace = TrainTrace::default();
    let mut grads = vec![0.0; m * spec.param_dim()];
    let mut ws = Workspace::default();
    for k in 0..config.steps {
        let seeds = next_seeds(&mut resampler)?;
        let particles = push_through(&map, &seeds, data, k)?;
        if config.record_due(k) {
            trace.push_checked(diagnostics::trace_record(&particles, data, config.loss, config.alpha, k)?)?;
        }
        let j = sampler.random_range(0..data.n_samples());
        let mbar = margins_and_grads(&particles, data.x(j), spec.target(data.label(j)), &mut grads, &mut ws);
        let coeff = config.step_size(k) * config.loss.derivative(-mbar) / config.preconditioner;
        map.push(ResidualLayer { coeff, sample_index: j });
    }
    let seeds = next_seeds(&mut resampler)?;
    let ensemble = push_through(&map, &seeds, data, config.steps)?;
    trace.push_checked(diagnostics::trace_record(&ensemble, data, config.loss, config.alpha, config.steps)?)?;
    Ok(TrainOutput {
        ensemble,
        seeds,
        map,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_double_circle;

    fn cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            steps: 20,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn direction_at_origin() {
        let spec = ModelSpec::linear_tanh(2, false);
        let e = ParticleEnsemble::new(spec, 1, vec![0.0, 0.0]).unwrap();
        let dir = stochastic_update_direction(&e, LossSpec::Exponential, &[1.0, 0.0], MarginTarget::Sign(1.0)).unwrap();
        assert_eq!(dir.coeff, 1.0);
        assert_eq!(dir.direction, vec![1.0, 0.0]);

        let data = Dataset::new(vec![1.0, 0.0], 2, vec![0], 2).unwrap();
        let mut e = e;
        let mut mom = MomentumState::zeros(&e);
        spgd_step(&mut e, &mut mom, &cfg(0.1), &data, &[0], 0).unwrap();
        assert_eq!(e.particle(0), &[0.1, 0.0]);
    }

    #[test]
    fn opposite_labels_cancel() {
        let spec = ModelSpec::linear_tanh(2, false);
        let e = ParticleEnsemble::new(spec, 1, vec![0.0, 0.0]).unwrap();
        let x = [0.6, -1.3];
        let up = stochastic_update_direction(&e, LossSpec::Logistic, &x, MarginTarget::Sign(1.0)).unwrap();
        let down = stochastic_update_direction(&e, LossSpec::Logistic, &x, MarginTarget::Sign(-1.0)).unwrap();
        for (a, b) in up.direction.iter().zip(&down.direction) {
            assert_eq!(a + b, 0.0);
        }
    }

    #[test]
    fn identical_particles_get_identical_directions() {
        let spec = ModelSpec::linear_tanh(2, true);
        let e = ParticleEnsemble::new(spec, 3, [0.3, -0.2, 0.05].repeat(3)).unwrap();
        let dir = stochastic_update_direction(&e, LossSpec::Exponential, &[1.0, 2.0], MarginTarget::Sign(-1.0)).unwrap();
        assert_eq!(dir.direction[0..3], dir.direction[3..6]);
        assert_eq!(dir.direction[0..3], dir.direction[6..9]);
    }

    #[test]
    fn zero_learning_rate_leaves_ensemble_unchanged() {
        // trainers reject η = 0; the bare step accepts it
        assert!(cfg(0.0).validate().is_err());
        let data = gen_double_circle(5, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let e0 = init_ensemble(&spec, 4, 1).unwrap();
        let mut e = e0.clone();
        let mut mom = MomentumState::zeros(&e);
        spgd_step(&mut e, &mut mom, &cfg(0.0), &data, &[3], 0).unwrap();
        assert!(e.bitwise_eq(&e0));
    }

    #[test]
    fn preconditioner_halves_step() {
        let data = gen_double_circle(5, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let e0 = init_ensemble(&spec, 4, 1).unwrap();
        let run = |c: f64| {
            let mut e = e0.clone();
            let mut mom = MomentumState::zeros(&e);
            let mut config = cfg(0.1);
            config.preconditioner = c;
            spgd_step(&mut e, &mut mom, &config, &data, &[2], 0).unwrap();
            e.values().iter().zip(e0.values()).map(|(a, b)| a - b).collect::<Vec<_>>()
        };
        let (full, half) = (run(1.0), run(2.0));
        for (f, h) in full.iter().zip(&half) {
            assert!((f / 2.0 - h).abs() <= 1e-12, "{f} {h}");
        }
    }

    #[test]
    fn momentum_free_step_matches_direction() {
        let data = gen_double_circle(5, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let e0 = init_ensemble(&spec, 4, 1).unwrap();
        let mut e = e0.clone();
        let mut mom = MomentumState::zeros(&e);
        spgd_step(&mut e, &mut mom, &cfg(0.05), &data, &[6], 0).unwrap();
        let dir = stochastic_update_direction(&e0, LossSpec::Exponential, data.x(6), spec.target(data.label(6))).unwrap();
        for ((t, t0), g) in e.values().iter().zip(e0.values()).zip(&dir.direction) {
            assert!((t - (t0 + 0.05 * g)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_update_is_reported() {
        let data = Dataset::new(vec![1e200, 1e200], 2, vec![0], 2).unwrap();
        let spec = ModelSpec::linear_tanh(2, false);
        let mut e = ParticleEnsemble::new(spec, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut mom = MomentumState::zeros(&e);
        let err = spgd_step(&mut e, &mut mom, &cfg(1e200), &data, &[0], 4).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 4, particle: 0 }));
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let data = gen_double_circle(10, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let mut config = cfg(0.1);
        config.steps = 0;
        let out = train_practical(&spec, &data, &config, 5).unwrap();
        assert!(out.ensemble.bitwise_eq(&init_ensemble(&spec, 5, config.seed).unwrap()));
        assert!(out.map.is_empty());
        assert_eq!(out.trace.records.len(), 1);
    }

    #[test]
    fn trace_cadence() {
        let data = gen_double_circle(10, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let mut config = cfg(0.1);
        config.steps = 25;
        config.eval_every = 10;
        let out = train_practical(&spec, &data, &config, 3).unwrap();
        let steps: Vec<usize> = out.trace.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        assert_eq!(out.map.len(), 25);
    }

    #[test]
    fn momentum_marks_map_unreplayable() {
        let data = gen_double_circle(10, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let mut config = cfg(0.1);
        config.momentum = 0.9;
        let out = train_practical(&spec, &data, &config, 3).unwrap();
        assert!(!out.map.replayable);
        assert!(out.map.is_empty());
        assert!(train_resampling(&spec, &data, &config, 3, Seeding::Fresh).is_err());
    }

    #[test]
    fn divergence_aborts_with_trace() {
        let mut trace = TrainTrace::default();
        let rec = TraceRecord { step: 7, loss: f64::INFINITY, accuracy: 0.0, optimality_norm: 0.0, smooth_margin: 0.0 };
        match trace.push_checked(rec) {
            Err(Error::Diverged { step, trace, .. }) => {
                assert_eq!(step, 7);
                assert_eq!(trace.records.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resampling_map_has_one_layer_per_step() {
        let data = gen_double_circle(10, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let out = train_resampling(&spec, &data, &cfg(0.1), 4, Seeding::Fresh).unwrap();
        assert_eq!(out.map.len(), 20);
        assert!(out.map.replayable);
    }

    #[test]
    fn batch_averages_directions() {
        let data = gen_double_circle(10, 0.1, 1).unwrap();
        let spec = ModelSpec::linear_tanh(2, true);
        let e0 = init_ensemble(&spec, 3, 1).unwrap();
        let single = |j: usize| {
            let mut e = e0.clone();
            let mut mom = MomentumState::zeros(&e);
            spgd_step(&mut e, &mut mom, &cfg(0.1), &data, &[j], 0).unwrap();
            e
        };
        let (a, b) = (single(2), single(15));
        let mut e = e0.clone();
        let mut mom = MomentumState::zeros(&e);
        let coeffs = spgd_step(&mut e, &mut mom, &cfg(0.1), &data, &[2, 15], 0).unwrap();
        assert_eq!(coeffs.len(), 2);
        for k in 0..e.values().len() {
            let expected = (a.values()[k] + b.values()[k]) / 2.0;
            assert!((e.values()[k] - expected).abs() < 1e-14);
        }
    }
}
