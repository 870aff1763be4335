//! Particle approximation of a measure over parameters, the residual
//! transport maps built by training, and checkpoint files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{init_params_with, margin_of, ModelSpec, OutputHead, Workspace};
use crate::rng;

pub const CHECKPOINT_VERSION: u32 = 1;

/// `M` particles, row `i` is `θ_i`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    spec: ModelSpec,
    m: usize,
    particles: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(spec: ModelSpec, m: usize, particles: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if m == 0 {
            return Err(Error::Precondition("ensemble needs at least one particle".into()));
        }
        Error::check_dim("particle matrix", m * spec.param_dim(), particles.len())?;
        if let Some(pos) = particles.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: 0,
                particle: pos / spec.param_dim(),
            });
        }
        Ok(ParticleEnsemble { spec, m, particles })
    }

    /// Point mass at `theta`.
    pub fn dirac(spec: ModelSpec, theta: &[f64]) -> Result<Self> {
        Self::new(spec, 1, theta.to_vec())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        self.spec.param_dim()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.particles[i * d..(i + 1) * d]
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.particles[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.particles
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.particles
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.chunks_exact(self.dim())
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.m == other.m
            && self
                .particles
                .iter()
                .zip(&other.particles)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.particles
            .iter()
            .zip(&other.particles)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        Error::check_dim("feature vector", self.spec.input_dim, x.len())
    }

    /// `(1/M) Σ_i h(θ_i, x)`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut out = vec![0.0; self.spec.output_dim()];
        self.predict_mean_into(x, &mut out, &mut Workspace::default());
        Ok(out)
    }

    pub(crate) fn predict_mean_into(&self, x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for theta in self.rows() {
            self.spec.forward_into(theta, x, &mut buf, ws);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        let m = self.m as f64;
        out.iter_mut().for_each(|v| *v /= m);
    }

    /// Sign rule for scalar heads (ties go to class 0, i.e. `y = +1`),
    /// argmax with lowest-index ties for softmax heads.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(decide(&self.spec, &self.predict_mean(x)?))
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        Error::check_dim("feature vector", self.spec.input_dim, data.n_features())?;
        let mut ws = Workspace::default();
        let mut out = vec![0.0; self.spec.output_dim()];
        let correct = (0..data.n_samples())
            .filter(|&j| {
                self.predict_mean_into(data.x(j), &mut out, &mut ws);
                decide(&self.spec, &out) == data.label(j)
            })
            .count();
        Ok(correct as f64 / data.n_samples() as f64)
    }

    /// Margin of the mean prediction at every sample.
    pub fn margins(&self, data: &Dataset) -> Result<Vec<f64>> {
        Error::check_dim("feature vector", self.spec.input_dim, data.n_features())?;
        let mut ws = Workspace::default();
        let mut out = vec![0.0; self.spec.output_dim()];
        Ok((0..data.n_samples())
            .map(|j| {
                self.predict_mean_into(data.x(j), &mut out, &mut ws);
                margin_of(&out, self.spec.target(data.label(j)))
            })
            .collect())
    }
}

pub fn decide(spec: &ModelSpec, mean_output: &[f64]) -> usize {
    match spec.output {
        OutputHead::TanhScalar => usize::from(mean_output[0] < 0.0),
        OutputHead::Softmax => {
            let mut best = 0;
            for (k, &v) in mean_output.iter().enumerate() {
                if v > mean_output[best] {
                    best = k;
                }
            }
            best
        }
    }
}

/// `M` independent parameter draws; particle `i` uses stream `i` of `seed`.
pub fn init_ensemble(spec: &ModelSpec, m: usize, seed: u64) -> Result<ParticleEnsemble> {
    spec.validate()?;
    let mut values = Vec::with_capacity(m * spec.param_dim());
    for i in 0..m {
        values.extend(init_params_with(spec, &mut rng::stream(seed, i as u64)).0);
    }
    ParticleEnsemble::new(*spec, m, values)
}

/// One residual layer `θ ↦ θ + coeff · ∇_θ margin(θ, x_s, y_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualLayer {
    /// Learning rate, loss derivative and preconditioner folded together.
    pub coeff: f64,
    pub sample_index: usize,
}

/// `φ_T = (id + ξ_{T-1}) ∘ ⋯ ∘ (id + ξ_0)`, layers stored in application order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTransportMap {
    pub spec: ModelSpec,
    pub layers: Vec<ResidualLayer>,
    pub dataset_fingerprint: String,
    /// False when the run that produced the map used momentum or mini-batches,
    /// which are not compositions of single-sample residual layers.
    pub replayable: bool,
}

impl ResidualTransportMap {
    pub fn identity(spec: ModelSpec, data: &Dataset) -> Self {
        ResidualTransportMap {
            spec,
            layers: Vec::new(),
            dataset_fingerprint: data.fingerprint(),
            replayable: true,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn push(&mut self, layer: ResidualLayer) {
        self.layers.push(layer);
    }

    /// Push one parameter vector through all layers.
    pub(crate) fn apply_row(&self, theta: &mut [f64], data: &Dataset, grad: &mut [f64], ws: &mut Workspace) {
        for layer in &self.layers {
            let j = layer.sample_index;
            let y = self.spec.target(data.label(j));
            self.spec.margin_grad_into(theta, data.x(j), y, grad, ws);
            for (t, g) in theta.iter_mut().zip(grad.iter()) {
                *t += layer.coeff * g;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = MapFile {
            version: CHECKPOINT_VERSION,
            spec: self.spec,
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            replayable: self.replayable,
            layers: self
                .layers
                .iter()
                .map(|l| (encode_f64(l.coeff), l.sample_index))
                .collect(),
        };
        write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: MapFile = read_json(path)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!("unsupported map version {}", file.version)));
        }
        let layers = file
            .layers
            .iter()
            .map(|(c, s)| {
                Ok(ResidualLayer {
                    coeff: decode_f64(c)?,
                    sample_index: *s,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ResidualTransportMap {
            spec: file.spec,
            layers,
            dataset_fingerprint: file.dataset_fingerprint,
            replayable: file.replayable,
        })
    }
}

/// Push every seed row through `map`.
pub fn apply_transport(
    map: &ResidualTransportMap,
    seeds: &ParticleEnsemble,
    data: &Dataset,
) -> Result<ParticleEnsemble> {
    if !map.replayable {
        return Err(Error::NotReplayable);
    }
    let actual = data.fingerprint();
    if actual != map.dataset_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: map.dataset_fingerprint.clone(),
            actual,
        });
    }
    Error::check_dim("seed rows", map.spec.param_dim(), seeds.dim())?;
    Error::check_dim("feature vector", map.spec.input_dim, data.n_features())?;
    if let Some(layer) = map.layers.iter().find(|l| l.sample_index >= data.n_samples()) {
        return Err(Error::Precondition(format!(
            "layer sample index {} out of range",
            layer.sample_index
        )));
    }
    let mut out = seeds.clone();
    let mut grad = vec![0.0; out.dim()];
    let mut ws = Workspace::default();
    let d = out.dim();
    for theta in out.values_mut().chunks_exact_mut(d) {
        map.apply_row(theta, data, &mut grad, &mut ws);
    }
    if let Some(pos) = out.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            step: map.len(),
            particle: pos / d,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
    pub seed: u64,
    /// Fingerprint of the training set, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    spec: ModelSpec,
    m: usize,
    d: usize,
    particles: Vec<String>,
    meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    version: u32,
    spec: ModelSpec,
    dataset_fingerprint: String,
    replayable: bool,
    layers: Vec<(String, usize)>,
}

fn encode_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn decode_f64(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::Schema(format!("bad binary64 hex {s:?}")));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Schema(format!("bad binary64 hex {s:?}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Particle values are written as hex-encoded binary64 so loading is bit-exact.
pub fn save_checkpoint(ensemble: &ParticleEnsemble, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        spec: ensemble.spec,
        m: ensemble.m,
        d: ensemble.dim(),
        particles: ensemble.particles.iter().copied().map(encode_f64).collect(),
        meta: meta.clone(),
    };
    write_json(path, &file)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParticleEnsemble, CheckpointMeta)> {
    let file: CheckpointFile = read_json(path)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    if file.d != file.spec.param_dim() {
        return Err(Error::Schema(format!(
            "d = {} does not match the model's {} parameters",
            file.d,
            file.spec.param_dim()
        )));
    }
    if file.particles.len() != file.m * file.d {
        return Err(Error::Schema(format!(
            "expected {} particle values, found {}",
            file.m * file.d,
            file.particles.len()
        )));
    }
    let values = file
        .particles
        .iter()
        .map(|s| decode_f64(s))
        .collect::<Result<Vec<_>>>()?;
    Ok((ParticleEnsemble::new(file.spec, file.m, values)?, file.meta))
}

/// Number of values stored in a checkpoint file (for shape checks).
pub fn checkpoint_value_count(path: &Path) -> Result<usize> {
    let file: CheckpointFile = read_json(path)?;
    Ok(file.particles.len())
}
