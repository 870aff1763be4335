//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spgd::model::{ModelKind, OutputHead};
use spgd::{Dataset, LossSpec, ModelSpec, ParticleEnsemble};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Dense layer `W z + b` with `W` stored row-major at `theta[off..]` and the
/// bias block (if any) right after it.
fn dense(theta: &[f64], off: usize, z: &[f64], rows: usize, bias: bool) -> (Vec<f64>, usize) {
    let cols = z.len();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(dot(&theta[off + r * cols..off + (r + 1) * cols], z));
    }
    let mut end = off + rows * cols;
    if bias {
        for (r, o) in out.iter_mut().enumerate() {
            *o += theta[end + r];
        }
        end += rows;
    }
    (out, end)
}

pub fn forward(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let head = |z: Vec<f64>| match spec.output {
        OutputHead::TanhScalar => vec![z[0].tanh()],
        OutputHead::Softmax => softmax(&z),
    };
    let out_dim = match spec.output {
        OutputHead::TanhScalar => 1,
        OutputHead::Softmax => spec.num_classes,
    };
    match spec.kind {
        ModelKind::LinearTanh | ModelKind::LogReg => head(dense(theta, 0, x, out_dim, spec.use_bias).0),
        ModelKind::Mlp3 => {
            let (a, end) = dense(theta, 0, x, spec.hidden_dim, spec.use_bias);
            let hidden: Vec<f64> = a.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
            head(dense(theta, end, &hidden, out_dim, spec.use_bias).0)
        }
    }
}

/// `y·h` for a tanh head (class 0 is +1), `h_y` for softmax.
pub fn margin(spec: &ModelSpec, theta: &[f64], x: &[f64], class: usize) -> f64 {
    let h = forward(spec, theta, x);
    match spec.output {
        OutputHead::TanhScalar => {
            if class == 0 {
                h[0]
            } else {
                -h[0]
            }
        }
        OutputHead::Softmax => h[class],
    }
}

pub fn loss(loss: LossSpec, z: f64) -> f64 {
    match loss {
        LossSpec::Exponential => z.exp(),
        LossSpec::Logistic => {
            if z > 30.0 {
                z + (-z).exp()
            } else {
                z.exp().ln_1p()
            }
        }
    }
}

pub fn mean_margin(spec: &ModelSpec, particles: &[Vec<f64>], x: &[f64], class: usize) -> f64 {
    particles.iter().map(|t| margin(spec, t, x, class)).sum::<f64>() / particles.len() as f64
}

/// `(1/N) Σ_j l(−m̄_j)` by a direct double loop.
pub fn empirical_loss(spec: &ModelSpec, particles: &[Vec<f64>], data: &Dataset, l: LossSpec) -> f64 {
    let n = data.n_samples();
    (0..n)
        .map(|j| loss(l, -mean_margin(spec, particles, data.x(j), data.label(j))))
        .sum::<f64>()
        / n as f64
}

pub fn split_particles(e: &ParticleEnsemble) -> Vec<Vec<f64>> {
    e.rows().map(|r| r.to_vec()).collect()
}

/// Central difference of `f` at `theta` along every coordinate.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            t[k] = theta[k] + h;
            let up = f(&t);
            t[k] = theta[k] - h;
            let down = f(&t);
            t[k] = theta[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_k |a_k − b_k| / max_k |b_k|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Relative error of an analytic gradient against a central difference of a
/// function whose value is `value`. Roundoff in the difference quotient is
/// about `1e-11 |value|` at `h = 1e-5`, so gradients below `1e-6 |value|`
/// are compared on that absolute scale instead of their own.
pub fn fd_rel_err(analytic: &[f64], fd: &[f64], value: f64) -> f64 {
    let diff = analytic.iter().zip(fd).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-6 * value.abs()).max(f64::MIN_POSITIVE)
}

/// Standard normal vector scaled to unit Euclidean norm.
pub fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = normals(rng, n, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// A random model spec of the given kind with small dimensions.
pub fn random_spec(kind: ModelKind, rng: &mut ChaCha8Rng) -> ModelSpec {
    let n = rng.random_range(1..=5);
    match kind {
        ModelKind::LinearTanh => ModelSpec::linear_tanh(n, rng.random()),
        ModelKind::LogReg => ModelSpec::logreg(n, rng.random_range(2..=4)),
        ModelKind::Mlp3 => {
            let output = if rng.random() { OutputHead::Softmax } else { OutputHead::TanhScalar };
            let c = if output == OutputHead::TanhScalar { 2 } else { rng.random_range(2..=4) };
            ModelSpec::mlp3(n, c, rng.random_range(1..=5), output).with_bias(rng.random())
        }
    }
}

pub fn random_ensemble(spec: &ModelSpec, m: usize, scale: f64, rng: &mut ChaCha8Rng) -> ParticleEnsemble {
    ParticleEnsemble::new(*spec, m, normals(rng, m * spec.param_dim(), scale)).unwrap()
}

pub fn random_dataset(n_samples: usize, n_features: usize, classes: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let features = normals(rng, n_samples * n_features, 1.0);
    let labels = (0..n_samples).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(features, n_features, labels, classes).unwrap()
}

pub const KINDS: [ModelKind; 3] = [ModelKind::LinearTanh, ModelKind::LogReg, ModelKind::Mlp3];
pub const LOSSES: [LossSpec; 2] = [LossSpec::Exponential, LossSpec::Logistic];
