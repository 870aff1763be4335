//! Base classifiers `h(θ, x)` and the parameter gradient of their margin.
//!
//! Parameters are stored flat, layer by layer, weights (row-major,
//! `out × in`) before biases:
//!
//! * `LinearTanh`: `[w (n), b]`
//! * `LogReg`: `[W (c × n), b (c)]`
//! * `Mlp3`: `[W1 (hidden × n), b1 (hidden), W2 (out × hidden), b2 (out)]`
//!
//! Bias blocks are omitted when `use_bias` is false.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::rng;

/// Standard deviation of initial bias entries; weights use 1.
pub const BIAS_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `tanh(wᵀx + b)`.
    LinearTanh,
    /// `softmax(Wx + b)`.
    LogReg,
    /// `head(W2 · sigmoid(W1 x + b1) + b2)`.
    Mlp3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    TanhScalar,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub hidden_dim: usize,
    pub output: OutputHead,
    pub use_bias: bool,
}

/// Label in the form the model's margin consumes: a `±1` sign for scalar
/// heads, a class index (one-hot vector) for softmax heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginTarget {
    Sign(f64),
    OneHot(usize),
}

/// One particle's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Reusable buffers for forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    d_hidden: Vec<f64>,
    d_out: Vec<f64>,
}

impl ModelSpec {
    pub fn linear_tanh(input_dim: usize, use_bias: bool) -> Self {
        ModelSpec {
            kind: ModelKind::LinearTanh,
            input_dim,
            num_classes: 2,
            hidden_dim: 0,
            output: OutputHead::TanhScalar,
            use_bias,
        }
    }

    pub fn logreg(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LogReg,
            input_dim,
            num_classes,
            hidden_dim: 0,
            output: OutputHead::Softmax,
            use_bias: true,
        }
    }

    pub fn mlp3(input_dim: usize, num_classes: usize, hidden_dim: usize, output: OutputHead) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp3,
            input_dim,
            num_classes,
            hidden_dim,
            output,
            use_bias: true,
        }
    }

    pub fn with_bias(mut self, use_bias: bool) -> Self {
        self.use_bias = use_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_dim == 0 {
            return fail("input_dim must be >= 1".into());
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.output == OutputHead::TanhScalar && self.num_classes != 2 {
            return fail("tanh-scalar output requires exactly 2 classes".into());
        }
        match self.kind {
            ModelKind::LinearTanh if self.output != OutputHead::TanhScalar => {
                fail("linear_tanh uses the tanh-scalar output".into())
            }
            ModelKind::LogReg if self.output != OutputHead::Softmax => {
                fail("logreg uses the softmax output".into())
            }
            ModelKind::Mlp3 if self.hidden_dim == 0 => fail("mlp3 needs hidden_dim >= 1".into()),
            _ => Ok(()),
        }
    }

    /// Width of `forward`'s output: 1 for a tanh head, `c` for softmax.
    pub fn output_dim(&self) -> usize {
        match self.output {
            OutputHead::TanhScalar => 1,
            OutputHead::Softmax => self.num_classes,
        }
    }

    pub fn param_dim(&self) -> usize {
        let b = usize::from(self.use_bias);
        let (n, out) = (self.input_dim, self.output_dim());
        match self.kind {
            ModelKind::LinearTanh | ModelKind::LogReg => (n + b) * out,
            ModelKind::Mlp3 => (n + b) * self.hidden_dim + (self.hidden_dim + b) * out,
        }
    }

    /// Whether flat index `k` addresses a bias entry.
    pub fn is_bias(&self, k: usize) -> bool {
        if !self.use_bias {
            return false;
        }
        let (n, out) = (self.input_dim, self.output_dim());
        match self.kind {
            ModelKind::LinearTanh | ModelKind::LogReg => k >= n * out,
            ModelKind::Mlp3 => {
                let h = self.hidden_dim;
                let w1 = h * n;
                let w2_start = w1 + h;
                (k >= w1 && k < w2_start) || k >= w2_start + out * h
            }
        }
    }

    pub fn target(&self, class_index: usize) -> MarginTarget {
        match self.output {
            OutputHead::TanhScalar => MarginTarget::Sign(if class_index == 0 { 1.0 } else { -1.0 }),
            OutputHead::Softmax => MarginTarget::OneHot(class_index),
        }
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        Error::check_dim("parameter vector", self.param_dim(), theta.len())?;
        Error::check_dim("feature vector", self.input_dim, x.len())
    }

    fn check_target(&self, y: MarginTarget) -> Result<()> {
        match (self.output, y) {
            (OutputHead::TanhScalar, MarginTarget::Sign(s)) if s == 1.0 || s == -1.0 => Ok(()),
            (OutputHead::Softmax, MarginTarget::OneHot(k)) if k < self.num_classes => Ok(()),
            _ => Err(Error::InvalidConfig(format!(
                "target {y:?} does not match the {:?} output head",
                self.output
            ))),
        }
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(theta, x, &mut out, &mut Workspace::default());
        Ok(out)
    }

    pub fn margin(&self, theta: &[f64], x: &[f64], y: MarginTarget) -> Result<f64> {
        self.check(theta, x)?;
        self.check_target(y)?;
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(theta, x, &mut out, &mut Workspace::default());
        Ok(margin_of(&out, y))
    }

    pub fn grad_margin(&self, theta: &[f64], x: &[f64], y: MarginTarget) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        self.check_target(y)?;
        let mut grad = vec![0.0; self.param_dim()];
        self.margin_grad_into(theta, x, y, &mut grad, &mut Workspace::default());
        Ok(grad)
    }

    /// Unchecked forward pass; `out` has length [`Self::output_dim`].
    pub fn forward_into(&self, theta: &[f64], x: &[f64], out: &mut [f64], ws: &mut Workspace) {
        match self.kind {
            ModelKind::LinearTanh => {
                out[0] = affine_row(theta, x, self.bias_at(theta, self.input_dim)).tanh();
            }
            ModelKind::LogReg => {
                self.affine(theta, 0, x, self.output_dim(), out);
                softmax_in_place(out);
            }
            ModelKind::Mlp3 => {
                self.hidden_forward(theta, x, ws);
                let off = self.w2_offset();
                let out_dim = self.output_dim();
                self.affine(theta, off, &ws.hidden, out_dim, out);
                self.apply_head(out);
            }
        }
    }

    /// Margin and its gradient in one pass; `grad` is overwritten.
    pub fn margin_grad_into(
        &self,
        theta: &[f64],
        x: &[f64],
        y: MarginTarget,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        self.backward(theta, x, grad, ws, |out, d_out| match y {
            MarginTarget::Sign(s) => {
                let h = out[0];
                d_out[0] = s * (1.0 - h * h);
                s * h
            }
            MarginTarget::OneHot(k) => {
                // ∂p_k/∂o_j = p_k (δ_kj − p_j)
                let pk = out[k];
                for (j, d) in d_out.iter_mut().enumerate() {
                    let delta = if j == k { 1.0 } else { 0.0 };
                    *d = pk * (delta - out[j]);
                }
                pk
            }
        })
    }

    /// `ln p_k(θ, x)` and its gradient, for softmax heads.
    pub fn log_prob_grad_into(
        &self,
        theta: &[f64],
        x: &[f64],
        class: usize,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        debug_assert_eq!(self.output, OutputHead::Softmax);
        self.backward(theta, x, grad, ws, |out, d_out| {
            for (j, d) in d_out.iter_mut().enumerate() {
                let delta = if j == class { 1.0 } else { 0.0 };
                *d = delta - out[j];
            }
            out[class].ln()
        })
    }

    /// Shared backward pass. `head` receives the head output and must fill the
    /// derivative of the returned scalar with respect to the pre-head logits.
    fn backward<F>(&self, theta: &[f64], x: &[f64], grad: &mut [f64], ws: &mut Workspace, head: F) -> f64
    where
        F: FnOnce(&[f64], &mut [f64]) -> f64,
    {
        let n = self.input_dim;
        let out_dim = self.output_dim();
        let mut out = std::mem::take(&mut ws.logits);
        out.resize(out_dim, 0.0);
        let mut d_out = std::mem::take(&mut ws.d_out);
        d_out.clear();
        d_out.resize(out_dim, 0.0);

        let value = match self.kind {
            ModelKind::LinearTanh | ModelKind::LogReg => {
                self.forward_into(theta, x, &mut out, ws);
                let value = head(&out, &mut d_out);
                fill_affine_grad(grad, 0, &d_out, x, self.use_bias);
                value
            }
            ModelKind::Mlp3 => {
                let h = self.hidden_dim;
                self.hidden_forward(theta, x, ws);
                let w2 = self.w2_offset();
                self.affine(theta, w2, &ws.hidden, out_dim, &mut out);
                self.apply_head(&mut out);
                let value = head(&out, &mut d_out);

                fill_affine_grad(grad, w2, &d_out, &ws.hidden, self.use_bias);

                ws.d_hidden.clear();
                ws.d_hidden.resize(h, 0.0);
                for (o, &g) in d_out.iter().enumerate() {
                    let row = &theta[w2 + o * h..w2 + (o + 1) * h];
                    for (dh, &w) in ws.d_hidden.iter_mut().zip(row) {
                        *dh += w * g;
                    }
                }
                for (dh, &s) in ws.d_hidden.iter_mut().zip(&ws.hidden) {
                    *dh *= s * (1.0 - s);
                }
                fill_affine_grad(grad, 0, &ws.d_hidden, x, self.use_bias);
                debug_assert_eq!(w2, h * (n + usize::from(self.use_bias)));
                value
            }
        };
        ws.logits = out;
        ws.d_out = d_out;
        value
    }

    fn bias_at(&self, theta: &[f64], idx: usize) -> f64 {
        if self.use_bias {
            theta[idx]
        } else {
            0.0
        }
    }

    fn w2_offset(&self) -> usize {
        self.hidden_dim * (self.input_dim + usize::from(self.use_bias))
    }

    /// `out = W z + b` for the layer whose weights start at `offset`.
    fn affine(&self, theta: &[f64], offset: usize, z: &[f64], rows: usize, out: &mut [f64]) {
        let cols = z.len();
        let bias = offset + rows * cols;
        for (r, o) in out.iter_mut().enumerate().take(rows) {
            let w = &theta[offset + r * cols..offset + (r + 1) * cols];
            *o = affine_row(w, z, self.bias_at(theta, bias + r));
        }
    }

    fn hidden_forward(&self, theta: &[f64], x: &[f64], ws: &mut Workspace) {
        ws.hidden.clear();
        ws.hidden.resize(self.hidden_dim, 0.0);
        let mut hidden = std::mem::take(&mut ws.hidden);
        self.affine(theta, 0, x, self.hidden_dim, &mut hidden);
        for a in hidden.iter_mut() {
            *a = sigmoid(*a);
        }
        ws.hidden = hidden;
    }

    fn apply_head(&self, out: &mut [f64]) {
        match self.output {
            OutputHead::TanhScalar => out[0] = out[0].tanh(),
            OutputHead::Softmax => softmax_in_place(out),
        }
    }
}

fn affine_row(w: &[f64], z: &[f64], bias: f64) -> f64 {
    w.iter().zip(z).fold(bias, |acc, (a, b)| acc + a * b)
}

/// Writes `d_out ⊗ z` and (optionally) `d_out` into the layer block at `offset`.
fn fill_affine_grad(grad: &mut [f64], offset: usize, d_out: &[f64], z: &[f64], use_bias: bool) {
    let cols = z.len();
    for (r, &g) in d_out.iter().enumerate() {
        for (dst, &zi) in grad[offset + r * cols..offset + (r + 1) * cols].iter_mut().zip(z) {
            *dst = g * zi;
        }
    }
    if use_bias {
        let bias = offset + d_out.len() * cols;
        grad[bias..bias + d_out.len()].copy_from_slice(d_out);
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `y·h` for a sign target, `h_k` for a one-hot target.
pub fn margin_of(output: &[f64], y: MarginTarget) -> f64 {
    match y {
        MarginTarget::Sign(s) => s * output[0],
        MarginTarget::OneHot(k) => output[k],
    }
}

/// Draw parameters with `rng`: weights `N(0, 1)`, biases `N(0, 0.01²)`.
pub fn init_params_with<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParamVector {
    let values = (0..spec.param_dim())
        .map(|k| {
            let z: f64 = rng.sample(StandardNormal);
            if spec.is_bias(k) {
                BIAS_INIT_STD * z
            } else {
                z
            }
        })
        .collect();
    ParamVector(values)
}

pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    init_params_with(spec, &mut rng::stream(seed, 0))
}
