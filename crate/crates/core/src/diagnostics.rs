//! Measurable quantities of a trained ensemble: empirical risk, smooth
//! margin, the margin distribution and its smooth-margin bound, the
//! local-optimality norm and the Taylor-residual check.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{decide, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{margin_of, Workspace};
use crate::optimizer::TraceRecord;

/// `ρ_i = i / 50`, `i = 1..=50`.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 50.0).collect()
}

/// Mean surrogate loss of per-sample margins.
pub fn loss_of_margins(margins: &[f64], loss: LossSpec) -> f64 {
    margins.iter().map(|&m| loss.value(-m)).sum::<f64>() / margins.len() as f64
}

/// `L_S = (1/N) Σ_j l(−margin_j)` of the ensemble's mean prediction.
pub fn empirical_loss(ensemble: &ParticleEnsemble, data: &Dataset, loss: LossSpec) -> Result<f64> {
    Ok(loss_of_margins(&ensemble.margins(data)?, loss))
}

/// `−α ln((1/N) Σ_j exp(−m_j / α))`, shifted by the minimum margin so no
/// exponent is positive.
pub fn smooth_margin_of(margins: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha must be > 0, got {alpha}")));
    }
    if margins.is_empty() {
        return Err(Error::Empty("no margins".into()));
    }
    let m_min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = margins.iter().map(|&m| (-(m - m_min) / alpha).exp()).sum();
    Ok(m_min - alpha * (sum / margins.len() as f64).ln())
}

pub fn smooth_margin(ensemble: &ParticleEnsemble, data: &Dataset, alpha: f64) -> Result<f64> {
    smooth_margin_of(&ensemble.margins(data)?, alpha)
}

/// Right-hand side of the smooth-margin bound on the empirical margin
/// distribution,
/// `(exp((1−ψ)/α) − 1) / (exp((1−ρ)/α) − 1)`, valid for `0 < ρ < ψ ≤ 1`.
pub fn margin_bound_rhs(psi: f64, alpha: f64, rho: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha must be > 0, got {alpha}")));
    }
    if !(psi > 0.0 && psi <= 1.0) {
        return Err(Error::Precondition(format!("need 0 < psi <= 1, got {psi}")));
    }
    if !(rho > 0.0 && rho < psi) {
        return Err(Error::Precondition(format!("need 0 < rho < psi = {psi}, got {rho}")));
    }
    let a = (1.0 - psi) / alpha;
    let b = (1.0 - rho) / alpha;
    // ln(e^x − 1) = x + ln(1 − e^{−x})
    let ln_num = a + (-(-a).exp_m1()).ln();
    let ln_den = b + (-(-b).exp_m1()).ln();
    Ok((ln_num - ln_den).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub margins: Vec<f64>,
    pub rho_grid: Vec<f64>,
    /// `P_S[margin ≤ ρ]` per grid point.
    pub cdf: Vec<f64>,
    /// Bound value where `0 < ρ < ψ_α`, otherwise `None`.
    pub bound_rhs: Vec<Option<f64>>,
    pub psi_alpha: f64,
    pub alpha: f64,
}

impl MarginReport {
    pub fn from_margins(margins: Vec<f64>, alpha: f64, rho_grid: &[f64]) -> Result<Self> {
        if let Some(&bad) = rho_grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::Precondition(format!("rho grid value {bad} outside (0, 1]")));
        }
        let psi = smooth_margin_of(&margins, alpha)?;
        let mut sorted = margins.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let cdf = rho_grid
            .iter()
            .map(|&rho| sorted.partition_point(|&m| m <= rho) as f64 / n)
            .collect();
        let bound_rhs = rho_grid
            .iter()
            .map(|&rho| margin_bound_rhs(psi, alpha, rho).ok())
            .collect();
        Ok(MarginReport {
            margins,
            rho_grid: rho_grid.to_vec(),
            cdf,
            bound_rhs,
            psi_alpha: psi,
            alpha,
        })
    }

    /// CSV with columns `rho,cdf,bound_rhs`; the bound cell is empty where
    /// the bound does not apply.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rho,cdf,bound_rhs")?;
        for ((rho, cdf), bound) in self.rho_grid.iter().zip(&self.cdf).zip(&self.bound_rhs) {
            match bound {
                Some(b) => writeln!(out, "{rho},{cdf},{b}")?,
                None => writeln!(out, "{rho},{cdf},")?,
            }
        }
        Ok(())
    }
}

pub fn margin_report(
    ensemble: &ParticleEnsemble,
    data: &Dataset,
    alpha: f64,
    rho_grid: &[f64],
) -> Result<MarginReport> {
    MarginReport::from_margins(ensemble.margins(data)?, alpha, rho_grid)
}

/// Row `i` is `E_S[s(θ_i, x, y)] = −(1/N) Σ_j l'(−m̄_j) ∇_θ margin(θ_i, x_j, y_j)`.
/// The gradient of `L_S` with respect to particle `i` is this row divided by `M`.
pub fn full_batch_gradient(ensemble: &ParticleEnsemble, data: &Dataset, loss: LossSpec) -> Result<Vec<f64>> {
    let spec = *ensemble.spec();
    let margins = ensemble.margins(data)?;
    let d = ensemble.dim();
    let n = data.n_samples() as f64;
    let mut out = vec![0.0; ensemble.values().len()];
    let mut grad = vec![0.0; d];
    let mut ws = Workspace::default();
    for (j, &mbar) in margins.iter().enumerate() {
        let weight = -loss.derivative(-mbar) / n;
        let y = spec.target(data.label(j));
        for (theta, row) in ensemble.rows().zip(out.chunks_exact_mut(d)) {
            spec.margin_grad_into(theta, data.x(j), y, &mut grad, &mut ws);
            for (r, g) in row.iter_mut().zip(&grad) {
                *r += weight * g;
            }
        }
    }
    Ok(out)
}

/// Squared local-optimality norm `(1/M) Σ_i ‖E_S[s(θ_i, ·)]‖²`; zero at a
/// local minimum.
pub fn optimality_norm(ensemble: &ParticleEnsemble, data: &Dataset, loss: LossSpec) -> Result<f64> {
    let g = full_batch_gradient(ensemble, data, loss)?;
    Ok(g.iter().map(|v| v * v).sum::<f64>() / ensemble.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorCheck {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares slope of `ln R` against `ln ε`; `None` when fewer than
    /// two residuals are positive (e.g. a zero direction).
    pub slope: Option<f64>,
}

/// First-order Taylor residuals of `L_S` along the particle perturbation
/// `θ_i + ε ξ_i`:
/// `R(ε) = |L_S(θ + εξ) − L_S(θ) − ε (1/M) Σ_i E_S[s(θ_i)]ᵀ ξ_i|`.
pub fn taylor_residual(
    ensemble: &ParticleEnsemble,
    data: &Dataset,
    loss: LossSpec,
    direction: &[f64],
    epsilons: &[f64],
) -> Result<TaylorCheck> {
    Error::check_dim("direction", ensemble.values().len(), direction.len())?;
    if direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("direction must be finite".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("epsilons must be positive and decreasing".into()));
    }
    let base = empirical_loss(ensemble, data, loss)?;
    let g = full_batch_gradient(ensemble, data, loss)?;
    let first_order = g.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() / ensemble.len() as f64;

    let mut moved = ensemble.clone();
    let mut residuals = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        for ((t, t0), xi) in moved.values_mut().iter_mut().zip(ensemble.values()).zip(direction) {
            *t = t0 + eps * xi;
        }
        let value = empirical_loss(&moved, data, loss)?;
        residuals.push((value - base - eps * first_order).abs());
    }

    let points: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(&residuals)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&e, &r)| (e.ln(), r.ln()))
        .collect();
    let slope = (points.len() >= 2).then(|| least_squares_slope(&points));
    Ok(TaylorCheck {
        epsilons: epsilons.to_vec(),
        residuals,
        slope,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Loss, accuracy, optimality norm and smooth margin at `step`.
pub fn trace_record(
    ensemble: &ParticleEnsemble,
    data: &Dataset,
    loss: LossSpec,
    alpha: f64,
    step: usize,
) -> Result<TraceRecord> {
    let margins = ensemble.margins(data)?;
    Ok(TraceRecord {
        step,
        loss: loss_of_margins(&margins, loss),
        accuracy: ensemble.accuracy(data)?,
        optimality_norm: optimality_norm(ensemble, data, loss)?,
        smooth_margin: smooth_margin_of(&margins, alpha)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub class: usize,
    /// Mean prediction (tanh head) or winning probability (softmax head).
    pub score: f64,
}

/// Predicted class on a `resolution × resolution` lattice over
/// `[lo, hi]²`, for models on 2-D inputs.
pub fn decision_grid(ensemble: &ParticleEnsemble, lo: f64, hi: f64, resolution: usize) -> Result<Vec<GridCell>> {
    Error::check_dim("decision grid input", 2, ensemble.spec().input_dim)?;
    if resolution < 2 || !(hi > lo) {
        return Err(Error::Precondition("need resolution >= 2 and hi > lo".into()));
    }
    let step = (hi - lo) / (resolution - 1) as f64;
    let mut out = vec![0.0; ensemble.spec().output_dim()];
    let mut ws = Workspace::default();
    let mut cells = Vec::with_capacity(resolution * resolution);
    for r in 0..resolution {
        for c in 0..resolution {
            let p = [lo + c as f64 * step, lo + r as f64 * step];
            ensemble.predict_mean_into(&p, &mut out, &mut ws);
            let class = decide(ensemble.spec(), &out);
            let score = if out.len() == 1 { out[0] } else { out[class] };
            cells.push(GridCell {
                x: p[0],
                y: p[1],
                class,
                score,
            });
        }
    }
    Ok(cells)
}

pub fn write_grid_csv<W: Write>(cells: &[GridCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,y,class,score")?;
    for cell in cells {
        writeln!(out, "{},{},{},{}", cell.x, cell.y, cell.class, cell.score)?;
    }
    Ok(())
}

/// Margin of the ensemble's mean prediction at one labelled point.
pub fn point_margin(ensemble: &ParticleEnsemble, x: &[f64], class: usize) -> Result<f64> {
    let out = ensemble.predict_mean(x)?;
    Ok(margin_of(&out, ensemble.spec().target(class)))
}
