use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use spgd::baseline::train_single;
use spgd::data::gen_double_circle;
use spgd::diagnostics::{
    decision_grid, default_rho_grid, empirical_loss, margin_report, optimality_norm, write_grid_csv,
};
use spgd::ensemble::{load_checkpoint, save_checkpoint, CheckpointMeta};
use spgd::experiment::cross_validate;
use spgd::optimizer::{train_practical, train_resampling, TraceRecord, TrainOutput};
use spgd::{Dataset, Error, ParticleEnsemble, TrainTrace};

use crate::config::{DataSource, MethodKind, RunConfig};
use crate::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SEEDS_FILE: &str = "seeds.json";
pub const MAP_FILE: &str = "map.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CV_REPORT_FILE: &str = "cv_report.json";
pub const MARGINS_FILE: &str = "margins.csv";
pub const DIAG_SUMMARY_FILE: &str = "diag_summary.json";
pub const GRID_FILE: &str = "grid.csv";

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let wrap = |e| CliError::Runtime(Error::Io { path: path.to_path_buf(), source: e });
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    f(&mut out).and_then(|()| out.flush()).map_err(wrap)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::Io { path: dir.to_path_buf(), source: e }))
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    method: MethodKind,
    particles: usize,
    steps: usize,
    n_samples: usize,
    dataset_fingerprint: String,
    /// Training loss of the final iterate under the method's objective.
    final_loss: f64,
    train_accuracy: f64,
    optimality_norm: f64,
    /// Smooth margin at the trace `α`.
    psi_alpha: f64,
    alpha: f64,
}

pub fn train(config: &RunConfig) -> Result<(), CliError> {
    let data = config.data.load()?;
    let spec = config.model.build(&data)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    write_json(&dir.join(CONFIG_FILE), config)?;

    let t = &config.train;
    let result = match config.method {
        MethodKind::SpgdPractical => train_practical(&spec, &data, t, config.particles),
        MethodKind::SpgdResampling => train_resampling(&spec, &data, t, config.particles, config.seeding),
        MethodKind::Baseline => {
            let base = config.baseline_config(spec);
            base.validate().map_err(CliError::usage)?;
            train_single(&base, &data).and_then(|(theta, trace)| {
                let ensemble = ParticleEnsemble::dirac(spec, &theta.0)?;
                Ok(TrainOutput {
                    seeds: ensemble.clone(),
                    map: spgd::ResidualTransportMap::identity(spec, &data),
                    ensemble,
                    trace,
                })
            })
        }
    };
    let out = match result {
        Ok(out) => out,
        Err(Error::Diverged { step, loss, trace }) => {
            trace.save_jsonl(&dir.join(TRACE_FILE))?;
            return Err(CliError::Runtime(Error::Diverged { step, loss, trace }));
        }
        Err(e) => return Err(e.into()),
    };

    let fingerprint = data.fingerprint();
    let meta = CheckpointMeta {
        step: t.steps as u64,
        seed: t.seed,
        dataset_fingerprint: Some(fingerprint.clone()),
    };
    save_checkpoint(&out.ensemble, &meta, &dir.join(CHECKPOINT_FILE))?;
    if config.method != MethodKind::Baseline {
        save_checkpoint(&out.seeds, &CheckpointMeta { step: 0, ..meta }, &dir.join(SEEDS_FILE))?;
        out.map.save(&dir.join(MAP_FILE))?;
    }
    out.trace.save_jsonl(&dir.join(TRACE_FILE))?;

    let last = final_record(&out.trace)?;
    let summary = TrainSummary {
        method: config.method,
        particles: out.ensemble.len(),
        steps: t.steps,
        n_samples: data.n_samples(),
        dataset_fingerprint: fingerprint,
        final_loss: last.loss,
        train_accuracy: last.accuracy,
        optimality_norm: last.optimality_norm,
        psi_alpha: last.smooth_margin,
        alpha: t.alpha,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    println!(
        "loss {:.6}  accuracy {:.4}  optimality {:.3e}  psi {:.4}  -> {}",
        summary.final_loss,
        summary.train_accuracy,
        summary.optimality_norm,
        summary.psi_alpha,
        dir.display()
    );
    Ok(())
}

fn final_record(trace: &TrainTrace) -> Result<TraceRecord, CliError> {
    trace
        .last()
        .copied()
        .ok_or_else(|| CliError::Runtime(Error::Empty("training trace".into())))
}

pub fn cv(config: &RunConfig) -> Result<(), CliError> {
    if config.cv.k < 3 {
        return Err(CliError::Usage(format!("cv needs k >= 3, got {}", config.cv.k)));
    }
    if config.model.hidden_dim.is_some() || !config.model.use_bias {
        return Err(CliError::Usage(
            "cv uses biased models with hidden width equal to the input dimension".into(),
        ));
    }
    // Each run standardizes with its own training folds.
    let source = match &config.data {
        DataSource::File { path, format, label_column, .. } => DataSource::File {
            path: path.clone(),
            format: *format,
            label_column: *label_column,
            standardize: false,
        },
        other => other.clone(),
    };
    let data = source.load()?;
    let method = config.cv_method(&config.model.build(&data)?)?;
    let report = cross_validate(&data, &method, &config.cv.grid, config.cv.k, config.train.seed)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    write_json(&dir.join(CV_REPORT_FILE), &report)?;
    println!("{}\t{}", report.method, report.table_cell());
    Ok(())
}

fn load_for_checkpoint(path: &Path, config: &RunConfig) -> Result<(ParticleEnsemble, CheckpointMeta, Dataset), CliError> {
    let (ensemble, meta) = load_checkpoint(path).map_err(CliError::usage)?;
    let data = config.data.load()?;
    let spec = ensemble.spec();
    if spec.input_dim != data.n_features() || spec.num_classes != data.num_classes() {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} features and {} classes, data has {} and {}",
            spec.input_dim,
            spec.num_classes,
            data.n_features(),
            data.num_classes()
        )));
    }
    Ok((ensemble, meta, data))
}

#[derive(Debug, Serialize)]
struct EvalReport {
    n_samples: usize,
    accuracy: f64,
    /// Surrogate loss of the mean prediction.
    loss: f64,
    dataset_fingerprint: String,
    /// Whether the data is the set the checkpoint was trained on.
    training_data: Option<bool>,
}

pub fn eval(checkpoint: &Path, config: &RunConfig) -> Result<(), CliError> {
    let (ensemble, meta, data) = load_for_checkpoint(checkpoint, config)?;
    let fingerprint = data.fingerprint();
    let report = EvalReport {
        n_samples: data.n_samples(),
        accuracy: ensemble.accuracy(&data)?,
        loss: empirical_loss(&ensemble, &data, config.train.loss)?,
        training_data: meta.dataset_fingerprint.map(|f| f == fingerprint),
        dataset_fingerprint: fingerprint,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiagSummary {
    n_samples: usize,
    particles: usize,
    accuracy: f64,
    loss: f64,
    optimality_norm: f64,
    alpha: f64,
    psi_alpha: f64,
    min_margin: f64,
    mean_margin: f64,
    /// Grid points where the margin bound applies (`0 < ρ < ψ_α`).
    bound_points: usize,
    grid_written: bool,
}

pub fn diag(checkpoint: &Path, config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let (ensemble, meta, data) = load_for_checkpoint(checkpoint, config)?;
    if let Some(expected) = meta.dataset_fingerprint {
        let actual = data.fingerprint();
        if expected != actual {
            return Err(CliError::usage(Error::FingerprintMismatch { expected, actual }));
        }
    }
    let d = &config.diagnostics;
    let rho_grid = d.rho_grid.clone().unwrap_or_else(default_rho_grid);
    let report = margin_report(&ensemble, &data, d.alpha, &rho_grid).map_err(CliError::usage)?;

    create_dir(out_dir)?;
    write_with(&out_dir.join(MARGINS_FILE), |out| report.write_csv(out))?;
    let grid_written = ensemble.spec().input_dim == 2;
    if grid_written {
        let cells = decision_grid(&ensemble, d.grid_lo, d.grid_hi, d.grid_resolution).map_err(CliError::usage)?;
        write_with(&out_dir.join(GRID_FILE), |out| write_grid_csv(&cells, out))?;
    }
    let margins = &report.margins;
    let summary = DiagSummary {
        n_samples: data.n_samples(),
        particles: ensemble.len(),
        accuracy: ensemble.accuracy(&data)?,
        loss: empirical_loss(&ensemble, &data, config.train.loss)?,
        optimality_norm: optimality_norm(&ensemble, &data, config.train.loss)?,
        alpha: d.alpha,
        psi_alpha: report.psi_alpha,
        min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        mean_margin: margins.iter().sum::<f64>() / margins.len() as f64,
        bound_points: report.bound_rhs.iter().filter(|b| b.is_some()).count(),
        grid_written,
    };
    write_json(&out_dir.join(DIAG_SUMMARY_FILE), &summary)?;
    println!("psi {:.4}  min margin {:.4}  -> {}", summary.psi_alpha, summary.min_margin, out_dir.display());
    Ok(())
}

pub fn gen_data(n_per_class: usize, noise: f64, seed: u64, path: &Path) -> Result<(), CliError> {
    let data = gen_double_circle(n_per_class, noise, seed).map_err(CliError::usage)?;
    let names = data.class_names();
    write_with(path, |out| {
        writeln!(out, "x1,x2,label")?;
        for j in 0..data.n_samples() {
            let x = data.x(j);
            writeln!(out, "{},{},{}", x[0], x[1], names[data.label(j)])?;
        }
        Ok(())
    })
}
