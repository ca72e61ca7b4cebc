//! Training runs: one optimizer on one problem, logged to a run CSV.

use std::fs;
use std::path::{Path, PathBuf};

use limopt_core::numkit::RngStream;
use limopt_core::problems::{
    mlp_problem, pure_noise_problem, softmax_regression, synthetic_blobs, Dataset,
    FiniteSumProblem, MlpSpec, NoisyQuadratic, Problem,
};
use limopt_core::{norm2, OptimizerConfig, OptimizerState};

use super::config::{ExperimentConfig, ProblemKind};
use crate::data_io::{load_mnist, write_run_csv, RunRecord, RunRow};
use crate::error::{Error, Result};

/// Shape of the offline stand-in for MNIST.
pub const SYNTHETIC_SAMPLES: usize = 10_000;
pub const SYNTHETIC_FEATURES: usize = 50;
pub const SYNTHETIC_CLASSES: usize = 10;
/// Cluster spread giving a linear classifier about 92% training accuracy,
/// close to what softmax regression reaches on MNIST.
pub const SYNTHETIC_SPREAD: f64 = 2.25;

/// Classification rows are logged every this many iterations.
pub const LOG_EVERY: u64 = 10;

// stream indices under the run seed
const SAMPLING_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;

/// A finished run: its record and the summary numbers used by sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// Exact loss (oracles) or full training loss (classification) at the end.
    pub final_loss: f64,
    /// Mean logged loss over the last 10% of rows (at least one row).
    pub tail_mean_loss: f64,
}

/// The quadratic oracle used by `run`: `A = diag(1, 2, ..., d) / d`, so the
/// smoothness constant is 1, started from the all-ones vector.
pub fn default_quadratic(dim: usize, sigma: f64, c: f64) -> Result<NoisyQuadratic> {
    let diag: Vec<f64> = (1..=dim).map(|i| i as f64 / dim as f64).collect();
    Ok(NoisyQuadratic::diagonal(&diag, sigma, c)?)
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data_path {
        Some(dir) => load_mnist(dir),
        None => {
            log::info!(
                "no --data given; using synthetic blobs (n={SYNTHETIC_SAMPLES}, p={SYNTHETIC_FEATURES}, C={SYNTHETIC_CLASSES})"
            );
            let mut rng = RngStream::new(cfg.seed, DATA_STREAM);
            Ok(synthetic_blobs(
                SYNTHETIC_SAMPLES,
                SYNTHETIC_FEATURES,
                SYNTHETIC_CLASSES,
                SYNTHETIC_SPREAD,
                &mut rng,
            )?)
        }
    }
}

fn diverged(k: u64) -> Error {
    Error::Core(limopt_core::Error::NonFinite(format!(
        "iterate diverged at iteration {k}"
    )))
}

fn row(state: &OptimizerState, loss: f64, grad_norm: f64) -> RunRow {
    RunRow {
        iter: state.k(),
        loss,
        grad_norm,
        step_norm: norm2(state.last_displacement()),
        alpha_k: state.last_alpha(),
        gamma_k: state.last_gamma().unwrap_or(0.0),
    }
}

fn tail_mean(rows: &[RunRow]) -> f64 {
    let n = rows.len().div_ceil(10).max(1);
    let tail = &rows[rows.len().saturating_sub(n)..];
    tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64
}

/// Oracle problems: one row per iteration with the exact loss after the step.
fn train_oracle(
    p: &impl Problem,
    cfg: &ExperimentConfig,
    oc: OptimizerConfig,
) -> Result<RunOutcome> {
    let mut rng = RngStream::new(cfg.seed, SAMPLING_STREAM);
    let x0 = p.initial_point();
    let mut record = RunRecord {
        manifest: cfg.manifest(),
        rows: Vec::with_capacity(cfg.iters as usize),
    };
    record.set("initial_loss", p.loss(&x0));
    let mut state = OptimizerState::new(oc, x0);
    for _ in 0..cfg.iters {
        let g = p.stochastic_gradient(state.x(), &mut rng, cfg.batch);
        state.step(&g)?;
        let loss = p.loss(state.x());
        if !loss.is_finite() || !state.x().is_finite() {
            return Err(diverged(state.k()));
        }
        record.rows.push(row(&state, loss, norm2(&g)));
    }
    let final_loss = record.rows.last().map_or(0.0, |r| r.loss);
    record.set("final_loss", final_loss);
    Ok(RunOutcome {
        tail_mean_loss: tail_mean(&record.rows),
        final_loss,
        record,
    })
}

/// Minibatch training; rows carry the minibatch loss and gradient norm at
/// iteration 1, every [`LOG_EVERY`] iterations and the last one. Full
/// training losses at epoch ends go into the manifest.
fn train_classifier(
    p: &impl FiniteSumProblem,
    cfg: &ExperimentConfig,
    oc: OptimizerConfig,
) -> Result<RunOutcome> {
    let mut rng = RngStream::new(cfg.seed, SAMPLING_STREAM);
    let x0 = p.initial_point();
    let mut record = RunRecord {
        manifest: cfg.manifest(),
        rows: Vec::new(),
    };
    record.set("samples", p.sample_count());
    record.set("initial_loss", p.loss(&x0));
    let mut sampler = limopt_core::problems::EpochSampler::new(p.sample_count());
    let mut state = OptimizerState::new(oc, x0);
    for it in 1..=cfg.iters {
        let batch = sampler.next_batch(&mut rng, cfg.batch);
        let (loss, g) = p.batch_loss_gradient(state.x(), &batch);
        state.step(&g)?;
        if !loss.is_finite() || !state.x().is_finite() {
            return Err(diverged(it));
        }
        if it == 1 || it % LOG_EVERY == 0 || it == cfg.iters {
            record.rows.push(row(&state, loss, norm2(&g)));
        }
        if sampler.at_epoch_boundary() {
            let full = p.loss(state.x());
            if !full.is_finite() {
                return Err(diverged(it));
            }
            record.set(format!("epoch_{}_loss", sampler.epochs_completed()), full);
        }
    }
    let final_loss = p.loss(state.x());
    if !final_loss.is_finite() {
        return Err(diverged(cfg.iters));
    }
    record.set("final_loss", final_loss);
    Ok(RunOutcome {
        tail_mean_loss: tail_mean(&record.rows),
        final_loss,
        record,
    })
}

/// Validates and runs the configured experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let oc = cfg.validate()?;
    execute_validated(cfg, oc)
}

pub(crate) fn execute_validated(cfg: &ExperimentConfig, oc: OptimizerConfig) -> Result<RunOutcome> {
    match cfg.problem {
        ProblemKind::Noise => train_oracle(&pure_noise_problem(cfg.dim, cfg.sigma)?, cfg, oc),
        ProblemKind::Quadratic => train_oracle(
            &default_quadratic(cfg.dim, cfg.sigma, cfg.noise_mv)?,
            cfg,
            oc,
        ),
        ProblemKind::Logreg => train_classifier(&softmax_regression(load_data(cfg)?)?, cfg, oc),
        ProblemKind::Mlp2 | ProblemKind::Mlp3 => {
            let data = load_data(cfg)?;
            let hidden = vec![cfg.hidden_width; cfg.problem.hidden_layers()];
            let spec = MlpSpec::new(data.feature_count(), &hidden, data.class_count())?;
            let mut init = RngStream::new(cfg.seed, INIT_STREAM);
            train_classifier(&mlp_problem(spec, data, &mut init)?, cfg, oc)
        }
    }
}

pub(crate) fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn refuse_existing(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(Error::usage(format!(
            "refusing to overwrite existing file {}",
            path.display()
        )));
    }
    Ok(())
}

/// Validates, trains and writes `<out>/<problem>_<optimizer>_s<seed>.csv`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<(PathBuf, RunOutcome)> {
    let oc = cfg.validate()?;
    let path = cfg.out_dir.join(cfg.run_file_name());
    refuse_existing(&path)?;
    let outcome = execute_validated(cfg, oc)?;
    ensure_out_dir(&cfg.out_dir)?;
    write_run_csv(&outcome.record, &path)?;
    log::info!(
        "wrote {} ({} rows, final loss {:.6e})",
        path.display(),
        outcome.record.rows.len(),
        outcome.final_loss
    );
    Ok((path, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use limopt_core::OptimizerKind;

    #[test]
    fn quadratic_run_descends() {
        let cfg = ExperimentConfig {
            optimizer: OptimizerKind::Sgd,
            alpha0: 0.5,
            iters: 100,
            seed: 1,
            ..ExperimentConfig::default()
        };
        let out = execute(&cfg).unwrap();
        assert_eq!(out.record.rows.len(), 100);
        assert!(out.final_loss < out.record.get_f64("initial_loss").unwrap());
        assert_eq!(out.record.rows[0].alpha_k, 0.5);
    }

    #[test]
    fn classification_logging_cadence() {
        let cfg = ExperimentConfig {
            problem: ProblemKind::Logreg,
            iters: 25,
            batch: 2000,
            ..ExperimentConfig::default()
        };
        let out = execute(&cfg).unwrap();
        let iters: Vec<u64> = out.record.rows.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![1, 10, 20, 25]);
        // 10_000 samples / 2000 per batch: epochs end at 5, 10, ..., 25
        for e in 1..=5 {
            assert!(out.record.get_f64(&format!("epoch_{e}_loss")).is_some());
        }
        assert_eq!(
            out.record.get_f64("epoch_5_loss").unwrap(),
            out.record.get_f64("final_loss").unwrap()
        );
    }

    #[test]
    fn tail_mean_uses_last_tenth() {
        let rows: Vec<RunRow> = (1..=20)
            .map(|i| RunRow {
                iter: i,
                loss: i as f64,
                grad_norm: 0.0,
                step_norm: 0.0,
                alpha_k: 0.0,
                gamma_k: 0.0,
            })
            .collect();
        assert_eq!(tail_mean(&rows), 19.5);
        assert_eq!(tail_mean(&rows[..3]), 3.0);
    }
}
