//! Model training: quasi-Newton outer loop, dev-set model selection, and
//! the per-iteration log.

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{batch_loss, gradient};
use super::batch::TrainingBatch;
use super::lbfgs::{strong_wolfe_search, LbfgsHistory};
use super::loss::LossConfig;
use crate::error::{Error, Result};
use crate::model::DrnnModel;

/// Outer iterations without a dev-loss improvement before training stops.
pub const EARLY_STOP_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Curvature pairs kept by the two-loop recursion.
    pub history_size: usize,
    /// Sequences drawn per outer iteration. Draws covering the whole
    /// dataset keep the same batch (and quasi-Newton history) throughout;
    /// smaller draws resample every iteration and reset the history,
    /// since curvature pairs from different objectives are invalid.
    pub minibatch_sequences: usize,
    pub seed: u64,
    /// Gradient-norm threshold that counts as converged.
    pub convergence_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            history_size: 20,
            minibatch_sequences: usize::MAX,
            seed: 42,
            convergence_tol: 1e-9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_size == 0 {
            return Err(Error::Config("history_size must be positive".into()));
        }
        if self.minibatch_sequences == 0 {
            return Err(Error::Config("minibatch_sequences must be positive".into()));
        }
        if self.convergence_tol <= 0.0 {
            return Err(Error::Config("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub elapsed_ms: f64,
    /// Non-empty when something noteworthy happened (line-search
    /// fallback, convergence, early stop).
    pub event: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameter snapshot with the best dev loss seen.
    pub model: DrnnModel,
    pub log: Vec<IterationRecord>,
    pub best_dev_loss: f64,
    /// Iteration the returned snapshot was taken at (0 = initialization).
    pub best_iteration: usize,
}

/// Writes the training log in CSV form:
/// `iteration,train_loss,dev_loss,grad_norm,step_size,elapsed_ms,event`.
pub fn write_log_csv(log: &[IterationRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "train_loss", "dev_loss", "grad_norm", "step_size", "elapsed_ms", "event"])?;
    for rec in log {
        w.write_record(&[
            rec.iteration.to_string(),
            rec.train_loss.to_string(),
            rec.dev_loss.to_string(),
            rec.grad_norm.to_string(),
            rec.step_size.to_string(),
            format!("{:.3}", rec.elapsed_ms),
            rec.event.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains `model` on `dataset`, evaluating `dev_set` after every outer
/// iteration and returning the snapshot with the lowest dev loss.
///
/// Each outer iteration samples a mini-batch of sequences (seeded,
/// without replacement), takes one quasi-Newton step on the mean loss
/// over that batch under a strong-Wolfe line search, and resets the
/// curvature history whenever the batch changes. A failed line search
/// falls back to a steepest-descent step and records the event.
pub fn train(
    model: DrnnModel,
    dataset: &TrainingBatch,
    loss_cfg: &LossConfig,
    opt: &OptimizerConfig,
    dev_set: &TrainingBatch,
) -> Result<TrainOutcome> {
    loss_cfg.validate()?;
    opt.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }

    let mut current = model;
    let dev_scale = if dev_set.is_empty() { 1.0 } else { dev_set.len() as f64 };
    let eval_dev = |m: &DrnnModel| -> Result<f64> {
        if dev_set.is_empty() {
            Ok(f64::NAN)
        } else {
            Ok(batch_loss(m, dev_set, loss_cfg)? / dev_scale)
        }
    };

    let mut best_dev = eval_dev(&current)?;
    let mut best_params = current.flatten();
    let mut best_iteration = 0usize;
    let mut since_best = 0usize;
    let mut log = Vec::new();

    if opt.max_iterations == 0 {
        return Ok(TrainOutcome { model: current, log, best_dev_loss: best_dev, best_iteration });
    }

    let n = dataset.len();
    let full_batch = opt.minibatch_sequences >= n;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut history = LbfgsHistory::new(opt.history_size);
    let mut prev_indices: Option<Vec<usize>> = None;

    let mut x = current.flatten();
    let mut state: Option<(f64, Array1<f64>)> = None; // (f, g) at x on current batch

    for iteration in 1..=opt.max_iterations {
        let started = Instant::now();
        let mut event = String::new();

        let indices: Vec<usize> = if full_batch {
            (0..n).collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut rng, n, opt.minibatch_sequences).into_vec();
            idx.sort_unstable();
            idx
        };
        let batch_changed = prev_indices.as_ref() != Some(&indices);
        if batch_changed {
            history.clear();
            state = None;
        }
        let batch = TrainingBatch {
            sequences: indices.iter().map(|&i| dataset.sequences[i].clone()).collect(),
        };
        prev_indices = Some(indices);
        let scale = batch.len() as f64;

        let mut probe = current.clone();
        let mut objective = |params: &Array1<f64>| -> Result<(f64, Array1<f64>)> {
            probe.assign_flat(params.view())?;
            let (g, f) = gradient(&probe, &batch, loss_cfg)?;
            let f = f / scale;
            if !f.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss {f} during training")));
            }
            Ok((f, g / scale))
        };

        let (f, g) = match state.take() {
            Some(fg) => fg,
            None => objective(&x)?,
        };
        let grad_norm = g.dot(&g).sqrt();
        if grad_norm <= opt.convergence_tol {
            log.push(IterationRecord {
                iteration,
                train_loss: f,
                dev_loss: eval_dev(&current)?,
                grad_norm,
                step_size: 0.0,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
                event: "converged".into(),
            });
            break;
        }

        let direction = history.direction(&g);
        let init_step = if history.is_empty() { (1.0 / grad_norm).min(1.0) } else { 1.0 };
        let mut search = strong_wolfe_search(&mut objective, &x, f, &g, &direction, init_step);
        let mut used_direction = direction;
        if search.is_err() {
            // Quasi-Newton direction failed; retry along the raw gradient.
            event = "steepest_descent_fallback".into();
            history.clear();
            used_direction = g.mapv(|v| -v);
            search =
                strong_wolfe_search(&mut objective, &x, f, &g, &used_direction, (1.0 / grad_norm).min(1.0));
        }
        let result = match search {
            Ok(r) => r,
            Err(_) => {
                // Last resort: plain backtracking for any decrease.
                let mut alpha = (1.0 / grad_norm).min(1.0);
                let mut found = None;
                for _ in 0..40 {
                    let cand = &x + &(&used_direction * alpha);
                    let (fc, gc) = objective(&cand)?;
                    if fc < f {
                        found = Some(super::lbfgs::LineSearchResult {
                            step: alpha,
                            value: fc,
                            gradient: gc,
                            evals: 0,
                        });
                        break;
                    }
                    alpha *= 0.5;
                }
                match found {
                    Some(r) => {
                        event = "armijo_backtrack_fallback".into();
                        r
                    }
                    None => {
                        log.push(IterationRecord {
                            iteration,
                            train_loss: f,
                            dev_loss: eval_dev(&current)?,
                            grad_norm,
                            step_size: 0.0,
                            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
                            event: "stalled".into(),
                        });
                        break;
                    }
                }
            }
        };

        let x_new = &x + &(&used_direction * result.step);
        history.push(&x_new - &x, &result.gradient - &g);
        x = x_new;
        current.assign_flat(x.view())?;
        let new_grad_norm = result.gradient.dot(&result.gradient).sqrt();
        state = Some((result.value, result.gradient));

        let dev_loss = eval_dev(&current)?;
        if dev_loss.is_nan() || dev_loss < best_dev || best_dev.is_nan() {
            if !dev_loss.is_nan() {
                best_dev = dev_loss;
                best_params = x.clone();
                best_iteration = iteration;
            }
            since_best = 0;
        } else {
            since_best += 1;
        }

        let stop_early = since_best > EARLY_STOP_PATIENCE;
        if stop_early && event.is_empty() {
            event = "early_stop".into();
        }
        log.push(IterationRecord {
            iteration,
            train_loss: result.value,
            dev_loss,
            grad_norm: new_grad_norm,
            step_size: result.step,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            event,
        });
        if stop_early {
            break;
        }
    }

    if !dev_set.is_empty() {
        current.assign_flat(best_params.view())?;
    }
    Ok(TrainOutcome { model: current, log, best_dev_loss: best_dev, best_iteration })
}
