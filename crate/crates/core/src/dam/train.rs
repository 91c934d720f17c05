//! Minibatch gradient descent with momentum over one task.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::bank::MemoryBank;
use super::gradient::batch_loss_and_grad;
use super::params::{NetParams, UpdateRule};
use crate::continual::MethodHooks;
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub temperature: f64,
    /// Summed base error over every item presented this epoch.
    pub error: f64,
    /// Summed method penalty over the epoch's batches (0 for penalty-free methods).
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Final epoch error is below the first epoch's.
    pub converged: bool,
}

/// What a method sees when it is asked to transform a gradient.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub params: &'a NetParams,
    pub beta: f64,
    pub task: usize,
    pub epoch: usize,
    pub batch: usize,
}

pub fn train_task(
    task: &TaskDataset,
    bank: &mut MemoryBank,
    params: &NetParams,
    hooks: &mut dyn MethodHooks,
    rng: &mut SeededRng,
) -> Result<TrainLog> {
    train_task_observed(task, bank, params, hooks, rng, &mut |_, _| Ok(()))
}

/// As [`train_task`], calling `observer` after every epoch.
pub fn train_task_observed(
    task: &TaskDataset,
    bank: &mut MemoryBank,
    params: &NetParams,
    hooks: &mut dyn MethodHooks,
    rng: &mut SeededRng,
    observer: &mut dyn FnMut(&EpochLog, &MemoryBank) -> Result<()>,
) -> Result<TrainLog> {
    params.validate()?;
    if task.train.is_empty() {
        return Err(Error::Empty("task training split"));
    }
    let width = bank.width();
    let mut momentum = Array2::<f64>::zeros(bank.memories().raw_dim());
    let mut epochs = Vec::with_capacity(params.max_epochs);

    for epoch in 1..=params.max_epochs {
        let lr = params.learning_rate(epoch);
        let temperature = params.temperature(epoch);
        let beta = params.beta_for_temperature(temperature, width);
        let items = hooks.epoch_items(&task.train, rng);
        let mut error = 0.0;
        let mut penalty = 0.0;

        for (batch, chunk) in items.chunks(params.batch_size).enumerate() {
            let wrap = |source: Error| Error::Training {
                task: task.task_id,
                epoch,
                batch,
                source: Box::new(source),
            };
            let out = batch_loss_and_grad(chunk, bank, params, beta).map_err(wrap)?;
            error += out.loss;
            let mut grad = out.grad;
            let base = hooks.tracks_steps().then(|| grad.clone());

            penalty += hooks.augment_loss(bank, &mut grad).map_err(wrap)?;
            let ctx = StepContext {
                params,
                beta,
                task: task.task_id,
                epoch,
                batch,
            };
            hooks.transform_gradient(&mut grad, bank, &ctx).map_err(wrap)?;

            Zip::from(&mut momentum)
                .and(&grad)
                .for_each(|m, &g| *m = params.momentum * *m + g);
            let before = base.as_ref().map(|_| bank.memories().clone());
            match params.update_rule {
                UpdateRule::Plain => Zip::from(bank.memories_mut())
                    .and(&momentum)
                    .for_each(|z, &m| *z -= lr * m),
                UpdateRule::MaxNormalized => {
                    for (mut z, m) in bank.memories_mut().rows_mut().into_iter().zip(momentum.rows()) {
                        let peak = m.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                        if peak > 0.0 {
                            let scale = lr / peak;
                            z.zip_mut_with(&m, |z, &m| *z -= scale * m);
                        }
                    }
                }
            }
            bank.clamp();
            if !bank.all_finite() {
                return Err(wrap(Error::NonFinite("memory bank after update".into())));
            }
            if let (Some(base), Some(before)) = (base, before) {
                let step = bank.memories() - &before;
                hooks.after_step(&base, &step).map_err(wrap)?;
            }
        }

        let log = EpochLog {
            epoch,
            lr,
            temperature,
            error,
            penalty,
        };
        observer(&log, bank)?;
        epochs.push(log);
    }

    let converged = match (epochs.first(), epochs.last()) {
        (Some(first), Some(last)) => last.error < first.error,
        _ => false,
    };
    Ok(TrainLog { epochs, converged })
}
