//! One seeded end-to-end experiment over a task sequence.

use std::time::Instant;

use log::info;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::continual::MethodRegistry;
use crate::dam::{train_task_observed, Layout, MemoryBank, TrainLog};
use crate::data::{build_task_sequence, resolve_data_dir, RawImageSet, TaskDataset};
use crate::error::{Error, Result};
use crate::metrics::{average_accuracy, evaluate_task};
use crate::SeededRng;

/// Scores of every task seen so far at an intermediate epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub task: usize,
    pub epoch: usize,
    pub f1: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub train_logs: Vec<TrainLog>,
    /// `r[mu][nu]`: macro-F1 on task `nu` after training task `mu`, for `nu <= mu`.
    pub r: Vec<Vec<f64>>,
    /// Plain accuracy with the same indexing as `r`.
    pub accuracy: Vec<Vec<f64>>,
    pub average_accuracy: Vec<f64>,
    pub curves: Vec<CurvePoint>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn final_average_accuracy(&self) -> f64 {
        self.average_accuracy.last().copied().unwrap_or(f64::NAN)
    }

    /// Last row of `r`.
    pub fn final_scores(&self) -> &[f64] {
        self.r.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Mean of the diagonal: each task scored right after it was trained.
    pub fn mean_just_trained(&self) -> f64 {
        let diag: Vec<f64> = self.r.iter().enumerate().map(|(mu, row)| row[mu]).collect();
        diag.iter().sum::<f64>() / diag.len().max(1) as f64
    }

    pub fn min_final_f1(&self) -> f64 {
        self.final_scores().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn load_source(config: &ExperimentConfig) -> Result<RawImageSet> {
    let dir = resolve_data_dir(&config.data.dir);
    RawImageSet::load(&dir, &config.data.images, &config.data.labels)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let source = load_source(config)?;
    run_experiment_on(config, &source, &MethodRegistry::builtin())
}

pub fn run_experiment_on(
    config: &ExperimentConfig,
    source: &RawImageSet,
    registry: &MethodRegistry,
) -> Result<RunRecord> {
    config.validate()?;
    let tasks = build_task_sequence(source, &config.data.sequence())?;
    run_on_tasks(config, &tasks, registry)
}

/// Runs with a prebuilt task sequence (shared across trials of a sweep).
pub fn run_on_tasks(
    config: &ExperimentConfig,
    tasks: &[TaskDataset],
    registry: &MethodRegistry,
) -> Result<RunRecord> {
    let started = Instant::now();
    let params = &config.network;
    let first = tasks.first().ok_or(Error::Empty("task sequence"))?;
    let layout: Layout = first
        .train
        .first()
        .ok_or(Error::Empty("training split"))?
        .pattern
        .layout();

    let mut rng = SeededRng::seed_from_u64(config.trial_seed);
    let mut bank = MemoryBank::random_normal(params.memory_count, layout, params.init_std, &mut rng)?;
    let mut hooks = registry.create(&config.method, config.trial_seed)?;
    let beta = params.readout_beta(layout.width());
    let every = config.eval.every_epochs;

    let mut record = RunRecord {
        config: config.clone(),
        seed: config.trial_seed,
        train_logs: Vec::with_capacity(tasks.len()),
        r: Vec::with_capacity(tasks.len()),
        accuracy: Vec::with_capacity(tasks.len()),
        average_accuracy: Vec::with_capacity(tasks.len()),
        curves: Vec::new(),
        wall_clock_secs: 0.0,
    };

    for (mu, task) in tasks.iter().enumerate() {
        hooks.on_task_start(task, &bank)?;
        let curves = &mut record.curves;
        let mut observer = |log: &crate::dam::EpochLog, bank: &MemoryBank| -> Result<()> {
            if every > 0 && log.epoch % every == 0 && log.epoch < params.max_epochs {
                let f1 = tasks[..=mu]
                    .iter()
                    .map(|t| Ok(evaluate_task(t.task_id, &t.val, bank, params, beta)?.macro_f1))
                    .collect::<Result<Vec<f64>>>()?;
                curves.push(CurvePoint {
                    task: mu,
                    epoch: log.epoch,
                    average: average_accuracy(&f1)?,
                    f1,
                });
            }
            Ok(())
        };
        let log = train_task_observed(task, &mut bank, params, hooks.as_mut(), &mut rng, &mut observer)?;
        hooks.on_task_end(task, &bank, params)?;

        let scores = tasks[..=mu]
            .iter()
            .map(|t| evaluate_task(t.task_id, &t.val, &bank, params, beta))
            .collect::<Result<Vec<_>>>()?;
        let f1: Vec<f64> = scores.iter().map(|s| s.macro_f1).collect();
        let avg = average_accuracy(&f1)?;
        info!(
            "{} seed {}: task {mu} done, final error {:.4}, F1 {:?}, average {avg:.4}",
            config.method.name,
            config.trial_seed,
            log.epochs.last().map_or(f64::NAN, |e| e.error),
            f1.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        );
        record.accuracy.push(scores.iter().map(|s| s.accuracy).collect());
        record.r.push(f1);
        record.average_accuracy.push(avg);
        record.train_logs.push(log);
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(record)
}
