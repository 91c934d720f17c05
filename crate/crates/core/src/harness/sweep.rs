//! One-axis hyperparameter sweeps with moving-window aggregation.

use log::info;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Value;

use super::config::{get_path, ExperimentConfig};
use super::run::{load_source, run_on_tasks, RunRecord};
use crate::continual::MethodRegistry;
use crate::data::{build_task_sequence, RawImageSet, TaskDataset};
use crate::error::{Error, Result};
use crate::SeededRng;

pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Axis {
    Grid { path: String, values: Vec<f64> },
    /// `trials` values drawn log-uniformly from `[lo, hi]`.
    LogUniform { path: String, lo: f64, hi: f64, trials: usize },
}

impl Axis {
    pub fn path(&self) -> &str {
        match self {
            Axis::Grid { path, .. } | Axis::LogUniform { path, .. } => path,
        }
    }

    /// The axis values in trial order. `rng` is only consulted in log-uniform mode.
    pub fn values(&self, rng: &mut SeededRng) -> Result<Vec<f64>> {
        match self {
            Axis::Grid { values, .. } => {
                if values.is_empty() {
                    return Err(Error::Config("grid axis has no values".into()));
                }
                Ok(values.clone())
            }
            &Axis::LogUniform { lo, hi, trials, .. } => {
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) || trials == 0 {
                    return Err(Error::Config(format!(
                        "log-uniform axis needs 0 < lo <= hi and trials > 0, got [{lo}, {hi}] x {trials}"
                    )));
                }
                let (a, b) = (lo.ln(), hi.ln());
                Ok((0..trials)
                    .map(|_| (a + (b - a) * rng.random::<f64>()).exp().clamp(lo, hi))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Final average accuracy.
    #[default]
    Average,
    /// Lowest final per-task F1 (the general-hyperparameter objective).
    MinTask,
}

impl Objective {
    pub fn score(self, record: &RunRecord) -> f64 {
        match self {
            Objective::Average => record.final_average_accuracy(),
            Objective::MinTask => record.min_final_f1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Seeds the log-uniform sampler.
    #[serde(default)]
    pub sampler_seed: u64,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub method: String,
    pub n: f64,
    pub path: String,
    pub value: f64,
    pub seed: u64,
    pub average_accuracy: f64,
    pub min_task_f1: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    /// Mean axis value over the window.
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    /// Sample standard deviation (0 for a single trial).
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub trials: Vec<Trial>,
    pub window: Vec<WindowPoint>,
}

impl SweepResult {
    pub fn from_trials(trials: Vec<Trial>, window: usize) -> Result<Self> {
        let window = window_stats(&trials, window)?;
        Ok(Self { trials, window })
    }

    /// Window with the highest mean objective.
    pub fn best_window(&self) -> Option<&WindowPoint> {
        self.window
            .iter()
            .max_by(|a, b| a.mean.total_cmp(&b.mean))
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Sliding windows of `size` consecutive trials after sorting by axis value. Fewer trials
/// than `size` gives one window over all of them.
pub fn window_stats(trials: &[Trial], size: usize) -> Result<Vec<WindowPoint>> {
    if size == 0 {
        return Err(Error::Config("window size must be positive".into()));
    }
    let mut sorted: Vec<&Trial> = trials.iter().collect();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
    if sorted.is_empty() {
        return Ok(Vec::new());
    }
    let size = size.min(sorted.len());
    Ok(sorted
        .windows(size)
        .map(|w| {
            let scores: Vec<f64> = w.iter().map(|t| t.objective).collect();
            let (mean, std) = mean_std(&scores);
            WindowPoint {
                value: w.iter().map(|t| t.value).sum::<f64>() / size as f64,
                lo: w[0].value,
                hi: w[size - 1].value,
                mean,
                std,
                count: size,
            }
        })
        .collect())
}

/// Checks that `path` names an existing numeric field of `base`, and returns it set to `value`.
pub fn apply_axis_value(base: &ExperimentConfig, path: &str, value: f64) -> Result<ExperimentConfig> {
    let table = base.to_table()?;
    let typed = match get_path(&table, path) {
        Some(Value::Float(_)) => Value::Float(value),
        Some(Value::Integer(_)) => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::Config(format!(
                    "`{path}` is an integer field; cannot sweep value {value}"
                )));
            }
            Value::Integer(value as i64)
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "`{path}` is not numeric (found {})",
                other.type_str()
            )))
        }
        None => return Err(Error::Config(format!("unknown sweep axis `{path}`"))),
    };
    if path == "trial_seed" || path.starts_with("data.") {
        return Err(Error::Config(format!(
            "`{path}` cannot be swept; the axis must be a method or network hyperparameter"
        )));
    }
    base.with_overrides(&[(path.to_string(), typed)])
}

/// Runs every (value, seed) pair. Trials share one task sequence and run in parallel.
pub fn sweep_on_tasks(
    base: &ExperimentConfig,
    spec: &SweepSpec,
    tasks: &[TaskDataset],
    registry: &MethodRegistry,
) -> Result<SweepResult> {
    if spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut rng = SeededRng::seed_from_u64(spec.sampler_seed);
    let values = spec.axis.values(&mut rng)?;
    let path = spec.axis.path();
    let mut configs = Vec::with_capacity(values.len() * spec.seeds.len());
    for &value in &values {
        let cfg = apply_axis_value(base, path, value)?;
        for &seed in &spec.seeds {
            configs.push((value, ExperimentConfig { trial_seed: seed, ..cfg.clone() }));
        }
    }
    info!("sweep over `{path}`: {} trials", configs.len());
    let trials = configs
        .par_iter()
        .map(|(value, cfg)| {
            let record = run_on_tasks(cfg, tasks, registry)?;
            Ok(Trial {
                method: cfg.method.name.clone(),
                n: cfg.network.n,
                path: path.to_string(),
                value: *value,
                seed: cfg.trial_seed,
                average_accuracy: record.final_average_accuracy(),
                min_task_f1: record.min_final_f1(),
                objective: spec.objective.score(&record),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepResult::from_trials(trials, spec.window)
}

pub fn sweep_on(
    base: &ExperimentConfig,
    spec: &SweepSpec,
    source: &RawImageSet,
    registry: &MethodRegistry,
) -> Result<SweepResult> {
    base.validate()?;
    let tasks = build_task_sequence(source, &base.data.sequence())?;
    sweep_on_tasks(base, spec, &tasks, registry)
}

pub fn sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<SweepResult> {
    let source = load_source(base)?;
    sweep_on(base, spec, &source, &MethodRegistry::builtin())
}
