//! Persistence: JSON-lines run logs, CSV summaries, sweep tables.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{CurvePoint, RunRecord};
use super::sweep::{SweepResult, Trial, WindowPoint};
use crate::dam::{EpochLog, TrainLog};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Line {
    Epoch {
        task: usize,
        epoch: usize,
        lr: f64,
        temperature: f64,
        error: f64,
        penalty: f64,
    },
    Summary(Box<Summary>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Summary {
    config: ExperimentConfig,
    seed: u64,
    converged: Vec<bool>,
    r: Vec<Vec<f64>>,
    accuracy: Vec<Vec<f64>>,
    average_accuracy: Vec<f64>,
    curves: Vec<CurvePoint>,
    wall_clock_secs: f64,
}

fn results_err(path: &Path, reason: impl ToString) -> Error {
    Error::Results {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_run_jsonl(record: &RunRecord, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut emit = |line: &Line| -> Result<()> {
        serde_json::to_writer(&mut out, line).map_err(|e| results_err(path, e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))
    };
    for (task, log) in record.train_logs.iter().enumerate() {
        for e in &log.epochs {
            emit(&Line::Epoch {
                task,
                epoch: e.epoch,
                lr: e.lr,
                temperature: e.temperature,
                error: e.error,
                penalty: e.penalty,
            })?;
        }
    }
    emit(&Line::Summary(Box::new(Summary {
        config: record.config.clone(),
        seed: record.seed,
        converged: record.train_logs.iter().map(|l| l.converged).collect(),
        r: record.r.clone(),
        accuracy: record.accuracy.clone(),
        average_accuracy: record.average_accuracy.clone(),
        curves: record.curves.clone(),
        wall_clock_secs: record.wall_clock_secs,
    })))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run_jsonl(path: &Path) -> Result<RunRecord> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut epochs: Vec<Vec<EpochLog>> = Vec::new();
    let mut summary = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| results_err(path, format!("line {}: {e}", i + 1)))?;
        match parsed {
            Line::Epoch { task, epoch, lr, temperature, error, penalty } => {
                if epochs.len() <= task {
                    epochs.resize_with(task + 1, Vec::new);
                }
                epochs[task].push(EpochLog { epoch, lr, temperature, error, penalty });
            }
            Line::Summary(s) => summary = Some(*s),
        }
    }
    let s = summary.ok_or_else(|| results_err(path, "no summary line"))?;
    if s.converged.len() < epochs.len() {
        return Err(results_err(path, "epoch events for more tasks than the summary lists"));
    }
    epochs.resize_with(s.converged.len(), Vec::new);
    Ok(RunRecord {
        config: s.config,
        seed: s.seed,
        train_logs: epochs
            .into_iter()
            .zip(s.converged)
            .map(|(epochs, converged)| TrainLog { epochs, converged })
            .collect(),
        r: s.r,
        accuracy: s.accuracy,
        average_accuracy: s.average_accuracy,
        curves: s.curves,
        wall_clock_secs: s.wall_clock_secs,
    })
}

/// One row of the run summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub n: f64,
    /// The method's own knob: proportion for buffer methods, lambda for penalties.
    pub hyperparameter: Option<f64>,
    pub seed: u64,
    pub final_f1: Vec<f64>,
    pub average_accuracy: f64,
}

pub fn method_hyperparameter(config: &ExperimentConfig) -> Option<f64> {
    match config.method.name.as_str() {
        "rehearsal" | "pseudorehearsal" | "gem" | "agem" => Some(config.method.proportion),
        "l2" | "ewc" | "mas" | "si" => Some(config.method.lambda),
        _ => None,
    }
}

impl SummaryRow {
    pub fn from_record(record: &RunRecord) -> Self {
        Self {
            method: record.config.method.name.clone(),
            n: record.config.network.n,
            hyperparameter: method_hyperparameter(&record.config),
            seed: record.seed,
            final_f1: record.final_scores().to_vec(),
            average_accuracy: record.final_average_accuracy(),
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| results_err(path, e)
}

/// Writes rows sharing one task count; columns `method,n,hyperparameter,seed,f1_task1..,average_accuracy`.
pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let tasks = rows.first().map_or(0, |r| r.final_f1.len());
    if rows.iter().any(|r| r.final_f1.len() != tasks) {
        return Err(results_err(path, "summary rows disagree on the task count"));
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = ["method", "n", "hyperparameter", "seed"].map(String::from).to_vec();
    header.extend((1..=tasks).map(|t| format!("f1_task{t}")));
    header.push("average_accuracy".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut rec = vec![
            r.method.clone(),
            r.n.to_string(),
            r.hyperparameter.map_or(String::new(), |h| h.to_string()),
            r.seed.to_string(),
        ];
        rec.extend(r.final_f1.iter().map(f64::to_string));
        rec.push(r.average_accuracy.to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let width = rdr.headers().map_err(csv_err(path))?.len();
    if width < 5 {
        return Err(results_err(path, "summary header too short"));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|e| results_err(path, format!("`{s}`: {e}")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let hyper = &rec[2];
        rows.push(SummaryRow {
            method: rec[0].to_string(),
            n: num(&rec[1])?,
            hyperparameter: if hyper.is_empty() { None } else { Some(num(hyper)?) },
            seed: rec[3].parse().map_err(|e| results_err(path, format!("seed: {e}")))?,
            final_f1: (4..width - 1).map(|i| num(&rec[i])).collect::<Result<_>>()?,
            average_accuracy: num(&rec[width - 1])?,
        });
    }
    Ok(rows)
}

fn write_serde_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_serde_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    csv::Reader::from_path(path)
        .map_err(csv_err(path))?
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

/// `{stem}_trials.csv` and `{stem}_window.csv` next to each other.
pub fn sweep_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}_trials.csv")),
        dir.join(format!("{stem}_window.csv")),
    )
}

pub fn write_sweep(result: &SweepResult, dir: &Path, stem: &str) -> Result<()> {
    let (trials, window) = sweep_paths(dir, stem);
    write_serde_csv(&result.trials, &trials)?;
    write_serde_csv(&result.window, &window)
}

pub fn read_sweep_trials(path: &Path) -> Result<Vec<Trial>> {
    read_serde_csv(path)
}

pub fn read_sweep(dir: &Path, stem: &str) -> Result<SweepResult> {
    let (trials, window) = sweep_paths(dir, stem);
    Ok(SweepResult {
        trials: read_serde_csv(&trials)?,
        window: read_serde_csv::<WindowPoint>(&window)?,
    })
}

/// Writes `{name}.jsonl` and `{name}.csv` for one run into the config's output directory.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let name = record.config.run_name();
    let jsonl = dir.join(format!("{name}.jsonl"));
    let csv = dir.join(format!("{name}.csv"));
    write_run_jsonl(record, &jsonl)?;
    write_summary_csv(&[SummaryRow::from_record(record)], &csv)?;
    Ok((jsonl, csv))
}
