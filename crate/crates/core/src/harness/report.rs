//! Folds run and sweep outputs into summary tables and plot-ready curves.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::results::{read_run_jsonl, read_sweep_trials, SummaryRow};
use super::run::RunRecord;
use super::sweep::{mean_std, window_stats, Trial};
use crate::error::{Error, Result};

/// Mean ± sample std of the final average accuracy for one method setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n: f64,
    pub hyperparameter: Option<f64>,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    /// `mean ± std` to three places.
    pub formatted: String,
}

/// Best window of a hyperparameter sweep for one method and interaction vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSetting {
    pub method: String,
    pub n: f64,
    pub path: String,
    pub value: f64,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

pub fn method_summaries(rows: &[SummaryRow]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<(String, u64, Option<u64>), (f64, Option<f64>, Vec<f64>)> =
        BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method.clone(), r.n.to_bits(), r.hyperparameter.map(f64::to_bits)))
            .or_insert_with(|| (r.n, r.hyperparameter, Vec::new()))
            .2
            .push(r.average_accuracy);
    }
    let mut out: Vec<MethodSummary> = groups
        .into_iter()
        .map(|((method, _, _), (n, hyperparameter, values))| {
            let (mean, std) = mean_std(&values);
            MethodSummary {
                method,
                n,
                hyperparameter,
                trials: values.len(),
                mean,
                std,
                formatted: format_mean_std(mean, std),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.n.total_cmp(&b.n))
            .then(a.hyperparameter.unwrap_or(f64::NAN).total_cmp(&b.hyperparameter.unwrap_or(f64::NAN)))
    });
    out
}

pub fn best_settings(trials: &[Trial], window: usize) -> Result<Vec<BestSetting>> {
    let mut groups: BTreeMap<(String, u64, String), Vec<Trial>> = BTreeMap::new();
    for t in trials {
        groups
            .entry((t.method.clone(), t.n.to_bits(), t.path.clone()))
            .or_default()
            .push(t.clone());
    }
    let mut out = Vec::new();
    for ((method, _, path), group) in groups {
        let windows = window_stats(&group, window)?;
        let Some(best) = windows.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)) else {
            continue;
        };
        out.push(BestSetting {
            method,
            n: group[0].n,
            path,
            value: best.value,
            mean: best.mean,
            std: best.std,
            trials: group.len(),
        });
    }
    out.sort_by(|a, b| a.method.cmp(&b.method).then(a.n.total_cmp(&b.n)));
    Ok(out)
}

/// Rows `global_epoch,task,epoch,average,f1_task1..` from the intermediate curve points
/// plus the end-of-task evaluations.
pub fn curve_rows(record: &RunRecord) -> (Vec<String>, Vec<Vec<String>>) {
    let tasks = record.r.len();
    let epochs = record.config.network.max_epochs;
    let mut header: Vec<String> = ["global_epoch", "task", "epoch", "average"].map(String::from).to_vec();
    header.extend((1..=tasks).map(|t| format!("f1_task{t}")));
    let mut points: Vec<(usize, usize, f64, &[f64])> = record
        .curves
        .iter()
        .map(|c| (c.task, c.epoch, c.average, c.f1.as_slice()))
        .collect();
    for (mu, row) in record.r.iter().enumerate() {
        points.push((mu, epochs, record.average_accuracy[mu], row.as_slice()));
    }
    points.sort_by_key(|p| (p.0, p.1));
    let rows = points
        .into_iter()
        .map(|(task, epoch, average, f1)| {
            let mut row = vec![
                (task * epochs + epoch).to_string(),
                task.to_string(),
                epoch.to_string(),
                average.to_string(),
            ];
            row.extend((0..tasks).map(|i| f1.get(i).map_or(String::new(), f64::to_string)));
            row
        })
        .collect();
    (header, rows)
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let err = |e: csv::Error| Error::Results {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_serialized<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let err = |e: csv::Error| Error::Results {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOutput {
    pub runs: usize,
    pub sweep_trials: usize,
    pub written: Vec<PathBuf>,
    pub methods: Vec<MethodSummary>,
    pub best: Vec<BestSetting>,
}

/// Reads every `*.jsonl` run and `*_trials.csv` sweep in `input` and writes
/// `methods.csv`, `best_settings.csv` and `curves/<run>.csv` under `output`.
pub fn build_report(input: &Path, output: &Path, window: usize) -> Result<ReportOutput> {
    let mut entries: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(input, e)))
        .collect::<Result<_>>()?;
    entries.sort();

    let mut report = ReportOutput::default();
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    let curves_dir = output.join("curves");
    for path in &entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".jsonl") {
            let record = read_run_jsonl(path)?;
            rows.push(SummaryRow::from_record(&record));
            fs::create_dir_all(&curves_dir).map_err(|e| Error::io(&curves_dir, e))?;
            let target = curves_dir.join(name.replace(".jsonl", ".csv"));
            let (header, body) = curve_rows(&record);
            write_rows(&target, &header, &body)?;
            report.written.push(target);
            report.runs += 1;
        } else if name.ends_with("_trials.csv") {
            trials.extend(read_sweep_trials(path)?);
        }
    }
    report.sweep_trials = trials.len();
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    if !rows.is_empty() {
        report.methods = method_summaries(&rows);
        let path = output.join("methods.csv");
        write_serialized(&path, &report.methods)?;
        report.written.push(path);
    }
    if !trials.is_empty() {
        report.best = best_settings(&trials, window)?;
        let path = output.join("best_settings.csv");
        write_serialized(&path, &report.best)?;
        report.written.push(path);
    }
    Ok(report)
}
