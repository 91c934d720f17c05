//! Confusion matrices, macro-F1 and average accuracy.

use serde::{Deserialize, Serialize};

use crate::dam::{argmax, classify_batch, Item, MemoryBank, NetParams, Pattern, CLASS_COUNT};
use crate::error::{Error, Result};

/// `counts[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidParameter("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `2TP / (2TP + FP + FN)`, or 0 for a class that is neither present nor predicted.
    pub fn class_f1(&self, c: usize) -> f64 {
        let tp = self.counts[c][c];
        let fn_: u64 = self.counts[c].iter().sum::<u64>() - tp;
        let fp: u64 = self.counts.iter().map(|row| row[c]).sum::<u64>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    pub fn macro_f1(&self) -> f64 {
        let n = self.classes();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|c| self.class_f1(c)).sum::<f64>() / n as f64
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: u64 = (0..self.classes()).map(|c| self.counts[c][c]).sum();
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: usize,
    pub confusion: ConfusionMatrix,
    pub macro_f1: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 512;

/// Classifies every validation item and scores the predictions.
pub fn evaluate_task(
    task_id: usize,
    val: &[Item],
    bank: &MemoryBank,
    params: &NetParams,
    beta: f64,
) -> Result<TaskScore> {
    if val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let f = params.interaction()?;
    let mut confusion = ConfusionMatrix::new(CLASS_COUNT);
    for chunk in val.chunks(EVAL_CHUNK) {
        let probes: Vec<&Pattern> = chunk.iter().map(|i| &i.pattern).collect();
        let logits = classify_batch(&probes, bank, beta, f)?;
        for (item, row) in chunk.iter().zip(logits.rows()) {
            let pred = argmax(row.as_slice().expect("standard layout"));
            confusion.record(item.label(), pred);
        }
    }
    Ok(TaskScore {
        task_id,
        macro_f1: confusion.macro_f1(),
        accuracy: confusion.accuracy(),
        confusion,
    })
}

pub fn average_accuracy(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("score list"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
