//! Naive rehearsal and homogeneous pseudorehearsal.

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::MethodHooks;
use crate::dam::{argmax, classify, relax, Item, MemoryBank, NetParams, Pattern};
use crate::data::{one_hot_bipolar, TaskDataset};
use crate::error::{Error, Result};
use crate::SeededRng;

pub(crate) fn buffer_size(proportion: f64, len: usize) -> usize {
    // Tolerate representation error such as 0.07 * 100 = 7.000000000000001.
    ((proportion * len as f64) + 1e-9).floor() as usize
}

fn check_proportion(proportion: f64) -> Result<()> {
    if (0.0..=1.0).contains(&proportion) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "proportion {proportion} outside [0, 1]"
        )))
    }
}

/// `floor(proportion * |train|)` train items sampled without replacement.
pub fn build_rehearsal_buffer<R: Rng + ?Sized>(
    train: &[Item],
    proportion: f64,
    rng: &mut R,
) -> Result<Vec<Item>> {
    check_proportion(proportion)?;
    let count = buffer_size(proportion, train.len()).min(train.len());
    if count == 0 {
        return Ok(Vec::new());
    }
    Ok(index::sample(rng, train.len(), count)
        .into_iter()
        .map(|i| train[i].clone())
        .collect())
}

/// Current items followed by every buffered item, shuffled.
pub fn merge_for_epoch<R: Rng + ?Sized>(task_items: &[Item], buffer: &[Item], rng: &mut R) -> Vec<Item> {
    let mut items = Vec::with_capacity(task_items.len() + buffer.len());
    items.extend_from_slice(task_items);
    items.extend_from_slice(buffer);
    items.shuffle(rng);
    items
}

#[derive(Debug, Clone)]
pub struct Rehearsal {
    proportion: f64,
    buffer: Vec<Item>,
    rng: SeededRng,
}

impl Rehearsal {
    pub fn new(proportion: f64, rng: SeededRng) -> Self {
        Self {
            proportion,
            buffer: Vec::new(),
            rng,
        }
    }

    pub fn buffer(&self) -> &[Item] {
        &self.buffer
    }
}

impl MethodHooks for Rehearsal {
    fn name(&self) -> &'static str {
        "rehearsal"
    }

    fn epoch_items(&mut self, train: &[Item], rng: &mut SeededRng) -> Vec<Item> {
        merge_for_epoch(train, &self.buffer, rng)
    }

    fn on_task_end(&mut self, task: &TaskDataset, _bank: &MemoryBank, _params: &NetParams) -> Result<()> {
        let fresh = build_rehearsal_buffer(&task.train, self.proportion, &mut self.rng)?;
        self.buffer.extend(fresh);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoItem {
    pub item: Item,
    pub converged: bool,
}

/// Random bipolar probes relaxed over the pixel neurons, labelled by the network's own readout.
pub fn generate_pseudoitems<R: Rng + ?Sized>(
    bank: &MemoryBank,
    params: &NetParams,
    count: usize,
    task_id: usize,
    max_sweeps: usize,
    rng: &mut R,
) -> Result<Vec<PseudoItem>> {
    let layout = bank.layout();
    if task_id >= layout.tasks {
        return Err(Error::InvalidParameter(format!(
            "task id {task_id} >= task count {}",
            layout.tasks
        )));
    }
    let mask: Vec<usize> = layout.pixel_range().collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut values: Vec<f64> = (0..layout.pixels)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        values.extend(one_hot_bipolar(task_id, layout.tasks));
        values.extend(std::iter::repeat_n(0.0, layout.classes));
        let probe = Pattern::new(layout, values)?;
        let relaxed = relax(&probe, bank, params, &mask, max_sweeps)?;
        let label = argmax(&classify(&relaxed.pattern, bank, params)?);
        out.push(PseudoItem {
            item: Item::new(relaxed.pattern, one_hot_bipolar(label, layout.classes)),
            converged: relaxed.converged,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Pseudorehearsal {
    proportion: f64,
    max_sweeps: usize,
    buffer: Vec<Item>,
    unconverged: usize,
    rng: SeededRng,
}

impl Pseudorehearsal {
    pub fn new(proportion: f64, max_sweeps: usize, rng: SeededRng) -> Self {
        Self {
            proportion,
            max_sweeps,
            buffer: Vec::new(),
            unconverged: 0,
            rng,
        }
    }

    pub fn buffer(&self) -> &[Item] {
        &self.buffer
    }

    /// Pseudoitems kept although relaxation hit the sweep budget.
    pub fn unconverged(&self) -> usize {
        self.unconverged
    }
}

impl MethodHooks for Pseudorehearsal {
    fn name(&self) -> &'static str {
        "pseudorehearsal"
    }

    fn epoch_items(&mut self, train: &[Item], rng: &mut SeededRng) -> Vec<Item> {
        merge_for_epoch(train, &self.buffer, rng)
    }

    fn on_task_end(&mut self, task: &TaskDataset, bank: &MemoryBank, params: &NetParams) -> Result<()> {
        check_proportion(self.proportion)?;
        let count = buffer_size(self.proportion, task.train.len());
        let items = generate_pseudoitems(bank, params, count, task.task_id, self.max_sweeps, &mut self.rng)?;
        let missed = items.iter().filter(|p| !p.converged).count();
        if missed > 0 {
            warn!(
                "task {}: {missed} of {count} pseudoitems did not settle within {} sweeps",
                task.task_id, self.max_sweeps
            );
        }
        self.unconverged += missed;
        self.buffer.extend(items.into_iter().map(|p| p.item));
        Ok(())
    }
}
