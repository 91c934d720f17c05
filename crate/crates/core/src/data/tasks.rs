//! Permuted / rotated task sequences.

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::encode::{binarize, encode_item, DEFAULT_THRESHOLD};
use super::source::RawImageSet;
use super::transform::{make_task_transform, TaskTransform, TransformKind};
use crate::dam::{Item, CLASS_COUNT};
use crate::error::{Error, Result};
use crate::SeededRng;

/// Below this many items a task may legitimately miss a class.
pub const BALANCE_GUARD_ITEMS: usize = 1000;
const MAX_BALANCE_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: usize,
    pub transform: TaskTransform,
    pub train: Vec<Item>,
    pub val: Vec<Item>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSpec {
    pub kind: TransformKind,
    pub tasks: usize,
    pub items_per_task: usize,
    pub threshold: u8,
    pub master_seed: u64,
    /// Task `t` of a rotated sequence is rotated by `t * rotation_step` degrees.
    pub rotation_step: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            kind: TransformKind::Permute,
            tasks: 5,
            items_per_task: 2000,
            threshold: DEFAULT_THRESHOLD,
            master_seed: 0,
            rotation_step: 15.0,
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for task `index`; independent of the sequence length.
pub fn task_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(index as u64))
}

fn attempt_seed(base: u64, attempt: u64) -> u64 {
    if attempt == 0 {
        base
    } else {
        splitmix64(base.wrapping_add(attempt))
    }
}

pub fn build_task_sequence(source: &RawImageSet, spec: &SequenceSpec) -> Result<Vec<TaskDataset>> {
    if spec.tasks == 0 {
        return Err(Error::InvalidParameter("task count must be positive".into()));
    }
    if spec.items_per_task < 2 {
        return Err(Error::InvalidParameter("items_per_task must be at least 2".into()));
    }
    if spec.items_per_task > source.len() {
        return Err(Error::Dataset(format!(
            "{} items per task requested but the source holds {}",
            spec.items_per_task,
            source.len()
        )));
    }
    (0..spec.tasks)
        .map(|t| build_task(source, spec, t))
        .collect()
}

fn build_task(source: &RawImageSet, spec: &SequenceSpec, task_id: usize) -> Result<TaskDataset> {
    let base = task_seed(spec.master_seed, task_id);
    for attempt in 0..MAX_BALANCE_ATTEMPTS {
        let seed = attempt_seed(base, attempt);
        let task = build_task_with_seed(source, spec, task_id, seed)?;
        if spec.items_per_task < BALANCE_GUARD_ITEMS || covers_all_classes(&task.train) {
            return Ok(task);
        }
        warn!("task {task_id}: train split misses a class under seed {seed}; resampling");
    }
    Err(Error::Dataset(format!(
        "task {task_id}: no class-balanced sample after {MAX_BALANCE_ATTEMPTS} attempts"
    )))
}

fn covers_all_classes(items: &[Item]) -> bool {
    let mut seen = [false; CLASS_COUNT];
    for item in items {
        seen[item.label()] = true;
    }
    seen.iter().all(|&s| s)
}

fn build_task_with_seed(
    source: &RawImageSet,
    spec: &SequenceSpec,
    task_id: usize,
    seed: u64,
) -> Result<TaskDataset> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let angle = task_id as f64 * spec.rotation_step;
    let transform = make_task_transform(spec.kind, source.pixel_count(), angle, &mut rng);

    let mut picks = index::sample(&mut rng, source.len(), spec.items_per_task).into_vec();
    picks.shuffle(&mut rng);

    let mut items = picks
        .iter()
        .map(|&i| {
            let image = transform.apply(source.image(i), source.rows(), source.cols())?;
            encode_item(
                &binarize(&image, spec.threshold),
                source.label(i),
                task_id,
                spec.tasks,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let val_len = spec.items_per_task / 5;
    let train = items.split_off(val_len);
    Ok(TaskDataset {
        task_id,
        transform,
        train,
        val: items,
        seed,
    })
}
