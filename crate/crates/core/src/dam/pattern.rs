use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of class neurons in the MNIST encoding.
pub const CLASS_COUNT: usize = 10;

/// Neuron layout of a state vector: `[pixels | task one-hot | classes]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub pixels: usize,
    pub tasks: usize,
    pub classes: usize,
}

impl Layout {
    pub fn new(pixels: usize, tasks: usize, classes: usize) -> Self {
        Self {
            pixels,
            tasks,
            classes,
        }
    }

    /// Layout for a classification item with `tasks` task-ID neurons and ten classes.
    pub fn classification(pixels: usize, tasks: usize) -> Self {
        Self::new(pixels, tasks, CLASS_COUNT)
    }

    /// A plain bipolar state with no task or class block.
    pub fn autoassociative(width: usize) -> Self {
        Self::new(width, 0, 0)
    }

    pub fn width(&self) -> usize {
        self.pixels + self.tasks + self.classes
    }

    /// Pixel and task-ID neurons; these are clamped during readout and in the bank.
    pub fn clamped_width(&self) -> usize {
        self.pixels + self.tasks
    }

    pub fn pixel_range(&self) -> Range<usize> {
        0..self.pixels
    }

    pub fn task_range(&self) -> Range<usize> {
        self.pixels..self.pixels + self.tasks
    }

    pub fn class_range(&self) -> Range<usize> {
        self.clamped_width()..self.width()
    }
}

/// A network state. Pixel and task entries are bipolar, class entries are real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    layout: Layout,
    values: Vec<f64>,
}

impl Pattern {
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.width() {
            return Err(Error::DimensionMismatch {
                expected: layout.width(),
                actual: values.len(),
            });
        }
        if let Some(j) = values[..layout.clamped_width()]
            .iter()
            .position(|&v| v != 1.0 && v != -1.0)
        {
            return Err(Error::InvalidPattern(format!(
                "entry {j} is {} but pixel and task entries must be +1 or -1",
                values[j]
            )));
        }
        if layout.tasks > 0 {
            let hot = values[layout.task_range()]
                .iter()
                .filter(|&&v| v == 1.0)
                .count();
            if hot != 1 {
                return Err(Error::InvalidPattern(format!(
                    "task block must be one-hot, found {hot} active entries"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pattern entry {v}")));
        }
        Ok(Self { layout, values })
    }

    /// A purely bipolar state with an autoassociative layout.
    pub fn bipolar(values: Vec<f64>) -> Result<Self> {
        Self::new(Layout::autoassociative(values.len()), values)
    }

    /// Skips validation; callers must only change entries in ways that keep the invariants.
    pub(crate) fn from_parts_unchecked(layout: Layout, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), layout.width());
        Self { layout, values }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn class_block(&self) -> &[f64] {
        &self.values[self.layout.class_range()]
    }

    pub fn task_id(&self) -> Option<usize> {
        self.values[self.layout.task_range()]
            .iter()
            .position(|&v| v == 1.0)
    }

    /// Overwrites every class neuron; class entries carry no invariant.
    pub fn set_class_block(&mut self, value: f64) {
        let range = self.layout.class_range();
        self.values[range].iter_mut().for_each(|v| *v = value);
    }
}
