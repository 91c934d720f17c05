use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::pattern::Layout;
use crate::error::{Error, Result};

/// The trainable memory vectors, one row per memory.
///
/// The leading `clamped` columns (pixels and task IDs) are kept inside `[-1, 1]`
/// after every update; the class columns are left free.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    memories: Array2<f64>,
    layout: Layout,
}

impl MemoryBank {
    pub fn new(memories: Array2<f64>, layout: Layout) -> Result<Self> {
        if memories.ncols() != layout.width() {
            return Err(Error::DimensionMismatch {
                expected: layout.width(),
                actual: memories.ncols(),
            });
        }
        if memories.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("memory bank entry".into()));
        }
        Ok(Self { memories, layout })
    }

    pub fn zeros(count: usize, layout: Layout) -> Self {
        Self {
            memories: Array2::zeros((count, layout.width())),
            layout,
        }
    }

    /// Entries drawn from `Normal(0, std)`.
    pub fn random_normal<R: Rng + ?Sized>(
        count: usize,
        layout: Layout,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidParameter(format!("initial std {std}: {e}")))?;
        let memories = Array2::from_shape_simple_fn((count, layout.width()), || normal.sample(rng));
        Ok(Self { memories, layout })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn count(&self) -> usize {
        self.memories.nrows()
    }

    pub fn width(&self) -> usize {
        self.memories.ncols()
    }

    pub fn memories(&self) -> &Array2<f64> {
        &self.memories
    }

    pub fn memories_mut(&mut self) -> &mut Array2<f64> {
        &mut self.memories
    }

    pub fn into_memories(self) -> Array2<f64> {
        self.memories
    }

    pub fn clamp(&mut self) {
        let clamped = self.layout.clamped_width();
        self.memories
            .slice_mut(s![.., ..clamped])
            .mapv_inplace(|v| v.clamp(-1.0, 1.0));
    }

    pub fn max_abs_clamped(&self) -> f64 {
        let clamped = self.layout.clamped_width();
        self.memories
            .slice(s![.., ..clamped])
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row-major flattening; the canonical order for all gradient inner products.
    pub fn flat(&self) -> &[f64] {
        self.memories
            .as_slice()
            .expect("memory bank is always standard layout")
    }

    pub fn all_finite(&self) -> bool {
        self.memories.iter().all(|v| v.is_finite())
    }
}
