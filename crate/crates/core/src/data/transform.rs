use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Permute,
    Rotate,
}

/// Per-task pixel transform, applied to the byte image before thresholding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskTransform {
    Identity,
    /// `out[j] = in[permutation[j]]`.
    Permute { permutation: Vec<usize> },
    /// Nearest-neighbour rotation about the image centre.
    Rotate { degrees: f64 },
}

pub fn make_task_transform<R: Rng + ?Sized>(
    kind: TransformKind,
    pixel_count: usize,
    degrees: f64,
    rng: &mut R,
) -> TaskTransform {
    match kind {
        TransformKind::Identity => TaskTransform::Identity,
        TransformKind::Permute => {
            let mut permutation: Vec<usize> = (0..pixel_count).collect();
            permutation.shuffle(rng);
            TaskTransform::Permute { permutation }
        }
        TransformKind::Rotate => TaskTransform::Rotate { degrees },
    }
}

pub fn permute<T: Copy>(values: &[T], permutation: &[usize]) -> Vec<T> {
    permutation.iter().map(|&j| values[j]).collect()
}

pub fn invert_permutation(permutation: &[usize]) -> Vec<usize> {
    let mut inverse = vec![0; permutation.len()];
    for (j, &p) in permutation.iter().enumerate() {
        inverse[p] = j;
    }
    inverse
}

pub fn is_bijection(permutation: &[usize]) -> bool {
    let mut seen = vec![false; permutation.len()];
    permutation.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

pub fn rotate_nearest(image: &[u8], rows: usize, cols: usize, degrees: f64) -> Vec<u8> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let mut out = vec![0u8; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            // Inverse map: rotate the output coordinate back by -theta.
            let sy = (cos * dy - sin * dx + cy).round();
            let sx = (sin * dy + cos * dx + cx).round();
            if sy >= 0.0 && sx >= 0.0 && (sy as usize) < rows && (sx as usize) < cols {
                out[r * cols + c] = image[sy as usize * cols + sx as usize];
            }
        }
    }
    out
}

impl TaskTransform {
    pub fn apply(&self, image: &[u8], rows: usize, cols: usize) -> Result<Vec<u8>> {
        if image.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: image.len(),
            });
        }
        Ok(match self {
            TaskTransform::Identity => image.to_vec(),
            TaskTransform::Permute { permutation } => {
                if permutation.len() != image.len() {
                    return Err(Error::DimensionMismatch {
                        expected: image.len(),
                        actual: permutation.len(),
                    });
                }
                permute(image, permutation)
            }
            TaskTransform::Rotate { degrees } => rotate_nearest(image, rows, cols, *degrees),
        })
    }
}
