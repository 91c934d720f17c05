use crate::dam::{Item, Layout, Pattern, CLASS_COUNT};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: u8 = 127;

/// +1 where the pixel exceeds `threshold`, -1 elsewhere.
pub fn binarize(image: &[u8], threshold: u8) -> Vec<f64> {
    image
        .iter()
        .map(|&p| if p > threshold { 1.0 } else { -1.0 })
        .collect()
}

pub fn one_hot_bipolar(index: usize, len: usize) -> Vec<f64> {
    (0..len).map(|j| if j == index { 1.0 } else { -1.0 }).collect()
}

/// `[pixels | task one-hot | class block at 0]` with a bipolar one-hot target.
pub fn encode_item(pixels: &[f64], label: usize, task_id: usize, task_count: usize) -> Result<Item> {
    if label >= CLASS_COUNT {
        return Err(Error::InvalidParameter(format!("label {label} >= {CLASS_COUNT}")));
    }
    if task_id >= task_count {
        return Err(Error::InvalidParameter(format!(
            "task id {task_id} >= task count {task_count}"
        )));
    }
    let layout = Layout::classification(pixels.len(), task_count);
    let mut values = Vec::with_capacity(layout.width());
    values.extend_from_slice(pixels);
    values.extend(one_hot_bipolar(task_id, task_count));
    values.extend(std::iter::repeat_n(0.0, CLASS_COUNT));
    let pattern = Pattern::new(layout, values)?;
    Ok(Item::new(pattern, one_hot_bipolar(label, CLASS_COUNT)))
}
