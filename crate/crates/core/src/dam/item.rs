use serde::{Deserialize, Serialize};

use super::network::argmax;
use super::pattern::Pattern;

/// A training or validation item: the encoded state and the target over the loss neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub pattern: Pattern,
    pub target: Vec<f64>,
}

impl Item {
    pub fn new(pattern: Pattern, target: Vec<f64>) -> Self {
        Self { pattern, target }
    }

    /// Class index of a one-hot bipolar target.
    pub fn label(&self) -> usize {
        argmax(&self.target)
    }
}
