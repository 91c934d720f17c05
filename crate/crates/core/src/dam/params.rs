use serde::{Deserialize, Serialize};

use super::interaction::Interaction;
use crate::error::{Error, Result};

/// How the memory/state overlap is scaled before entering the interaction function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// `f(beta * zeta . xi)`.
    Raw,
    /// `f(beta * zeta . xi / N)`: the overlap is divided by the neuron count, which keeps
    /// the argument inside `[-beta, beta]` for clamped memories.
    PerNeuron,
}

/// Which neurons contribute to the training error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNeurons {
    /// The ten class neurons only (classification tasks).
    Classes,
    /// Every neuron (plain autoassociative recall).
    All,
}

/// How the momentum buffer becomes a memory step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `zeta -= lr * M`.
    Plain,
    /// Each memory's row of `M` is divided by its largest absolute entry, so `lr` is the
    /// largest per-entry step (Krotov and Hopfield's MNIST recipe).
    MaxNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetParams {
    /// Interaction vertex.
    pub n: f64,
    pub eps_leak: f64,
    pub t_init: f64,
    pub t_final: f64,
    pub lr_init: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    /// Error exponent `m`; the per-neuron error is raised to `2m`.
    pub error_exp: u32,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub memory_count: usize,
    pub init_std: f64,
    pub similarity: Similarity,
    pub loss_neurons: LossNeurons,
    pub update_rule: UpdateRule,
}

impl Default for NetParams {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetParams {
    /// Full-scale settings: 512 memories, 500 epochs.
    pub fn full() -> Self {
        Self {
            n: 2.0,
            eps_leak: 1e-2,
            t_init: 0.95,
            t_final: 0.95,
            lr_init: 8e-2,
            lr_decay: 0.999,
            momentum: 0.6,
            error_exp: 1,
            max_epochs: 500,
            batch_size: 100,
            memory_count: 512,
            init_std: 0.1,
            similarity: Similarity::PerNeuron,
            loss_neurons: LossNeurons::Classes,
            update_rule: UpdateRule::MaxNormalized,
        }
    }

    /// Full scale with a slightly colder temperature and larger step.
    pub fn grid_optimum() -> Self {
        Self {
            t_init: 0.875,
            t_final: 0.875,
            lr_init: 1e-1,
            ..Self::full()
        }
    }

    /// Workstation-sized preset: 128 memories, 100 epochs. With a fifth of the epochs the
    /// full-scale temperature and learning rate leave the first task barely learned, so the
    /// network runs colder with a larger, faster-decaying step.
    pub fn desk() -> Self {
        Self {
            memory_count: 128,
            max_epochs: 100,
            t_init: 0.5,
            t_final: 0.5,
            lr_init: 0.2,
            lr_decay: 0.99,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "grid-optimum" => Ok(Self::grid_optimum()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!(
                "unknown network preset `{other}` (expected full, grid-optimum or desk)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        Interaction::new(self.n, self.eps_leak)?;
        if !(self.t_init > 0.0 && self.t_final > 0.0) {
            return bad(format!(
                "temperatures must be > 0, got {} and {}",
                self.t_init, self.t_final
            ));
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return bad(format!("lr_init must be > 0, got {}", self.lr_init));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.error_exp == 0 {
            return bad("error_exp must be a positive integer".into());
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.memory_count == 0 {
            return bad("max_epochs, batch_size and memory_count must be positive".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be > 0, got {}", self.init_std));
        }
        Ok(())
    }

    pub fn interaction(&self) -> Result<Interaction> {
        Interaction::new(self.n, self.eps_leak)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr_init * self.lr_decay.powi(epoch as i32)
    }

    pub fn temperature(&self, epoch: usize) -> f64 {
        self.t_init + (self.t_final - self.t_init) * epoch as f64 / self.max_epochs as f64
    }

    /// Scale applied inside the interaction function for a state of `width` neurons.
    pub fn beta_for_temperature(&self, temperature: f64, width: usize) -> f64 {
        match self.similarity {
            Similarity::Raw => 1.0 / temperature,
            Similarity::PerNeuron => 1.0 / (temperature * width as f64),
        }
    }

    pub fn beta(&self, epoch: usize, width: usize) -> f64 {
        self.beta_for_temperature(self.temperature(epoch), width)
    }

    /// Beta used after training (final temperature).
    pub fn readout_beta(&self, width: usize) -> f64 {
        self.beta_for_temperature(self.t_final, width)
    }
}
