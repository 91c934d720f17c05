//! Sequential-learning methods behind one hook interface.
//!
//! Each method implements [`MethodHooks`] and is constructed by name through a
//! [`MethodRegistry`]. Vanilla training is the trait's default behaviour.

mod gem;
mod penalty;
mod rehearsal;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dam::{Item, MemoryBank, NetParams, StepContext};
use crate::data::{splitmix64, TaskDataset};
use crate::error::{Error, Result};
use crate::SeededRng;

pub use gem::{
    agem_project, gem_project, gem_reference_gradients, nnqp_solve, GemMode, GradientEpisodic,
    NnqpSolution, Projection, QP_MAX_ITER, QP_TOL,
};
pub use penalty::{
    ewc_fisher_importance, mas_importance, quadratic_penalty, si_step_accumulate,
    si_task_consolidate, Ewc, L2, Mas, PenaltyTerm, SiState, SynapticIntelligence, EWC_COEFF,
};
pub use rehearsal::{
    build_rehearsal_buffer, generate_pseudoitems, merge_for_epoch, PseudoItem, Pseudorehearsal,
    Rehearsal,
};

pub trait MethodHooks: Send {
    fn name(&self) -> &'static str;

    fn on_task_start(&mut self, _task: &TaskDataset, _bank: &MemoryBank) -> Result<()> {
        Ok(())
    }

    /// Items presented this epoch, shuffled with the trial generator.
    fn epoch_items(&mut self, train: &[Item], rng: &mut SeededRng) -> Vec<Item> {
        merge_for_epoch(train, &[], rng)
    }

    /// Adds penalty gradients into `grad`; returns the penalty value.
    fn augment_loss(&self, _bank: &MemoryBank, _grad: &mut Array2<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn transform_gradient(
        &mut self,
        _grad: &mut Array2<f64>,
        _bank: &MemoryBank,
        _ctx: &StepContext<'_>,
    ) -> Result<()> {
        Ok(())
    }

    /// When true, [`MethodHooks::after_step`] receives every realized update.
    fn tracks_steps(&self) -> bool {
        false
    }

    fn after_step(&mut self, _base_grad: &Array2<f64>, _step: &Array2<f64>) -> Result<()> {
        Ok(())
    }

    fn on_task_end(
        &mut self,
        _task: &TaskDataset,
        _bank: &MemoryBank,
        _params: &NetParams,
    ) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Vanilla;

impl MethodHooks for Vanilla {
    fn name(&self) -> &'static str {
        "vanilla"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MasVariant {
    /// Mean absolute gradient of each class output.
    #[default]
    PerOutput,
    /// Absolute gradient of the squared norm of the output vector.
    SquaredNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiIntegrand {
    /// `-g * dtheta`: positive along descent.
    #[default]
    Descent,
    /// `g * dtheta`, literally.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    /// Buffer size as a fraction of each finished task's train split.
    pub proportion: f64,
    pub lambda: f64,
    pub eps_si: f64,
    /// Items used for importance estimates; 0 means the whole train split.
    pub fisher_sample_cap: usize,
    /// Batches between reference-gradient refreshes.
    pub gradient_stride: usize,
    pub mas_variant: MasVariant,
    pub si_integrand: SiIntegrand,
    pub pseudo_max_sweeps: usize,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            name: "vanilla".into(),
            proportion: 0.0,
            lambda: 0.0,
            eps_si: 1e-3,
            fisher_sample_cap: 0,
            gradient_stride: 1,
            mas_variant: MasVariant::PerOutput,
            si_integrand: SiIntegrand::Descent,
            pseudo_max_sweeps: 100,
            qp_tol: QP_TOL,
            qp_max_iter: QP_MAX_ITER,
        }
    }
}

impl MethodSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(0.0..=1.0).contains(&self.proportion) {
            return bad("proportion must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.eps_si > 0.0 && self.eps_si.is_finite()) {
            return bad("eps_si must be positive");
        }
        if self.gradient_stride == 0 {
            return bad("gradient_stride must be at least 1");
        }
        if self.pseudo_max_sweeps == 0 {
            return bad("pseudo_max_sweeps must be at least 1");
        }
        if !(self.qp_tol > 0.0) || self.qp_max_iter == 0 {
            return bad("qp_tol and qp_max_iter must be positive");
        }
        Ok(())
    }
}

/// Generator for a method's own sampling, kept apart from the trial stream so
/// that buffer sampling never perturbs shuffling.
pub fn method_rng(trial_seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(splitmix64(trial_seed ^ 0x6d65_7468_6f64_7321))
}

pub type MethodFactory = fn(&MethodSpec, u64) -> Result<Box<dyn MethodHooks>>;

#[derive(Clone)]
pub struct MethodRegistry {
    factories: BTreeMap<&'static str, MethodFactory>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("vanilla", |_, _| Ok(Box::new(Vanilla)));
        r.register("rehearsal", |s, seed| {
            Ok(Box::new(Rehearsal::new(s.proportion, method_rng(seed))))
        });
        r.register("pseudorehearsal", |s, seed| {
            Ok(Box::new(Pseudorehearsal::new(
                s.proportion,
                s.pseudo_max_sweeps,
                method_rng(seed),
            )))
        });
        r.register("gem", |s, seed| {
            Ok(Box::new(GradientEpisodic::new(GemMode::PerTask, s, method_rng(seed))))
        });
        r.register("agem", |s, seed| {
            Ok(Box::new(GradientEpisodic::new(GemMode::Averaged, s, method_rng(seed))))
        });
        r.register("l2", |s, _| Ok(Box::new(L2::new(s.lambda))));
        r.register("ewc", |s, _| Ok(Box::new(Ewc::new(s.lambda, s.fisher_sample_cap))));
        r.register("mas", |s, _| {
            Ok(Box::new(Mas::new(s.lambda, s.mas_variant, s.fisher_sample_cap)))
        });
        r.register("si", |s, _| {
            Ok(Box::new(SynapticIntelligence::new(s.lambda, s.eps_si, s.si_integrand)))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: MethodFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn create(&self, spec: &MethodSpec, trial_seed: u64) -> Result<Box<dyn MethodHooks>> {
        spec.validate()?;
        let factory = self.factories.get(spec.name.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "unknown method `{}` (known: {})",
                spec.name,
                self.names().join(", ")
            ))
        })?;
        factory(spec, trial_seed)
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
