//! Quadratic-penalty methods: L2, EWC, MAS and SI.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Zip};

use super::{MasVariant, MethodHooks, SiIntegrand};
use crate::dam::{batch_loss_and_grad, stack_states, FieldKernel, Item, MemoryBank, NetParams};
use crate::data::TaskDataset;
use crate::error::{Error, Result};

/// EWC's conventional factor on lambda.
pub const EWC_COEFF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerm {
    pub anchor: Array2<f64>,
    pub importance: Array2<f64>,
}

fn check_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Adds `coeff * lambda * sum 2 w (theta - anchor)` into `grad`; returns the penalty.
fn add_penalty(
    theta: &Array2<f64>,
    terms: &[PenaltyTerm],
    lambda: f64,
    coeff: f64,
    grad: &mut Array2<f64>,
) -> Result<f64> {
    check_shape(theta, grad)?;
    if lambda == 0.0 || terms.is_empty() {
        return Ok(0.0);
    }
    let scale = coeff * lambda;
    let mut penalty = 0.0;
    for term in terms {
        check_shape(theta, &term.anchor)?;
        check_shape(theta, &term.importance)?;
        Zip::from(&mut *grad)
            .and(theta)
            .and(&term.anchor)
            .and(&term.importance)
            .for_each(|g, &t, &a, &w| {
                let d = t - a;
                penalty += w * d * d;
                *g += scale * 2.0 * w * d;
            });
    }
    Ok(scale * penalty)
}

/// `coeff * lambda * sum_terms sum_k w_k (anchor_k - theta_k)^2` and its gradient.
pub fn quadratic_penalty(
    theta: &Array2<f64>,
    terms: &[PenaltyTerm],
    lambda: f64,
    coeff: f64,
) -> Result<(f64, Array2<f64>)> {
    let mut grad = Array2::zeros(theta.raw_dim());
    let penalty = add_penalty(theta, terms, lambda, coeff, &mut grad)?;
    Ok((penalty, grad))
}

/// Mean over items of the squared per-item loss gradient.
pub fn ewc_fisher_importance(
    sample: &[Item],
    bank: &MemoryBank,
    params: &NetParams,
    beta: f64,
) -> Result<Array2<f64>> {
    if sample.is_empty() {
        return Err(Error::Empty("importance sample"));
    }
    let mut omega = Array2::<f64>::zeros(bank.memories().raw_dim());
    for item in sample {
        let g = batch_loss_and_grad(std::slice::from_ref(item), bank, params, beta)?.grad;
        Zip::from(&mut omega).and(&g).for_each(|w, &g| *w += g * g);
    }
    omega /= sample.len() as f64;
    Ok(omega)
}

/// Output sensitivity of the class readout, averaged over items.
pub fn mas_importance(
    sample: &[Item],
    bank: &MemoryBank,
    params: &NetParams,
    beta: f64,
    variant: MasVariant,
) -> Result<Array2<f64>> {
    if sample.is_empty() {
        return Err(Error::Empty("importance sample"));
    }
    let width = bank.width();
    let count = bank.count();
    for item in sample {
        if item.pattern.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: item.pattern.len(),
            });
        }
    }
    let classes = bank.layout().class_range();
    let kernel = FieldKernel::new(bank, beta, params.interaction()?);
    let states = stack_states(sample.iter().map(|i| i.pattern.values()), width);
    let overlaps = states.dot(&bank.memories().t());
    let mut omega = Array2::<f64>::zeros((count, width));
    let mut off = vec![0.0; count];
    let mut on = vec![0.0; count];

    match variant {
        MasVariant::PerOutput => {
            // |dF_i/dzeta_kj| = |off_i[k]| |x_j| for j != i and |on_i[k]| at j == i.
            let mut acoef = Array2::<f64>::zeros((sample.len(), count));
            for (b, item) in sample.iter().enumerate() {
                let x = item.pattern.values();
                let d = overlaps.row(b);
                let d = d.as_slice().expect("standard layout");
                for i in classes.clone() {
                    kernel.field_with_sensitivity(x, d, i, &mut off, &mut on);
                    let xi = x[i].abs();
                    for k in 0..count {
                        acoef[[b, k]] += off[k].abs();
                        omega[[k, i]] += on[k].abs() - off[k].abs() * xi;
                    }
                }
            }
            let abs_states = states.mapv(f64::abs);
            general_mat_mul(1.0, &acoef.t(), &abs_states, 1.0, &mut omega);
            omega /= (sample.len() * classes.len()) as f64;
        }
        MasVariant::SquaredNorm => {
            let mut per_item = Array2::<f64>::zeros((count, width));
            let mut s = vec![0.0; count];
            for (b, item) in sample.iter().enumerate() {
                let x = item.pattern.values();
                let d = overlaps.row(b);
                let d = d.as_slice().expect("standard layout");
                s.iter_mut().for_each(|v| *v = 0.0);
                per_item.fill(0.0);
                for i in classes.clone() {
                    let h = kernel.field_with_sensitivity(x, d, i, &mut off, &mut on);
                    for k in 0..count {
                        s[k] += 2.0 * h * off[k];
                        per_item[[k, i]] += 2.0 * h * (on[k] - off[k] * x[i]);
                    }
                }
                for k in 0..count {
                    for j in 0..width {
                        omega[[k, j]] += (per_item[[k, j]] + s[k] * x[j]).abs();
                    }
                }
            }
            omega /= sample.len() as f64;
        }
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MAS importance".into()));
    }
    Ok(omega)
}

/// Running path integral; `Descent` accumulates `-g * dtheta`.
pub fn si_step_accumulate(
    running: &mut Array2<f64>,
    base_grad: &Array2<f64>,
    step: &Array2<f64>,
    integrand: SiIntegrand,
) -> Result<()> {
    check_shape(running, base_grad)?;
    check_shape(running, step)?;
    let sign = match integrand {
        SiIntegrand::Descent => -1.0,
        SiIntegrand::Literal => 1.0,
    };
    Zip::from(running)
        .and(base_grad)
        .and(step)
        .for_each(|w, &g, &d| *w += sign * g * d);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiState {
    pub running: Array2<f64>,
    pub start: Array2<f64>,
    pub omega: Array2<f64>,
    pub anchor: Array2<f64>,
    pub eps: f64,
}

impl SiState {
    pub fn new(bank: &Array2<f64>, eps: f64) -> Self {
        Self {
            running: Array2::zeros(bank.raw_dim()),
            start: bank.clone(),
            omega: Array2::zeros(bank.raw_dim()),
            anchor: bank.clone(),
            eps,
        }
    }
}

/// Folds the finished task's path integral into the consolidated importance.
pub fn si_task_consolidate(state: &mut SiState, bank_end: &Array2<f64>) -> Result<()> {
    check_shape(&state.start, bank_end)?;
    let eps = state.eps;
    Zip::from(&mut state.omega)
        .and(&state.running)
        .and(&state.start)
        .and(bank_end)
        .for_each(|o, &w, &s, &e| {
            let delta = e - s;
            // Momentum and clamping can make a path integral negative; it never lowers Omega.
            *o += w.max(0.0) / (delta * delta + eps);
        });
    state.running.fill(0.0);
    state.anchor.assign(bank_end);
    state.start.assign(bank_end);
    Ok(())
}

fn importance_sample(task: &TaskDataset, cap: usize) -> &[Item] {
    let n = if cap == 0 { task.train.len() } else { cap.min(task.train.len()) };
    &task.train[..n]
}

#[derive(Debug, Clone)]
pub struct L2 {
    lambda: f64,
    terms: Vec<PenaltyTerm>,
}

impl L2 {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            terms: Vec::new(),
        }
    }

    pub fn terms(&self) -> &[PenaltyTerm] {
        &self.terms
    }
}

impl MethodHooks for L2 {
    fn name(&self) -> &'static str {
        "l2"
    }

    fn augment_loss(&self, bank: &MemoryBank, grad: &mut Array2<f64>) -> Result<f64> {
        add_penalty(bank.memories(), &self.terms, self.lambda, 1.0, grad)
    }

    fn on_task_end(&mut self, _task: &TaskDataset, bank: &MemoryBank, _params: &NetParams) -> Result<()> {
        self.terms.push(PenaltyTerm {
            anchor: bank.memories().clone(),
            importance: Array2::ones(bank.memories().raw_dim()),
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ewc {
    lambda: f64,
    sample_cap: usize,
    terms: Vec<PenaltyTerm>,
}

impl Ewc {
    pub fn new(lambda: f64, sample_cap: usize) -> Self {
        Self {
            lambda,
            sample_cap,
            terms: Vec::new(),
        }
    }

    pub fn terms(&self) -> &[PenaltyTerm] {
        &self.terms
    }
}

impl MethodHooks for Ewc {
    fn name(&self) -> &'static str {
        "ewc"
    }

    fn augment_loss(&self, bank: &MemoryBank, grad: &mut Array2<f64>) -> Result<f64> {
        add_penalty(bank.memories(), &self.terms, self.lambda, EWC_COEFF, grad)
    }

    fn on_task_end(&mut self, task: &TaskDataset, bank: &MemoryBank, params: &NetParams) -> Result<()> {
        let sample = importance_sample(task, self.sample_cap);
        let beta = params.readout_beta(bank.width());
        let importance = ewc_fisher_importance(sample, bank, params, beta)?;
        self.terms.push(PenaltyTerm {
            anchor: bank.memories().clone(),
            importance,
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Mas {
    lambda: f64,
    variant: MasVariant,
    sample_cap: usize,
    term: Option<PenaltyTerm>,
}

impl Mas {
    pub fn new(lambda: f64, variant: MasVariant, sample_cap: usize) -> Self {
        Self {
            lambda,
            variant,
            sample_cap,
            term: None,
        }
    }

    pub fn term(&self) -> Option<&PenaltyTerm> {
        self.term.as_ref()
    }
}

impl MethodHooks for Mas {
    fn name(&self) -> &'static str {
        "mas"
    }

    fn augment_loss(&self, bank: &MemoryBank, grad: &mut Array2<f64>) -> Result<f64> {
        add_penalty(bank.memories(), self.term.as_slice(), self.lambda, 1.0, grad)
    }

    fn on_task_end(&mut self, task: &TaskDataset, bank: &MemoryBank, params: &NetParams) -> Result<()> {
        let sample = importance_sample(task, self.sample_cap);
        let beta = params.readout_beta(bank.width());
        let fresh = mas_importance(sample, bank, params, beta, self.variant)?;
        let importance = match self.term.take() {
            Some(old) => old.importance + fresh,
            None => fresh,
        };
        self.term = Some(PenaltyTerm {
            anchor: bank.memories().clone(),
            importance,
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynapticIntelligence {
    lambda: f64,
    eps: f64,
    integrand: SiIntegrand,
    state: Option<SiState>,
    /// Penalty term, present once a task has been consolidated.
    term: Option<PenaltyTerm>,
}

impl SynapticIntelligence {
    pub fn new(lambda: f64, eps: f64, integrand: SiIntegrand) -> Self {
        Self {
            lambda,
            eps,
            integrand,
            state: None,
            term: None,
        }
    }

    pub fn state(&self) -> Option<&SiState> {
        self.state.as_ref()
    }
}

impl MethodHooks for SynapticIntelligence {
    fn name(&self) -> &'static str {
        "si"
    }

    fn on_task_start(&mut self, _task: &TaskDataset, bank: &MemoryBank) -> Result<()> {
        match &mut self.state {
            Some(state) => {
                state.start.assign(bank.memories());
                state.running.fill(0.0);
            }
            None => self.state = Some(SiState::new(bank.memories(), self.eps)),
        }
        Ok(())
    }

    fn augment_loss(&self, bank: &MemoryBank, grad: &mut Array2<f64>) -> Result<f64> {
        add_penalty(bank.memories(), self.term.as_slice(), self.lambda, 1.0, grad)
    }

    fn tracks_steps(&self) -> bool {
        true
    }

    fn after_step(&mut self, base_grad: &Array2<f64>, step: &Array2<f64>) -> Result<()> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvalidParameter("SI step before task start".into()))?;
        si_step_accumulate(&mut state.running, base_grad, step, self.integrand)
    }

    fn on_task_end(&mut self, _task: &TaskDataset, bank: &MemoryBank, _params: &NetParams) -> Result<()> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::InvalidParameter("SI task end before task start".into()))?;
        si_task_consolidate(state, bank.memories())?;
        self.term = Some(PenaltyTerm {
            anchor: state.anchor.clone(),
            importance: state.omega.clone(),
        });
        Ok(())
    }
}
