//! Gradient projection against reference gradients from episodic buffers.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1};

use super::rehearsal::build_rehearsal_buffer;
use super::{MethodHooks, MethodSpec};
use crate::dam::{batch_loss_and_grad, Item, MemoryBank, NetParams, StepContext};
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::SeededRng;

pub const QP_TOL: f64 = 1e-8;
pub const QP_MAX_ITER: usize = 100_000;
const POLISH_EVERY: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct NnqpSolution {
    pub v: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest KKT violation relative to `max |c|`.
    pub residual: f64,
}

fn kkt_residual(u: &[f64], grad: &[f64]) -> f64 {
    u.iter()
        .zip(grad)
        .map(|(&u, &g)| if u > 0.0 { g.abs() } else { (-g).max(0.0) })
        .fold(0.0, f64::max)
}

/// Solves `A x = b` for small dense systems; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Minimizes `0.5 v'Qv + c'v` over `v >= 0` for PSD `Q`.
///
/// Projected gradient on the diagonally rescaled problem (unit diagonal, step
/// `1 / trace`), with an equality solve on the current support to finish exactly.
pub fn nnqp_solve(q: &Array2<f64>, c: &[f64], tol: f64, max_iter: usize) -> Result<NnqpSolution> {
    let k = c.len();
    if q.dim() != (k, k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: q.nrows(),
        });
    }
    if q.iter().chain(c).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("QP data".into()));
    }
    let d: Vec<f64> = (0..k)
        .map(|i| if q[[i, i]] > 0.0 { q[[i, i]].sqrt() } else { 1.0 })
        .collect();
    let qs = Array2::from_shape_fn((k, k), |(i, j)| q[[i, j]] / (d[i] * d[j]));
    let cs: Vec<f64> = c.iter().zip(&d).map(|(c, d)| c / d).collect();
    let scale = cs.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let trace: f64 = (0..k).map(|i| qs[[i, i]]).sum();
    let step = if trace > 0.0 { 1.0 / trace } else { 1.0 };

    let gradient = |u: &[f64]| -> Vec<f64> {
        let g = qs.dot(&ArrayView1::from(u));
        g.iter().zip(&cs).map(|(g, c)| g + c).collect()
    };
    let finish = |u: Vec<f64>, residual: f64, converged: bool, iterations: usize| NnqpSolution {
        v: u.iter().zip(&d).map(|(u, d)| u / d).collect(),
        converged,
        iterations,
        residual,
    };
    let polish = |u: &[f64], grad: &[f64]| -> Option<(Vec<f64>, f64)> {
        let support: Vec<usize> = (0..k).filter(|&i| u[i] > 0.0 || grad[i] < 0.0).collect();
        let mut cand = vec![0.0; k];
        if !support.is_empty() {
            let a = support
                .iter()
                .map(|&i| support.iter().map(|&j| qs[[i, j]]).collect())
                .collect();
            let b = support.iter().map(|&i| -cs[i]).collect();
            let x = solve_dense(a, b)?;
            if x.iter().any(|&x| x < 0.0) {
                return None;
            }
            for (&i, x) in support.iter().zip(x) {
                cand[i] = x;
            }
        }
        let r = kkt_residual(&cand, &gradient(&cand)) / scale;
        (r <= tol).then_some((cand, r))
    };

    let mut u = vec![0.0; k];
    for it in 0..max_iter {
        let grad = gradient(&u);
        let r = kkt_residual(&u, &grad) / scale;
        if r <= tol {
            return Ok(finish(u, r, true, it));
        }
        if it % POLISH_EVERY == 0 {
            if let Some((cand, r)) = polish(&u, &grad) {
                return Ok(finish(cand, r, true, it));
            }
        }
        for (ui, gi) in u.iter_mut().zip(&grad) {
            *ui = (*ui - step * gi).max(0.0);
        }
    }
    let grad = gradient(&u);
    if let Some((cand, r)) = polish(&u, &grad) {
        return Ok(finish(cand, r, true, max_iter));
    }
    let r = kkt_residual(&u, &grad) / scale;
    Ok(finish(u, r, false, max_iter))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub g: Vec<f64>,
    pub projected: bool,
    /// False when the dual solve stopped at its iteration limit.
    pub converged: bool,
}

/// Closest vector to `g` with non-negative inner product against every row of `refs`.
pub fn gem_project(g: &[f64], refs: &Array2<f64>, tol: f64, max_iter: usize) -> Result<Projection> {
    if refs.nrows() == 0 {
        return Err(Error::Empty("GEM reference gradients"));
    }
    if refs.ncols() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            actual: refs.ncols(),
        });
    }
    let gv = ArrayView1::from(g);
    let c = refs.dot(&gv);
    if c.iter().all(|&x| x >= 0.0) {
        return Ok(Projection {
            g: g.to_vec(),
            projected: false,
            converged: true,
        });
    }
    let q = refs.dot(&refs.t());
    let sol = nnqp_solve(&q, c.as_slice().expect("contiguous"), tol, max_iter)?;
    if !sol.converged {
        warn!("GEM dual solve stopped after {} iterations (residual {:.3e})", sol.iterations, sol.residual);
    }
    let out: Array1<f64> = refs.t().dot(&ArrayView1::from(&sol.v)) + &gv;
    Ok(Projection {
        g: out.to_vec(),
        projected: true,
        converged: sol.converged,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closed-form single-constraint projection.
pub fn agem_project(g: &[f64], g_ref: &[f64]) -> Result<Projection> {
    if g.len() != g_ref.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            actual: g_ref.len(),
        });
    }
    let rr = dot(g_ref, g_ref);
    let gr = dot(g, g_ref);
    if rr == 0.0 {
        warn!("A-GEM reference gradient is zero; gradient left unprojected");
    }
    if rr == 0.0 || gr >= 0.0 {
        return Ok(Projection {
            g: g.to_vec(),
            projected: false,
            converged: true,
        });
    }
    let alpha = gr / rr;
    let mut out: Vec<f64> = g.iter().zip(g_ref).map(|(g, r)| g - alpha * r).collect();
    // One refinement pass removes most of the rounding left in the inner product.
    let residual = dot(&out, g_ref);
    if residual < 0.0 {
        let beta = residual / rr;
        for (o, r) in out.iter_mut().zip(g_ref) {
            *o -= beta * r;
        }
    }
    Ok(Projection {
        g: out,
        projected: true,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GemMode {
    /// One constraint per past task.
    PerTask,
    /// One constraint on the union of all buffers.
    Averaged,
}

/// Flattened reference gradients, one row per non-empty buffer (or one row over
/// their union in averaged mode).
pub fn gem_reference_gradients(
    buffers: &[Vec<Item>],
    bank: &MemoryBank,
    params: &NetParams,
    beta: f64,
    mode: GemMode,
) -> Result<Array2<f64>> {
    let dim = bank.count() * bank.width();
    for (t, b) in buffers.iter().enumerate() {
        if b.is_empty() {
            warn!("episodic buffer {t} is empty; no constraint added");
        }
    }
    match mode {
        GemMode::PerTask => {
            let live: Vec<&Vec<Item>> = buffers.iter().filter(|b| !b.is_empty()).collect();
            let mut g = Array2::zeros((live.len(), dim));
            for (row, buffer) in live.into_iter().enumerate() {
                let grad = batch_loss_and_grad(buffer, bank, params, beta)?.grad;
                g.row_mut(row).iter_mut().zip(grad.iter()).for_each(|(d, s)| *d = *s);
            }
            Ok(g)
        }
        GemMode::Averaged => {
            let union: Vec<&Item> = buffers.iter().flatten().collect();
            if union.is_empty() {
                return Ok(Array2::zeros((0, dim)));
            }
            let grad = batch_loss_and_grad(&union, bank, params, beta)?.grad;
            Ok(Array2::from_shape_vec((1, dim), grad.iter().copied().collect())
                .expect("gradient has bank shape"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradientEpisodic {
    mode: GemMode,
    proportion: f64,
    stride: usize,
    tol: f64,
    max_iter: usize,
    buffers: Vec<Vec<Item>>,
    refs: Option<Array2<f64>>,
    steps: usize,
    rng: SeededRng,
}

impl GradientEpisodic {
    pub fn new(mode: GemMode, spec: &MethodSpec, rng: SeededRng) -> Self {
        Self {
            mode,
            proportion: spec.proportion,
            stride: spec.gradient_stride.max(1),
            tol: spec.qp_tol,
            max_iter: spec.qp_max_iter,
            buffers: Vec::new(),
            refs: None,
            steps: 0,
            rng,
        }
    }

    pub fn buffers(&self) -> &[Vec<Item>] {
        &self.buffers
    }
}

impl MethodHooks for GradientEpisodic {
    fn name(&self) -> &'static str {
        match self.mode {
            GemMode::PerTask => "gem",
            GemMode::Averaged => "agem",
        }
    }

    fn on_task_start(&mut self, _task: &TaskDataset, _bank: &MemoryBank) -> Result<()> {
        self.refs = None;
        self.steps = 0;
        Ok(())
    }

    fn transform_gradient(
        &mut self,
        grad: &mut Array2<f64>,
        bank: &MemoryBank,
        ctx: &StepContext<'_>,
    ) -> Result<()> {
        if self.buffers.iter().all(Vec::is_empty) {
            return Ok(());
        }
        if self.refs.is_none() || self.steps % self.stride == 0 {
            self.refs = Some(gem_reference_gradients(
                &self.buffers,
                bank,
                ctx.params,
                ctx.beta,
                self.mode,
            )?);
        }
        self.steps += 1;
        let refs = self.refs.as_ref().expect("set above");
        let flat: Vec<f64> = grad.iter().copied().collect();
        let out = match self.mode {
            GemMode::PerTask => gem_project(&flat, refs, self.tol, self.max_iter)?,
            GemMode::Averaged => agem_project(&flat, refs.row(0).as_slice().expect("contiguous"))?,
        };
        if out.projected {
            grad.iter_mut().zip(out.g).for_each(|(d, s)| *d = s);
        }
        Ok(())
    }

    fn on_task_end(&mut self, task: &TaskDataset, _bank: &MemoryBank, _params: &NetParams) -> Result<()> {
        let buffer = build_rehearsal_buffer(&task.train, self.proportion, &mut self.rng)?;
        self.buffers.push(buffer);
        self.refs = None;
        Ok(())
    }
}
