//! Training error and its exact gradient with respect to the memory bank.

use std::borrow::Borrow;
use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;

use super::bank::MemoryBank;
use super::item::Item;
use super::network::{stack_states, FieldKernel};
use super::params::{LossNeurons, NetParams};
use super::pattern::Layout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Same shape as the bank.
    pub grad: Array2<f64>,
}

pub(crate) fn loss_range(layout: Layout, neurons: LossNeurons) -> Range<usize> {
    match neurons {
        LossNeurons::Classes => layout.class_range(),
        LossNeurons::All => 0..layout.width(),
    }
}

/// `loss = sum_items sum_i (target_i - tanh(h_i))^(2m)` over the loss neurons, and
/// its gradient by the chain rule through `tanh`, the field and the interaction function.
pub fn batch_loss_and_grad<I: Borrow<Item>>(
    batch: &[I],
    bank: &MemoryBank,
    params: &NetParams,
    beta: f64,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let width = bank.width();
    let count = bank.count();
    let neurons = loss_range(bank.layout(), params.loss_neurons);
    for (b, item) in batch.iter().enumerate() {
        let item = item.borrow();
        if item.pattern.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: item.pattern.len(),
            });
        }
        if item.target.len() != neurons.len() {
            return Err(Error::InvalidParameter(format!(
                "item {b}: target has {} entries but {} neurons carry loss",
                item.target.len(),
                neurons.len()
            )));
        }
    }

    let kernel = FieldKernel::new(bank, beta, params.interaction()?);
    let two_m = 2 * params.error_exp as i32;
    let states = stack_states(batch.iter().map(|i| i.borrow().pattern.values()), width);
    let overlaps = states.dot(&bank.memories().t());

    // coef[b, k] collects dloss/dfield * (dfield/dzeta_kj) / xi_bj for the off-diagonal terms;
    // the diagonal (j == i) corrections go straight into `grad`.
    let mut coef = Array2::<f64>::zeros((batch.len(), count));
    let mut grad = Array2::<f64>::zeros((count, width));
    let mut off = vec![0.0; count];
    let mut on = vec![0.0; count];
    let mut loss = 0.0;

    for (b, item) in batch.iter().enumerate() {
        let item = item.borrow();
        let x = item.pattern.values();
        let d = overlaps.row(b);
        let d = d.as_slice().expect("standard layout");
        for (&target, i) in item.target.iter().zip(neurons.clone()) {
            let h = kernel.field_with_sensitivity(x, d, i, &mut off, &mut on);
            if !h.is_finite() {
                return Err(Error::NonFinite(format!("field of neuron {i} for batch item {b}")));
            }
            let y = h.tanh();
            let e = target - y;
            loss += e.powi(two_m);
            let dloss = -(two_m as f64) * e.powi(two_m - 1) * (1.0 - y * y);
            if dloss == 0.0 {
                continue;
            }
            let xi = x[i];
            let mut row = coef.row_mut(b);
            for k in 0..count {
                row[k] += dloss * off[k];
                grad[[k, i]] += dloss * (on[k] - off[k] * xi);
            }
        }
    }
    general_mat_mul(1.0, &coef.t(), &states, 1.0, &mut grad);

    if !loss.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("batch gradient".into()));
    }
    Ok(LossGrad { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dam::params::Similarity;
    use crate::dam::pattern::Pattern;
    use ndarray::array;

    fn params(n: f64, m: u32, neurons: LossNeurons) -> NetParams {
        NetParams {
            n,
            error_exp: m,
            loss_neurons: neurons,
            similarity: Similarity::Raw,
            ..NetParams::full()
        }
    }

    #[test]
    fn zero_field_unit_loss() {
        // One class neuron, field 0: loss (1 - 0)^2 = 1.
        let layout = Layout::new(2, 0, 1);
        let bank = MemoryBank::zeros(1, layout);
        let item = Item::new(Pattern::new(layout, vec![1.0, -1.0, 0.0]).unwrap(), vec![1.0]);
        let out = batch_loss_and_grad(&[item], &bank, &params(2.0, 1, LossNeurons::Classes), 1.0).unwrap();
        assert_eq!(out.loss, 1.0);
        assert!(out.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn zero_bank_loss_counts_targets() {
        let layout = Layout::new(3, 0, 2);
        let bank = MemoryBank::zeros(4, layout);
        let items: Vec<Item> = (0..5)
            .map(|_| Item::new(Pattern::new(layout, vec![1.0, 1.0, -1.0, 0.0, 0.0]).unwrap(), vec![1.0, -1.0]))
            .collect();
        let out = batch_loss_and_grad(&items, &bank, &params(2.0, 1, LossNeurons::Classes), 1.0).unwrap();
        assert_eq!(out.loss, 10.0);
        assert!(out.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn diagonal_gradient_by_hand() {
        // One memory (0.5, 0.25), state (1, 1), n = 2, eps = 0.01, beta = 1, m = 1.
        // Neuron 0: overlaps 0.75 and -0.25 (leaky) -> h0 = 0.5625 - 0.0025,
        //   dh0/dz = (1.5 - 0.01, 1.5 + 0.01).
        // Neuron 1: overlaps 0.75 and 0.25 -> h1 = 0.5625 - 0.0625,
        //   dh1/dz = (1.5 - 0.5, 1.5 + 0.5).
        let layout = Layout::autoassociative(2);
        let bank = MemoryBank::new(array![[0.5, 0.25]], layout).unwrap();
        let item = Item::new(Pattern::bipolar(vec![1.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        let p = params(2.0, 1, LossNeurons::All);
        let out = batch_loss_and_grad(&[item], &bank, &p, 1.0).unwrap();
        let (y0, y1) = (0.56f64.tanh(), 0.5f64.tanh());
        let expected_loss = y0 * y0 + (1.0 - y1) * (1.0 - y1);
        assert!((out.loss - expected_loss).abs() < 1e-14);
        let c0 = -2.0 * (0.0 - y0) * (1.0 - y0 * y0);
        let c1 = -2.0 * (1.0 - y1) * (1.0 - y1 * y1);
        assert!((out.grad[[0, 0]] - (c0 * 1.49 + c1 * 1.0)).abs() < 1e-14);
        assert!((out.grad[[0, 1]] - (c0 * 1.51 + c1 * 2.0)).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let layout = Layout::new(2, 0, 1);
        let bank = MemoryBank::zeros(1, layout);
        let p = params(2.0, 1, LossNeurons::Classes);
        let empty: [Item; 0] = [];
        assert!(matches!(batch_loss_and_grad(&empty, &bank, &p, 1.0), Err(Error::Empty(_))));
        let wrong = Item::new(Pattern::new(layout, vec![1.0, 1.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert!(batch_loss_and_grad(&[wrong], &bank, &p, 1.0).is_err());
        let huge = MemoryBank::new(array![[1e3, 1e3, 1.0]], layout).unwrap();
        let item = Item::new(Pattern::new(layout, vec![1.0, 1.0, 0.0]).unwrap(), vec![1.0]);
        let err = batch_loss_and_grad(&[item], &huge, &params(200.0, 1, LossNeurons::Classes), 10.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
