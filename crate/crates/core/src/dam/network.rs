//! Neuron fields, classification readout and synchronous relaxation.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::bank::MemoryBank;
use super::interaction::Interaction;
use super::params::NetParams;
use super::pattern::Pattern;
use crate::error::{Error, Result};

/// Evaluates `sum_k f(beta zeta_k . xi_{+i}) - f(beta zeta_k . xi_{-i})` given the
/// precomputed overlaps `zeta_k . xi`.
///
/// Flipping entry `i` only moves each overlap by `zeta_{k,i}`, so the clamped states
/// never need to be materialised.
#[derive(Clone, Copy)]
pub(crate) struct FieldKernel<'a> {
    memories: ArrayView2<'a, f64>,
    beta: f64,
    f: Interaction,
}

impl<'a> FieldKernel<'a> {
    pub(crate) fn new(bank: &'a MemoryBank, beta: f64, f: Interaction) -> Self {
        Self {
            memories: bank.memories().view(),
            beta,
            f,
        }
    }

    pub(crate) fn overlaps(&self, state: &[f64]) -> Vec<f64> {
        self.memories.dot(&ArrayView1::from(state)).to_vec()
    }

    /// Field of neuron `i`.
    #[inline]
    pub(crate) fn field(&self, state: &[f64], overlaps: &[f64], i: usize) -> f64 {
        let xi = state[i];
        let mut h = 0.0;
        for (k, &d) in overlaps.iter().enumerate() {
            let z = self.memories[[k, i]];
            let rest = d - z * xi;
            h += self.f.value(self.beta * (rest + z)) - self.f.value(self.beta * (rest - z));
        }
        h
    }

    /// Field of neuron `i` plus its sensitivities to memory `k`.
    ///
    /// On return `off[k] = beta (f'(a+) - f'(a-))`, the derivative of the field with respect
    /// to `zeta_{k,j}` divided by `xi_j` for every `j != i`, and `on[k] = beta (f'(a+) + f'(a-))`,
    /// the derivative with respect to `zeta_{k,i}`.
    #[inline]
    pub(crate) fn field_with_sensitivity(
        &self,
        state: &[f64],
        overlaps: &[f64],
        i: usize,
        off: &mut [f64],
        on: &mut [f64],
    ) -> f64 {
        let xi = state[i];
        let mut h = 0.0;
        for (k, &d) in overlaps.iter().enumerate() {
            let z = self.memories[[k, i]];
            let rest = d - z * xi;
            let (fp, dp) = self.f.value_and_deriv(self.beta * (rest + z));
            let (fm, dm) = self.f.value_and_deriv(self.beta * (rest - z));
            h += fp - fm;
            off[k] = self.beta * (dp - dm);
            on[k] = self.beta * (dp + dm);
        }
        h
    }
}

fn check_width(pattern: &Pattern, bank: &MemoryBank) -> Result<()> {
    if pattern.len() != bank.width() {
        return Err(Error::DimensionMismatch {
            expected: bank.width(),
            actual: pattern.len(),
        });
    }
    Ok(())
}

pub fn neuron_field(
    xi: &Pattern,
    i: usize,
    bank: &MemoryBank,
    beta: f64,
    n: f64,
    eps_leak: f64,
) -> Result<f64> {
    check_width(xi, bank)?;
    if i >= xi.len() {
        return Err(Error::InvalidParameter(format!(
            "neuron index {i} out of range for {} neurons",
            xi.len()
        )));
    }
    let kernel = FieldKernel::new(bank, beta, Interaction::new(n, eps_leak)?);
    let state = xi.values();
    let h = kernel.field(state, &kernel.overlaps(state), i);
    if !h.is_finite() {
        return Err(Error::NonFinite(format!("field of neuron {i}")));
    }
    Ok(h)
}

/// One synchronous update of the class neurons with linear activation; returns the logits.
pub fn classify(probe: &Pattern, bank: &MemoryBank, params: &NetParams) -> Result<Vec<f64>> {
    classify_with_beta(probe, bank, params.readout_beta(bank.width()), params.interaction()?)
}

pub fn classify_with_beta(
    probe: &Pattern,
    bank: &MemoryBank,
    beta: f64,
    f: Interaction,
) -> Result<Vec<f64>> {
    check_width(probe, bank)?;
    let kernel = FieldKernel::new(bank, beta, f);
    let state = probe.values();
    let overlaps = kernel.overlaps(state);
    let logits: Vec<f64> = probe
        .layout()
        .class_range()
        .map(|i| kernel.field(state, &overlaps, i))
        .collect();
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("class logit".into()));
    }
    Ok(logits)
}

/// Logits for many probes at once; row `b` holds the class fields of `probes[b]`.
pub fn classify_batch(
    probes: &[&Pattern],
    bank: &MemoryBank,
    beta: f64,
    f: Interaction,
) -> Result<Array2<f64>> {
    let Some(first) = probes.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let layout = first.layout();
    for p in probes {
        check_width(p, bank)?;
    }
    let states = stack_states(probes.iter().map(|p| p.values()), bank.width());
    let overlaps = states.dot(&bank.memories().t());
    let kernel = FieldKernel::new(bank, beta, f);
    let classes = layout.class_range();
    let mut logits = Array2::zeros((probes.len(), classes.len()));
    for (b, p) in probes.iter().enumerate() {
        let d = overlaps.row(b);
        let d = d.as_slice().expect("row of a standard-layout matrix");
        for (c, i) in classes.clone().enumerate() {
            logits[[b, c]] = kernel.field(p.values(), d, i);
        }
    }
    if logits.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFinite("class logit".into()));
    }
    Ok(logits)
}

pub(crate) fn stack_states<'s>(
    states: impl ExactSizeIterator<Item = &'s [f64]>,
    width: usize,
) -> Array2<f64> {
    let rows = states.len();
    let mut flat = Vec::with_capacity(rows * width);
    for s in states {
        flat.extend_from_slice(s);
    }
    Array2::from_shape_vec((rows, width), flat).expect("all states share the bank width")
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Sign activation with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub pattern: Pattern,
    pub converged: bool,
    pub sweeps: usize,
}

pub fn relax(
    probe: &Pattern,
    bank: &MemoryBank,
    params: &NetParams,
    update_mask: &[usize],
    max_sweeps: usize,
) -> Result<Relaxation> {
    relax_with_beta(
        probe,
        bank,
        params.readout_beta(bank.width()),
        params.interaction()?,
        update_mask,
        max_sweeps,
    )
}

/// Synchronous sign updates of the masked neurons until nothing changes.
pub fn relax_with_beta(
    probe: &Pattern,
    bank: &MemoryBank,
    beta: f64,
    f: Interaction,
    update_mask: &[usize],
    max_sweeps: usize,
) -> Result<Relaxation> {
    check_width(probe, bank)?;
    if update_mask.is_empty() {
        return Err(Error::Empty("relaxation update mask"));
    }
    if max_sweeps == 0 {
        return Err(Error::InvalidParameter("max_sweeps must be >= 1".into()));
    }
    let layout = probe.layout();
    let tasks = layout.task_range();
    if let Some(&i) = update_mask
        .iter()
        .find(|&&i| i >= probe.len() || tasks.contains(&i))
    {
        return Err(Error::InvalidParameter(format!(
            "neuron {i} cannot be updated (out of range or a task-ID neuron)"
        )));
    }

    let kernel = FieldKernel::new(bank, beta, f);
    let mut state = probe.values().to_vec();
    let mut next = vec![0.0; update_mask.len()];
    for sweep in 1..=max_sweeps {
        let overlaps = kernel.overlaps(&state);
        for (slot, &i) in next.iter_mut().zip(update_mask) {
            let h = kernel.field(&state, &overlaps, i);
            if h.is_nan() {
                return Err(Error::NonFinite(format!("field of neuron {i} during relaxation")));
            }
            *slot = sign(h);
        }
        let mut changed = false;
        for (&v, &i) in next.iter().zip(update_mask) {
            if state[i] != v {
                state[i] = v;
                changed = true;
            }
        }
        if !changed {
            return Ok(Relaxation {
                pattern: Pattern::from_parts_unchecked(layout, state),
                converged: true,
                sweeps: sweep,
            });
        }
    }
    Ok(Relaxation {
        pattern: Pattern::from_parts_unchecked(layout, state),
        converged: false,
        sweeps: max_sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dam::pattern::Layout;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank(rows: Array2<f64>, layout: Layout) -> MemoryBank {
        MemoryBank::new(rows, layout).unwrap()
    }

    /// Field computed by literally building the two clamped states.
    fn field_by_definition(xi: &[f64], i: usize, bank: &MemoryBank, beta: f64, f: Interaction) -> f64 {
        let mut plus = xi.to_vec();
        plus[i] = 1.0;
        let mut minus = xi.to_vec();
        minus[i] = -1.0;
        bank.memories()
            .rows()
            .into_iter()
            .map(|z| {
                let p: f64 = z.iter().zip(&plus).map(|(a, b)| a * b).sum();
                let m: f64 = z.iter().zip(&minus).map(|(a, b)| a * b).sum();
                f.value(beta * p) - f.value(beta * m)
            })
            .sum()
    }

    #[test]
    fn hand_evaluated_field() {
        let b = bank(array![[1.0, 1.0]], Layout::autoassociative(2));
        let xi = Pattern::bipolar(vec![1.0, -1.0]).unwrap();
        assert_eq!(neuron_field(&xi, 1, &b, 1.0, 2.0, 0.01).unwrap(), 4.0);
        assert_eq!(neuron_field(&xi, 1, &b, 2.0, 2.0, 0.01).unwrap(), 16.0);
    }

    #[test]
    fn zero_bank_has_zero_fields() {
        let b = MemoryBank::zeros(3, Layout::autoassociative(4));
        let xi = Pattern::bipolar(vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        for i in 0..4 {
            assert_eq!(neuron_field(&xi, i, &b, 1.3, 3.0, 0.01).unwrap(), 0.0);
        }
    }

    #[test]
    fn field_rejects_mismatch() {
        let b = MemoryBank::zeros(1, Layout::autoassociative(3));
        let xi = Pattern::bipolar(vec![1.0, -1.0]).unwrap();
        assert!(matches!(
            neuron_field(&xi, 0, &b, 1.0, 2.0, 0.01),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = Layout::new(6, 2, 3);
        let rows = Array2::from_shape_simple_fn((4, 11), || rng.random_range(-1.0..1.0));
        let b = bank(rows, layout);
        let mut values: Vec<f64> = (0..6).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        values.extend([-1.0, 1.0, 0.0, 0.25, -0.5]);
        let xi = Pattern::new(layout, values).unwrap();
        let f = Interaction::new(3.0, 0.01).unwrap();
        for i in 0..11 {
            let fast = neuron_field(&xi, i, &b, 0.7, 3.0, 0.01).unwrap();
            let slow = field_by_definition(xi.values(), i, &b, 0.7, f);
            assert!((fast - slow).abs() < 1e-12, "neuron {i}: {fast} vs {slow}");
        }
    }

    fn toy_item(label: usize) -> (Layout, Vec<f64>) {
        let layout = Layout::new(4, 1, 10);
        let mut v = vec![1.0, -1.0, -1.0, 1.0, 1.0];
        v.extend((0..10).map(|c| if c == label { 1.0 } else { -1.0 }));
        (layout, v)
    }

    #[test]
    fn stored_item_is_classified() {
        let params = NetParams {
            similarity: crate::dam::params::Similarity::Raw,
            ..NetParams::full()
        };
        for label in [0, 3, 9] {
            let (layout, stored) = toy_item(label);
            let b = bank(Array2::from_shape_vec((1, 15), stored.clone()).unwrap(), layout);
            let mut probe = stored;
            probe[5..].iter_mut().for_each(|v| *v = 0.0);
            let probe = Pattern::new(layout, probe).unwrap();
            let logits = classify(&probe, &b, &params).unwrap();
            assert_eq!(argmax(&logits), label);
        }
    }

    #[test]
    fn zero_bank_ties_to_class_zero() {
        let layout = Layout::new(4, 1, 10);
        let b = MemoryBank::zeros(5, layout);
        let mut v = vec![1.0, 1.0, -1.0, 1.0, 1.0];
        v.extend([0.0; 10]);
        let logits = classify(&Pattern::new(layout, v).unwrap(), &b, &NetParams::full()).unwrap();
        assert!(logits.iter().all(|&l| l == 0.0));
        assert_eq!(argmax(&logits), 0);
    }

    #[test]
    fn task_bit_changes_logits() {
        // A memory aligned with task 0 only excites class 2 when that task bit is on.
        let layout = Layout::new(2, 2, 10);
        let mut row = vec![0.0; 14];
        row[2] = 1.0;
        row[3] = -1.0;
        row[4 + 2] = 1.0;
        let b = bank(Array2::from_shape_vec((1, 14), row).unwrap(), layout);
        let params = NetParams { similarity: crate::dam::params::Similarity::Raw, ..NetParams::full() };
        let mut a = vec![1.0, -1.0, 1.0, -1.0];
        a.extend([0.0; 10]);
        let mut c = vec![1.0, -1.0, -1.0, 1.0];
        c.extend([0.0; 10]);
        let la = classify(&Pattern::new(layout, a).unwrap(), &b, &params).unwrap();
        let lc = classify(&Pattern::new(layout, c).unwrap(), &b, &params).unwrap();
        assert_ne!(la, lc);
        assert_eq!(argmax(&la), 2);
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = Layout::new(8, 2, 10);
        let rows = Array2::from_shape_simple_fn((6, 20), || rng.random_range(-1.0..1.0));
        let b = bank(rows, layout);
        let probes: Vec<Pattern> = (0..4)
            .map(|t| {
                let mut v: Vec<f64> = (0..8).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                v.extend(if t % 2 == 0 { [1.0, -1.0] } else { [-1.0, 1.0] });
                v.extend([0.0; 10]);
                Pattern::new(layout, v).unwrap()
            })
            .collect();
        let f = Interaction::new(5.0, 0.01).unwrap();
        let refs: Vec<&Pattern> = probes.iter().collect();
        let batch = classify_batch(&refs, &b, 0.4, f).unwrap();
        for (r, p) in probes.iter().enumerate() {
            let single = classify_with_beta(p, &b, 0.4, f).unwrap();
            for c in 0..10 {
                assert!((batch[[r, c]] - single[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classify_is_pure() {
        let (layout, stored) = toy_item(4);
        let b = bank(Array2::from_shape_vec((1, 15), stored.clone()).unwrap(), layout);
        let p = Pattern::new(layout, stored).unwrap();
        let params = NetParams::full();
        assert_eq!(classify(&p, &b, &params).unwrap(), classify(&p, &b, &params).unwrap());
    }

    #[test]
    fn stored_pattern_is_fixed_point() {
        let xi = vec![1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let b = bank(Array2::from_shape_vec((1, 6), xi.clone()).unwrap(), Layout::autoassociative(6));
        let params = NetParams::full();
        let mask: Vec<usize> = (0..6).collect();
        let r = relax(&Pattern::bipolar(xi.clone()).unwrap(), &b, &params, &mask, 1).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps, 1);
        assert_eq!(r.pattern.values(), xi.as_slice());
    }

    #[test]
    fn zero_bank_relaxes_to_all_plus() {
        let b = MemoryBank::zeros(2, Layout::autoassociative(4));
        let p = Pattern::bipolar(vec![-1.0, 1.0, -1.0, -1.0]).unwrap();
        let r = relax(&p, &b, &NetParams::full(), &[0, 1, 2, 3], 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps, 2);
        assert_eq!(r.pattern.values(), &[1.0; 4]);
        let capped = relax(&p, &b, &NetParams::full(), &[0, 1, 2, 3], 1).unwrap();
        assert!(!capped.converged);
    }

    #[test]
    fn relax_validates_mask() {
        let layout = Layout::new(2, 2, 0);
        let b = MemoryBank::zeros(1, layout);
        let p = Pattern::new(layout, vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        assert!(matches!(relax(&p, &b, &NetParams::full(), &[], 5), Err(Error::Empty(_))));
        assert!(relax(&p, &b, &NetParams::full(), &[2], 5).is_err());
        assert!(relax(&p, &b, &NetParams::full(), &[7], 5).is_err());
        // Clamped neurons outside the mask never move.
        let r = relax(&p, &b, &NetParams::full(), &[0], 5).unwrap();
        assert_eq!(&r.pattern.values()[1..], &[1.0, 1.0, -1.0]);
    }
}
