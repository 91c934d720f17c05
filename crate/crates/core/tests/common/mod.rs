//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use dam_core::dam::{batch_loss_and_grad, Item, Layout, LossNeurons, MemoryBank, NetParams, Pattern, Similarity};
use dam_core::data::{resolve_data_dir, RawImageSet};
use dam_core::SeededRng;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub struct Instance {
    pub bank: MemoryBank,
    pub batch: Vec<Item>,
    pub params: NetParams,
    pub beta: f64,
}

/// Random instance with a few pixels, one or two task bits and a small class block.
pub fn random_instance(seed: u64, n: f64) -> Instance {
    let mut rng = SeededRng::seed_from_u64(seed);
    let pixels = rng.random_range(2..=8);
    let tasks = rng.random_range(1..=2);
    let classes = rng.random_range(1..=16 - pixels - tasks).min(6);
    let layout = Layout::new(pixels, tasks, classes);
    let count = rng.random_range(1..=8);
    let memories = Array2::from_shape_fn((count, layout.width()), |_| 0.4 * rng.sample::<f64, _>(StandardNormal));
    let bank = MemoryBank::new(memories, layout).unwrap();
    let batch = (0..rng.random_range(1..=4))
        .map(|_| {
            let mut v: Vec<f64> = (0..pixels).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let t = rng.random_range(0..tasks);
            v.extend((0..tasks).map(|j| if j == t { 1.0 } else { -1.0 }));
            v.extend(std::iter::repeat_n(0.0, classes));
            let label = rng.random_range(0..classes);
            let target = (0..classes).map(|c| if c == label { 1.0 } else { -1.0 }).collect();
            Item::new(Pattern::new(layout, v).unwrap(), target)
        })
        .collect();
    let params = NetParams {
        n,
        error_exp: rng.random_range(1..=2),
        similarity: Similarity::Raw,
        loss_neurons: LossNeurons::Classes,
        ..NetParams::desk()
    };
    let beta = rng.random_range(0.2..0.9);
    Instance { bank, batch, params, beta }
}

/// Central difference extrapolated from steps `h` and `h/2`, and the rounding noise it
/// can carry given the loss magnitude.
fn richardson(loss: &dyn Fn(f64) -> f64, h: f64) -> (f64, f64) {
    let (lp, lm, lp2, lm2) = (loss(h), loss(-h), loss(h / 2.0), loss(-h / 2.0));
    let coarse = (lp - lm) / (2.0 * h);
    let fine = (lp2 - lm2) / h;
    let magnitude = lp.abs().max(lm.abs()).max(lp2.abs()).max(lm2.abs());
    let noise = 4.0 * f64::EPSILON * magnitude * 3.0 / (2.0 * h);
    ((4.0 * fine - coarse) / 3.0, noise)
}

/// True when moving entry `(k, j)` by up to `reach` can push some interaction argument
/// across the kink at 0, where the loss has no derivative.
fn straddles_kink(inst: &Instance, k: usize, j: usize, reach: f64) -> bool {
    let memory = inst.bank.memories().row(k);
    let layout = inst.bank.layout();
    inst.batch.iter().any(|item| {
        layout.class_range().any(|c| {
            [1.0, -1.0].iter().any(|&s| {
                let mut state = item.pattern.values().to_vec();
                state[c] = s;
                let x: f64 = memory.iter().zip(&state).map(|(z, v)| z * v).sum();
                state[j] != 0.0 && x.abs() <= reach * state[j].abs()
            })
        })
    })
}

const FD_STEPS: [f64; 2] = [1e-5, 1e-6];

/// Worst relative error over all bank entries; entries with tiny gradients use an absolute
/// floor, and differences inside the rounding noise of the finite difference count as zero.
/// Entries next to a kink are skipped. A second, smaller step is tried for entries where
/// the loss is too steep for the first.
pub fn max_relative_error(inst: &Instance) -> f64 {
    let analytic = batch_loss_and_grad(&inst.batch, &inst.bank, &inst.params, inst.beta).unwrap().grad;
    let loss_at = |k: usize, j: usize, delta: f64| {
        let mut m = inst.bank.memories().clone();
        m[[k, j]] += delta;
        let b = MemoryBank::new(m, inst.bank.layout()).unwrap();
        batch_loss_and_grad(&inst.batch, &b, &inst.params, inst.beta).unwrap().loss
    };
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    let mut worst = 0.0f64;
    for ((k, j), &a) in analytic.indexed_iter() {
        if straddles_kink(inst, k, j, FD_STEPS[0] * 1.01) {
            continue;
        }
        let err = FD_STEPS
            .iter()
            .map(|&h| {
                let (fd, noise) = richardson(&|d| loss_at(k, j, d), h);
                ((fd - a).abs() - noise).max(0.0) / a.abs().max(1e-3 * scale)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(err);
    }
    worst
}

/// MNIST from `DAM_DATA_DIR` or the workspace `data/mnist`.
pub fn mnist() -> RawImageSet {
    let default = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let dir = resolve_data_dir(&default);
    RawImageSet::load_mnist_train(&dir).unwrap_or_else(|e| {
        panic!("MNIST is required for this test ({e}); run `dam fetch-data` or set DAM_DATA_DIR")
    })
}
