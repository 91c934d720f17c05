//! Acceptance suite. Runs as a plain binary so every criterion prints its verdict.
//!
//! `DAM_ACCEPTANCE_ONLY=1,2,5` restricts the run; `DAM_ACCEPTANCE_FULL=1` adds the
//! overnight full-scale check (criterion 9).

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use dam_core::continual::{agem_project, gem_project, MethodRegistry, MethodSpec, QP_MAX_ITER, QP_TOL};
use dam_core::dam::{relax, train_task, Layout, MemoryBank, NetParams, Pattern};
use dam_core::data::{build_task_sequence, RawImageSet};
use dam_core::harness::{run_experiment_on, ExperimentConfig, RunRecord};
use dam_core::metrics::ConfusionMatrix;
use dam_core::SeededRng;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn source() -> &'static RawImageSet {
    static SOURCE: OnceLock<RawImageSet> = OnceLock::new();
    SOURCE.get_or_init(common::mnist)
}

fn desk(seed: u64, method: &str, n: f64, proportion: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.trial_seed = seed;
    c.data.master_seed = seed;
    c.network.n = n;
    c.method = MethodSpec::named(method);
    c.method.proportion = proportion;
    c
}

fn run(config: &ExperimentConfig) -> RunRecord {
    run_experiment_on(config, source(), &MethodRegistry::builtin()).expect("desk run failed")
}

fn vanilla_runs() -> &'static [RunRecord] {
    static RUNS: OnceLock<Vec<RunRecord>> = OnceLock::new();
    RUNS.get_or_init(|| SEEDS.iter().map(|&s| run(&desk(s, "vanilla", 2.0, 0.0))).collect())
}

fn majority(wins: &[bool]) -> bool {
    2 * wins.iter().filter(|&&w| w).count() > wins.len()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

// 1 -------------------------------------------------------------------------------------

fn gradient_oracle() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (s, &n) in [2.0, 3.0, 5.0, 10.0, 20.0].iter().enumerate() {
        for t in 0..24u64 {
            let inst = common::random_instance(0xacce_0000 + 100 * s as u64 + t, n);
            worst = worst.max(common::max_relative_error(&inst));
            count += 1;
        }
    }
    verdict(worst < 1e-4, format!("{count} instances, max relative error {worst:.2e} (< 1e-4)"))
}

// 2 -------------------------------------------------------------------------------------

fn normal_vec(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Projection of `g` onto `{z : refs z >= 0}` by enumerating active sets in the primal.
fn primal_projection(g: &[f64], refs: &[Vec<f64>]) -> Vec<f64> {
    let k = refs.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<&Vec<f64>> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| &refs[i]).collect();
        let z = if active.is_empty() {
            g.to_vec()
        } else {
            let gram = active.iter().map(|a| active.iter().map(|b| dot(a, b)).collect()).collect();
            let rhs = active.iter().map(|a| dot(a, g)).collect();
            let Some(mu) = solve_dense(gram, rhs) else { continue };
            let mut z = g.to_vec();
            for (a, m) in active.iter().zip(&mu) {
                for (zj, aj) in z.iter_mut().zip(a.iter()) {
                    *zj -= m * aj;
                }
            }
            z
        };
        if refs.iter().any(|r| dot(r, &z) < -1e-9) {
            continue;
        }
        let dist: f64 = z.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, z));
        }
    }
    best.expect("the zero vector is always feasible").1
}

fn projection_oracles() -> Verdict {
    let mut rng = SeededRng::seed_from_u64(0xa6e5);
    let (mut passthrough_ok, mut passthrough_n) = (true, 0);
    let mut worst_cos = 0.0f64;
    for i in 0..1000 {
        let dim = rng.random_range(1..=50);
        let g = normal_vec(&mut rng, dim);
        // Every tenth pair is aligned so both branches are exercised.
        let g_ref = if i % 10 == 0 { g.iter().map(|v| 0.5 * v).collect() } else { normal_vec(&mut rng, dim) };
        let p = agem_project(&g, &g_ref).unwrap();
        if dot(&g, &g_ref) >= 0.0 {
            passthrough_n += 1;
            passthrough_ok &= !p.projected && p.g.iter().zip(&g).all(|(a, b)| a.to_bits() == b.to_bits());
        } else {
            // Scaled by the inputs: in one dimension the projection is (numerically) zero.
            let norm = (dot(&g, &g) * dot(&g_ref, &g_ref)).sqrt();
            worst_cos = worst_cos.max(dot(&p.g, &g_ref).abs() / norm);
        }
    }

    let mut worst_gap = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(2..=6);
        let k = rng.random_range(1..=3.min(dim));
        let g = normal_vec(&mut rng, dim);
        let refs: Vec<Vec<f64>> = (0..k).map(|_| normal_vec(&mut rng, dim)).collect();
        let flat: Vec<f64> = refs.iter().flatten().copied().collect();
        let dual = gem_project(&g, &Array2::from_shape_vec((k, dim), flat).unwrap(), QP_TOL, QP_MAX_ITER).unwrap();
        let primal = primal_projection(&g, &refs);
        let gap = dual.g.iter().zip(&primal).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst_gap = worst_gap.max(gap);
    }
    verdict(
        passthrough_ok && worst_cos <= 1e-6 && worst_gap <= 1e-3,
        format!(
            "A-GEM: {passthrough_n} bitwise pass-throughs {}, worst normalized residual {worst_cos:.1e}; \
             GEM vs primal enumeration: max gap {worst_gap:.1e} over 100 instances",
            if passthrough_ok { "exact" } else { "NOT exact" }
        ),
    )
}

// 3 -------------------------------------------------------------------------------------

fn trajectory(method: &MethodSpec, tasks: &[dam_core::data::TaskDataset], params: &NetParams) -> (Array2<f64>, Vec<u64>) {
    let layout = tasks[0].train[0].pattern.layout();
    let mut rng = SeededRng::seed_from_u64(11);
    let mut bank = MemoryBank::random_normal(params.memory_count, layout, params.init_std, &mut rng).unwrap();
    let mut hooks = MethodRegistry::builtin().create(method, 11).unwrap();
    let mut errors = Vec::new();
    for task in tasks {
        hooks.on_task_start(task, &bank).unwrap();
        let log = train_task(task, &mut bank, params, hooks.as_mut(), &mut rng).unwrap();
        errors.extend(log.epochs.iter().map(|e| e.error.to_bits()));
        hooks.on_task_end(task, &bank, params).unwrap();
    }
    (bank.memories().clone(), errors)
}

fn degeneracy() -> Verdict {
    let mut config = desk(0, "vanilla", 2.0, 0.0);
    config.data.tasks = 2;
    config.network.max_epochs = 10;
    let tasks = build_task_sequence(source(), &config.data.sequence()).unwrap();
    let params = &config.network;
    let (base_bank, base_err) = trajectory(&MethodSpec::named("vanilla"), &tasks, params);
    let mut broken = Vec::new();
    for name in ["l2", "ewc", "mas", "si", "rehearsal", "pseudorehearsal", "gem", "agem"] {
        let mut spec = MethodSpec::named(name);
        spec.lambda = 0.0;
        spec.proportion = 0.0;
        let (bank, err) = trajectory(&spec, &tasks, params);
        let same = err == base_err && bank.iter().zip(base_bank.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            broken.push(name);
        }
    }
    verdict(
        broken.is_empty(),
        if broken.is_empty() {
            "8 degenerate methods bit-identical to vanilla over 2 desk tasks x 10 epochs".to_string()
        } else {
            format!("diverged from vanilla: {broken:?}")
        },
    )
}

// 4 -------------------------------------------------------------------------------------

fn fixed_points() -> Verdict {
    let layout = Layout::autoassociative(64);
    let mask: Vec<usize> = (0..64).collect();
    let mut rng = SeededRng::seed_from_u64(0xf1ed);
    let mut failures = 0;
    for &n in &[2.0, 10.0] {
        let params = NetParams { n, ..NetParams::desk() };
        for _ in 0..50 {
            let values: Vec<f64> = (0..64).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let bank = MemoryBank::new(Array2::from_shape_vec((1, 64), values.clone()).unwrap(), layout).unwrap();
            let probe = Pattern::new(layout, values).unwrap();
            let out = relax(&probe, &bank, &params, &mask, 10).unwrap();
            if !(out.converged && out.sweeps == 1 && out.pattern == probe) {
                failures += 1;
            }
        }
    }
    verdict(failures == 0, format!("{} stored patterns, {failures} moved", 100 - failures))
}

// 5 -------------------------------------------------------------------------------------

/// Macro-F1 from raw (label, prediction) pairs, one class at a time.
fn naive_macro_f1(pairs: &[(usize, usize)], classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for &(label, pred) in pairs {
            match (label == c, pred == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        total += if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 };
    }
    total / classes as f64
}

fn metric_oracle() -> Verdict {
    let mut rng = SeededRng::seed_from_u64(0x00f1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let items = rng.random_range(0..400);
        // Sparse label sets leave some classes absent.
        let present = rng.random_range(1..=10);
        let pairs: Vec<(usize, usize)> = (0..items)
            .map(|_| (rng.random_range(0..present), rng.random_range(0..10)))
            .collect();
        let mut m = ConfusionMatrix::new(10);
        for &(label, pred) in &pairs {
            m.record(label, pred);
        }
        if m.macro_f1() != naive_macro_f1(&pairs, 10) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("1000 confusion matrices, {mismatches} mismatches"))
}

// 6-8 -----------------------------------------------------------------------------------

fn forgetting() -> Verdict {
    let runs = vanilla_runs();
    let gaps: Vec<f64> = runs.iter().map(|r| r.mean_just_trained() - r.final_average_accuracy()).collect();
    let wins: Vec<bool> = gaps.iter().map(|&g| g >= 0.15).collect();
    verdict(
        majority(&wins),
        format!(
            "just-trained mean [{}], final average [{}], gap [{}] (>= 0.15 on a majority)",
            fmt(&runs.iter().map(RunRecord::mean_just_trained).collect::<Vec<_>>()),
            fmt(&runs.iter().map(RunRecord::final_average_accuracy).collect::<Vec<_>>()),
            fmt(&gaps)
        ),
    )
}

fn rehearsal_ordering() -> Verdict {
    let vanilla: Vec<f64> = vanilla_runs().iter().map(RunRecord::final_average_accuracy).collect();
    let rehearsal: Vec<f64> = SEEDS
        .iter()
        .map(|&s| run(&desk(s, "rehearsal", 2.0, 1.0)).final_average_accuracy())
        .collect();
    let wins: Vec<bool> = rehearsal.iter().zip(&vanilla).map(|(r, v)| r - v >= 0.2).collect();
    verdict(
        majority(&wins),
        format!("rehearsal 1.0 [{}] vs vanilla [{}] (margin >= 0.2 on a majority)", fmt(&rehearsal), fmt(&vanilla)),
    )
}

fn pseudorehearsal_ordering() -> Verdict {
    let at = |n: f64| -> Vec<f64> {
        SEEDS
            .iter()
            .map(|&s| run(&desk(s, "pseudorehearsal", n, 0.5)).final_average_accuracy())
            .collect()
    };
    let (low, high) = (at(2.0), at(20.0));
    let wins: Vec<bool> = high.iter().zip(&low).map(|(h, l)| h > l).collect();
    verdict(
        majority(&wins),
        format!("pseudorehearsal 0.5: n=20 [{}] vs n=2 [{}] (n=20 ahead on a majority)", fmt(&high), fmt(&low)),
    )
}

// 9 -------------------------------------------------------------------------------------

fn full_scale() -> Verdict {
    let averages: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let mut c = desk(s, "vanilla", 2.0, 0.0);
            c.preset = "full".into();
            c.network = NetParams::full();
            c.data.items_per_task = 10_000;
            run(&c).final_average_accuracy()
        })
        .collect();
    let mean = Array1::from(averages.clone()).mean().unwrap();
    verdict(
        (mean - 0.431).abs() <= 0.05,
        format!("vanilla n=2 full scale [{}], mean {mean:.3} (target 0.431 +- 0.05)", fmt(&averages)),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "gradient oracle", gradient_oracle),
        (2, "projection oracles", projection_oracles),
        (3, "degeneracy equivalences", degeneracy),
        (4, "fixed-point recall", fixed_points),
        (5, "metric oracle", metric_oracle),
        (6, "desk-scale forgetting", forgetting),
        (7, "desk-scale rehearsal ordering", rehearsal_ordering),
        (8, "desk-scale pseudorehearsal ordering", pseudorehearsal_ordering),
        (9, "full-scale reproduction", full_scale),
    ];
    let only: Option<BTreeSet<u32>> = std::env::var("DAM_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let full = std::env::var("DAM_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    // `cargo test -- --list` and friends expect a libtest-style binary; answer them politely.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }

    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        if id == 9 && !full {
            println!("criterion {id} SKIP {name}: overnight job, set DAM_ACCEPTANCE_FULL=1");
            continue;
        }
        let started = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {status} {name}: {} [{:.1}s]", v.detail, started.elapsed().as_secs_f64());
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
