//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test --test acceptance`. The experiment-backed
//! criteria (1, 6, 7, 8, 9) take roughly ten minutes on a single core.

mod common;

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gdamf_core::allocation;
use gdamf_core::harness::{self, DatasetSpec, ExperimentSpec, Method, RunRecord};
use gdamf_core::metrics;
use rand::Rng;

const REPS: usize = 20;
const N_SOURCE: usize = 2000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn moons(k: usize) -> DatasetSpec {
    DatasetSpec::Moons { n_source: N_SOURCE, n_per_pool: 2000, n_eval: 2000, k_intermediate: k, total_angle: FRAC_PI_2, noise: 0.1 }
}

fn gaussians() -> DatasetSpec {
    DatasetSpec::Gaussians {
        n_source: N_SOURCE,
        n_per_pool: 2000,
        n_eval: 2000,
        k_intermediate: 2,
        total_angle: FRAC_PI_2,
        class_separation: 4.0,
    }
}

fn run(dataset: DatasetSpec, method: Method, budgets: Vec<f64>, costs: Option<Vec<f64>>) -> Vec<RunRecord> {
    let mut spec = ExperimentSpec::new(dataset, method);
    spec.repetitions = REPS;
    spec.budgets = budgets;
    spec.costs = costs;
    harness::run_experiment(&spec).expect("experiment runs")
}

fn mean_acc(records: &[RunRecord]) -> f64 {
    common::mean(records.iter().map(|r| r.acc_target))
}

fn at_budget(records: &[RunRecord], budget: f64) -> Vec<RunRecord> {
    records.iter().filter(|r| r.budget == budget).cloned().collect()
}

/// Criterion 1 experiments: self-training at 19 and 1 intermediate domains
/// and the zero-budget query loop at 1 intermediate domain.
struct TwoMoonRuns {
    gst_fine: Vec<RunRecord>,
    gst_coarse: Vec<RunRecord>,
    gdamf_coarse: Vec<RunRecord>,
    elapsed: Duration,
}

fn two_moon_runs() -> TwoMoonRuns {
    let start = Instant::now();
    let gst_fine = run(moons(19), Method::GradualSelfTrain, vec![0.0], None);
    let gst_coarse = run(moons(1), Method::GradualSelfTrain, vec![0.0], None);
    let gdamf_coarse = run(moons(1), Method::Gdamf, vec![0.0], None);
    TwoMoonRuns { gst_fine, gst_coarse, gdamf_coarse, elapsed: start.elapsed() }
}

const SWEEP_COSTS: [f64; 3] = [1.0, 2.0, 3.0];

fn sweep_budgets() -> Vec<f64> {
    let max = harness::default_max_budget(N_SOURCE);
    [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * max).collect()
}

/// Criterion 7 experiments: budget sweep of the query loop and target-only.
struct BudgetSweep {
    gdamf: Vec<RunRecord>,
    target_only: Vec<RunRecord>,
    elapsed: Duration,
}

fn budget_sweep() -> BudgetSweep {
    let start = Instant::now();
    let gdamf = run(gaussians(), Method::Gdamf, sweep_budgets(), Some(SWEEP_COSTS.to_vec()));
    let target_only = run(gaussians(), Method::TargetOnly, sweep_budgets(), Some(SWEEP_COSTS.to_vec()));
    BudgetSweep { gdamf, target_only, elapsed: start.elapsed() }
}

fn criterion_1(runs: &TwoMoonRuns) -> Outcome {
    let fine = mean_acc(&runs.gst_fine);
    let coarse = mean_acc(&runs.gst_coarse);
    let gdamf = mean_acc(&runs.gdamf_coarse);
    let pass = fine - coarse >= 0.15 && gdamf - coarse >= 0.10 && runs.elapsed <= Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "self-training 19 vs 1 intermediate: {fine:.4} vs {coarse:.4} (gap {:.4}, need >= 0.15); query loop at 1: {gdamf:.4} (gap {:.4}, need >= 0.10); {:.0}s (limit 600s)",
            fine - coarse,
            gdamf - coarse,
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let spec = moons(1);
    let ks: Vec<usize> = (1..=19).collect();
    let curve = metrics::adjacent_distance_curve(|k| spec.build(None, 0, Some(k)), &ks, metrics::DEFAULT_SUBSAMPLE, 0)
        .expect("distance curve");
    let first = curve.scaled[0];
    let last = *curve.scaled.last().unwrap();
    outcome(first == 1.0 && last == 0.0, format!("scaled distance at K=1: {first}, at K=19: {last}"))
}

fn criterion_3() -> Outcome {
    let r = allocation::compute_ratios(&[1.0 / SQRT_2], &[1.0, 2.0]).unwrap();
    let m = allocation::compute_counts(&r, &[1.0, 2.0], 100.0).unwrap();
    let worked = (r[0] - SQRT_2).abs() < 1e-12 && r[1] == 1.0 && m == vec![41, 29];

    let mut rng = common::rng(0xa110c);
    let mut violations = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=8);
        let mut costs = Vec::with_capacity(k);
        let mut c = 0.0;
        for _ in 0..k {
            c += rng.random_range(0.01..5.0);
            costs.push(c);
        }
        let mut rho = Vec::with_capacity(k - 1);
        let mut acc: f64 = 0.0;
        for _ in 1..k {
            acc = acc.max(rng.random_range(0.0..=1.0));
            rho.push(acc);
        }
        let budget = rng.random_range(0.0..2000.0);
        let r = allocation::compute_ratios(&rho, &costs).unwrap();
        let m = allocation::compute_counts(&r, &costs, budget).unwrap();
        if allocation::planned_cost(&m, &costs) > budget || r[k - 1] != 1.0 {
            violations += 1;
        }
    }
    outcome(worked && violations == 0, format!("worked example r={r:?} m={m:?}; {violations} violations in 1000 random plans"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let worst = (0..100u64)
        .map(|seed| {
            let (c, batch) = common::random_classifier_and_batch(seed);
            common::gradient_check(&c, &batch)
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst <= common::FD_RELATIVE_TOLERANCE && elapsed <= Duration::from_secs(60),
        format!("max relative error {worst:.2e} over 100 pairs (limit 1e-4); {:.1}s (limit 60s)", elapsed.as_secs_f64()),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = common::rng(0xb0771e);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=7);
        let dim = rng.random_range(1..=3);
        let a = common::random_points(&mut rng, n, dim);
        let b = common::random_points(&mut rng, n, dim);
        if (metrics::w_infinity(&a, &b).unwrap() - common::brute_force_w_infinity(&a, &b)).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    let mut axiom_failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let dim = rng.random_range(1..=3);
        let [a, b, c] = [0, 1, 2].map(|_| common::random_points(&mut rng, n, dim));
        let w = |x: &[Vec<f64>], y: &[Vec<f64>]| metrics::w_infinity(x, y).unwrap();
        let symmetric = w(&a, &b) == w(&b, &a) && w(&b, &c) == w(&c, &b);
        let identity = w(&a, &a) == 0.0 && w(&a, &b) > 0.0;
        let triangle = w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-12;
        if !(symmetric && identity && triangle) {
            axiom_failures += 1;
        }
    }
    outcome(
        mismatches == 0 && axiom_failures == 0,
        format!("{mismatches} brute-force mismatches in 200 instances; {axiom_failures} metric-axiom failures in 200 triples"),
    )
}

fn accuracies(records: &[RunRecord]) -> Vec<(u64, Vec<Option<u64>>)> {
    records
        .iter()
        .map(|r| (r.acc_target.to_bits(), r.acc_domains.iter().map(|a| a.map(f64::to_bits)).collect()))
        .collect()
}

fn criterion_6(two_moon: &TwoMoonRuns, sweep: &BudgetSweep) -> Outcome {
    let first: Vec<&[RunRecord]> =
        vec![&two_moon.gst_fine, &two_moon.gst_coarse, &two_moon.gdamf_coarse, &sweep.gdamf, &sweep.target_only];
    let over_budget = first.iter().flat_map(|rs| rs.iter()).filter(|r| r.spent > r.budget).count();
    let total: usize = first.iter().map(|rs| rs.len()).sum();
    let again = two_moon_runs();
    let again_sweep = budget_sweep();
    let second: Vec<&[RunRecord]> =
        vec![&again.gst_fine, &again.gst_coarse, &again.gdamf_coarse, &again_sweep.gdamf, &again_sweep.target_only];
    let identical = first.iter().zip(&second).all(|(a, b)| accuracies(a) == accuracies(b));
    outcome(
        over_budget == 0 && identical,
        format!("{over_budget} of {total} records over budget; rerun accuracies bit-identical: {identical}"),
    )
}

fn criterion_7(sweep: &BudgetSweep) -> Outcome {
    let budgets = sweep_budgets();
    let mut pass = sweep.elapsed <= Duration::from_secs(1200);
    let mut parts = Vec::new();
    for (i, &b) in budgets.iter().enumerate() {
        let g = mean_acc(&at_budget(&sweep.gdamf, b));
        let t = mean_acc(&at_budget(&sweep.target_only, b));
        let need = if i == 0 { 0.03 } else { 0.0 };
        pass &= g - t >= need;
        parts.push(format!("B={b}: {g:.4} vs {t:.4} (need +{need})"));
    }
    outcome(pass, format!("query loop vs target-only: {}; {:.0}s (limit 1200s)", parts.join(", "), sweep.elapsed.as_secs_f64()))
}

struct AblationRuns {
    full: Vec<RunRecord>,
    no_al_no_intermediate: Vec<RunRecord>,
    no_warm_start: Vec<RunRecord>,
}

fn ablation_runs() -> AblationRuns {
    let b = vec![harness::default_max_budget(N_SOURCE)];
    AblationRuns {
        full: run(moons(1), Method::Gdamf, b.clone(), None),
        no_al_no_intermediate: run(moons(1), Method::GdamfNoAlNoIntermediate, b.clone(), None),
        no_warm_start: run(moons(1), Method::GdamfNoWarmStart, b, None),
    }
}

fn criterion_8(runs: &AblationRuns) -> Outcome {
    let full = mean_acc(&runs.full);
    let plain = mean_acc(&runs.no_al_no_intermediate);
    let cold = mean_acc(&runs.no_warm_start);
    outcome(
        full >= plain + 0.03 && full >= cold + 0.03,
        format!("full {full:.4}; without AL and intermediates {plain:.4}; without warm start {cold:.4} (need full >= each + 0.03)"),
    )
}

fn criterion_9(runs: &AblationRuns) -> Outcome {
    // two-moons with one intermediate domain uses index costs (1, 2)
    let costs = [1.0, 2.0];
    let share = |rs: &[RunRecord]| common::mean(rs.iter().map(|r| r.target_cost_fraction(&costs)));
    let full = share(&runs.full);
    let cold = share(&runs.no_warm_start);
    outcome(cold > full, format!("target share of spent cost: without warm start {cold:.4}, full {full:.4} (need strictly larger)"))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };

    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    let two_moon = two_moon_runs();
    report(1, criterion_1(&two_moon));
    let sweep = budget_sweep();
    report(7, criterion_7(&sweep));
    let ablation = ablation_runs();
    report(8, criterion_8(&ablation));
    report(9, criterion_9(&ablation));
    report(6, criterion_6(&two_moon, &sweep));

    results.sort_by_key(|(n, _)| *n);
    println!();
    for (n, o) in &results {
        println!("criterion {n}: {}", if o.pass { "PASS" } else { "FAIL" });
    }
    if results.iter().all(|(_, o)| o.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
