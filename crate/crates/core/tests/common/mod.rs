//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls the solver or gradient code it is used to check.

#![allow(dead_code)]

use gdamf_core::classifier::{self, Architecture, Classifier};
use gdamf_core::domains::LabeledSet;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum over all `n!` assignments of the largest matched distance.
pub fn brute_force_w_infinity(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn go(i: usize, a: &[Vec<f64>], b: &[Vec<f64>], used: &mut [bool], worst: f64, best: &mut f64) {
        if i == a.len() {
            *best = best.min(worst);
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(i + 1, a, b, used, worst.max(dist(&a[i], &b[j])), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, a, b, &mut vec![false; b.len()], 0.0, &mut best);
    best
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
}

/// A random architecture, a classifier with perturbed parameters and a
/// random batch of at least two rows.
pub fn random_classifier_and_batch(seed: u64) -> (Classifier, LabeledSet) {
    let mut r = rng(seed);
    let input_dim = r.random_range(1..=4);
    let depth = r.random_range(0..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| r.random_range(1..=5)).collect();
    let classes = r.random_range(2..=4);
    let arch = Architecture::new(input_dim, hidden, classes, 0.2, r.random_bool(0.7)).unwrap();
    let base = Classifier::init(&arch, r.random()).unwrap();
    let mask = base.trainable_mask();
    let theta: Vec<f64> = base
        .theta()
        .iter()
        .zip(&mask)
        .map(|(&t, &m)| if m { t + r.random_range(-0.5..0.5) } else { t + r.random_range(0.0..0.5) })
        .collect();
    let c = Classifier::from_theta(&arch, theta, 0).unwrap();
    let n = r.random_range(2..=8);
    let features = random_points(&mut r, n, input_dim);
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    (c, LabeledSet::new(input_dim, classes, features, labels).unwrap())
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_RELATIVE_TOLERANCE: f64 = 1e-4;
/// Floor of the relative-error denominator. A central difference with step
/// 1e-5 carries about 1e-11 of rounding error on an O(1) loss, so smaller
/// components cannot be resolved relatively; with this floor they must still
/// agree to 1e-10 absolutely.
pub const FD_SCALE_FLOOR: f64 = 1e-6;

/// Largest per-coordinate relative error between the analytic gradient and
/// central differences of the batch loss.
pub fn gradient_check(c: &Classifier, batch: &LabeledSet) -> f64 {
    let (_, grad) = classifier::loss_and_gradient(c, batch).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let shifted = |delta: f64| {
            let mut t = c.theta().to_vec();
            t[i] += delta;
            let moved = Classifier::from_theta(c.arch(), t, 0).unwrap();
            classifier::batch_loss(&moved, batch).unwrap()
        };
        let fd = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
        let scale = grad[i].abs().max(fd.abs()).max(FD_SCALE_FLOOR);
        worst = worst.max((grad[i] - fd).abs() / scale);
    }
    worst
}

pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}
