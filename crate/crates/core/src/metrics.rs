//! Accuracy and domain distances.
//!
//! The domain distance is the maximum over classes of the Wasserstein-infinity
//! distance between the class-conditional samples. For two equal-size point
//! sets that distance is the bottleneck assignment value, solved exactly here
//! by binary search over the sorted pairwise distances with a Hopcroft-Karp
//! perfect-matching test on each threshold graph.

use std::collections::VecDeque;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::domains::{DomainSequence, LabeledSet};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_SUBSAMPLE: usize = 200;

pub fn accuracy(c: &Classifier, eval: &LabeledSet) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let mut hits = 0usize;
    for (x, y) in eval.iter() {
        if c.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / eval.len() as f64)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Size of a maximum matching in the bipartite graph `adj` (left vertex `u`
/// is adjacent to the right vertices `adj[u]`).
pub fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> usize {
    const NIL: usize = usize::MAX;
    let n_left = adj.len();
    let mut match_l = vec![NIL; n_left];
    let mut match_r = vec![NIL; n_right];
    let mut dist = vec![0usize; n_left];
    let mut size = 0;

    loop {
        // BFS layers from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            return size;
        }

        // DFS along layers, iterative to keep deep graphs off the stack
        let mut it = vec![0usize; n_left];
        for root in 0..n_left {
            if match_l[root] != NIL {
                continue;
            }
            let mut path: Vec<usize> = vec![root];
            while let Some(&u) = path.last() {
                if it[u] == adj[u].len() {
                    dist[u] = usize::MAX;
                    path.pop();
                    continue;
                }
                let v = adj[u][it[u]];
                it[u] += 1;
                let w = match_r[v];
                if w == NIL {
                    // augment along the path
                    let mut right = v;
                    for &left in path.iter().rev() {
                        let prev = match_l[left];
                        match_l[left] = right;
                        match_r[right] = left;
                        right = prev;
                    }
                    size += 1;
                    break;
                } else if dist[w] == dist[u] + 1 {
                    path.push(w);
                }
            }
        }
    }
}

fn has_perfect_matching(dist: &[Vec<f64>], threshold: f64) -> bool {
    let n = dist.len();
    let adj: Vec<Vec<usize>> =
        dist.iter().map(|row| (0..n).filter(|&j| row[j] <= threshold).collect()).collect();
    if adj.iter().any(Vec::is_empty) {
        return false;
    }
    hopcroft_karp(&adj, n) == n
}

/// Exact bottleneck-matching value between two equal-size point sets: the
/// smallest `t` such that some perfect matching uses only pairs at distance
/// `<= t`. The result is always one of the pairwise distances.
pub fn w_infinity(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let dist: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| euclidean(x, y)).collect()).collect();
    let mut candidates: Vec<f64> = dist.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // the bottleneck is at least the largest row/column minimum
    let row_min = dist.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min));
    let col_min = (0..b.len()).map(|j| dist.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min));
    let lower = row_min.chain(col_min).fold(0.0, f64::max);
    let mut lo = candidates.partition_point(|&d| d < lower);
    let mut hi = candidates.len() - 1;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if has_perfect_matching(&dist, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

fn subsample(rows: &[&[f64]], n: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    if rows.len() <= n {
        return rows.iter().map(|r| r.to_vec()).collect();
    }
    let mut picked = index::sample(rng, rows.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| rows[i].to_vec()).collect()
}

/// Maximum over classes of the W-infinity distance between the class
/// samples of `a` and `b`. Each class is subsampled (seeded, without
/// replacement) to `min(subsample_n, |a_l|, |b_l|)` points per side.
pub fn max_per_class_w_infinity(a: &LabeledSet, b: &LabeledSet, subsample_n: usize, seed: u64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let classes = a.num_classes().max(b.num_classes());
    let mut rng = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for class in 0..classes {
        let (ra, rb) = (a.class_rows(class), b.class_rows(class));
        if ra.is_empty() {
            return Err(Error::MissingClass { class, side: "first" });
        }
        if rb.is_empty() {
            return Err(Error::MissingClass { class, side: "second" });
        }
        let n = subsample_n.min(ra.len()).min(rb.len()).max(1);
        let sa = subsample(&ra, n, &mut rng);
        let sb = subsample(&rb, n, &mut rng);
        worst = worst.max(w_infinity(&sa, &sb)?);
    }
    Ok(worst)
}

/// Mean max-per-class W-infinity distance over adjacent domains `j, j+1`,
/// computed on the ground truth of each domain.
pub fn mean_adjacent_distance(seq: &DomainSequence, subsample_n: usize, seed: u64) -> Result<f64> {
    let domains = (0..=seq.k()).map(|j| seq.ground_truth(j)).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (j, pair) in domains.windows(2).enumerate() {
        total += max_per_class_w_infinity(&pair[0], &pair[1], subsample_n, rng::derive(seed, j as u64))?;
    }
    Ok(total / seq.k() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub ks: Vec<usize>,
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
}

/// `(v - min) / (max - min)`, or all zeros when the values are all equal.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// For each number of intermediate domains in `k_list`, builds the sequence
/// and records its mean adjacent distance; the curve is then min-max scaled.
pub fn adjacent_distance_curve<F>(mut build: F, k_list: &[usize], subsample_n: usize, seed: u64) -> Result<DistanceCurve>
where
    F: FnMut(usize) -> Result<DomainSequence>,
{
    if k_list.is_empty() {
        return Err(Error::EmptyInput("K list"));
    }
    let raw = k_list
        .iter()
        .map(|&k| mean_adjacent_distance(&build(k)?, subsample_n, seed))
        .collect::<Result<Vec<_>>>()?;
    let scaled = min_max_scale(&raw);
    Ok(DistanceCurve { ks: k_list.to_vec(), raw, scaled })
}

impl DistanceCurve {
    /// CSV with header `K,raw_mean,scaled`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,raw_mean,scaled\n");
        for ((k, r), s) in self.ks.iter().zip(&self.raw).zip(&self.scaled) {
            out.push_str(&format!("{k},{r},{s}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Architecture;

    #[test]
    fn accuracy_examples() {
        let arch = Architecture::default_for(1, 2).unwrap();
        let zero = Classifier::zeros(&arch).unwrap();
        let eval = LabeledSet::new(1, 2, vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 0, 1]).unwrap();
        assert_eq!(accuracy(&zero, &eval).unwrap(), 0.5);
        assert!(accuracy(&zero, &LabeledSet::empty(1, 2)).is_err());
    }

    #[test]
    fn trivial_distances() {
        let a = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![-1.0, 0.5]];
        assert_eq!(w_infinity(&a, &a).unwrap(), 0.0);
        assert_eq!(w_infinity(&[vec![0.0]], &[vec![3.0]]).unwrap(), 3.0);
        assert!(matches!(w_infinity(&a, &a[..2]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn crossing_assignment() {
        // greedy nearest pairing is worse than the optimal swap
        let a = vec![vec![0.0], vec![1.0]];
        let b = vec![vec![1.1], vec![2.5]];
        assert!((w_infinity(&a, &b).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn matching_sizes() {
        let adj = vec![vec![0, 1], vec![0], vec![1, 2], vec![2]];
        assert_eq!(hopcroft_karp(&adj, 3), 3);
        assert_eq!(hopcroft_karp(&[vec![0], vec![0]], 1), 1);
        assert_eq!(hopcroft_karp(&[], 0), 0);
    }

    #[test]
    fn scaling() {
        assert_eq!(min_max_scale(&[3.0]), vec![0.0]);
        assert_eq!(min_max_scale(&[4.0, 2.0, 3.0]), vec![1.0, 0.0, 0.5]);
        assert_eq!(min_max_scale(&[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn missing_class_names_the_class() {
        let a = LabeledSet::new(1, 2, vec![vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
        let b = LabeledSet::new(1, 2, vec![vec![0.0], vec![1.0]], vec![0, 0]).unwrap();
        let err = max_per_class_w_infinity(&a, &b, 10, 0).unwrap_err();
        assert_eq!(err.to_string(), "class 1 missing from second domain");
    }

    #[test]
    fn curve_csv() {
        let curve = DistanceCurve { ks: vec![1, 2], raw: vec![0.5, 0.25], scaled: vec![1.0, 0.0] };
        assert_eq!(curve.to_csv(), "K,raw_mean,scaled\n1,0.5,1\n2,0.25,0\n");
    }
}
