//! Domain sequence data model: labeled sets, unlabeled pools with a hidden
//! label oracle, the budget, synthetic rotating generators and CSV ingestion.
//!
//! Class ids are zero-based (`0..num_classes`). Domain indices follow the
//! usual convention: `0` is the source, `1..=K` are the stages that own an
//! unlabeled pool, and `K` is the target.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    dim: usize,
    num_classes: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(
        dim: usize,
        num_classes: usize,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        for row in &features {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self { dim, num_classes, features, labels })
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self { dim, num_classes, features: Vec::new(), labels: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    /// Appends one sample. The caller guarantees dimension and label range.
    pub(crate) fn push(&mut self, x: Vec<f64>, y: usize) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert!(y < self.num_classes);
        self.features.push(x);
        self.labels.push(y);
    }

    /// Rows whose label equals `class`.
    pub fn class_rows(&self, class: usize) -> Vec<&[f64]> {
        self.iter().filter(|&(_, y)| y == class).map(|(x, _)| x).collect()
    }

    /// Subset by row indices, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            dim: self.dim,
            num_classes: self.num_classes,
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn concat(&self, other: &LabeledSet) -> Self {
        let mut out = self.clone();
        out.features.extend(other.features.iter().cloned());
        out.labels.extend_from_slice(&other.labels);
        out
    }
}

/// Unlabeled samples of one domain. Learners see only the features; the
/// ground-truth labels are released one at a time through
/// [`DomainSequence::oracle_annotate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledPool {
    dim: usize,
    features: Vec<Vec<f64>>,
    hidden_labels: Vec<usize>,
}

impl UnlabeledPool {
    pub fn new(dim: usize, features: Vec<Vec<f64>>, hidden_labels: Vec<usize>) -> Result<Self> {
        if features.len() != hidden_labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} pool rows but {} hidden labels",
                features.len(),
                hidden_labels.len()
            )));
        }
        if let Some(row) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
        }
        Ok(Self { dim, features, hidden_labels })
    }

    fn from_labeled(set: LabeledSet) -> Self {
        Self { dim: set.dim, features: set.features, hidden_labels: set.labels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    fn take(&mut self, i: usize) -> (Vec<f64>, usize) {
        (self.features.remove(i), self.hidden_labels.remove(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub pool: UnlabeledPool,
    pub labeled: LabeledSet,
}

/// Annotation budget. `spent` never exceeds `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    total: f64,
    spent: f64,
}

impl Budget {
    pub fn new(total: f64) -> Result<Self> {
        if !total.is_finite() || total < 0.0 {
            return Err(Error::InvalidSpec(format!("budget must be a finite nonnegative number, got {total}")));
        }
        Ok(Self { total, spent: 0.0 })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }

    /// Guard used by the query loop: a query of `cost` is allowed only while
    /// the remaining budget is strictly larger than it.
    pub fn can_afford(&self, cost: f64) -> bool {
        self.remaining() > cost
    }

    /// Charges `cost`, refusing anything that would overspend.
    pub fn charge(&mut self, cost: f64) -> bool {
        if self.spent + cost > self.total {
            return false;
        }
        self.spent += cost;
        true
    }
}

/// Ordered domains `0..=K` with per-stage query costs and a held-out
/// evaluation set from the target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSequence {
    source: LabeledSet,
    stages: Vec<Stage>,
    costs: Vec<f64>,
    eval_set: LabeledSet,
    annotations: Vec<usize>,
}

fn check_costs(costs: &[f64], k: usize) -> Result<()> {
    if costs.len() != k {
        return Err(Error::CostLengthMismatch { expected: k, got: costs.len() });
    }
    let positive = costs.iter().all(|&c| c > 0.0 && c.is_finite());
    let increasing = costs.windows(2).all(|w| w[0] < w[1]);
    if !positive || !increasing {
        return Err(Error::NonIncreasingCosts(costs.to_vec()));
    }
    Ok(())
}

/// Costs equal to the domain index, `c^(j) = j`.
pub fn index_costs(k: usize) -> Vec<f64> {
    (1..=k).map(|j| j as f64).collect()
}

impl DomainSequence {
    pub fn new(
        source: LabeledSet,
        stages: Vec<Stage>,
        costs: Vec<f64>,
        eval_set: LabeledSet,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidDataset("a sequence needs at least a target stage".into()));
        }
        check_costs(&costs, stages.len())?;
        let (dim, l) = (source.dim(), source.num_classes());
        for stage in &stages {
            if stage.pool.dim() != dim || stage.labeled.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: stage.pool.dim() });
            }
            if stage.labeled.num_classes() != l {
                return Err(Error::InvalidDataset("stages disagree on num_classes".into()));
            }
            if let Some(&label) = stage.pool.hidden_labels.iter().find(|&&y| y >= l) {
                return Err(Error::LabelOutOfRange { label, num_classes: l });
            }
        }
        if eval_set.dim() != dim || eval_set.num_classes() != l {
            return Err(Error::InvalidDataset("eval set disagrees with source shape".into()));
        }
        let k = stages.len();
        Ok(Self { source, stages, costs, eval_set, annotations: vec![0; k] })
    }

    /// Number of non-source domains; the target has index `k()`.
    pub fn k(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.source.num_classes()
    }

    pub fn source(&self) -> &LabeledSet {
        &self.source
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Cost of querying domain `j` (1-based).
    pub fn cost(&self, j: usize) -> f64 {
        self.costs[j - 1]
    }

    pub fn eval_set(&self) -> &LabeledSet {
        &self.eval_set
    }

    fn stage_index(&self, j: usize) -> Result<usize> {
        if j == 0 {
            return Err(Error::SourceHasNoPool);
        }
        if j > self.k() {
            return Err(Error::DomainOutOfRange { domain: j, k: self.k() });
        }
        Ok(j - 1)
    }

    pub fn pool(&self, j: usize) -> Result<&UnlabeledPool> {
        Ok(&self.stages[self.stage_index(j)?].pool)
    }

    /// Labeled set of domain `j`; `j = 0` is the source.
    pub fn labeled(&self, j: usize) -> Result<&LabeledSet> {
        if j == 0 {
            return Ok(&self.source);
        }
        Ok(&self.stages[self.stage_index(j)?].labeled)
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Oracle calls served so far, per domain `1..=K`.
    pub fn annotation_counts(&self) -> &[usize] {
        &self.annotations
    }

    /// Reveals the label of pool sample `index` in domain `j` and moves the
    /// sample from the pool to the labeled set.
    pub fn oracle_annotate(&mut self, j: usize, index: usize) -> Result<usize> {
        let s = self.stage_index(j)?;
        let stage = &mut self.stages[s];
        if index >= stage.pool.len() {
            return Err(Error::PoolIndexOutOfRange { domain: j, index, size: stage.pool.len() });
        }
        let (x, y) = stage.pool.take(index);
        stage.labeled.push(x, y);
        self.annotations[s] += 1;
        Ok(y)
    }

    /// Moves `count` uniformly chosen pool samples into the labeled set of
    /// every stage. These labels are free and are not counted as queries.
    pub fn draw_initial_labels(&mut self, count: usize, seed: u64) -> Result<()> {
        for (s, stage) in self.stages.iter().enumerate() {
            if stage.pool.len() < count {
                return Err(Error::PoolTooSmall {
                    domain: s + 1,
                    requested: count,
                    available: stage.pool.len(),
                });
            }
        }
        if count == 0 {
            return Ok(());
        }
        let mut rng = rng::seeded(seed);
        for stage in &mut self.stages {
            let chosen = index::sample(&mut rng, stage.pool.len(), count).into_vec();
            // Remove from the back so earlier indices stay valid, then restore
            // the sampled order for the labeled set.
            let mut order: Vec<usize> = (0..count).collect();
            order.sort_by(|&a, &b| chosen[b].cmp(&chosen[a]));
            let mut taken = vec![(Vec::new(), 0); count];
            for &o in &order {
                taken[o] = stage.pool.take(chosen[o]);
            }
            for (x, y) in taken {
                stage.labeled.push(x, y);
            }
        }
        Ok(())
    }

    /// Ground-truth view of domain `j`: labeled samples followed by the pool
    /// with its hidden labels; `j = 0` returns the source. For analysis and
    /// reporting only; learners must never call this.
    pub fn ground_truth(&self, j: usize) -> Result<LabeledSet> {
        if j == 0 {
            return Ok(self.source.clone());
        }
        let stage = &self.stages[self.stage_index(j)?];
        let pool = LabeledSet {
            dim: stage.pool.dim,
            num_classes: self.num_classes(),
            features: stage.pool.features.clone(),
            labels: stage.pool.hidden_labels.clone(),
        };
        Ok(stage.labeled.concat(&pool))
    }

    /// The source plus the target stage only, keeping the target's cost.
    pub fn collapse_to_target(&self) -> DomainSequence {
        let k = self.k();
        DomainSequence {
            source: self.source.clone(),
            stages: vec![self.stages[k - 1].clone()],
            costs: vec![self.costs[k - 1]],
            eval_set: self.eval_set.clone(),
            annotations: vec![self.annotations[k - 1]],
        }
    }

    /// Every observed feature row (source, pools and labeled sets), excluding
    /// the evaluation set.
    pub fn observed_features(&self) -> impl Iterator<Item = &[f64]> {
        self.source.features.iter().map(Vec::as_slice).chain(self.stages.iter().flat_map(|s| {
            s.labeled.features.iter().chain(s.pool.features.iter()).map(Vec::as_slice)
        }))
    }
}

fn rotate(point: [f64; 2], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    vec![point[0] * c - point[1] * s, point[0] * s + point[1] * c]
}

fn validate_counts(counts: &[(&str, usize)]) -> Result<()> {
    for (name, n) in counts {
        if *n == 0 {
            return Err(Error::InvalidDataset(format!("{name} must be at least 1")));
        }
    }
    Ok(())
}

/// Rotation angle of domain `j` out of `k_intermediate + 1` equal steps.
pub fn stage_angle(j: usize, k_intermediate: usize, total_angle: f64) -> f64 {
    j as f64 * total_angle / (k_intermediate + 1) as f64
}

/// Parameters shared by the rotating generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatingParams {
    pub n_source: usize,
    pub n_per_pool: usize,
    pub n_eval: usize,
    pub k_intermediate: usize,
    pub total_angle: f64,
    pub seed: u64,
}

fn rotating_sequence(
    p: &RotatingParams,
    mut sample: impl FnMut(&mut rng::Rng, usize) -> [f64; 2],
) -> Result<DomainSequence> {
    validate_counts(&[("n_source", p.n_source), ("n_per_pool", p.n_per_pool), ("n_eval", p.n_eval)])?;
    if !p.total_angle.is_finite() {
        return Err(Error::InvalidDataset("total_angle must be finite".into()));
    }
    let mut rng = rng::seeded(p.seed);
    let mut draw = |n: usize, angle: f64, rng: &mut rng::Rng| -> LabeledSet {
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let features = labels.iter().map(|&y| rotate(sample(rng, y), angle)).collect();
        LabeledSet { dim: 2, num_classes: 2, features, labels }
    };
    let source = draw(p.n_source, 0.0, &mut rng);
    let k = p.k_intermediate + 1;
    let stages = (1..=k)
        .map(|j| {
            let angle = stage_angle(j, p.k_intermediate, p.total_angle);
            Stage {
                pool: UnlabeledPool::from_labeled(draw(p.n_per_pool, angle, &mut rng)),
                labeled: LabeledSet::empty(2, 2),
            }
        })
        .collect();
    let eval_set = draw(p.n_eval, p.total_angle, &mut rng);
    DomainSequence::new(source, stages, index_costs(k), eval_set)
}

/// Two interleaving half circles (radius 1, second moon shifted by (1, -0.5))
/// with Gaussian noise, rotated about the origin. Domain `j` is rotated by
/// `j * total_angle / (k_intermediate + 1)`; the evaluation set is drawn from
/// the target rotation. Classes alternate so every set is balanced.
pub fn make_rotating_moons(p: &RotatingParams, noise: f64) -> Result<DomainSequence> {
    if noise.is_nan() || noise < 0.0 {
        return Err(Error::InvalidDataset("noise must be nonnegative".into()));
    }
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite sigma");
    rotating_sequence(p, |rng, y| {
        let t = rng.random::<f64>() * PI;
        let (s, c) = t.sin_cos();
        let base = if y == 0 { [c, s] } else { [1.0 - c, 0.5 - s] };
        [base[0] + normal.sample(rng), base[1] + normal.sample(rng)]
    })
}

/// Two unit-variance isotropic Gaussian clusters centred at
/// `(-sep/2, 0)` and `(sep/2, 0)`, rotated like [`make_rotating_moons`].
pub fn make_rotating_gaussians(p: &RotatingParams, class_separation: f64) -> Result<DomainSequence> {
    if !class_separation.is_finite() || class_separation < 0.0 {
        return Err(Error::InvalidDataset("class_separation must be finite and nonnegative".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit sigma");
    let half = class_separation / 2.0;
    rotating_sequence(p, |rng, y| {
        let cx = if y == 0 { -half } else { half };
        [cx + normal.sample(rng), normal.sample(rng)]
    })
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let err = |message: String| Error::Csv { path: path.display().to_string(), message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(format!("ragged or unreadable row: {e}")))?;
        rows.push(record.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok(RawTable { header, rows })
}

/// Builds a sequence from ordered CSV files: first file is the labeled
/// source, last file is the target (split into pool and evaluation set),
/// files in between are intermediate pools. Features are standardized per
/// column with the source mean and standard deviation. Class labels are
/// mapped to ids in lexicographic order of their string values.
pub fn load_csv_sequence<P: AsRef<Path>>(
    paths: &[P],
    label_column: &str,
    costs: Option<Vec<f64>>,
    eval_fraction: f64,
    seed: u64,
) -> Result<DomainSequence> {
    if paths.len() < 2 {
        return Err(Error::InvalidDataset("need at least a source and a target file".into()));
    }
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::InvalidDataset(format!("eval_fraction must be in (0, 1), got {eval_fraction}")));
    }
    let k = paths.len() - 1;
    let costs = costs.unwrap_or_else(|| index_costs(k));
    check_costs(&costs, k)?;

    let tables = paths.iter().map(|p| read_table(p.as_ref())).collect::<Result<Vec<_>>>()?;
    let header = &tables[0].header;
    let label_idx = header.iter().position(|h| h == label_column).ok_or_else(|| Error::Csv {
        path: paths[0].as_ref().display().to_string(),
        message: format!("unknown label column '{label_column}'"),
    })?;
    for (t, p) in tables.iter().zip(paths) {
        if &t.header != header {
            return Err(Error::Csv {
                path: p.as_ref().display().to_string(),
                message: "columns differ from the source file".into(),
            });
        }
    }

    let classes: BTreeSet<&str> =
        tables.iter().flat_map(|t| t.rows.iter().map(|r| r[label_idx].as_str())).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidDataset("label column needs at least two classes".into()));
    }
    let class_id: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let num_classes = classes.len();
    let dim = header.len() - 1;
    if dim == 0 {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }

    let mut sets = Vec::with_capacity(tables.len());
    for (t, p) in tables.iter().zip(paths) {
        let mut features = Vec::with_capacity(t.rows.len());
        let mut labels = Vec::with_capacity(t.rows.len());
        for (r, row) in t.rows.iter().enumerate() {
            let mut x = Vec::with_capacity(dim);
            for (c, field) in row.iter().enumerate() {
                if c == label_idx {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| Error::Csv {
                    path: p.as_ref().display().to_string(),
                    message: format!("non-numeric value '{field}' in column '{}' at row {}", header[c], r + 1),
                })?;
                x.push(v);
            }
            features.push(x);
            labels.push(class_id[row[label_idx].as_str()]);
        }
        if features.is_empty() {
            return Err(Error::Csv { path: p.as_ref().display().to_string(), message: "no data rows".into() });
        }
        sets.push(LabeledSet { dim, num_classes, features, labels });
    }

    let n0 = sets[0].len() as f64;
    let mean: Vec<f64> = (0..dim).map(|c| sets[0].features.iter().map(|x| x[c]).sum::<f64>() / n0).collect();
    let std: Vec<f64> = (0..dim)
        .map(|c| {
            let var = sets[0].features.iter().map(|x| (x[c] - mean[c]).powi(2)).sum::<f64>() / n0;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    for set in &mut sets {
        for x in &mut set.features {
            for c in 0..dim {
                x[c] = (x[c] - mean[c]) / std[c];
            }
        }
    }

    let target = sets.pop().expect("at least two sets");
    let n_eval = (target.len() as f64 * eval_fraction).round() as usize;
    if n_eval == 0 || n_eval >= target.len() {
        return Err(Error::InvalidDataset(format!(
            "eval_fraction {eval_fraction} leaves an empty pool or eval split for {} target rows",
            target.len()
        )));
    }
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut eval_rows = order[..n_eval].to_vec();
    let mut pool_rows = order[n_eval..].to_vec();
    eval_rows.sort_unstable();
    pool_rows.sort_unstable();

    let mut sets = sets.into_iter();
    let source = sets.next().expect("source set");
    let mut stages: Vec<Stage> = sets
        .map(|s| Stage { pool: UnlabeledPool::from_labeled(s), labeled: LabeledSet::empty(dim, num_classes) })
        .collect();
    stages.push(Stage {
        pool: UnlabeledPool::from_labeled(target.select(&pool_rows)),
        labeled: LabeledSet::empty(dim, num_classes),
    });
    DomainSequence::new(source, stages, costs, target.select(&eval_rows))
}

/// `ceil(n / 100)`: default number of free initial labels per domain.
pub fn default_initial_count(n_source: usize) -> usize {
    n_source.div_ceil(100)
}
