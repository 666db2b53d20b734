//! The budgeted gradual adaptation loop.
//!
//! 1. Train the source model.
//! 2. Repeat: retrain the chain `theta_1..theta_K` on the labeled sets
//!    (each warm-started from its predecessor), re-plan the per-domain query
//!    counts with [`crate::allocation`], then sweep the domains once and buy
//!    at most one label per domain where the plan and budget allow.
//! 3. Stop after a sweep that buys nothing, or when no domain is affordable.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::allocation::{self, FidelityEstimate};
use crate::classifier::{self, Architecture, Classifier, TrainConfig};
use crate::domains::{Budget, DomainSequence, LabeledSet, UnlabeledPool};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdamfConfig {
    pub train: TrainConfig,
    pub budget: f64,
    /// Random queries instead of uncertainty sampling.
    pub disable_uncertainty: bool,
    /// Collapse the sequence to source and target.
    pub disable_intermediates: bool,
    /// Cold-start every model from a seeded random initialization.
    pub disable_warm_start: bool,
    pub probe_count: usize,
    pub probe_seed: u64,
    /// Seed for random query selection when uncertainty is disabled.
    pub query_seed: u64,
}

impl Default for GdamfConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            budget: 0.0,
            disable_uncertainty: false,
            disable_intermediates: false,
            disable_warm_start: false,
            probe_count: allocation::DEFAULT_PROBE_COUNT,
            probe_seed: 0,
            query_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub rho_raw: Vec<f64>,
    pub rho: Vec<f64>,
    pub r: Vec<f64>,
    pub m: Vec<usize>,
    /// Domains (1-based) queried in this sweep.
    pub queried: Vec<usize>,
    pub budget_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdamfResult {
    /// `theta_0..theta_K`.
    pub models: Vec<Classifier>,
    /// Queries bought per domain `1..=K`.
    pub queries: Vec<usize>,
    pub spent: f64,
    pub history: Vec<SweepRecord>,
    /// The sequence after all annotations (collapsed when intermediates are
    /// disabled).
    pub sequence: DomainSequence,
}

impl GdamfResult {
    pub fn labeled_sets(&self) -> Vec<&LabeledSet> {
        (1..=self.sequence.k()).map(|j| self.sequence.labeled(j).expect("valid domain")).collect()
    }

    pub fn target_model(&self) -> &Classifier {
        self.models.last().expect("at least the source model")
    }
}

/// `1 - max_l p_l`.
pub fn uncertainty(c: &Classifier, x: &[f64]) -> Result<f64> {
    let p = c.predict_proba(x)?;
    Ok(1.0 - p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub enum QueryStrategy<'a> {
    Uncertainty,
    Random(&'a mut rng::Rng),
}

/// Pool index to query: the most uncertain sample (ties to the smallest
/// index), or a uniform random index under [`QueryStrategy::Random`].
pub fn select_query(c: &Classifier, pool: &UnlabeledPool, strategy: QueryStrategy<'_>) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    match strategy {
        QueryStrategy::Random(rng) => Ok(rng.random_range(0..pool.len())),
        QueryStrategy::Uncertainty => {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, x) in pool.features().iter().enumerate() {
                let u = uncertainty(c, x)?;
                if u > best.1 {
                    best = (i, u);
                }
            }
            Ok(best.0)
        }
    }
}

fn train_chain(
    seq: &DomainSequence,
    arch: &Architecture,
    source_model: &Classifier,
    cfg: &GdamfConfig,
    sweep: usize,
) -> Result<Vec<Classifier>> {
    let mut models = Vec::with_capacity(seq.k() + 1);
    models.push(source_model.clone());
    for j in 1..=seq.k() {
        let salt = ((sweep as u64) << 32) | j as u64;
        let step_cfg = cfg.train.with_seed(rng::derive(cfg.train.seed, salt));
        let init = (!cfg.disable_warm_start).then(|| models.last().expect("previous model"));
        models.push(classifier::train(arch, seq.labeled(j)?, init, &step_cfg)?);
    }
    Ok(models)
}

/// Runs the full loop on `seq`, which must already hold its initial labels.
pub fn run_gdamf(seq: DomainSequence, arch: &Architecture, cfg: &GdamfConfig) -> Result<GdamfResult> {
    let mut seq = if cfg.disable_intermediates { seq.collapse_to_target() } else { seq };
    let k = seq.k();
    for j in 1..=k {
        if seq.labeled(j)?.is_empty() {
            return Err(Error::InvalidDataset(format!("domain {j} has no initial labels")));
        }
    }
    let mut budget = Budget::new(cfg.budget)?;
    let costs = seq.costs().to_vec();
    let min_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let probes = allocation::sample_probes(&seq, cfg.probe_count, cfg.probe_seed)?;
    let mut query_rng = rng::seeded(cfg.query_seed);

    let source_model = classifier::train(arch, seq.source(), None, &cfg.train)?;
    let mut queries = vec![0usize; k];
    let mut history = Vec::new();

    let mut sweep = 0;
    let models = loop {
        let models = train_chain(&seq, arch, &source_model, cfg, sweep)?;
        let any_pool = (1..=k).any(|j| seq.pool(j).is_ok_and(|p| !p.is_empty()));
        if !budget.can_afford(min_cost) || !any_pool {
            break models;
        }

        let FidelityEstimate { rho, rho_raw, .. } =
            allocation::estimate_correlations(&models[1..], &probes, cfg.probe_seed)?;
        let r = allocation::compute_ratios(&rho, &costs)?;
        let m = allocation::compute_counts(&r, &costs, budget.total())?;

        let mut queried = Vec::new();
        for j in 1..=k {
            let cost = costs[j - 1];
            if queries[j - 1] >= m[j - 1] || !budget.can_afford(cost) || seq.pool(j)?.is_empty() {
                continue;
            }
            let strategy = if cfg.disable_uncertainty { QueryStrategy::Random(&mut query_rng) } else { QueryStrategy::Uncertainty };
            let index = select_query(&models[j], seq.pool(j)?, strategy)?;
            seq.oracle_annotate(j, index)?;
            let charged = budget.charge(cost);
            debug_assert!(charged);
            queries[j - 1] += 1;
            queried.push(j);
        }
        history.push(SweepRecord { sweep, rho_raw, rho, r, m, queried: queried.clone(), budget_remaining: budget.remaining() });
        sweep += 1;
        if queried.is_empty() {
            // nothing changed since the chain was trained
            break models;
        }
    };

    Ok(GdamfResult { models, queries, spent: budget.spent(), history, sequence: seq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{make_rotating_moons, RotatingParams};
    use std::f64::consts::PI;

    #[test]
    fn uncertainty_values() {
        let arch = Architecture::new(1, vec![], 2, 0.0, false).unwrap();
        let certain = Classifier::from_theta(&arch, vec![0.0, 800.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(uncertainty(&certain, &[1.0]).unwrap(), 0.0);
        let flat = Classifier::zeros(&arch).unwrap();
        assert_eq!(uncertainty(&flat, &[1.0]).unwrap(), 0.5);
        let arch4 = Architecture::new(3, vec![2], 4, 0.0, true).unwrap();
        let flat4 = Classifier::zeros(&arch4).unwrap();
        assert!((uncertainty(&flat4, &[1.0, 2.0, 3.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(uncertainty(&flat4, &[1.0]).is_err());
    }

    #[test]
    fn selection_tie_breaks() {
        let arch = Architecture::default_for(2, 2).unwrap();
        let c = Classifier::init(&arch, 3).unwrap();
        let same = UnlabeledPool::new(2, vec![vec![0.3, 0.3]; 4], vec![0; 4]).unwrap();
        assert_eq!(select_query(&c, &same, QueryStrategy::Uncertainty).unwrap(), 0);
        let one = UnlabeledPool::new(2, vec![vec![1.0, -1.0]], vec![1]).unwrap();
        assert_eq!(select_query(&c, &one, QueryStrategy::Uncertainty).unwrap(), 0);
        let empty = UnlabeledPool::new(2, vec![], vec![]).unwrap();
        assert!(matches!(select_query(&c, &empty, QueryStrategy::Uncertainty), Err(Error::EmptyPool)));
    }

    #[test]
    fn boundary_point_is_selected() {
        // logistic model with logits (0, x0): boundary at x0 = 0
        let arch = Architecture::new(2, vec![], 2, 0.0, false).unwrap();
        let c = Classifier::from_theta(&arch, vec![0.0, 0.0, 3.0, 0.0, 0.0, 0.0], 0).unwrap();
        let pool = UnlabeledPool::new(
            2,
            vec![vec![2.0, 0.0], vec![-1.5, 4.0], vec![0.0, -7.0], vec![0.4, 1.0], vec![-3.0, 0.0]],
            vec![1, 0, 0, 1, 0],
        )
        .unwrap();
        assert_eq!(select_query(&c, &pool, QueryStrategy::Uncertainty).unwrap(), 2);
    }

    fn seq(k_intermediate: usize) -> DomainSequence {
        let p = RotatingParams { n_source: 200, n_per_pool: 60, n_eval: 20, k_intermediate, total_angle: PI / 2.0, seed: 3 };
        let mut s = make_rotating_moons(&p, 0.1).unwrap();
        s.draw_initial_labels(4, 1).unwrap();
        s
    }

    fn quick_cfg(budget: f64) -> GdamfConfig {
        GdamfConfig { train: TrainConfig { epochs: 3, ..TrainConfig::default() }, budget, probe_count: 50, ..GdamfConfig::default() }
    }

    #[test]
    fn zero_budget_is_the_supervised_chain() {
        let arch = Architecture::default_for(2, 2).unwrap();
        let s = seq(1);
        let cfg = quick_cfg(0.0);
        let res = run_gdamf(s.clone(), &arch, &cfg).unwrap();
        assert_eq!(res.spent, 0.0);
        assert_eq!(res.queries, vec![0, 0]);
        assert!(res.history.is_empty());
        let chain = train_chain(&s, &arch, &classifier::train(&arch, s.source(), None, &cfg.train).unwrap(), &cfg, 0).unwrap();
        assert_eq!(res.models, chain);
    }

    #[test]
    fn collapsed_run_queries_only_the_target() {
        let arch = Architecture::default_for(2, 2).unwrap();
        let cfg = GdamfConfig { disable_intermediates: true, ..quick_cfg(20.0) };
        let res = run_gdamf(seq(2), &arch, &cfg).unwrap();
        assert_eq!(res.queries.len(), 1);
        assert_eq!(res.models.len(), 2);
        assert!(res.history.iter().all(|h| h.m.len() == 1));
        assert!(res.queries[0] > 0);
        assert!(res.spent <= 20.0);
    }

    #[test]
    fn budget_accounting() {
        let arch = Architecture::default_for(2, 2).unwrap();
        let res = run_gdamf(seq(2), &arch, &quick_cfg(30.0)).unwrap();
        let cost: f64 = res.queries.iter().enumerate().map(|(i, &q)| q as f64 * (i + 1) as f64).sum();
        assert_eq!(cost, res.spent);
        assert!(res.spent <= 30.0);
        assert_eq!(res.sequence.annotation_counts(), res.queries.as_slice());
        for h in &res.history {
            let mut q = h.queried.clone();
            q.dedup();
            assert_eq!(q.len(), h.queried.len());
        }
    }

    #[test]
    fn missing_initial_labels_is_an_error() {
        let p = RotatingParams { n_source: 20, n_per_pool: 5, n_eval: 5, k_intermediate: 0, total_angle: 1.0, seed: 3 };
        let s = make_rotating_moons(&p, 0.1).unwrap();
        let arch = Architecture::default_for(2, 2).unwrap();
        assert!(run_gdamf(s, &arch, &quick_cfg(0.0)).is_err());
    }
}
