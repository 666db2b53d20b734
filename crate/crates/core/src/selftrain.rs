//! Gradual self-training baseline: pseudo-label the next domain with the
//! current model and retrain on those pseudo-labels, domain after domain.

use crate::classifier::{self, Architecture, Classifier, TrainConfig};
use crate::domains::{DomainSequence, LabeledSet, UnlabeledPool};
use crate::error::{Error, Result};
use crate::rng;

const SIMPLEX_TOL: f64 = 1e-4;

/// Arg-max of a probability vector; ties go to the smallest class id.
pub fn sharpen(p: &[f64]) -> Result<usize> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || (sum - 1.0).abs() > SIMPLEX_TOL || p.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::NotASimplex { sum });
    }
    Ok(classifier::argmax(p))
}

/// Pseudo-labels every pool sample with `current` and trains on the result,
/// warm-started from `current`. The pool is left untouched.
pub fn self_train_step(current: &Classifier, next_pool: &UnlabeledPool, cfg: &TrainConfig) -> Result<Classifier> {
    if next_pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let arch = current.arch();
    let labels = next_pool
        .features()
        .iter()
        .map(|x| sharpen(&current.predict_proba(x)?))
        .collect::<Result<Vec<_>>>()?;
    let pseudo = LabeledSet::new(arch.input_dim, arch.num_classes, next_pool.features().to_vec(), labels)?;
    classifier::train(arch, &pseudo, Some(current), cfg)
}

/// Source model followed by one self-training step per domain; returns the
/// `K + 1` models. Each step trains with a seed derived from `cfg.seed` and
/// the domain index.
pub fn gradual_self_train(seq: &DomainSequence, arch: &Architecture, cfg: &TrainConfig) -> Result<Vec<Classifier>> {
    let mut models = Vec::with_capacity(seq.k() + 1);
    models.push(classifier::train(arch, seq.source(), None, cfg)?);
    for j in 1..=seq.k() {
        let step_cfg = cfg.with_seed(rng::derive(cfg.seed, j as u64));
        let next = self_train_step(models.last().expect("source model"), seq.pool(j)?, &step_cfg)?;
        models.push(next);
    }
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{make_rotating_moons, RotatingParams};
    use std::f64::consts::PI;

    #[test]
    fn sharpen_examples() {
        assert_eq!(sharpen(&[0.1, 0.9]).unwrap(), 1);
        assert_eq!(sharpen(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(sharpen(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(), 0);
        assert!(matches!(sharpen(&[0.5, 0.6]), Err(Error::NotASimplex { .. })));
        assert!(sharpen(&[]).is_err());
    }

    fn small_seq(k_intermediate: usize) -> DomainSequence {
        let p = RotatingParams { n_source: 100, n_per_pool: 30, n_eval: 10, k_intermediate, total_angle: PI / 2.0, seed: 2 };
        make_rotating_moons(&p, 0.1).unwrap()
    }

    #[test]
    fn zero_classifier_propagates_class_zero() {
        let seq = small_seq(1);
        let arch = Architecture::default_for(2, 2).unwrap();
        let zero = Classifier::zeros(&arch).unwrap();
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        let next = self_train_step(&zero, seq.pool(1).unwrap(), &cfg).unwrap();
        for x in seq.pool(2).unwrap().features() {
            assert_eq!(next.predict(x).unwrap(), 0);
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let seq = small_seq(1);
        let arch = Architecture::default_for(2, 2).unwrap();
        let current = Classifier::init(&arch, 5).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let next = self_train_step(&current, seq.pool(1).unwrap(), &cfg).unwrap();
        assert_eq!(next.theta(), current.theta());
    }

    #[test]
    fn empty_pool_is_rejected() {
        let arch = Architecture::default_for(2, 2).unwrap();
        let current = Classifier::init(&arch, 5).unwrap();
        let pool = UnlabeledPool::new(2, vec![], vec![]).unwrap();
        assert!(matches!(self_train_step(&current, &pool, &TrainConfig::default()), Err(Error::EmptyPool)));
    }

    #[test]
    fn chain_has_k_plus_one_models() {
        let arch = Architecture::default_for(2, 2).unwrap();
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        assert_eq!(gradual_self_train(&small_seq(0), &arch, &cfg).unwrap().len(), 2);
        assert_eq!(gradual_self_train(&small_seq(3), &arch, &cfg).unwrap().len(), 5);
    }
}
