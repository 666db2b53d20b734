//! Multifidelity budget allocation across domains.
//!
//! Each intermediate model is treated as a cheaper, lower-fidelity surrogate
//! of the target model. Its fidelity `rho_s` is the correlation between its
//! probability outputs and the target model's on random probe inputs. The
//! ratio of queries from domain `s` to queries from the target is
//!
//! ```text
//! r_s = sqrt( c_K (rho_s^2 - rho_{s-1}^2) / (c_s (1 - rho_{K-1}^2)) ),  rho_0 = 0,  r_K = 1
//! ```
//!
//! and the budget fixes the scale: `m~_K = B / (r . c)`, `m~_s = r_s m~_K`,
//! `m = floor(m~)`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::domains::DomainSequence;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_PROBE_COUNT: usize = 1000;
const DENOMINATOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    /// Correlations `rho_1..rho_{K-1}` after clamping to `[0, 1]` and the
    /// cumulative maximum.
    pub rho: Vec<f64>,
    /// Clamped correlations before the cumulative maximum.
    pub rho_raw: Vec<f64>,
    pub probe_count: usize,
    pub probe_seed: u64,
}

/// Probe inputs drawn uniformly, coordinate by coordinate, from the observed
/// range of every feature over the source, pools and labeled sets.
pub fn sample_probes(seq: &DomainSequence, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 probes, got {count}")));
    }
    let dim = seq.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in seq.observed_features() {
        for c in 0..dim {
            lo[c] = lo[c].min(x[c]);
            hi[c] = hi[c].max(x[c]);
        }
    }
    let mut rng = rng::seeded(seed);
    Ok((0..count)
        .map(|_| {
            (0..dim)
                .map(|c| if hi[c] > lo[c] { rng.random_range(lo[c]..=hi[c]) } else { lo[c] })
                .collect()
        })
        .collect())
}

/// Pearson correlation; zero when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

fn flat_outputs(model: &Classifier, probes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(probes.len() * model.arch().num_classes);
    for u in probes {
        out.extend(model.predict_proba(u)?);
    }
    Ok(out)
}

/// Fidelities of `models[0..K-1]` (domains `1..K-1`) against `models[K-1]`
/// (the target), each a Pearson correlation over all `N_u * L` flattened
/// probability entries.
pub fn estimate_correlations(models: &[Classifier], probes: &[Vec<f64>], probe_seed: u64) -> Result<FidelityEstimate> {
    if probes.len() < 2 {
        return Err(Error::InvalidSpec("need at least 2 probes".into()));
    }
    let target = models.last().ok_or(Error::EmptyInput("models"))?;
    if models.iter().any(|m| m.arch() != target.arch()) {
        return Err(Error::ArchitectureMismatch);
    }
    let target_out = flat_outputs(target, probes)?;
    let rho_raw = models[..models.len() - 1]
        .iter()
        .map(|m| Ok(pearson(&flat_outputs(m, probes)?, &target_out).clamp(0.0, 1.0)))
        .collect::<Result<Vec<f64>>>()?;
    let rho = rho_raw
        .iter()
        .scan(0.0f64, |acc, &r| {
            *acc = acc.max(r);
            Some(*acc)
        })
        .collect();
    Ok(FidelityEstimate { rho, rho_raw, probe_count: probes.len(), probe_seed })
}

/// Query ratios `r_1..r_K` relative to the target.
pub fn compute_ratios(rho: &[f64], costs: &[f64]) -> Result<Vec<f64>> {
    let k = costs.len();
    if k == 0 || rho.len() + 1 != k {
        return Err(Error::CostLengthMismatch { expected: rho.len() + 1, got: k });
    }
    let c_target = costs[k - 1];
    let rho_last = if k >= 2 { rho[k - 2] } else { 0.0 };
    let mut denom_factor = 1.0 - rho_last * rho_last;
    if rho_last > 1.0 - DENOMINATOR_FLOOR {
        denom_factor = DENOMINATOR_FLOOR;
    }
    let mut r = Vec::with_capacity(k);
    let mut prev = 0.0;
    for s in 0..k - 1 {
        let gain = (rho[s] * rho[s] - prev * prev).max(0.0);
        r.push((c_target * gain / (costs[s] * denom_factor)).sqrt());
        prev = rho[s];
    }
    r.push(1.0);
    Ok(r)
}

/// Real-valued query counts `m~` before flooring.
pub fn fractional_counts(r: &[f64], costs: &[f64], budget: f64) -> Result<Vec<f64>> {
    if r.len() != costs.len() {
        return Err(Error::CostLengthMismatch { expected: r.len(), got: costs.len() });
    }
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::InvalidSpec(format!("budget must be nonnegative, got {budget}")));
    }
    let unit: f64 = r.iter().zip(costs).map(|(r, c)| r * c).sum();
    if !unit.is_finite() || unit <= 0.0 {
        return Err(Error::NoUsableFidelity);
    }
    let m_target = budget / unit;
    Ok(r.iter().map(|r| r * m_target).collect())
}

/// Integer query counts `floor(m~)`. If float rounding ever lets the floored
/// plan exceed the budget, the most expensive nonzero count is lowered until
/// the plan fits.
pub fn compute_counts(r: &[f64], costs: &[f64], budget: f64) -> Result<Vec<usize>> {
    let mut m: Vec<usize> = fractional_counts(r, costs, budget)?.iter().map(|v| v.floor() as usize).collect();
    while planned_cost(&m, costs) > budget {
        let s = (0..m.len()).rev().find(|&s| m[s] > 0).expect("positive cost implies a nonzero count");
        m[s] -= 1;
    }
    Ok(m)
}

pub fn planned_cost(m: &[usize], costs: &[f64]) -> f64 {
    m.iter().zip(costs).map(|(&m, c)| m as f64 * c).sum()
}
