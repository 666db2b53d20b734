//! Feed-forward softmax classifier trained with cross-entropy.
//!
//! Each hidden block is `linear -> [batch norm] -> leaky ReLU -> dropout`,
//! followed by a linear output layer and a softmax. All parameters live in a
//! single flat vector `theta`, including the batch-norm running statistics,
//! so a warm start is a plain copy of `theta`.
//!
//! During training batch norm normalizes with batch statistics and updates the
//! running statistics; inference always uses the stored running statistics
//! and disables dropout, so predictions are a pure function of `theta`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::domains::LabeledSet;
use crate::error::{Error, Result};
use crate::rng;

const LEAKY_SLOPE: f64 = 0.01;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub use_batchnorm_stats: bool,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        num_classes: usize,
        dropout_rate: f64,
        use_batchnorm_stats: bool,
    ) -> Result<Self> {
        let arch = Self { input_dim, hidden_dims, num_classes, dropout_rate, use_batchnorm_stats };
        arch.validate()?;
        Ok(arch)
    }

    /// One hidden layer of 32 units, dropout 0.1, batch norm on.
    pub fn default_for(input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::new(input_dim, vec![32], num_classes, 0.1, true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArchitecture("input_dim must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArchitecture("num_classes must be at least 2".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArchitecture("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArchitecture("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut take = |n: usize| {
            let o = offset;
            offset += n;
            o
        };
        let mut hidden = Vec::with_capacity(self.hidden_dims.len());
        let mut fan_in = self.input_dim;
        for &width in &self.hidden_dims {
            let w = take(width * fan_in);
            let b = take(width);
            let bn = self.use_batchnorm_stats.then(|| BnOffsets {
                gamma: take(width),
                beta: take(width),
                mean: take(width),
                var: take(width),
            });
            hidden.push(Dense { fan_in, fan_out: width, w, b, bn });
            fan_in = width;
        }
        let output = Dense { fan_in, fan_out: self.num_classes, w: take(self.num_classes * fan_in), b: take(self.num_classes), bn: None };
        Layout { hidden, output, len: offset }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

#[derive(Debug, Clone, Copy)]
struct BnOffsets {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
    bn: Option<BnOffsets>,
}

#[derive(Debug, Clone)]
struct Layout {
    hidden: Vec<Dense>,
    output: Dense,
    len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 100, batch_size: 32, weight_decay: 0.0, optimizer: OptimizerKind::Adam, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    arch: Architecture,
    theta: Vec<f64>,
    rng_seed: u64,
}

impl Classifier {
    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut theta = vec![0.0; layout.len];
        let mut rng = rng::seeded(seed);
        for d in layout.hidden.iter().chain(std::iter::once(&layout.output)) {
            let a = (6.0 / (d.fan_in + d.fan_out) as f64).sqrt();
            for w in &mut theta[d.w..d.w + d.fan_in * d.fan_out] {
                *w = rng.random_range(-a..=a);
            }
            if let Some(bn) = d.bn {
                theta[bn.gamma..bn.gamma + d.fan_out].fill(1.0);
                theta[bn.var..bn.var + d.fan_out].fill(1.0);
            }
        }
        Ok(Self { arch: arch.clone(), theta, rng_seed: seed })
    }

    /// Every parameter zero, including normalization statistics; outputs the
    /// uniform distribution for any input.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self { theta: vec![0.0; arch.param_count()], arch: arch.clone(), rng_seed: 0 })
    }

    pub fn from_theta(arch: &Architecture, theta: Vec<f64>, rng_seed: u64) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(Error::DimensionMismatch { expected: arch.param_count(), got: theta.len() });
        }
        Ok(Self { arch: arch.clone(), theta, rng_seed })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Mask of coordinates that gradient steps may change (everything but
    /// running statistics).
    pub fn trainable_mask(&self) -> Vec<bool> {
        let layout = self.arch.layout();
        let mut mask = vec![true; layout.len];
        for d in &layout.hidden {
            if let Some(bn) = d.bn {
                mask[bn.mean..bn.mean + d.fan_out].fill(false);
                mask[bn.var..bn.var + d.fan_out].fill(false);
            }
        }
        mask
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: self.arch.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// Inference-mode logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let layout = self.arch.layout();
        let t = &self.theta;
        let mut a = x.to_vec();
        for d in &layout.hidden {
            let mut z = affine(t, d, &a);
            if let Some(bn) = d.bn {
                for (u, zu) in z.iter_mut().enumerate() {
                    let xhat = (*zu - t[bn.mean + u]) / (t[bn.var + u] + BN_EPS).sqrt();
                    *zu = t[bn.gamma + u] * xhat + t[bn.beta + u];
                }
            }
            z.iter_mut().for_each(|v| *v = leaky(*v));
            a = z;
        }
        Ok(affine(t, &layout.output, &a))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Arg-max class, ties to the smallest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Mean cross-entropy in inference mode.
    pub fn mean_loss(&self, data: &LabeledSet) -> Result<f64> {
        check_data(&self.arch, data)?;
        let mut total = 0.0;
        for (x, y) in data.iter() {
            let p = self.predict_proba(x)?;
            total += -p[y].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / data.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        Self::from_theta(&c.arch, c.theta, c.rng_seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn affine(t: &[f64], d: &Dense, a: &[f64]) -> Vec<f64> {
    (0..d.fan_out)
        .map(|u| {
            let row = &t[d.w + u * d.fan_in..d.w + (u + 1) * d.fan_in];
            t[d.b + u] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 { v } else { LEAKY_SLOPE * v }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn check_data(arch: &Architecture, data: &LabeledSet) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if data.dim() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: data.dim() });
    }
    if let Some(&label) = data.labels().iter().find(|&&y| y >= arch.num_classes) {
        return Err(Error::LabelOutOfRange { label, num_classes: arch.num_classes });
    }
    Ok(())
}

struct HiddenCache {
    input: Vec<f64>,
    /// batch-normalized value (or raw pre-activation without batch norm)
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// input to the leaky ReLU
    pre: Vec<f64>,
    /// dropout scale per (row, unit); empty when dropout is off
    mask: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

struct BatchPass {
    loss: f64,
    grad: Vec<f64>,
    caches: Vec<HiddenCache>,
}

/// Training-mode forward and backward pass over `rows`. Batch norm uses the
/// batch statistics. `dropout` supplies the RNG for dropout masks; `None`
/// disables dropout.
fn batch_pass(
    arch: &Architecture,
    theta: &[f64],
    rows: &[(&[f64], usize)],
    mut dropout: Option<&mut rng::Rng>,
) -> BatchPass {
    let layout = arch.layout();
    let n = rows.len();
    let nf = n as f64;
    let mut caches: Vec<HiddenCache> = Vec::with_capacity(layout.hidden.len());
    let mut act: Vec<f64> = rows.iter().flat_map(|(x, _)| x.iter().copied()).collect();

    for d in &layout.hidden {
        let (fi, fo) = (d.fan_in, d.fan_out);
        let mut z = vec![0.0; n * fo];
        for r in 0..n {
            let a = &act[r * fi..(r + 1) * fi];
            for u in 0..fo {
                let w = &theta[d.w + u * fi..d.w + (u + 1) * fi];
                z[r * fo + u] = theta[d.b + u] + w.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        let mut xhat = z;
        let mut inv_std = Vec::new();
        let mut batch_mean = Vec::new();
        let mut batch_var = Vec::new();
        let mut pre = xhat.clone();
        if let Some(bn) = d.bn {
            batch_mean = (0..fo).map(|u| (0..n).map(|r| xhat[r * fo + u]).sum::<f64>() / nf).collect();
            batch_var = (0..fo)
                .map(|u| (0..n).map(|r| (xhat[r * fo + u] - batch_mean[u]).powi(2)).sum::<f64>() / nf)
                .collect();
            inv_std = batch_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            for r in 0..n {
                for u in 0..fo {
                    let i = r * fo + u;
                    xhat[i] = (xhat[i] - batch_mean[u]) * inv_std[u];
                    pre[i] = theta[bn.gamma + u] * xhat[i] + theta[bn.beta + u];
                }
            }
        }
        let mut out: Vec<f64> = pre.iter().map(|&v| leaky(v)).collect();
        let mut mask = Vec::new();
        if let Some(rng) = dropout.as_deref_mut() {
            if arch.dropout_rate > 0.0 {
                let keep = 1.0 - arch.dropout_rate;
                mask = (0..n * fo).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                out.iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
            }
        }
        caches.push(HiddenCache { input: act, xhat, inv_std, pre, mask, batch_mean, batch_var });
        act = out;
    }

    let d = layout.output;
    let (fi, l) = (d.fan_in, d.fan_out);
    let mut grad = vec![0.0; layout.len];
    let mut loss = 0.0;
    // dL/dlogits, then back into the last hidden activation
    let mut delta = vec![0.0; n * fi];
    for (r, (_, y)) in rows.iter().enumerate() {
        let a = &act[r * fi..(r + 1) * fi];
        let logits: Vec<f64> = (0..l)
            .map(|c| theta[d.b + c] + theta[d.w + c * fi..d.w + (c + 1) * fi].iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - logits[*y];
        for c in 0..l {
            let g = ((logits[c] - lse).exp() - if c == *y { 1.0 } else { 0.0 }) / nf;
            grad[d.b + c] += g;
            for k in 0..fi {
                grad[d.w + c * fi + k] += g * a[k];
                delta[r * fi + k] += g * theta[d.w + c * fi + k];
            }
        }
    }

    for (d, cache) in layout.hidden.iter().zip(&caches).rev() {
        let (fi, fo) = (d.fan_in, d.fan_out);
        if !cache.mask.is_empty() {
            delta.iter_mut().zip(&cache.mask).for_each(|(g, m)| *g *= m);
        }
        for (g, &p) in delta.iter_mut().zip(&cache.pre) {
            if p <= 0.0 {
                *g *= LEAKY_SLOPE;
            }
        }
        // delta now holds dL/dpre
        let dz = if let Some(bn) = d.bn {
            let mut dz = vec![0.0; n * fo];
            for u in 0..fo {
                let gamma = theta[bn.gamma + u];
                let mut sum_dy = 0.0;
                let mut sum_dy_xhat = 0.0;
                for r in 0..n {
                    let i = r * fo + u;
                    sum_dy += delta[i];
                    sum_dy_xhat += delta[i] * cache.xhat[i];
                }
                grad[bn.beta + u] += sum_dy;
                grad[bn.gamma + u] += sum_dy_xhat;
                for r in 0..n {
                    let i = r * fo + u;
                    dz[i] = gamma * cache.inv_std[u] / nf * (nf * delta[i] - sum_dy - cache.xhat[i] * sum_dy_xhat);
                }
            }
            dz
        } else {
            delta
        };
        let mut next = vec![0.0; n * fi];
        for r in 0..n {
            let a = &cache.input[r * fi..(r + 1) * fi];
            for u in 0..fo {
                let g = dz[r * fo + u];
                if g == 0.0 {
                    continue;
                }
                grad[d.b + u] += g;
                let w = d.w + u * fi;
                for k in 0..fi {
                    grad[w + k] += g * a[k];
                    next[r * fi + k] += g * theta[w + k];
                }
            }
        }
        delta = next;
    }

    BatchPass { loss: loss / nf, grad, caches }
}

/// Mean cross-entropy over `batch` and its exact gradient with respect to
/// `theta`. Batch norm normalizes with the batch statistics (as in training)
/// and dropout is off, so the value is deterministic. Running-statistic
/// coordinates get a zero gradient.
pub fn loss_and_gradient(c: &Classifier, batch: &LabeledSet) -> Result<(f64, Vec<f64>)> {
    check_data(&c.arch, batch)?;
    let rows: Vec<(&[f64], usize)> = batch.iter().collect();
    let pass = batch_pass(&c.arch, &c.theta, &rows, None);
    Ok((pass.loss, pass.grad))
}

/// Training-mode loss only (same objective as [`loss_and_gradient`]).
pub fn batch_loss(c: &Classifier, batch: &LabeledSet) -> Result<f64> {
    loss_and_gradient(c, batch).map(|(l, _)| l)
}

enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Mini-batch training of `arch` on `data` for `cfg.epochs` epochs. With
/// `init` the optimization starts from a copy of `init.theta` (warm start),
/// otherwise from [`Classifier::init`] with `cfg.seed`.
pub fn train(
    arch: &Architecture,
    data: &LabeledSet,
    init: Option<&Classifier>,
    cfg: &TrainConfig,
) -> Result<Classifier> {
    arch.validate()?;
    cfg.validate()?;
    check_data(arch, data)?;
    let mut model = match init {
        Some(init) if &init.arch != arch => return Err(Error::ArchitectureMismatch),
        Some(init) => Classifier { arch: arch.clone(), theta: init.theta.clone(), rng_seed: cfg.seed },
        None => Classifier::init(arch, cfg.seed)?,
    };
    if cfg.epochs == 0 {
        return Ok(model);
    }

    let layout = arch.layout();
    let trainable = model.trainable_mask();
    let mut rng = rng::seeded(rng::derive(cfg.seed, 0x0074_7261_696e));
    let mut opt = match cfg.optimizer {
        OptimizerKind::Sgd => Optimizer::Sgd,
        OptimizerKind::Adam => Optimizer::Adam { m: vec![0.0; layout.len], v: vec![0.0; layout.len], t: 0 },
    };
    let samples: Vec<(&[f64], usize)> = data.iter().collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<(&[f64], usize)> = Vec::with_capacity(cfg.batch_size);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let pass = batch_pass(arch, &model.theta, &batch, Some(&mut rng));
            let mut grad = pass.grad;
            let theta = &mut model.theta;

            for (d, cache) in layout.hidden.iter().zip(&pass.caches) {
                if let Some(bn) = d.bn {
                    let n = batch.len() as f64;
                    for u in 0..d.fan_out {
                        let unbiased = if batch.len() > 1 { cache.batch_var[u] * n / (n - 1.0) } else { cache.batch_var[u] };
                        theta[bn.mean + u] = (1.0 - BN_MOMENTUM) * theta[bn.mean + u] + BN_MOMENTUM * cache.batch_mean[u];
                        theta[bn.var + u] = (1.0 - BN_MOMENTUM) * theta[bn.var + u] + BN_MOMENTUM * unbiased;
                    }
                }
            }
            if cfg.weight_decay > 0.0 {
                for (i, g) in grad.iter_mut().enumerate() {
                    if trainable[i] {
                        *g += cfg.weight_decay * theta[i];
                    }
                }
            }
            match &mut opt {
                Optimizer::Sgd => {
                    for (i, g) in grad.iter().enumerate() {
                        if trainable[i] {
                            theta[i] -= cfg.learning_rate * g;
                        }
                    }
                }
                Optimizer::Adam { m, v, t } => {
                    *t += 1;
                    let bc1 = 1.0 - ADAM_BETA1.powi(*t);
                    let bc2 = 1.0 - ADAM_BETA2.powi(*t);
                    for (i, g) in grad.iter().enumerate() {
                        if !trainable[i] {
                            continue;
                        }
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                        theta[i] -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
    Ok(model)
}
