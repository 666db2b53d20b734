//! Seeded experiment runner.
//!
//! An [`ExperimentSpec`] names a dataset, a method, a list of budgets and a
//! number of repetitions. Every `(budget, repetition)` pair is an independent
//! run on a freshly generated sequence; all methods see the same data for a
//! given repetition because the data seed depends only on the repetition.
//!
//! Outputs (when `output_dir` is set):
//! - `records.csv`: one row per run and domain with columns
//!   `method,budget,rep,seed,domain,m_bar,spent,acc_target,acc_domain_j,duration_ms`
//! - `history.jsonl`: one JSON object per run with the per-sweep plans,
//!   keyed by `spec_hash` and `rep`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation;
use crate::classifier::{self, Architecture, Classifier, TrainConfig};
use crate::domains::{self, DomainSequence, RotatingParams};
use crate::error::{Error, Result};
use crate::gdamf::{self, GdamfConfig, SweepRecord};
use crate::metrics;
use crate::rng;
use crate::selftrain;

/// Fixed offsets that split a repetition seed into per-role streams.
pub mod stream {
    pub const DATA: u64 = 0;
    pub const INITIAL_LABELS: u64 = 1_000_003;
    pub const TRAIN: u64 = 2_000_003;
    pub const PROBES: u64 = 3_000_017;
    pub const QUERIES: u64 = 4_000_037;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Moons {
        n_source: usize,
        n_per_pool: usize,
        n_eval: usize,
        k_intermediate: usize,
        total_angle: f64,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    Gaussians {
        n_source: usize,
        n_per_pool: usize,
        n_eval: usize,
        k_intermediate: usize,
        total_angle: f64,
        class_separation: f64,
    },
    Csv {
        paths: Vec<PathBuf>,
        label_column: String,
        #[serde(default = "default_eval_fraction")]
        eval_fraction: f64,
    },
}

fn default_noise() -> f64 {
    0.1
}

fn default_eval_fraction() -> f64 {
    0.25
}

impl DatasetSpec {
    /// Two-moons at desk scale: 2000 source samples, rotation by pi/2.
    pub fn moons(k_intermediate: usize) -> Self {
        DatasetSpec::Moons {
            n_source: 2000,
            n_per_pool: 2000,
            n_eval: 2000,
            k_intermediate,
            total_angle: std::f64::consts::FRAC_PI_2,
            noise: default_noise(),
        }
    }

    /// Builds the sequence with the given seed. `k_override` replaces the
    /// number of intermediate domains (for CSV data: keeps a seeded random
    /// subset of that many intermediate files, in order).
    pub fn build(&self, costs: Option<&[f64]>, seed: u64, k_override: Option<usize>) -> Result<DomainSequence> {
        let seq = match self {
            DatasetSpec::Moons { n_source, n_per_pool, n_eval, k_intermediate, total_angle, noise } => {
                let p = RotatingParams {
                    n_source: *n_source,
                    n_per_pool: *n_per_pool,
                    n_eval: *n_eval,
                    k_intermediate: k_override.unwrap_or(*k_intermediate),
                    total_angle: *total_angle,
                    seed,
                };
                domains::make_rotating_moons(&p, *noise)?
            }
            DatasetSpec::Gaussians { n_source, n_per_pool, n_eval, k_intermediate, total_angle, class_separation } => {
                let p = RotatingParams {
                    n_source: *n_source,
                    n_per_pool: *n_per_pool,
                    n_eval: *n_eval,
                    k_intermediate: k_override.unwrap_or(*k_intermediate),
                    total_angle: *total_angle,
                    seed,
                };
                domains::make_rotating_gaussians(&p, *class_separation)?
            }
            DatasetSpec::Csv { paths, label_column, eval_fraction } => {
                let paths = match k_override {
                    None => paths.clone(),
                    Some(k) => {
                        let middle = paths.len().saturating_sub(2);
                        if k > middle {
                            return Err(Error::InvalidSpec(format!("only {middle} intermediate files, asked for {k}")));
                        }
                        let mut keep = index::sample(&mut rng::seeded(seed), middle, k).into_vec();
                        keep.sort_unstable();
                        let mut chosen = vec![paths[0].clone()];
                        chosen.extend(keep.into_iter().map(|i| paths[i + 1].clone()));
                        chosen.push(paths[paths.len() - 1].clone());
                        chosen
                    }
                };
                return domains::load_csv_sequence(&paths, label_column, costs.map(<[f64]>::to_vec), *eval_fraction, seed);
            }
        };
        match costs {
            None => Ok(seq),
            Some(c) => {
                let stages = seq.stages().to_vec();
                DomainSequence::new(seq.source().clone(), stages, c.to_vec(), seq.eval_set().clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gdamf,
    GdamfNoAl,
    GdamfNoIntermediate,
    GdamfNoAlNoIntermediate,
    GdamfNoWarmStart,
    GradualSelfTrain,
    TargetOnly,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gdamf,
        Method::GdamfNoAl,
        Method::GdamfNoIntermediate,
        Method::GdamfNoAlNoIntermediate,
        Method::GdamfNoWarmStart,
        Method::GradualSelfTrain,
        Method::TargetOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gdamf => "gdamf",
            Method::GdamfNoAl => "gdamf_no_al",
            Method::GdamfNoIntermediate => "gdamf_no_intermediate",
            Method::GdamfNoAlNoIntermediate => "gdamf_no_al_no_intermediate",
            Method::GdamfNoWarmStart => "gdamf_no_warm_start",
            Method::GradualSelfTrain => "gradual_self_train",
            Method::TargetOnly => "target_only",
        }
    }

    /// (disable_uncertainty, disable_intermediates, disable_warm_start) for
    /// the loop-based methods.
    fn ablation(self) -> Option<(bool, bool, bool)> {
        match self {
            Method::Gdamf => Some((false, false, false)),
            Method::GdamfNoAl => Some((true, false, false)),
            Method::GdamfNoIntermediate => Some((false, true, false)),
            Method::GdamfNoAlNoIntermediate => Some((true, true, false)),
            Method::GdamfNoWarmStart => Some((false, false, true)),
            Method::GradualSelfTrain | Method::TargetOnly => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub batchnorm: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden_dims: vec![32], dropout_rate: 0.1, batchnorm: true }
    }
}

fn default_repetitions() -> usize {
    20
}

fn default_probe_count() -> usize {
    allocation::DEFAULT_PROBE_COUNT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub method: Method,
    /// Budgets to sweep; empty means the default maximum `ceil(n_0 / 10)`.
    #[serde(default)]
    pub budgets: Vec<f64>,
    /// Query costs `c^(1..K)`; defaults to the domain indices.
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Free labels per domain; defaults to `ceil(n_0 / 100)`.
    #[serde(default)]
    pub initial_labels: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Concurrent runs; 0 uses every core.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub workers: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec, method: Method) -> Self {
        Self {
            dataset,
            method,
            budgets: Vec::new(),
            costs: None,
            repetitions: default_repetitions(),
            base_seed: 0,
            initial_labels: None,
            train: TrainConfig::default(),
            model: ModelSpec::default(),
            probe_count: default_probe_count(),
            output_dir: None,
            workers: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    /// Short hash of everything that affects results (output location and
    /// worker count excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.workers = 0;
        let json = serde_json::to_string(&canonical).expect("spec serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn repetition_seed(&self, rep: usize) -> u64 {
        self.base_seed.wrapping_add(rep as u64)
    }

    fn n_source(&self, probe: &DomainSequence) -> usize {
        probe.source().len()
    }

    /// Budgets to run, filling in the default maximum when none are given.
    pub fn resolved_budgets(&self, n_source: usize) -> Vec<f64> {
        if self.budgets.is_empty() {
            vec![default_max_budget(n_source)]
        } else {
            self.budgets.clone()
        }
    }

    pub fn validate(&self) -> Result<DomainSequence> {
        if self.repetitions == 0 {
            return Err(Error::InvalidSpec("repetitions must be at least 1".into()));
        }
        if let Some(b) = self.budgets.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::InvalidSpec(format!("budgets must be finite and nonnegative, got {b}")));
        }
        self.train.validate()?;
        if self.probe_count < 2 {
            return Err(Error::InvalidSpec("probe_count must be at least 2".into()));
        }
        let probe = self.dataset.build(self.costs.as_deref(), self.repetition_seed(0), None)?;
        self.architecture(&probe)?;
        if self.method == Method::TargetOnly {
            let cost = probe.cost(probe.k());
            let budgets = self.resolved_budgets(probe.source().len());
            if let Some(b) = budgets.iter().find(|&&b| b < cost) {
                return Err(Error::InvalidSpec(format!("target_only budget {b} buys no label at target cost {cost}")));
            }
        }
        let initial = self.initial_count(&probe);
        for j in 1..=probe.k() {
            let available = probe.pool(j)?.len();
            if initial > available {
                return Err(Error::InvalidSpec(format!(
                    "initial_labels {initial} exceeds pool size {available} of domain {j}"
                )));
            }
        }
        Ok(probe)
    }

    fn architecture(&self, seq: &DomainSequence) -> Result<Architecture> {
        Architecture::new(
            seq.dim(),
            self.model.hidden_dims.clone(),
            seq.num_classes(),
            self.model.dropout_rate,
            self.model.batchnorm,
        )
    }

    fn initial_count(&self, seq: &DomainSequence) -> usize {
        self.initial_labels.unwrap_or_else(|| domains::default_initial_count(self.n_source(seq)))
    }
}

/// `ceil(n_0 / 10)`.
pub fn default_max_budget(n_source: usize) -> f64 {
    n_source.div_ceil(10) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    pub budget: f64,
    /// Queries bought per domain `1..=K`.
    pub m_bar: Vec<usize>,
    pub spent: f64,
    pub acc_target: f64,
    /// Accuracy of `theta_j` on domain `j` for `j = 0..=K` (the target entry
    /// uses the evaluation set); `None` where the method has no such model.
    pub acc_domains: Vec<Option<f64>>,
    pub history: Vec<SweepRecord>,
    pub duration_ms: u64,
}

impl RunRecord {
    pub fn k(&self) -> usize {
        self.m_bar.len()
    }

    /// Fraction of the spent cost that went to the target domain (0 when
    /// nothing was spent).
    pub fn target_cost_fraction(&self, costs: &[f64]) -> f64 {
        if self.spent <= 0.0 {
            return 0.0;
        }
        let k = self.k();
        self.m_bar[k - 1] as f64 * costs[k - 1] / self.spent
    }

    /// Fraction of queries (by count) drawn from the target.
    pub fn target_query_share(&self) -> f64 {
        let total: usize = self.m_bar.iter().sum();
        if total == 0 {
            return 0.0;
        }
        self.m_bar[self.k() - 1] as f64 / total as f64
    }
}

pub const RECORD_COLUMNS: [&str; 10] =
    ["method", "budget", "rep", "seed", "domain", "m_bar", "spent", "acc_target", "acc_domain_j", "duration_ms"];

/// CSV rows (no header) for one record, one per domain `0..=K`.
pub fn record_rows(r: &RunRecord) -> String {
    let mut out = String::new();
    for j in 0..=r.k() {
        let m = if j == 0 { 0 } else { r.m_bar[j - 1] };
        let acc = r.acc_domains[j].map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.method, r.budget, r.rep, r.seed, j, m, r.spent, r.acc_target, acc, r.duration_ms
        ));
    }
    out
}

pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = RECORD_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&record_rows(r));
    }
    out
}

/// Parses `records.csv` back into records (without history or spec hash).
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let err = |message: String| Error::Csv { path: path.display().to_string(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header: Vec<String> = reader.headers().map_err(|e| err(e.to_string()))?.iter().map(str::to_string).collect();
    if header != RECORD_COLUMNS {
        return Err(err(format!("unexpected columns {header:?}")));
    }
    let mut grouped: BTreeMap<(String, String, usize, u64), RunRecord> = BTreeMap::new();
    let mut order = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let parse_f = |i: usize| field(i).parse::<f64>().map_err(|_| err(format!("bad number '{}'", field(i))));
        let parse_u = |i: usize| field(i).parse::<u64>().map_err(|_| err(format!("bad integer '{}'", field(i))));
        let method: Method = field(0).parse()?;
        let key = (field(0).to_string(), field(1).to_string(), parse_u(2)? as usize, parse_u(3)?);
        let domain = parse_u(4)? as usize;
        let rec = grouped.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            RunRecord {
                spec_hash: String::new(),
                rep: key.2,
                seed: key.3,
                method,
                budget: 0.0,
                m_bar: Vec::new(),
                spent: 0.0,
                acc_target: 0.0,
                acc_domains: Vec::new(),
                history: Vec::new(),
                duration_ms: 0,
            }
        });
        rec.budget = parse_f(1)?;
        rec.spent = parse_f(6)?;
        rec.acc_target = parse_f(7)?;
        rec.duration_ms = parse_u(9)?;
        if rec.acc_domains.len() != domain {
            return Err(err(format!("domain rows out of order for rep {}", key.2)));
        }
        rec.acc_domains.push(if field(8).is_empty() { None } else { Some(parse_f(8)?) });
        if domain > 0 {
            rec.m_bar.push(parse_u(5)? as usize);
        }
    }
    Ok(order.into_iter().map(|k| grouped.remove(&k).expect("grouped key")).collect())
}

struct RecordSink {
    records: Mutex<File>,
    history: Mutex<File>,
}

impl RecordSink {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let records_path = dir.join("records.csv");
        let fresh = !records_path.exists() || fs::metadata(&records_path)?.len() == 0;
        let mut records = OpenOptions::new().create(true).append(true).open(&records_path)?;
        if fresh {
            records.write_all(format!("{}\n", RECORD_COLUMNS.join(",")).as_bytes())?;
        }
        let history = OpenOptions::new().create(true).append(true).open(dir.join("history.jsonl"))?;
        Ok(Self { records: Mutex::new(records), history: Mutex::new(history) })
    }

    /// Each record goes out in a single write so concurrent runs never
    /// interleave partial rows.
    fn append(&self, r: &RunRecord) -> Result<()> {
        let rows = record_rows(r);
        self.records.lock().expect("record sink").write_all(rows.as_bytes())?;
        let line = serde_json::json!({
            "spec_hash": r.spec_hash,
            "rep": r.rep,
            "method": r.method,
            "budget": r.budget,
            "history": r.history,
        });
        self.history.lock().expect("history sink").write_all(format!("{line}\n").as_bytes())?;
        Ok(())
    }
}

/// Runs every `(budget, repetition)` pair of the spec. Records come back
/// ordered by budget, then repetition.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    let probe = spec.validate()?;
    let budgets = spec.resolved_budgets(probe.source().len());
    let sink = spec.output_dir.as_deref().map(RecordSink::open).transpose()?;
    if let Some(dir) = &spec.output_dir {
        fs::write(dir.join("spec.toml"), spec.to_toml()?)?;
    }
    let hash = spec.hash();
    let jobs: Vec<(f64, usize)> =
        budgets.iter().flat_map(|&b| (0..spec.repetitions).map(move |rep| (b, rep))).collect();

    let work = || {
        jobs.par_iter()
            .map(|&(budget, rep)| {
                let record = run_single(spec, &hash, budget, rep)?;
                if let Some(sink) = &sink {
                    sink.append(&record)?;
                }
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidSpec(format!("cannot build worker pool: {e}")))?;
    pool.install(work)
}

fn domain_accuracies(seq: &DomainSequence, models: &[Option<&Classifier>]) -> Result<Vec<Option<f64>>> {
    let k = seq.k();
    models
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let Some(m) = m else { return Ok(None) };
            let acc = if j == k {
                metrics::accuracy(m, seq.eval_set())?
            } else {
                metrics::accuracy(m, &seq.ground_truth(j)?)?
            };
            Ok(Some(acc))
        })
        .collect()
}

/// One repetition of one method at one budget.
pub fn run_single(spec: &ExperimentSpec, spec_hash: &str, budget: f64, rep: usize) -> Result<RunRecord> {
    let start = Instant::now();
    let seed = spec.repetition_seed(rep);
    let mut seq = spec.dataset.build(spec.costs.as_deref(), seed.wrapping_add(stream::DATA), None)?;
    let arch = spec.architecture(&seq)?;
    let train_cfg = spec.train.with_seed(seed.wrapping_add(stream::TRAIN));
    let k = seq.k();
    let mut m_bar = vec![0usize; k];
    let mut spent = 0.0;
    let mut history = Vec::new();

    let models: Vec<Option<Classifier>> = match spec.method {
        Method::GradualSelfTrain => selftrain::gradual_self_train(&seq, &arch, &train_cfg)?.into_iter().map(Some).collect(),
        Method::TargetOnly => {
            let cost = seq.cost(k);
            let wanted = allocation::compute_counts(&[1.0], &[cost], budget)?[0];
            let n = wanted.min(seq.pool(k)?.len());
            if n == 0 {
                return Err(Error::InvalidSpec(format!("budget {budget} buys no target label at cost {cost}")));
            }
            let mut rng = rng::seeded(seed.wrapping_add(stream::QUERIES));
            let mut picks = index::sample(&mut rng, seq.pool(k)?.len(), n).into_vec();
            picks.sort_unstable_by(|a, b| b.cmp(a));
            for i in picks {
                seq.oracle_annotate(k, i)?;
            }
            m_bar[k - 1] = n;
            spent = n as f64 * cost;
            let model = classifier::train(&arch, seq.labeled(k)?, None, &train_cfg)?;
            let mut models = vec![None; k + 1];
            models[k] = Some(model);
            models
        }
        method => {
            let (no_al, no_inter, no_warm) = method.ablation().expect("loop-based method");
            let initial = spec.initial_count(&seq);
            seq.draw_initial_labels(initial, seed.wrapping_add(stream::INITIAL_LABELS))?;
            let cfg = GdamfConfig {
                train: train_cfg,
                budget,
                disable_uncertainty: no_al,
                disable_intermediates: no_inter,
                disable_warm_start: no_warm,
                probe_count: spec.probe_count,
                probe_seed: seed.wrapping_add(stream::PROBES),
                query_seed: seed.wrapping_add(stream::QUERIES),
            };
            let result = gdamf::run_gdamf(seq.clone(), &arch, &cfg)?;
            spent = result.spent;
            history = result.history;
            if no_inter {
                m_bar[k - 1] = result.queries[0];
                let mut models = vec![None; k + 1];
                let mut it = result.models.into_iter();
                models[0] = it.next();
                models[k] = it.next();
                models
            } else {
                m_bar = result.queries;
                result.models.into_iter().map(Some).collect()
            }
        }
    };

    let model_refs: Vec<Option<&Classifier>> = models.iter().map(Option::as_ref).collect();
    let acc_domains = domain_accuracies(&seq, &model_refs)?;
    let acc_target = acc_domains[k].expect("every method trains a target model");
    Ok(RunRecord {
        spec_hash: spec_hash.to_string(),
        rep,
        seed,
        method: spec.method,
        budget,
        m_bar,
        spent,
        acc_target,
        acc_domains,
        history,
        duration_ms: start.elapsed().as_millis() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub budget: f64,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub mean_spent: f64,
    /// Mean queries per domain `1..=K`.
    pub mean_queries: Vec<f64>,
    pub target_query_share: f64,
}

/// Target-accuracy statistics per `(method, budget)`; the standard deviation
/// is the sample (n - 1) one, zero for a single run.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records"));
    }
    let mut groups: BTreeMap<(Method, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method, r.budget.to_bits())).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let accs: Vec<f64> = rs.iter().map(|r| r.acc_target).collect();
            let mean = accs.iter().sum::<f64>() / n;
            let sd = if rs.len() > 1 {
                (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let k = rs.iter().map(|r| r.k()).max().unwrap_or(0);
            let mean_queries =
                (0..k).map(|j| rs.iter().map(|r| r.m_bar.get(j).copied().unwrap_or(0) as f64).sum::<f64>() / n).collect();
            SummaryRow {
                method: rs[0].method,
                budget: rs[0].budget,
                runs: rs.len(),
                mean,
                sd,
                min: accs.iter().copied().fold(f64::INFINITY, f64::min),
                max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_spent: rs.iter().map(|r| r.spent).sum::<f64>() / n,
                mean_queries,
                target_query_share: rs.iter().map(|r| r.target_query_share()).sum::<f64>() / n,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.budget.total_cmp(&b.budget)));
    Ok(rows)
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,budget,runs,mean,sd,min,max,mean_spent,target_query_share,mean_queries\n");
    for r in rows {
        let q: Vec<String> = r.mean_queries.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.method, r.budget, r.runs, r.mean, r.sd, r.min, r.max, r.mean_spent, r.target_query_share, q.join(";")
        ));
    }
    out
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<28} {:>8} {:>5} {:>7} {:>7} {:>7} {:>7} {:>9}  {}\n",
        "method", "budget", "runs", "mean", "sd", "min", "max", "spent", "mean queries per domain"
    );
    for r in rows {
        let q: Vec<String> = r.mean_queries.iter().map(|v| format!("{v:.1}")).collect();
        out.push_str(&format!(
            "{:<28} {:>8} {:>5} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>9.2}  [{}]\n",
            r.method.name(),
            r.budget,
            r.runs,
            r.mean,
            r.sd,
            r.min,
            r.max,
            r.mean_spent,
            q.join(", ")
        ));
    }
    out
}
