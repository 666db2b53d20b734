//! Gradual domain adaptation with multifidelity active learning.
//!
//! A chain of warm-started classifiers is trained across an ordered sequence
//! of domains (source, intermediates, target). Label queries are bought from
//! every domain under a fixed budget, split across domains by a multifidelity
//! allocation rule and picked inside each domain by uncertainty sampling.
//!
//! Module map:
//! - [`classifier`]: softmax MLP with analytic gradients and warm starts.
//! - [`domains`]: labeled sets, unlabeled pools with a label oracle, synthetic
//!   generators and CSV ingestion.
//! - [`selftrain`]: pseudo-label sharpening and gradual self-training baseline.
//! - [`allocation`]: fidelity correlations, query ratios and integer counts.
//! - [`gdamf`]: the budgeted active learning loop and its ablations.
//! - [`metrics`]: accuracy and the per-class bottleneck (W-infinity) distance.
//! - [`harness`]: seeded experiment runner, run records and summaries.

pub mod allocation;
pub mod classifier;
pub mod domains;
pub mod error;
pub mod gdamf;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod selftrain;

pub use error::{Error, Result};
