//! Differentially private learning of well-separated Gaussian mixture models.
//!
//! The crate provides three learners plus the machinery they are built from:
//!
//! - [`learn::pegme`] — the easy-case estimator for spherical mixtures whose
//!   variances lie within a known constant factor (private PCA, iterated
//!   private location, per-cluster spherical estimation).
//! - [`learn::pgme`] — the general learner: a recursive private partitioner
//!   that peels off secluded ("terrific") balls, followed by per-cluster
//!   Gaussian estimation and private weight estimation.
//! - [`learn::sample_aggregate`] — a sample-and-aggregate baseline that runs a
//!   non-private spectral learner on disjoint batches and aggregates the
//!   candidate means with private 1-cluster rounds and a stability histogram.
//!
//! Supporting modules: [`dp`] (Laplace/Gaussian mechanisms, private counting,
//! AboveThreshold, composition accounting), [`pca`] (noisy Gram matrix and
//! subspace extraction), [`location`] (terrific-ball and 1-cluster search),
//! [`estimate`] (per-component estimators), [`model`] (domain types, synthetic
//! instances, regularity checkers) and [`eval`] (component matching, total
//! variation, laminarity verdicts).
//!
//! Every randomized operation takes an explicit RNG and, where it spends
//! privacy budget, a [`dp::BudgetLedger`]. A zero-noise mode
//! ([`dp::PrivacyParams::non_private`]) bypasses noise while preserving
//! control flow; ledger entries made in that mode are flagged.

pub mod dp;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod learn;
pub mod linalg;
pub mod location;
pub mod model;
pub mod pca;
pub mod rng;

pub use error::{Error, Result};
