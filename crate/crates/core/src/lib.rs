//! Ranking documents from sparse, noisy pairwise comparisons.
//!
//! The crate provides four estimators that share one data model
//! ([`corpus::FeatureMatrix`], [`corpus::PairLabel`], [`bws::ScoreVector`]):
//!
//! - [`bws`]: best-worst scaling counts, used both as a baseline and as the
//!   gold standard for evaluation.
//! - [`gppl`]: Gaussian process preference learning with a probit pairwise
//!   likelihood, a Matérn 3/2 kernel and inducing-point variational inference.
//! - [`directranker`]: a pairwise neural ranker whose shared feature networks
//!   and bias-free antisymmetric output make its preferences a total quasiorder.
//! - [`stacking`]: cross-validated stacking of the above with a linear
//!   meta-model.
//!
//! [`eval`] scores predictions against gold rankings, [`synth`] generates
//! corpora with known utilities and [`experiment`] runs the subsampling
//! protocol end to end.

pub mod bws;
pub mod cli;
pub mod container;
pub mod corpus;
pub mod directranker;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gppl;
pub mod stacking;
pub mod synth;

pub use error::{Error, Result};
