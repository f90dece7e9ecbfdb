//! Chain-of-thought exemplar tooling: augment a labeled dataset into a pool of
//! machine-generated reasoning chains, prune the chains whose final answer is
//! wrong, pick an ordered subset of exemplars with a variance-reduced policy
//! gradient, and score the result by exact-match accuracy.
//!
//! The crate is organized around five layers:
//!
//! - [`oracle`] — completion backends (HTTP, deterministic mock, disk cache)
//!   behind one [`oracle::Backend`] trait, plus token-level answer losses.
//! - [`dataset`] — labeled question/answer records in JSON Lines form.
//! - [`pool`] — prompt templates, candidate chain generation, and the
//!   answer-checked exemplar pool.
//! - [`selector`] — per-slot categorical distributions over the pool, trained
//!   with a variance-reduced policy-gradient estimator under simplex
//!   projection.
//! - [`eval`] — answer normalization, exact match, self-consistency voting,
//!   and per-hop accuracy reports.
//!
//! Everything is synchronous and deterministic given a seed: oracle fan-out
//! joins results back in input order, and all sampling flows through a
//! caller-provided seeded RNG.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod pool;
pub mod selector;

pub use error::{DatasetError, EvalError, OracleError, PoolError, SelectorError};
