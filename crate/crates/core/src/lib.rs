//! Online multi-agent submodular coordination under partition matroid
//! constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`submodular`]: ground sets, partition matroids, the set-function oracle
//!   trait, brute-force optima and property checkers.
//! - [`pme`]: the partition multilinear extension, its exact and sampled
//!   gradients, and second differences.
//! - [`polytope`]: the categorical face, Euclidean projections, the
//!   zero-padding slot embedding and path length.
//! - [`dynamics`]: stagewise projected stochastic gradient ascent and the
//!   two-step online dynamics with regret accounting.
//! - [`policy`]: tabular masked-softmax policies and the difference-reward
//!   policy-gradient trainer.
//! - [`envs`]: coverage and tracking environments with open-system schedules.
//! - [`baselines`]: sequential greedy, online local greedy, random play and
//!   the shared-reward ablation.

// `!(v > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod oracles;
pub mod pme;
pub mod policy;
pub mod polytope;
pub mod rng;
pub mod submodular;

pub use error::{Error, Result};
pub use pme::BlockVector;
pub use submodular::{AgentActionPair, FeasibleSet, PartitionMatroid, SubmodularOracle};
