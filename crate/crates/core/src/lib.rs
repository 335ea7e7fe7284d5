//! Online selection under polymatroid constraints.
//!
//! An integer polymatroid `P_f` is reduced to a block-structured matroid in
//! which element `i` becomes a block of interchangeable copies. A threshold
//! rule on that matroid (threshold = half the expected drop in the residual
//! value of a fresh weight draw) selects copies online, and the number of
//! copies taken per block is the polymatroid allocation. In expectation it
//! collects at least half of the offline optimum.
//!
//! Modules, bottom up:
//! - [`dist`]: weights, distributions, seeded randomness, exact enumeration.
//! - [`submodular`]: set-function oracles and validation.
//! - [`polymatroid`]: membership and the greedy offline optimum.
//! - [`blockmatroid`]: the block matroid, its bases, remainders and `g`.
//! - [`prophet`]: thresholds, the online algorithms and single-item rules.
//! - [`harness`]: adversaries, experiments and the property suite.
//! - [`mechanism`]: sequential posted pricing for welfare and revenue.
//! - [`config`] and [`cli`]: experiment files and the command-line driver.

pub mod blockmatroid;
pub mod cli;
pub mod config;
pub mod dist;
pub mod error;
pub mod harness;
pub mod mechanism;
pub mod polymatroid;
pub mod prophet;
pub mod submodular;

pub use error::{Error, Result};
