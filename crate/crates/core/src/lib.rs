//! KL-regularized vs. KL-constrained approximate policy iteration.
//!
//! This crate compares the two implementation choices for keeping
//! consecutive policies close in approximate policy iteration:
//!
//! - exact updates on a two-armed Gaussian bandit, where the constrained
//!   (trust-region) update provably oscillates with noisy reward estimates
//!   and incurs linear expected regret, while the mirror-descent closed form
//!   averages the noise out ([`bandit`]);
//! - four gradient-based policy-improvement objectives over softmax policies
//!   ([`objectives`]) driven by a phase loop ([`api`]) on contextual-bandit
//!   and tabular average-reward environments ([`envs`]).
//!
//! Everything stochastic is keyed by explicit 64-bit seeds ([`rng`]); seed
//! sweeps parallelize with the `parallel` feature (on by default) without
//! changing any output bit ([`parallel`]).

pub mod api;
pub mod bandit;
pub mod envs;
pub mod error;
pub mod math;
pub mod objectives;
pub mod parallel;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
