//! Desk-scale environments and their evaluation oracles.

mod contextual;
mod fixtures;
mod fourier;
mod idx;
mod mc;
mod mdp;

pub use contextual::{synth_cluster_env, ContextualBanditEnv, ContextualSource};
pub use fixtures::{gridworld_4x4, riverswim};
pub use fourier::fourier_features;
pub use idx::{idx_load, idx_write_images, idx_write_labels};
pub use mc::{ls_policy_eval, ridge_fit_per_action, tabular_policy_eval, LinearQ, TabularEval};
pub use mdp::{solve_optimal, solve_policy, StationaryAnalysis, TabularMdp, Trajectory};
