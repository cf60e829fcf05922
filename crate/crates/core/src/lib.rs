//! Offline KL-regularized policy optimization on finite contextual bandits.
//!
//! The problem: approximate the optimal KL-regularized policy from a static
//! log of (context, action, reward) triplets collected by an unknown
//! behavior policy, with no pairwise preferences and no reward model. On
//! finite problems every quantity of interest has a closed form, so training
//! results can be judged against exact oracles instead of proxy metrics.
//!
//! Module map:
//!
//! - [`bandit`]: problem spec, softmax policies, value functions, exact
//!   probabilistic primitives (log-probs, log-ratios, KL)
//! - [`oracle`]: closed-form optimum, per-policy values, fixed-point policy
//!   for a frozen value, optimality-gap bound, regularized objective
//! - [`losses`]: the joint squared-residual loss and gradients, policy-only
//!   variance losses, simplified KTO and pairwise baselines, finite
//!   differences
//! - [`gradcheck`]: the seeded analytic-vs-numeric gradient suite
//! - [`data`]: synthetic dataset generation, reward normalization, pair
//!   derivation, JSONL persistence
//! - [`trainer`]: seeded minibatch training loops, optimizers, warmup,
//!   checkpoints, metric traces
//! - [`eval`]: exact evaluation reports, policy comparison, sweeps, CSV/JSON
//!   report emission

pub mod bandit;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod trainer;

pub use bandit::{
    kl, kl_rows, kl_vs_ref, log_prob, log_ratio, reference_spec, two_action_spec, BanditSpec,
    LinearSoftmaxPolicy, Policy, ProbTable, TabularPolicy, ValueFn, ValueMode,
};
pub use error::{Error, Result};
