//! Particle-interactive Thompson sampling for contextual bandits.
//!
//! The approximate posterior over reward-model parameters is a set of
//! interacting particles moved by a discretized Wasserstein gradient flow:
//! kernelized attraction along the log-posterior gradient, kernel repulsion
//! between particles, and an entropy-regularized transport force anchored at
//! the previous particle set.
//!
//! Crate layout:
//! - [`model`]: reward models `m(x, a; θ)`, the log-posterior potential and its gradient.
//! - [`wgf`]: RBF kernel, particle sets and the discrete gradient-flow sampler.
//! - [`env`]: synthetic linear / sparse-linear bandits and CSV-backed dataset bandits.
//! - [`agent`]: π-TS, Lin-TS, Neural Linear, greedy and uniform policies.
//! - [`harness`]: seeded experiment runner, regret summaries and result files.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod wgf;

pub use error::{Error, Result};
pub use model::{GaussianPrior, LinearRewardModel, MlpRewardModel, Observation, ParamVector, RewardModel};
pub use wgf::{DgfConfig, KernelSpec, ParticleSet};
