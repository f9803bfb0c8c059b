//! Contextual bandit environments.

mod dataset;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use dataset::{load_dataset, table1_dims, DatasetBanditEnv, DatasetSpec, RewardScheme};
pub use synthetic::{make_linear_env, make_sparse_env, default_sparsity, ContextLaw, LinearBanditEnv};

/// Result of pulling one arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Realized (noisy) reward.
    pub reward: f64,
    /// Mean reward of the pulled arm at this context.
    pub mean_reward: f64,
    /// Best mean reward over all arms at this context.
    pub optimal_mean_reward: f64,
}

impl StepOutcome {
    pub fn regret(&self) -> f64 {
        self.optimal_mean_reward - self.mean_reward
    }
}

/// A source of contexts and stochastic rewards. Environments own their random streams.
pub trait BanditEnv: Send {
    fn num_arms(&self) -> usize;
    fn context_dim(&self) -> usize;

    /// Next context; dataset environments signal [`crate::Error::EndOfData`] when exhausted.
    fn sample_context(&mut self) -> Result<Vec<f64>>;

    /// Pull `action` at `context` (which must be the most recently served context).
    fn pull(&mut self, context: &[f64], action: usize) -> Result<StepOutcome>;

    /// True observation noise variances, when the environment knows them.
    fn noise_variances(&self) -> Option<&[f64]> {
        None
    }

    /// Mean rewards of every arm at `context`, when available.
    fn mean_rewards(&self, _context: &[f64]) -> Option<Vec<f64>> {
        None
    }
}
