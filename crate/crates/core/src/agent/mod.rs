//! Decision-making policies.

mod lints;
mod neural_linear;
mod pits;

use rand::Rng;

use crate::env::{BanditEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::seed::{self, Rng as StreamRng};

pub use lints::{LinTsAgent, LinearPosterior};
pub use neural_linear::{FeatureMap, NeuralLinearAgent, RetrainSchedule};
pub use pits::{BatchPolicy, GreedyAgent, PiTsAgent, FULL_BATCH_LIMIT, MINIBATCH_SIZE};

/// A contextual bandit policy. Agents own their random streams.
pub trait Agent: Send {
    fn name(&self) -> &str;
    fn num_arms(&self) -> usize;
    fn select_action(&mut self, context: &[f64]) -> Result<usize>;
    fn observe(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()>;
}

impl std::fmt::Debug for dyn Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Agent({})", self.name())
    }
}

#[derive(Clone, Debug)]
pub struct UniformAgent {
    name: String,
    num_arms: usize,
    rng: StreamRng,
}

impl UniformAgent {
    pub fn new(name: impl Into<String>, num_arms: usize, seed: u64) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::InvalidArgument("need at least one arm".into()));
        }
        Ok(Self {
            name: name.into(),
            num_arms,
            rng: seed::from_seed(seed),
        })
    }
}

impl Agent for UniformAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_arms(&self) -> usize {
        self.num_arms
    }

    fn select_action(&mut self, _context: &[f64]) -> Result<usize> {
        Ok(self.rng.random_range(0..self.num_arms))
    }

    fn observe(&mut self, _context: &[f64], _action: usize, _reward: f64) -> Result<()> {
        Ok(())
    }
}

/// Pull every arm `pulls_per_arm` times round-robin, feeding each outcome to the agent.
///
/// Returns the outcomes so callers can count them as regret-bearing rounds.
pub fn warmup(agent: &mut dyn Agent, env: &mut dyn BanditEnv, pulls_per_arm: usize) -> Result<Vec<StepOutcome>> {
    let k = env.num_arms();
    let mut outcomes = Vec::with_capacity(k * pulls_per_arm);
    for _ in 0..pulls_per_arm {
        for action in 0..k {
            let context = env.sample_context()?;
            let outcome = env.pull(&context, action)?;
            agent.observe(&context, action, outcome.reward)?;
            outcomes.push(outcome);
        }
    }
    Ok(outcomes)
}
