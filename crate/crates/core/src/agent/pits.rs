use rand::Rng;

use super::Agent;
use crate::error::{check_len, Result};
use crate::linalg::{argmax_random_tie, std_normal};
use crate::model::{GaussianPrior, Observation, ParamVector, Preconditioner, RewardModel};
use crate::seed::{self, Rng as StreamRng};
use crate::wgf::{evolve, DgfConfig, ParticleSet, Preconditioning};

/// When the history is at most this long every inner step uses all of it.
pub const FULL_BATCH_LIMIT: usize = 1024;
pub const MINIBATCH_SIZE: usize = 256;

/// Full-batch up to `limit` observations, then fixed-size minibatches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPolicy {
    pub full_batch_limit: usize,
    pub minibatch_size: usize,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        Self {
            full_batch_limit: FULL_BATCH_LIMIT,
            minibatch_size: MINIBATCH_SIZE,
        }
    }
}

impl BatchPolicy {
    pub fn batch_for(&self, history_len: usize) -> Option<usize> {
        (history_len > self.full_batch_limit).then_some(self.minibatch_size)
    }
}

/// Particle-interactive Thompson sampling.
///
/// Each round one particle is drawn uniformly and acted on greedily; each
/// observation triggers one outer iteration of the particle flow over the
/// whole history.
#[derive(Debug)]
pub struct PiTsAgent {
    name: String,
    model: Box<dyn RewardModel>,
    prior: GaussianPrior,
    particles: ParticleSet,
    config: DgfConfig,
    batch: BatchPolicy,
    history: Vec<Observation>,
    rng: StreamRng,
}

impl PiTsAgent {
    /// Particles are drawn from the prior with the agent's own stream.
    pub fn new(
        name: impl Into<String>,
        model: Box<dyn RewardModel>,
        prior: GaussianPrior,
        num_particles: usize,
        config: DgfConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if num_particles == 0 {
            return Err(crate::Error::InvalidArgument("need at least one particle".into()));
        }
        let mut rng = seed::from_seed(seed);
        let particles = ParticleSet::from_prior(num_particles, model.num_params(), prior, &mut rng)?;
        Ok(Self {
            name: name.into(),
            model,
            prior,
            particles,
            config,
            batch: BatchPolicy::default(),
            history: Vec::new(),
            rng,
        })
    }

    pub fn with_batch_policy(mut self, batch: BatchPolicy) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_particles(mut self, particles: ParticleSet) -> Result<Self> {
        check_len("particle", self.model.num_params(), particles.dim())?;
        self.particles = particles;
        Ok(self)
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn model(&self) -> &dyn RewardModel {
        self.model.as_ref()
    }
}

impl Agent for PiTsAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_arms(&self) -> usize {
        self.model.num_arms()
    }

    fn select_action(&mut self, context: &[f64]) -> Result<usize> {
        let m = self.particles.len();
        let idx = if m == 1 { 0 } else { self.rng.random_range(0..m) };
        let preds = self.model.predict(&self.particles.particles()[idx], context)?;
        Ok(argmax_random_tie(&preds, &mut self.rng))
    }

    fn observe(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        let obs = Observation::new(context.to_vec(), action, reward);
        self.model.validate_observation(&obs)?;
        self.history.push(obs);
        let config = DgfConfig {
            batch_size: self.batch.batch_for(self.history.len()),
            ..self.config.clone()
        };
        self.particles = evolve(&self.particles, self.model.as_ref(), &self.history, self.prior, &config, &mut self.rng)?;
        Ok(())
    }
}

/// Single point estimate fitted by (preconditioned) gradient ascent on the potential.
///
/// Uses the same step, batch and preconditioning rules as [`PiTsAgent`]; with one
/// particle and no transport force the two agents make identical decisions.
#[derive(Debug)]
pub struct GreedyAgent {
    name: String,
    model: Box<dyn RewardModel>,
    prior: GaussianPrior,
    theta: ParamVector,
    config: DgfConfig,
    batch: BatchPolicy,
    history: Vec<Observation>,
    rng: StreamRng,
}

impl GreedyAgent {
    pub fn new(name: impl Into<String>, model: Box<dyn RewardModel>, prior: GaussianPrior, config: DgfConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::from_seed(seed);
        let sd = prior.variance().sqrt();
        let theta: Vec<f64> = (0..model.num_params())
            .map(|_| sd * std_normal(&mut rng))
            .collect();
        Ok(Self {
            name: name.into(),
            model,
            prior,
            theta: theta.into(),
            config,
            batch: BatchPolicy::default(),
            history: Vec::new(),
            rng,
        })
    }

    pub fn with_batch_policy(mut self, batch: BatchPolicy) -> Self {
        self.batch = batch;
        self
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }
}

impl Agent for GreedyAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_arms(&self) -> usize {
        self.model.num_arms()
    }

    fn select_action(&mut self, context: &[f64]) -> Result<usize> {
        let preds = self.model.predict(&self.theta, context)?;
        Ok(argmax_random_tie(&preds, &mut self.rng))
    }

    fn observe(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        let obs = Observation::new(context.to_vec(), action, reward);
        self.model.validate_observation(&obs)?;
        self.history.push(obs);
        let precond = match self.config.preconditioning {
            Preconditioning::Identity => Preconditioner::Identity,
            Preconditioning::Curvature => {
                self.model
                    .preconditioner(&self.history, self.prior, std::slice::from_ref(&self.theta))
            }
        };
        let n = self.history.len();
        let minibatch = self.batch.batch_for(n).filter(|&b| b < n);
        let full = match minibatch {
            None => Some(self.model.gradient_field(&self.history, None, self.prior)),
            Some(_) => None,
        };
        let h = self.config.step_size;
        let mut grad = vec![0.0; self.theta.len()];
        let mut batch: Vec<usize> = Vec::new();
        for _ in 0..self.config.inner_steps {
            match (&full, minibatch) {
                (Some(field), _) => field.grad_into(&self.theta, &mut grad),
                (None, Some(b)) => {
                    batch.clear();
                    batch.extend(rand::seq::index::sample(&mut self.rng, n, b).iter());
                    self.model
                        .gradient_field(&self.history, Some(&batch), self.prior)
                        .grad_into(&self.theta, &mut grad);
                }
                (None, None) => unreachable!(),
            }
            precond.apply(&mut grad);
            for (t, g) in self.theta.iter_mut().zip(&grad) {
                *t += h * g;
            }
        }
        if !self.theta.is_finite() {
            return Err(crate::Error::NonFiniteUpdate {
                particle: 0,
                step_size: h,
                bandwidth: f64::NAN,
            });
        }
        Ok(())
    }
}
