use rand::seq::SliceRandom;

use super::lints::{thompson_choice, LinearPosterior};
use super::Agent;
use crate::linalg::std_normal;
use crate::error::{check_len, Error, Result};
use crate::model::{MlpRewardModel, Observation, ParamVector, RewardModel};
use crate::seed::{self, Rng as StreamRng};

/// Representation fed to the per-arm Bayesian linear regressions.
#[derive(Clone, Debug)]
pub enum FeatureMap {
    /// Features are the raw context.
    Identity,
    /// Last hidden layer of a network trained on squared error.
    Network { model: MlpRewardModel, theta: ParamVector },
}

impl FeatureMap {
    pub fn dim(&self, context_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => context_dim,
            FeatureMap::Network { model, .. } => model.feature_dim(),
        }
    }

    pub fn apply(&self, context: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Identity => context.to_vec(),
            FeatureMap::Network { model, theta } => model.features(theta, context),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetrainSchedule {
    /// `None` never retrains.
    pub every: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for RetrainSchedule {
    fn default() -> Self {
        Self {
            every: Some(100),
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

/// Thompson sampling on learned features: a network supplies the
/// representation and each arm keeps an exact Bayesian linear regression on it.
#[derive(Clone, Debug)]
pub struct NeuralLinearAgent {
    name: String,
    context_dim: usize,
    features: FeatureMap,
    posteriors: Vec<LinearPosterior>,
    noise_variances: Vec<f64>,
    schedule: RetrainSchedule,
    buffer: Vec<Observation>,
    rng: StreamRng,
}

impl NeuralLinearAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        features: FeatureMap,
        prior_variance: f64,
        noise_variances: Vec<f64>,
        schedule: RetrainSchedule,
        seed: u64,
    ) -> Result<Self> {
        if noise_variances.is_empty() || noise_variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("noise variances must be positive".into()));
        }
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior variance must be positive, got {prior_variance}")));
        }
        if let FeatureMap::Network { model, theta } = &features {
            check_len("network input", context_dim, model.context_dim())?;
            check_len("network parameters", model.num_params(), theta.len())?;
        }
        let fdim = features.dim(context_dim);
        Ok(Self {
            name: name.into(),
            context_dim,
            features,
            posteriors: vec![LinearPosterior::new(fdim, prior_variance); noise_variances.len()],
            noise_variances,
            schedule,
            buffer: Vec::new(),
            rng: seed::from_seed(seed),
        })
    }

    /// Network trunk with He-scaled Gaussian weights and zero biases, drawn from `seed`.
    pub fn network_features(model: MlpRewardModel, seed: u64) -> FeatureMap {
        let mut rng = seed::from_seed(seed);
        let mut theta = vec![0.0; model.num_params()];
        let mut widths = vec![model.context_dim()];
        widths.extend_from_slice(model.hidden_widths());
        widths.push(model.num_arms());
        let mut offset = 0;
        for w in widths.windows(2) {
            let sd = (2.0 / w[0] as f64).sqrt();
            for t in &mut theta[offset..offset + w[0] * w[1]] {
                *t = sd * std_normal(&mut rng);
            }
            offset += w[0] * w[1] + w[1];
        }
        FeatureMap::Network {
            model,
            theta: theta.into(),
        }
    }

    pub fn posterior(&self, arm: usize) -> &LinearPosterior {
        &self.posteriors[arm]
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    pub fn buffer(&self) -> &[Observation] {
        &self.buffer
    }

    /// Rebuild every arm posterior from the stored raw data under the current features.
    pub fn recompute_posteriors(&mut self) {
        self.posteriors.iter_mut().for_each(LinearPosterior::reset);
        for obs in &self.buffer {
            let phi = self.features.apply(&obs.context);
            self.posteriors[obs.action].update(&phi, obs.reward, self.noise_variances[obs.action]);
        }
    }

    /// Minibatch gradient ascent on the Gaussian log-likelihood of the buffer.
    pub fn retrain(&mut self) {
        let FeatureMap::Network { model, theta } = &mut self.features else {
            return;
        };
        if self.buffer.is_empty() {
            return;
        }
        let mut order: Vec<usize> = (0..self.buffer.len()).collect();
        let mut grad = vec![0.0; theta.len()];
        let lr = self.schedule.learning_rate;
        let bs = self.schedule.batch_size.max(1);
        for _ in 0..self.schedule.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(bs) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    model.accumulate_loglik_grad(theta, &self.buffer[i], scale, &mut grad);
                }
                for (t, g) in theta.iter_mut().zip(&grad) {
                    *t += lr * g;
                }
            }
        }
    }
}

impl Agent for NeuralLinearAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_arms(&self) -> usize {
        self.posteriors.len()
    }

    fn select_action(&mut self, context: &[f64]) -> Result<usize> {
        check_len("context", self.context_dim, context.len())?;
        let phi = self.features.apply(context);
        thompson_choice(&self.posteriors, &phi, &mut self.rng)
    }

    fn observe(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        check_len("context", self.context_dim, context.len())?;
        if action >= self.posteriors.len() {
            return Err(Error::InvalidArgument(format!("action {action} out of range")));
        }
        self.buffer.push(Observation::new(context.to_vec(), action, reward));
        let phi = self.features.apply(context);
        self.posteriors[action].update(&phi, reward, self.noise_variances[action]);
        let retrain_due = matches!(self.features, FeatureMap::Network { .. })
            && self.schedule.every.is_some_and(|n| n > 0 && self.buffer.len() % n == 0);
        if retrain_due {
            self.retrain();
            self.recompute_posteriors();
            if self.posteriors.iter().any(|p| p.mean().iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidArgument("retraining produced non-finite features".into()));
            }
        }
        Ok(())
    }
}
