use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

use super::{BanditEnv, StepOutcome};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, std_normal};
use crate::seed::Rng as StreamRng;

/// Gaussian context law `x = μ + L z`, `z ~ N(0, I)`, with covariance `L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextLaw {
    mean: Vec<f64>,
    /// Row-major lower-triangular factor.
    factor: Vec<f64>,
}

impl ContextLaw {
    pub fn standard(dim: usize) -> Self {
        let mut factor = vec![0.0; dim * dim];
        for i in 0..dim {
            factor[i * dim + i] = 1.0;
        }
        Self {
            mean: vec![0.0; dim],
            factor,
        }
    }

    /// Degenerate law that always returns `mean`.
    pub fn fixed(mean: Vec<f64>) -> Self {
        let dim = mean.len();
        Self {
            mean,
            factor: vec![0.0; dim * dim],
        }
    }

    pub fn from_covariance(mean: Vec<f64>, cov: &[f64]) -> Result<Self> {
        let d = mean.len();
        check_len("context covariance", d * d, cov.len())?;
        let chol = DMatrix::from_row_slice(d, d, cov)
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("context covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut factor = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..=r {
                factor[r * d + c] = l[(r, c)];
            }
        }
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| std_normal(rng)).collect();
        (0..d)
            .map(|r| self.mean[r] + dot(&self.factor[r * d..r * d + r + 1], &z[..r + 1]))
            .collect()
    }
}

/// Linear-Gaussian bandit: `r = xᵀβ_a + ε`, `ε ~ N(0, σ²_a)`.
///
/// Contexts and reward noise come from separate streams, so the context
/// sequence does not depend on which actions are taken.
#[derive(Clone, Debug)]
pub struct LinearBanditEnv {
    weights: Vec<Vec<f64>>,
    noise_variances: Vec<f64>,
    context_law: ContextLaw,
    context_rng: StreamRng,
    reward_rng: StreamRng,
}

impl LinearBanditEnv {
    pub fn new(
        weights: Vec<Vec<f64>>,
        noise_variances: Vec<f64>,
        context_law: ContextLaw,
        context_seed: u64,
        reward_seed: u64,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("environment needs at least one arm".into()));
        }
        check_len("noise variances", weights.len(), noise_variances.len())?;
        for w in &weights {
            check_len("arm weights", context_law.dim(), w.len())?;
        }
        if let Some(v) = noise_variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("noise variance must be nonnegative, got {v}")));
        }
        Ok(Self {
            weights,
            noise_variances,
            context_law,
            context_rng: StreamRng::seed_from_u64(context_seed),
            reward_rng: StreamRng::seed_from_u64(reward_seed),
        })
    }

    /// Replace the per-arm noise variances (zero means noiseless).
    pub fn with_noise_variances(mut self, noise_variances: Vec<f64>) -> Result<Self> {
        check_len("noise variances", self.weights.len(), noise_variances.len())?;
        if let Some(v) = noise_variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("noise variance must be nonnegative, got {v}")));
        }
        self.noise_variances = noise_variances;
        Ok(self)
    }

    pub fn with_context_law(mut self, law: ContextLaw) -> Result<Self> {
        check_len("context law", self.context_law.dim(), law.dim())?;
        self.context_law = law;
        Ok(self)
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn oracle_reward(&self, context: &[f64]) -> f64 {
        self.weights
            .iter()
            .map(|w| dot(w, context))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl BanditEnv for LinearBanditEnv {
    fn num_arms(&self) -> usize {
        self.weights.len()
    }

    fn context_dim(&self) -> usize {
        self.context_law.dim()
    }

    fn sample_context(&mut self) -> Result<Vec<f64>> {
        Ok(self.context_law.sample(&mut self.context_rng))
    }

    fn pull(&mut self, context: &[f64], action: usize) -> Result<StepOutcome> {
        check_len("context", self.context_dim(), context.len())?;
        let w = self.weights.get(action).ok_or_else(|| {
            Error::InvalidArgument(format!("action {action} out of range for {} arms", self.weights.len()))
        })?;
        let mean_reward = dot(w, context);
        let sd = self.noise_variances[action].sqrt();
        let noise: f64 = std_normal(&mut self.reward_rng);
        Ok(StepOutcome {
            reward: mean_reward + sd * noise,
            mean_reward,
            optimal_mean_reward: self.oracle_reward(context),
        })
    }

    fn noise_variances(&self) -> Option<&[f64]> {
        Some(&self.noise_variances)
    }

    fn mean_rewards(&self, context: &[f64]) -> Option<Vec<f64>> {
        Some(self.weights.iter().map(|w| dot(w, context)).collect())
    }
}

fn graded_noise(num_arms: usize) -> Vec<f64> {
    (1..=num_arms).map(|a| 0.01 * a as f64).collect()
}

/// `β_a ~ N(0, λI)`, `σ²_a = 0.01·a` for `a = 1..K`, contexts `N(0, I)`.
pub fn make_linear_env<R: Rng + ?Sized>(num_arms: usize, context_dim: usize, prior_variance: f64, rng: &mut R) -> Result<LinearBanditEnv> {
    if num_arms == 0 || context_dim == 0 {
        return Err(Error::InvalidArgument("K and d must be at least 1".into()));
    }
    if !(prior_variance >= 0.0 && prior_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("prior variance must be nonnegative, got {prior_variance}")));
    }
    let sd = prior_variance.sqrt();
    let weights = (0..num_arms)
        .map(|_| (0..context_dim).map(|_| sd * std_normal(rng)).collect())
        .collect();
    let (cs, rs) = (rng.random(), rng.random());
    LinearBanditEnv::new(weights, graded_noise(num_arms), ContextLaw::standard(context_dim), cs, rs)
}

/// `max(1, ⌈d/5⌉)`
pub fn default_sparsity(context_dim: usize) -> usize {
    context_dim.div_ceil(5).max(1)
}

/// Like [`make_linear_env`] but each `β_a` has exactly `sparsity` nonzero coordinates
/// on a uniformly chosen support.
pub fn make_sparse_env<R: Rng + ?Sized>(
    num_arms: usize,
    context_dim: usize,
    prior_variance: f64,
    sparsity: usize,
    rng: &mut R,
) -> Result<LinearBanditEnv> {
    if num_arms == 0 || context_dim == 0 {
        return Err(Error::InvalidArgument("K and d must be at least 1".into()));
    }
    if !(prior_variance > 0.0 && prior_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("prior variance must be positive, got {prior_variance}")));
    }
    if sparsity == 0 || sparsity > context_dim {
        return Err(Error::InvalidArgument(format!("sparsity must be in 1..={context_dim}, got {sparsity}")));
    }
    let sd = prior_variance.sqrt();
    let weights = (0..num_arms)
        .map(|_| {
            let mut w = vec![0.0; context_dim];
            for j in rand::seq::index::sample(rng, context_dim, sparsity).iter() {
                let mut v = 0.0;
                // N(0, λ) hits exactly zero with probability zero; redraw to keep the count exact.
                while v == 0.0 {
                    v = sd * std_normal(rng);
                }
                w[j] = v;
            }
            w
        })
        .collect();
    let (cs, rs) = (rng.random(), rng.random());
    LinearBanditEnv::new(weights, graded_noise(num_arms), ContextLaw::standard(context_dim), cs, rs)
}
