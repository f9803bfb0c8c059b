use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Agent;
use crate::error::{check_len, Error, Result};
use crate::linalg::{argmax_random_tie, dot};
use crate::seed::{self, Rng as StreamRng};

const CHOLESKY_JITTER: f64 = 1e-10;

/// Conjugate Gaussian posterior over one arm's linear weights with known noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPosterior {
    dim: usize,
    prior_variance: f64,
    mean: Vec<f64>,
    /// Row-major covariance.
    cov: Vec<f64>,
    /// Precision-weighted mean `Σ⁻¹ μ`.
    eta: Vec<f64>,
    count: usize,
}

impl LinearPosterior {
    pub fn new(dim: usize, prior_variance: f64) -> Self {
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            cov[i * dim + i] = prior_variance;
        }
        Self {
            dim,
            prior_variance,
            mean: vec![0.0; dim],
            cov,
            eta: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.dim, self.prior_variance);
    }

    /// Rank-one update `Σ ← (Σ⁻¹ + x xᵀ/σ²)⁻¹`, `μ ← Σ (Σ_prev⁻¹ μ_prev + x r/σ²)` via Sherman–Morrison.
    pub fn update(&mut self, x: &[f64], reward: f64, noise_variance: f64) {
        let d = self.dim;
        let sx: Vec<f64> = (0..d).map(|r| dot(&self.cov[r * d..(r + 1) * d], x)).collect();
        let denom = noise_variance + dot(x, &sx);
        for r in 0..d {
            for c in 0..d {
                self.cov[r * d + c] -= sx[r] * sx[c] / denom;
            }
        }
        for r in 0..d {
            for c in r + 1..d {
                let s = 0.5 * (self.cov[r * d + c] + self.cov[c * d + r]);
                self.cov[r * d + c] = s;
                self.cov[c * d + r] = s;
            }
        }
        for (e, xi) in self.eta.iter_mut().zip(x) {
            *e += xi * reward / noise_variance;
        }
        for r in 0..d {
            self.mean[r] = dot(&self.cov[r * d..(r + 1) * d], &self.eta);
        }
        self.count += 1;
    }

    /// Draw `β ~ N(μ, Σ)`.
    pub fn sample<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut cov = DMatrix::from_row_slice(d, d, &self.cov);
        for i in 0..d {
            cov[(i, i)] += CHOLESKY_JITTER;
        }
        let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite { arm })?;
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let draw = chol.l() * z;
        Ok(self.mean.iter().zip(draw.iter()).map(|(m, v)| m + v).collect())
    }
}

/// Thompson sampling with exact per-arm Bayesian linear regression.
#[derive(Clone, Debug)]
pub struct LinTsAgent {
    name: String,
    posteriors: Vec<LinearPosterior>,
    noise_variances: Vec<f64>,
    rng: StreamRng,
}

impl LinTsAgent {
    pub fn new(name: impl Into<String>, context_dim: usize, prior_variance: f64, noise_variances: Vec<f64>, seed: u64) -> Result<Self> {
        if context_dim == 0 || noise_variances.is_empty() {
            return Err(Error::InvalidArgument("Lin-TS needs d >= 1 and K >= 1".into()));
        }
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior variance must be positive, got {prior_variance}")));
        }
        if let Some(v) = noise_variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {v}")));
        }
        Ok(Self {
            name: name.into(),
            posteriors: vec![LinearPosterior::new(context_dim, prior_variance); noise_variances.len()],
            noise_variances,
            rng: seed::from_seed(seed),
        })
    }

    pub fn posterior(&self, arm: usize) -> &LinearPosterior {
        &self.posteriors[arm]
    }
}

/// Sample every arm's weights in arm order and return the argmax of `φᵀβ̂_a`.
pub(crate) fn thompson_choice<R: Rng + ?Sized>(posteriors: &[LinearPosterior], features: &[f64], rng: &mut R) -> Result<usize> {
    let scores = posteriors
        .iter()
        .enumerate()
        .map(|(a, p)| p.sample(a, rng).map(|beta| dot(&beta, features)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmax_random_tie(&scores, rng))
}

impl Agent for LinTsAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn num_arms(&self) -> usize {
        self.posteriors.len()
    }

    fn select_action(&mut self, context: &[f64]) -> Result<usize> {
        check_len("context", self.posteriors[0].dim, context.len())?;
        thompson_choice(&self.posteriors, context, &mut self.rng)
    }

    fn observe(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        check_len("context", self.posteriors[0].dim, context.len())?;
        let var = *self
            .noise_variances
            .get(action)
            .ok_or_else(|| Error::InvalidArgument(format!("action {action} out of range")))?;
        self.posteriors[action].update(context, reward, var);
        Ok(())
    }
}
