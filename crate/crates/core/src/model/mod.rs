//! Reward models `m(x, a; θ)` and the log-posterior potential over observed data.
//!
//! The potential is `U(θ) = Σ_i log N(r_i | m(x_i, a_i; θ), σ²_{a_i}) + log N(θ | 0, λI)`;
//! the particle sampler targets `p(θ | D) ∝ exp(U(θ))`.

mod linear;
mod mlp;

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;

pub use linear::LinearRewardModel;
pub use mlp::MlpRewardModel;

/// Flat parameter vector θ of a reward model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Rejects non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter entry {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Unchecked conversion; callers that accept user data should go through [`ParamVector::new`].
impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// One `(x, a, r)` triple of the interaction history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub context: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

impl Observation {
    pub fn new(context: Vec<f64>, action: usize, reward: f64) -> Self {
        Self {
            context,
            action,
            reward,
        }
    }
}

/// Isotropic Gaussian prior `N(0, λI)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    variance: f64,
}

impl GaussianPrior {
    pub fn new(variance: f64) -> Result<Self> {
        if variance > 0.0 && variance.is_finite() {
            Ok(Self { variance })
        } else {
            Err(Error::InvalidArgument(format!(
                "prior variance must be positive and finite, got {variance}"
            )))
        }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let sq: f64 = theta.iter().map(|v| v * v).sum();
        -sq / (2.0 * self.variance) - 0.5 * theta.len() as f64 * (2.0 * PI * self.variance).ln()
    }

    /// `out += ∇ log p₀(θ) = -θ/λ`
    pub fn accumulate_grad(&self, theta: &[f64], out: &mut [f64]) {
        axpy(-1.0 / self.variance, theta, out);
    }
}

/// Gradient of the potential (or an unbiased minibatch estimate of it) at arbitrary θ.
pub trait GradientField: Sync {
    fn grad_into(&self, theta: &[f64], out: &mut [f64]);
}

/// Positive-definite step preconditioner for the particle flow.
///
/// Applying the same positive-definite matrix to every particle's direction
/// leaves the fixed points of the flow unchanged; it only rescales how fast
/// each coordinate moves.
#[derive(Clone, Debug, PartialEq)]
pub enum Preconditioner {
    Identity,
    /// Per-coordinate multipliers.
    Diagonal(Vec<f64>),
    /// Consecutive dense `size × size` row-major blocks covering θ.
    Blocks { size: usize, blocks: Vec<Vec<f64>> },
}

impl Preconditioner {
    pub fn apply(&self, v: &mut [f64]) {
        match self {
            Preconditioner::Identity => {}
            Preconditioner::Diagonal(d) => {
                for (vi, di) in v.iter_mut().zip(d) {
                    *vi *= di;
                }
            }
            Preconditioner::Blocks { size, blocks } => {
                let mut tmp = vec![0.0; *size];
                for (b, mat) in blocks.iter().enumerate() {
                    let seg = &mut v[b * size..(b + 1) * size];
                    for (r, t) in tmp.iter_mut().enumerate() {
                        *t = crate::linalg::dot(&mat[r * size..(r + 1) * size], seg);
                    }
                    seg.copy_from_slice(&tmp);
                }
            }
        }
    }
}

/// A generalization model `m(x, a; θ)` with Gaussian observation noise.
pub trait RewardModel: Send + Sync + fmt::Debug {
    fn context_dim(&self) -> usize;
    fn num_arms(&self) -> usize;
    fn num_params(&self) -> usize;
    fn noise_variance(&self, arm: usize) -> f64;

    /// Predictions for all arms into `out`; dimensions are not checked.
    fn predict_into(&self, theta: &[f64], context: &[f64], out: &mut [f64]);

    /// Adds `scale · ∇_θ log p(r | x, a, θ)` to `out` and returns the prediction `m(x, a; θ)`.
    fn accumulate_loglik_grad(&self, theta: &[f64], obs: &Observation, scale: f64, out: &mut [f64])
        -> f64;

    /// Gradient oracle over `data` (or the `batch` subset, rescaled by `|data| / |batch|`).
    fn gradient_field<'a>(
        &'a self,
        data: &'a [Observation],
        batch: Option<&'a [usize]>,
        prior: GaussianPrior,
    ) -> Box<dyn GradientField + 'a>;

    /// Curvature-based preconditioner for the flow, computed from the full data.
    fn preconditioner(
        &self,
        _data: &[Observation],
        _prior: GaussianPrior,
        _particles: &[ParamVector],
    ) -> Preconditioner {
        Preconditioner::Identity
    }

    fn validate_observation(&self, obs: &Observation) -> Result<()> {
        check_len("observation context", self.context_dim(), obs.context.len())?;
        if obs.action >= self.num_arms() {
            return Err(Error::InvalidArgument(format!(
                "action {} out of range for {} arms",
                obs.action,
                self.num_arms()
            )));
        }
        if !obs.reward.is_finite() {
            return Err(Error::InvalidArgument("reward is not finite".into()));
        }
        Ok(())
    }

    fn predict(&self, theta: &[f64], context: &[f64]) -> Result<Vec<f64>> {
        check_len("theta", self.num_params(), theta.len())?;
        check_len("context", self.context_dim(), context.len())?;
        let mut out = vec![0.0; self.num_arms()];
        self.predict_into(theta, context, &mut out);
        Ok(out)
    }

    /// `U(θ)`; empty data gives the prior log-density.
    fn log_potential(&self, theta: &[f64], data: &[Observation], prior: GaussianPrior) -> Result<f64> {
        check_len("theta", self.num_params(), theta.len())?;
        let mut preds = vec![0.0; self.num_arms()];
        let mut total = 0.0;
        for (index, obs) in data.iter().enumerate() {
            self.validate_observation(obs)?;
            self.predict_into(theta, &obs.context, &mut preds);
            let var = self.noise_variance(obs.action);
            let resid = obs.reward - preds[obs.action];
            let term = -resid * resid / (2.0 * var) - 0.5 * (2.0 * PI * var).ln();
            if !term.is_finite() {
                return Err(Error::NonFiniteObservation { index });
            }
            total += term;
        }
        let total = total + prior.log_density(theta);
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::InvalidArgument("prior term is not finite".into()))
        }
    }

    /// `∇_θ U(θ)` over the full data.
    fn grad_potential(&self, theta: &[f64], data: &[Observation], prior: GaussianPrior) -> Result<ParamVector> {
        check_len("theta", self.num_params(), theta.len())?;
        for obs in data {
            self.validate_observation(obs)?;
        }
        let mut out = vec![0.0; self.num_params()];
        self.gradient_field(data, None, prior).grad_into(theta, &mut out);
        finite_or_locate(self, theta, data, None, out)
    }

    /// Unbiased estimate `(|D|/|B|) Σ_{i∈B} ∇ log p(r_i | ·) + ∇ log p₀(θ)`.
    fn minibatch_grad_potential(
        &self,
        theta: &[f64],
        data: &[Observation],
        prior: GaussianPrior,
        batch: &[usize],
    ) -> Result<ParamVector> {
        check_len("theta", self.num_params(), theta.len())?;
        if batch.is_empty() {
            return Err(Error::InvalidArgument("minibatch must be nonempty".into()));
        }
        for &i in batch {
            let obs = data.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("batch index {i} out of range for {} observations", data.len()))
            })?;
            self.validate_observation(obs)?;
        }
        let mut out = vec![0.0; self.num_params()];
        self.gradient_field(data, Some(batch), prior).grad_into(theta, &mut out);
        finite_or_locate(self, theta, data, Some(batch), out)
    }
}

fn finite_or_locate<M: RewardModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &[Observation],
    batch: Option<&[usize]>,
    out: Vec<f64>,
) -> Result<ParamVector> {
    if out.iter().all(|v| v.is_finite()) {
        return Ok(ParamVector(out));
    }
    let mut scratch = vec![0.0; model.num_params()];
    let indices: Vec<usize> = match batch {
        Some(b) => b.to_vec(),
        None => (0..data.len()).collect(),
    };
    for index in indices {
        scratch.iter_mut().for_each(|v| *v = 0.0);
        let m = model.accumulate_loglik_grad(theta, &data[index], 1.0, &mut scratch);
        if !m.is_finite() || scratch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObservation { index });
        }
    }
    Err(Error::InvalidArgument("gradient is not finite at the prior term".into()))
}

/// Per-observation gradient field; used by models without a closed-form summary.
pub(crate) struct ObservationField<'a, M: RewardModel + ?Sized> {
    pub model: &'a M,
    pub data: &'a [Observation],
    pub batch: Option<&'a [usize]>,
    pub prior: GaussianPrior,
}

impl<M: RewardModel + ?Sized> GradientField for ObservationField<'_, M> {
    fn grad_into(&self, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.batch {
            None => {
                for obs in self.data {
                    self.model.accumulate_loglik_grad(theta, obs, 1.0, out);
                }
            }
            Some(batch) => {
                let scale = self.data.len() as f64 / batch.len() as f64;
                for &i in batch {
                    self.model.accumulate_loglik_grad(theta, &self.data[i], scale, out);
                }
            }
        }
        self.prior.accumulate_grad(theta, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_rejects_nonpositive_variance() {
        assert!(GaussianPrior::new(0.0).is_err());
        assert!(GaussianPrior::new(-1.0).is_err());
        assert!(GaussianPrior::new(f64::NAN).is_err());
        assert!(GaussianPrior::new(2.0).is_ok());
    }

    #[test]
    fn param_vector_rejects_non_finite() {
        assert!(ParamVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(ParamVector::new(vec![1.0, 2.0]).unwrap().len(), 2);
    }

    #[test]
    fn block_preconditioner_multiplies_each_block() {
        let p = Preconditioner::Blocks {
            size: 2,
            blocks: vec![vec![1.0, 2.0, 0.0, 1.0], vec![2.0, 0.0, 0.0, 3.0]],
        };
        let mut v = vec![1.0, 1.0, 1.0, 1.0];
        p.apply(&mut v);
        assert_eq!(v, vec![3.0, 1.0, 2.0, 3.0]);
    }
}
