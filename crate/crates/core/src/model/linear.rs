use nalgebra::DMatrix;

use super::{GaussianPrior, GradientField, Observation, ParamVector, Preconditioner, RewardModel};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Per-arm linear model `m(x, a; θ) = xᵀβ_a`, with θ the concatenation of `β_0 … β_{K-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRewardModel {
    context_dim: usize,
    noise_variances: Vec<f64>,
}

impl LinearRewardModel {
    pub fn new(context_dim: usize, noise_variances: Vec<f64>) -> Result<Self> {
        if context_dim == 0 || noise_variances.is_empty() {
            return Err(Error::InvalidArgument(
                "linear model needs d >= 1 and K >= 1".into(),
            ));
        }
        if let Some(v) = noise_variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {v}"
            )));
        }
        Ok(Self {
            context_dim,
            noise_variances,
        })
    }

    pub fn with_shared_noise(context_dim: usize, num_arms: usize, noise_variance: f64) -> Result<Self> {
        Self::new(context_dim, vec![noise_variance; num_arms])
    }

    pub fn arm_weights<'t>(&self, theta: &'t [f64], arm: usize) -> &'t [f64] {
        &theta[arm * self.context_dim..(arm + 1) * self.context_dim]
    }

    fn stats(&self, data: &[Observation], batch: Option<&[usize]>) -> ArmStats {
        let d = self.context_dim;
        let k = self.noise_variances.len();
        let mut st = ArmStats {
            d,
            gram: vec![vec![0.0; d * d]; k],
            xr: vec![vec![0.0; d]; k],
        };
        let mut add = |obs: &Observation, scale: f64| {
            let a = obs.action;
            let g = &mut st.gram[a];
            for r in 0..d {
                let xr = obs.context[r] * scale;
                for c in 0..d {
                    g[r * d + c] += xr * obs.context[c];
                }
                st.xr[a][r] += xr * obs.reward;
            }
        };
        match batch {
            None => data.iter().for_each(|o| add(o, 1.0)),
            Some(b) => {
                let scale = data.len() as f64 / b.len() as f64;
                b.iter().for_each(|&i| add(&data[i], scale));
            }
        }
        st
    }
}

/// Per-arm `Σ x xᵀ` and `Σ r x`.
struct ArmStats {
    d: usize,
    gram: Vec<Vec<f64>>,
    xr: Vec<Vec<f64>>,
}

struct LinearField<'a> {
    model: &'a LinearRewardModel,
    stats: ArmStats,
    prior: GaussianPrior,
}

impl GradientField for LinearField<'_> {
    fn grad_into(&self, theta: &[f64], out: &mut [f64]) {
        let d = self.stats.d;
        let inv_prior = 1.0 / self.prior.variance();
        for (a, var) in self.model.noise_variances.iter().enumerate() {
            let beta = &theta[a * d..(a + 1) * d];
            let gram = &self.stats.gram[a];
            let xr = &self.stats.xr[a];
            let g = &mut out[a * d..(a + 1) * d];
            for r in 0..d {
                let fitted = dot(&gram[r * d..(r + 1) * d], beta);
                g[r] = (xr[r] - fitted) / var - beta[r] * inv_prior;
            }
        }
    }
}

impl RewardModel for LinearRewardModel {
    fn context_dim(&self) -> usize {
        self.context_dim
    }

    fn num_arms(&self) -> usize {
        self.noise_variances.len()
    }

    fn num_params(&self) -> usize {
        self.context_dim * self.noise_variances.len()
    }

    fn noise_variance(&self, arm: usize) -> f64 {
        self.noise_variances[arm]
    }

    fn predict_into(&self, theta: &[f64], context: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot(self.arm_weights(theta, a), context);
        }
    }

    fn accumulate_loglik_grad(&self, theta: &[f64], obs: &Observation, scale: f64, out: &mut [f64]) -> f64 {
        let d = self.context_dim;
        let a = obs.action;
        let m = dot(self.arm_weights(theta, a), &obs.context);
        let w = scale * (obs.reward - m) / self.noise_variances[a];
        for (o, x) in out[a * d..(a + 1) * d].iter_mut().zip(&obs.context) {
            *o += w * x;
        }
        m
    }

    fn gradient_field<'a>(
        &'a self,
        data: &'a [Observation],
        batch: Option<&'a [usize]>,
        prior: GaussianPrior,
    ) -> Box<dyn GradientField + 'a> {
        Box::new(LinearField {
            model: self,
            stats: self.stats(data, batch),
            prior,
        })
    }

    /// Block-diagonal exact posterior covariance, `(Σ x xᵀ/σ²_a + I/λ)⁻¹` per arm.
    fn preconditioner(&self, data: &[Observation], prior: GaussianPrior, _particles: &[ParamVector]) -> Preconditioner {
        let d = self.context_dim;
        let st = self.stats(data, None);
        let blocks = st
            .gram
            .iter()
            .zip(&self.noise_variances)
            .map(|(gram, var)| {
                let mut prec = DMatrix::from_row_slice(d, d, gram) / *var;
                for i in 0..d {
                    prec[(i, i)] += 1.0 / prior.variance();
                }
                // The precision is at least I/λ, so Cholesky cannot fail for finite data.
                let cov = prec
                    .cholesky()
                    .map(|c| c.inverse())
                    .unwrap_or_else(|| DMatrix::identity(d, d) * prior.variance());
                let mut row_major = Vec::with_capacity(d * d);
                for r in 0..d {
                    for c in 0..d {
                        row_major.push(cov[(r, c)]);
                    }
                }
                row_major
            })
            .collect();
        Preconditioner::Blocks { size: d, blocks }
    }
}
