use super::{GaussianPrior, GradientField, Observation, ObservationField, ParamVector, Preconditioner, RewardModel};
use crate::error::{Error, Result};

/// Observations used when estimating the Fisher diagonal for the preconditioner.
const FISHER_SUBSAMPLE: usize = 128;
/// Per-sample gradients kept for the power iteration on the preconditioned curvature.
const SPECTRAL_SAMPLES: usize = 64;
const POWER_ITERATIONS: usize = 50;

/// Fully connected rectifier network `x ↦ K` outputs, one per arm.
///
/// θ is laid out layer by layer as the row-major weight matrix
/// (`out × in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpRewardModel {
    widths: Vec<usize>,
    noise_variance: f64,
    num_params: usize,
}

struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

impl MlpRewardModel {
    pub fn new(context_dim: usize, num_arms: usize, hidden: &[usize], noise_variance: f64) -> Result<Self> {
        if context_dim == 0 || num_arms == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "network widths must all be positive".into(),
            ));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(context_dim);
        widths.extend_from_slice(hidden);
        widths.push(num_arms);
        let num_params = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            widths,
            noise_variance,
            num_params,
        })
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    /// Isotropic prior variance under which the network output has roughly unit prior
    /// variance for standardized inputs: `(Π fan_in · 2^{-(L-1)})^{-1/L}` over `L` layers,
    /// ignoring biases. Each rectifier halves the second moment.
    pub fn unit_output_prior_variance(&self) -> f64 {
        let layers = self.widths.len() - 1;
        let log_gain: f64 = self.widths[..layers].iter().map(|&w| (w as f64).ln()).sum::<f64>()
            - (layers - 1) as f64 * std::f64::consts::LN_2;
        (-log_gain / layers as f64).exp()
    }

    /// Width of the representation fed to the output layer.
    pub fn feature_dim(&self) -> usize {
        self.widths[self.widths.len() - 2]
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.widths.windows(2).map(move |w| {
            let layer = Layer {
                fan_in: w[0],
                fan_out: w[1],
                weights: offset,
                biases: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
    }

    /// Activations of every layer; index 0 is the input, the last entry the linear output.
    fn forward(&self, theta: &[f64], context: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.widths.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(context.to_vec());
        for (l, layer) in self.layers().enumerate() {
            let input = &acts[l];
            let mut z = theta[layer.biases..layer.biases + layer.fan_out].to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &theta[layer.weights + o * layer.fan_in..layer.weights + (o + 1) * layer.fan_in];
                *zo += crate::linalg::dot(row, input);
            }
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Last hidden layer activations (the input itself when there are no hidden layers).
    pub fn features(&self, theta: &[f64], context: &[f64]) -> Vec<f64> {
        let mut acts = self.forward(theta, context);
        acts.pop();
        acts.pop().unwrap_or_default()
    }

    /// `out += weight · ∂m_arm/∂θ` given the stored forward activations.
    fn backprop(&self, theta: &[f64], acts: &[Vec<f64>], arm: usize, weight: f64, out: &mut [f64]) {
        let layers: Vec<Layer> = self.layers().collect();
        let mut delta = vec![0.0; self.widths[self.widths.len() - 1]];
        delta[arm] = weight;
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let input = &acts[l];
            for (o, &dl) in delta.iter().enumerate() {
                if dl == 0.0 {
                    continue;
                }
                out[layer.biases + o] += dl;
                let row = &mut out[layer.weights + o * layer.fan_in..layer.weights + (o + 1) * layer.fan_in];
                for (w, x) in row.iter_mut().zip(input) {
                    *w += dl * x;
                }
            }
            if l == 0 {
                break;
            }
            // Back through W and the rectifier of the previous layer.
            let mut prev = vec![0.0; layer.fan_in];
            for (o, &dl) in delta.iter().enumerate() {
                if dl == 0.0 {
                    continue;
                }
                let row = &theta[layer.weights + o * layer.fan_in..layer.weights + (o + 1) * layer.fan_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += dl * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

impl RewardModel for MlpRewardModel {
    fn context_dim(&self) -> usize {
        self.widths[0]
    }

    fn num_arms(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    fn num_params(&self) -> usize {
        self.num_params
    }

    fn noise_variance(&self, _arm: usize) -> f64 {
        self.noise_variance
    }

    fn predict_into(&self, theta: &[f64], context: &[f64], out: &mut [f64]) {
        let acts = self.forward(theta, context);
        out.copy_from_slice(&acts[acts.len() - 1]);
    }

    fn accumulate_loglik_grad(&self, theta: &[f64], obs: &Observation, scale: f64, out: &mut [f64]) -> f64 {
        let acts = self.forward(theta, &obs.context);
        let m = acts[acts.len() - 1][obs.action];
        let w = scale * (obs.reward - m) / self.noise_variance;
        self.backprop(theta, &acts, obs.action, w, out);
        m
    }

    fn gradient_field<'a>(
        &'a self,
        data: &'a [Observation],
        batch: Option<&'a [usize]>,
        prior: GaussianPrior,
    ) -> Box<dyn GradientField + 'a> {
        Box::new(ObservationField {
            model: self,
            data,
            batch,
            prior,
        })
    }

    /// Inverse of the particle-averaged Fisher diagonal plus prior precision, shrunk by
    /// the largest eigenvalue `ρ` of the diagonally preconditioned Gauss-Newton matrix
    /// when `ρ > 1`. The diagonal alone ignores correlations between weights and can
    /// leave `ρ` in the hundreds.
    fn preconditioner(&self, data: &[Observation], prior: GaussianPrior, particles: &[ParamVector]) -> Preconditioner {
        let p = self.num_params;
        let inv_prior = 1.0 / prior.variance();
        if data.is_empty() || particles.is_empty() {
            return Preconditioner::Diagonal(vec![prior.variance(); p]);
        }
        let stride = data.len().div_ceil(FISHER_SUBSAMPLE).max(1);
        let picked: Vec<&Observation> = data.iter().step_by(stride).collect();
        let pairs = picked.len() * particles.len();
        let scale = data.len() as f64 / (pairs as f64 * self.noise_variance);
        let keep_every = pairs.div_ceil(SPECTRAL_SAMPLES).max(1);

        let mut fisher = vec![0.0; p];
        let mut kept: Vec<Vec<f64>> = Vec::new();
        let mut g = vec![0.0; p];
        let mut pair = 0;
        for theta in particles {
            for obs in &picked {
                g.iter_mut().for_each(|v| *v = 0.0);
                let acts = self.forward(theta, &obs.context);
                self.backprop(theta, &acts, obs.action, 1.0, &mut g);
                for (f, gi) in fisher.iter_mut().zip(&g) {
                    *f += scale * gi * gi;
                }
                if pair % keep_every == 0 {
                    kept.push(g.clone());
                }
                pair += 1;
            }
        }
        let diag: Vec<f64> = fisher.iter().map(|f| f + inv_prior).collect();
        let kept_scale = data.len() as f64 / (kept.len() as f64 * self.noise_variance);
        let rho = preconditioned_top_eigenvalue(&kept, kept_scale, &diag);
        let shrink = rho.max(1.0);
        Preconditioner::Diagonal(diag.into_iter().map(|d| 1.0 / (d * shrink)).collect())
    }
}

/// Top eigenvalue of `D^{-1/2} (s Σ g gᵀ) D^{-1/2}`, computed from the Gram matrix
/// of the scaled gradients, which has the same nonzero spectrum.
fn preconditioned_top_eigenvalue(grads: &[Vec<f64>], scale: f64, diag: &[f64]) -> f64 {
    let n = grads.len();
    if n == 0 {
        return 0.0;
    }
    let inv_sqrt: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let us: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| g.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect())
        .collect();
    let mut gram = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = scale * crate::linalg::dot(&us[a], &us[b]);
            gram[a * n + b] = v;
            gram[b * n + a] = v;
        }
    }
    // The Gram matrix is entrywise nonnegative along its dominant direction in practice,
    // so the all-ones start vector is not orthogonal to it.
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut rho = 0.0;
    for _ in 0..POWER_ITERATIONS {
        for (r, wr) in w.iter_mut().enumerate() {
            *wr = crate::linalg::dot(&gram[r * n..(r + 1) * n], &v);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return f64::MAX;
        }
        if norm == 0.0 {
            return 0.0;
        }
        rho = norm;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    rho
}
