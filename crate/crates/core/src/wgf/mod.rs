//! Discrete Wasserstein gradient flow over a particle approximation of the posterior.
//!
//! One outer iteration ([`evolve`]) fixes the incoming particles as transport
//! anchors and runs `inner_steps` synchronous particle updates
//!
//! ```text
//! θᵢ ← θᵢ + h · P · [ (1/M) Σⱼ ( κ(θⱼ, θᵢ) ∇U(θⱼ) + ∇_{θⱼ} κ(θⱼ, θᵢ) )
//!                    + γ Σⱼ 2 (1 − cᵢⱼ/λ₂) exp(−cᵢⱼ/λ₂) (θᵢ − θ̄ⱼ) ]
//! ```
//!
//! where `θ̄ⱼ` are the anchors, `cᵢⱼ = ‖θᵢ − θ̄ⱼ‖²` and `P` is the identity or a
//! model-supplied curvature preconditioner.

mod kernel;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{sq_dist, std_normal};
use crate::model::{GaussianPrior, GradientField, Observation, ParamVector, Preconditioner, RewardModel};

pub use kernel::{median_bandwidth, rbf_kernel, rbf_kernel_grad_first_arg, KernelSpec};

/// Current particles plus the anchor set of the running outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    particles: Vec<ParamVector>,
    anchors: Vec<ParamVector>,
}

impl ParticleSet {
    /// Anchors start as a copy of the particles.
    pub fn new(particles: Vec<ParamVector>) -> Result<Self> {
        let anchors = particles.clone();
        Self::with_anchors(particles, anchors)
    }

    pub fn with_anchors(particles: Vec<ParamVector>, anchors: Vec<ParamVector>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("particle set must be nonempty".into()));
        }
        check_len("anchor count", particles.len(), anchors.len())?;
        let dim = particles[0].len();
        for p in particles.iter().chain(&anchors) {
            check_len("particle", dim, p.len())?;
            if !p.is_finite() {
                return Err(Error::InvalidArgument("particle entries must be finite".into()));
            }
        }
        Ok(Self { particles, anchors })
    }

    /// `count` i.i.d. draws from the prior `N(0, λI)`.
    pub fn from_prior<R: Rng + ?Sized>(count: usize, dim: usize, prior: GaussianPrior, rng: &mut R) -> Result<Self> {
        let sd = prior.variance().sqrt();
        let particles = (0..count)
            .map(|_| {
                (0..dim)
                    .map(|_| sd * std_normal(rng))
                    .collect::<Vec<f64>>()
                    .into()
            })
            .collect();
        Self::new(particles)
    }

    pub fn particles(&self) -> &[ParamVector] {
        &self.particles
    }

    pub fn anchors(&self) -> &[ParamVector] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    pub fn reset_anchors(&mut self) {
        self.anchors.clone_from(&self.particles);
    }

    pub fn mean(&self) -> Vec<f64> {
        crate::linalg::mean_vector(self.particles.iter().map(|p| &p[..]), self.dim())
    }

    /// Per-coordinate variance with divisor M.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut var = vec![0.0; self.dim()];
        for p in &self.particles {
            for ((v, x), m) in var.iter_mut().zip(p.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let inv = 1.0 / self.len() as f64;
        var.iter_mut().for_each(|v| *v *= inv);
        var
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(sq_dist(&self.particles[i], &self.particles[j]));
            }
        }
        best.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Median heuristic recomputed from the particles at every step.
    Median,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioning {
    /// Plain update `θ + h · direction`.
    Identity,
    /// Scale directions by the model's curvature preconditioner, refreshed once per outer iteration.
    Curvature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgfConfig {
    pub step_size: f64,
    pub sinkhorn_lambda: f64,
    /// Fixed stand-in for the transport multipliers; `None` means `1/M²`.
    pub sinkhorn_scale: Option<f64>,
    pub bandwidth: Bandwidth,
    pub inner_steps: usize,
    /// `None` uses the full data set for every gradient.
    pub batch_size: Option<usize>,
    pub preconditioning: Preconditioning,
}

impl Default for DgfConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            sinkhorn_lambda: 1.0,
            sinkhorn_scale: None,
            bandwidth: Bandwidth::Median,
            inner_steps: 100,
            batch_size: None,
            preconditioning: Preconditioning::Identity,
        }
    }
}

impl DgfConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        // A zero step is allowed: it leaves the particles untouched.
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step_size must be nonnegative, got {}",
                self.step_size
            )));
        }
        positive("sinkhorn_lambda", self.sinkhorn_lambda)?;
        if let Some(g) = self.sinkhorn_scale {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("sinkhorn_scale must be nonnegative, got {g}")));
            }
        }
        if let Bandwidth::Fixed(bw) = self.bandwidth {
            positive("bandwidth", bw)?;
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn sinkhorn_scale_for(&self, m: usize) -> f64 {
        self.sinkhorn_scale.unwrap_or(1.0 / (m as f64 * m as f64))
    }
}

/// Kernelized ascent direction for particle `i`:
/// `(1/M) Σⱼ [κ(θⱼ, θᵢ) ∇U(θⱼ) + ∇_{θⱼ} κ(θⱼ, θᵢ)]`.
pub fn svgd_direction(i: usize, particles: &[ParamVector], grads: &[ParamVector], kernel: KernelSpec) -> Result<ParamVector> {
    let m = particles.len();
    if i >= m {
        return Err(Error::InvalidArgument(format!("particle index {i} out of range for {m}")));
    }
    check_len("gradient count", m, grads.len())?;
    let dim = particles[i].len();
    let mut out = vec![0.0; dim];
    for (pj, gj) in particles.iter().zip(grads) {
        check_len("particle", dim, pj.len())?;
        check_len("gradient", dim, gj.len())?;
        let k = rbf_kernel(pj, &particles[i], kernel)?;
        let dk = rbf_kernel_grad_first_arg(pj, &particles[i], kernel)?;
        for ((o, g), d) in out.iter_mut().zip(gj.iter()).zip(dk.iter()) {
            *o += k * g + d;
        }
    }
    let inv = 1.0 / m as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(out.into())
}

/// Entropic transport force on particle `i` from the anchors:
/// `γ Σⱼ 2 (1 − cᵢⱼ/λ₂) exp(−cᵢⱼ/λ₂) (θᵢ − θ̄ⱼ)`.
///
/// Pushes away from anchors closer than `√λ₂` and pulls toward farther ones.
pub fn sinkhorn_force(i: usize, particles: &[ParamVector], anchors: &[ParamVector], config: &DgfConfig) -> Result<ParamVector> {
    let m = particles.len();
    if i >= m {
        return Err(Error::InvalidArgument(format!("particle index {i} out of range for {m}")));
    }
    let gamma = config.sinkhorn_scale_for(m);
    let lambda = config.sinkhorn_lambda;
    let theta = &particles[i];
    let mut out = vec![0.0; theta.len()];
    for a in anchors {
        check_len("anchor", theta.len(), a.len())?;
        let c = sq_dist(theta, a);
        let coef = gamma * 2.0 * (1.0 - c / lambda) * (-c / lambda).exp();
        for ((o, t), s) in out.iter_mut().zip(theta.iter()).zip(a.iter()) {
            *o += coef * (t - s);
        }
    }
    Ok(out.into())
}

/// One synchronous update of every particle against the full data.
pub fn dgf_step(
    set: &ParticleSet,
    model: &dyn RewardModel,
    data: &[Observation],
    prior: GaussianPrior,
    config: &DgfConfig,
    kernel: KernelSpec,
) -> Result<ParticleSet> {
    config.validate()?;
    check_len("particle", model.num_params(), set.dim())?;
    for obs in data {
        model.validate_observation(obs)?;
    }
    let field = model.gradient_field(data, None, prior);
    let precond = match config.preconditioning {
        Preconditioning::Identity => Preconditioner::Identity,
        Preconditioning::Curvature => model.preconditioner(data, prior, set.particles()),
    };
    let mut next = set.clone();
    let mut work = StepWorkspace::new(set.len(), set.dim());
    step_in_place(&mut next, field.as_ref(), &precond, config, kernel, &mut work)?;
    Ok(next)
}

/// One outer iteration: anchor at the incoming particles, then `inner_steps` updates.
///
/// Minibatches (when `batch_size < |data|`) and nothing else are drawn from `rng`.
pub fn evolve<R: Rng + ?Sized>(
    set: &ParticleSet,
    model: &dyn RewardModel,
    data: &[Observation],
    prior: GaussianPrior,
    config: &DgfConfig,
    rng: &mut R,
) -> Result<ParticleSet> {
    config.validate()?;
    check_len("particle", model.num_params(), set.dim())?;
    for obs in data {
        model.validate_observation(obs)?;
    }
    let mut next = set.clone();
    next.reset_anchors();
    if config.inner_steps == 0 {
        return Ok(next);
    }
    let precond = match config.preconditioning {
        Preconditioning::Identity => Preconditioner::Identity,
        Preconditioning::Curvature => model.preconditioner(data, prior, next.particles()),
    };
    let minibatch = config.batch_size.filter(|&b| b < data.len());
    let full_field = match minibatch {
        None => Some(model.gradient_field(data, None, prior)),
        Some(_) => None,
    };
    let mut work = StepWorkspace::new(next.len(), next.dim());
    let mut batch: Vec<usize> = Vec::new();
    for _ in 0..config.inner_steps {
        work.pairwise_sq(&next.particles);
        let kernel = match config.bandwidth {
            Bandwidth::Fixed(bw) => KernelSpec::new(bw)?,
            Bandwidth::Median => {
                let bw = work.median_bandwidth(next.len());
                // Pairwise distances overflow once the flow has diverged.
                if !bw.is_finite() {
                    return Err(Error::NonFiniteUpdate {
                        particle: 0,
                        step_size: config.step_size,
                        bandwidth: bw,
                    });
                }
                KernelSpec::new(bw)?
            }
        };
        match (&full_field, minibatch) {
            (Some(field), _) => step_prepared(&mut next, field.as_ref(), &precond, config, kernel, &mut work)?,
            (None, Some(b)) => {
                batch.clear();
                batch.extend(rand::seq::index::sample(rng, data.len(), b).iter());
                let field = model.gradient_field(data, Some(&batch), prior);
                step_prepared(&mut next, field.as_ref(), &precond, config, kernel, &mut work)?;
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(next)
}

/// Scratch buffers reused across inner steps.
pub(crate) struct StepWorkspace {
    m: usize,
    sq: Vec<f64>,
    median_buf: Vec<f64>,
    grads: Vec<Vec<f64>>,
    dirs: Vec<Vec<f64>>,
}

impl StepWorkspace {
    pub(crate) fn new(m: usize, dim: usize) -> Self {
        Self {
            m,
            sq: vec![0.0; m * m],
            median_buf: Vec::with_capacity(m * m.saturating_sub(1) / 2),
            grads: vec![vec![0.0; dim]; m],
            dirs: vec![vec![0.0; dim]; m],
        }
    }

    fn pairwise_sq(&mut self, particles: &[ParamVector]) {
        let m = self.m;
        for i in 0..m {
            self.sq[i * m + i] = 0.0;
            for j in i + 1..m {
                let d = sq_dist(&particles[i], &particles[j]);
                self.sq[i * m + j] = d;
                self.sq[j * m + i] = d;
            }
        }
    }

    fn median_bandwidth(&mut self, m: usize) -> f64 {
        if m < 2 {
            return 1.0;
        }
        self.median_buf.clear();
        for i in 0..m {
            self.median_buf.extend_from_slice(&self.sq[i * m + i + 1..(i + 1) * m]);
        }
        kernel::median_bandwidth_from_sq(&mut self.median_buf, m)
    }
}

fn step_in_place(
    set: &mut ParticleSet,
    field: &dyn GradientField,
    precond: &Preconditioner,
    config: &DgfConfig,
    kernel: KernelSpec,
    work: &mut StepWorkspace,
) -> Result<()> {
    work.pairwise_sq(&set.particles);
    step_prepared(set, field, precond, config, kernel, work)
}

/// Update assuming `work.sq` already holds the pairwise squared distances of `set`.
fn step_prepared(
    set: &mut ParticleSet,
    field: &dyn GradientField,
    precond: &Preconditioner,
    config: &DgfConfig,
    kernel: KernelSpec,
    work: &mut StepWorkspace,
) -> Result<()> {
    let m = set.len();
    let dim = set.dim();
    let h = config.step_size;
    let inv_m = 1.0 / m as f64;
    let rep_coef = 2.0 / kernel.bandwidth();
    let gamma = config.sinkhorn_scale_for(m);
    let lambda = config.sinkhorn_lambda;

    for (p, g) in set.particles.iter().zip(work.grads.iter_mut()) {
        field.grad_into(p, g);
    }

    for i in 0..m {
        let theta_i = &set.particles[i];
        let dir = &mut work.dirs[i];
        dir.iter_mut().for_each(|v| *v = 0.0);
        // Σⱼ κᵢⱼ ∇U(θⱼ) + (2/bw) Σⱼ κᵢⱼ (θᵢ − θⱼ)
        let mut attract = vec![0.0; dim];
        let mut repel = vec![0.0; dim];
        for j in 0..m {
            let k = kernel.eval_sq(work.sq[i * m + j]);
            let gj = &work.grads[j];
            let theta_j = &set.particles[j];
            for r in 0..dim {
                attract[r] += k * gj[r];
                repel[r] += k * (theta_i[r] - theta_j[r]);
            }
        }
        for r in 0..dim {
            dir[r] = (attract[r] + rep_coef * repel[r]) * inv_m;
        }
        if gamma != 0.0 {
            for anchor in &set.anchors {
                let c = sq_dist(theta_i, anchor);
                let coef = gamma * 2.0 * (1.0 - c / lambda) * (-c / lambda).exp();
                for r in 0..dim {
                    dir[r] += coef * (theta_i[r] - anchor[r]);
                }
            }
        }
        precond.apply(dir);
    }

    for (i, (p, dir)) in set.particles.iter_mut().zip(&work.dirs).enumerate() {
        for (x, d) in p.iter_mut().zip(dir) {
            *x += h * d;
        }
        if !p.is_finite() {
            return Err(Error::NonFiniteUpdate {
                particle: i,
                step_size: h,
                bandwidth: kernel.bandwidth(),
            });
        }
    }
    Ok(())
}
