//! Shared generators and independent reference implementations for the integration tests.
#![allow(dead_code)]

use pits::model::{Observation, RewardModel};
use pits::seed::{self, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed_value: u64) -> Rng {
    seed::from_seed(seed_value)
}

pub fn normals(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

pub fn random_data(model: &dyn RewardModel, n: usize, rng: &mut Rng) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            let x = normals(rng, model.context_dim(), 1.0);
            let a = rng.random_range(0..model.num_arms());
            let r: f64 = StandardNormal.sample(rng);
            Observation::new(x, a, r)
        })
        .collect()
}

/// Straight-line MLP forward pass: layers of row-major `W` (out × in) followed by `b`,
/// ReLU on hidden layers, identity on the output.
pub fn reference_mlp(widths: &[usize], theta: &[f64], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut off = 0;
    let layers = widths.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (widths[l], widths[l + 1]);
        let w = &theta[off..off + n_in * n_out];
        let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut next = vec![0.0; n_out];
        for o in 0..n_out {
            let mut s = b[o];
            for i in 0..n_in {
                s += w[o * n_in + i] * h[i];
            }
            next[o] = if l + 1 < layers { s.max(0.0) } else { s };
        }
        h = next;
    }
    h
}

/// Batch posterior `Σ = (XᵀX/σ² + I/λ)⁻¹`, `μ = Σ Xᵀr/σ²` via nalgebra, row-major outputs.
pub fn batch_posterior(xs: &[Vec<f64>], rs: &[f64], prior_variance: f64, noise_variance: f64) -> (Vec<f64>, Vec<f64>) {
    let d = xs.first().map_or(0, Vec::len);
    let mut precision = nalgebra::DMatrix::<f64>::identity(d, d) / prior_variance;
    let mut xr = nalgebra::DVector::<f64>::zeros(d);
    for (x, r) in xs.iter().zip(rs) {
        let v = nalgebra::DVector::from_column_slice(x);
        precision += &v * v.transpose() / noise_variance;
        xr += v * (*r / noise_variance);
    }
    let cov = precision.try_inverse().expect("posterior precision is positive definite");
    let mean = &cov * xr;
    let cov_rows: Vec<f64> = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| cov[(r, c)]).collect();
    (mean.iter().copied().collect(), cov_rows)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random one-arm linear-Gaussian problem with its exact posterior (row-major covariance).
pub struct Conjugate {
    pub model: pits::model::LinearRewardModel,
    pub prior: pits::model::GaussianPrior,
    pub data: Vec<Observation>,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

pub fn conjugate_instance(dim: usize, n: usize, seed_value: u64) -> Conjugate {
    let mut r = rng(seed_value);
    let (lambda, var): (f64, f64) = (1.0, 1.0);
    let truth = normals(&mut r, dim, 1.0);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| normals(&mut r, dim, 1.0)).collect();
    let rs: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + normals(&mut r, 1, var.sqrt())[0])
        .collect();
    let (mean, cov) = batch_posterior(&xs, &rs, lambda, var);
    Conjugate {
        model: pits::model::LinearRewardModel::new(dim, vec![var]).unwrap(),
        prior: pits::model::GaussianPrior::new(lambda).unwrap(),
        data: xs.into_iter().zip(rs).map(|(x, r)| Observation::new(x, 0, r)).collect(),
        mean,
        cov,
    }
}
