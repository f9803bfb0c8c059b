//! Quick numerical self-tests exposed through the `check` subcommand.

use rand::Rng;

use crate::linalg::std_normal;
use crate::agent::LinearPosterior;
use crate::model::{GaussianPrior, LinearRewardModel, MlpRewardModel, Observation, RewardModel};
use crate::seed;
use crate::wgf::{evolve, sinkhorn_force, DgfConfig, ParticleSet, Preconditioning};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn normal_vec<R: Rng>(rng: &mut R, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * std_normal(rng)).collect()
}

fn random_data<R: Rng>(model: &dyn RewardModel, n: usize, rng: &mut R) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            Observation::new(
                normal_vec(rng, model.context_dim(), 1.0),
                rng.random_range(0..model.num_arms()),
                std_normal(rng),
            )
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central differences.
fn gradient_error(model: &dyn RewardModel, trials: usize, seed_value: u64) -> f64 {
    let mut rng = seed::from_seed(seed_value);
    let prior = GaussianPrior::new(1.0).expect("positive");
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let data = random_data(model, 5, &mut rng);
        let mut theta = normal_vec(&mut rng, model.num_params(), 0.5);
        let g = model.grad_potential(&theta, &data, prior).expect("finite gradient");
        let k = rng.random_range(0..theta.len());
        let orig = theta[k];
        theta[k] = orig + h;
        let up = model.log_potential(&theta, &data, prior).expect("finite");
        theta[k] = orig - h;
        let down = model.log_potential(&theta, &data, prior).expect("finite");
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1.0));
    }
    worst
}

fn linear_gradient() -> CheckResult {
    let model = LinearRewardModel::new(4, vec![0.3, 0.5, 1.0]).expect("valid");
    let err = gradient_error(&model, 100, 1);
    CheckResult {
        name: "linear gradient vs finite differences",
        passed: err < 1e-5,
        detail: format!("max relative error {err:.2e}"),
    }
}

fn mlp_gradient() -> CheckResult {
    let model = MlpRewardModel::new(3, 2, &[6, 5], 0.5).expect("valid");
    let err = gradient_error(&model, 100, 2);
    CheckResult {
        name: "mlp gradient vs finite differences",
        passed: err < 1e-4,
        detail: format!("max relative error {err:.2e}"),
    }
}

fn lin_ts_batch() -> CheckResult {
    let mut rng = seed::from_seed(3);
    let d = 3;
    let (lambda, var) = (2.0, 0.5);
    let mut post = LinearPosterior::new(d, lambda);
    let mut precision = nalgebra::DMatrix::<f64>::identity(d, d) / lambda;
    let mut xr = nalgebra::DVector::<f64>::zeros(d);
    for _ in 0..40 {
        let x = nalgebra::DVector::from_vec(normal_vec(&mut rng, d, 1.0));
        let r: f64 = std_normal(&mut rng);
        post.update(x.as_slice(), r, var);
        precision += &x * x.transpose() / var;
        xr += &x * (r / var);
    }
    let cov = precision.try_inverse().expect("positive definite");
    let mean = &cov * xr;
    let err = post
        .mean()
        .iter()
        .zip(mean.iter())
        .chain(post.covariance().iter().zip(cov.transpose().iter()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    CheckResult {
        name: "lin-ts recursive posterior vs batch solve",
        passed: err < 1e-8,
        detail: format!("max abs error {err:.2e}"),
    }
}

fn sinkhorn_sign() -> CheckResult {
    let cfg = DgfConfig {
        sinkhorn_scale: Some(1.0),
        ..DgfConfig::default()
    };
    let anchors = vec![vec![0.0].into()];
    let near = sinkhorn_force(0, &[vec![0.5].into()], &anchors, &cfg).expect("valid")[0];
    let far = sinkhorn_force(0, &[vec![2.0].into()], &anchors, &cfg).expect("valid")[0];
    CheckResult {
        name: "transport force repels inside sqrt(lambda) and attracts outside",
        passed: near > 0.0 && far < 0.0,
        detail: format!("force at 0.5: {near:.4}, at 2.0: {far:.4}"),
    }
}

fn conjugate_flow() -> CheckResult {
    // One arm, one feature, x = 1: the posterior is N(Σr/(σ²+nλ)·λ, ...).
    let model = LinearRewardModel::new(1, vec![1.0]).expect("valid");
    let prior = GaussianPrior::new(1.0).expect("positive");
    let data: Vec<Observation> = [0.8, 1.2, 1.0, 0.6].iter().map(|&r| Observation::new(vec![1.0], 0, r)).collect();
    let mut rng = seed::from_seed(4);
    let mut set = ParticleSet::from_prior(50, 1, prior, &mut rng).expect("valid");
    let cfg = DgfConfig {
        step_size: 0.05,
        inner_steps: 400,
        preconditioning: Preconditioning::Identity,
        ..DgfConfig::default()
    };
    set = evolve(&set, &model, &data, prior, &cfg, &mut rng).expect("finite");
    let mean = set.mean()[0];
    let exact = 3.6 / 5.0;
    let sd = (1.0f64 / 5.0).sqrt();
    let err = (mean - exact).abs() / sd;
    CheckResult {
        name: "particle flow reaches the conjugate posterior mean",
        passed: err < 0.1,
        detail: format!("mean {mean:.4}, exact {exact:.4}"),
    }
}

pub fn run_checks() -> Vec<CheckResult> {
    vec![linear_gradient(), mlp_gradient(), lin_ts_batch(), sinkhorn_sign(), conjugate_flow()]
}
