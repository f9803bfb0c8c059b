//! Browser bindings: a 2-D particle flow toward a conjugate posterior, the transport
//! force profile, and a small regret race between π-TS, Lin-TS and uniform play.

use pits::agent::{Agent, LinTsAgent, PiTsAgent, UniformAgent};
use pits::env::{make_linear_env, BanditEnv, LinearBanditEnv};
use pits::linalg::std_normal;
use pits::seed::{self, Rng};
use pits::wgf::{evolve, sinkhorn_force, Preconditioning};
use pits::{DgfConfig, GaussianPrior, LinearRewardModel, Observation, ParticleSet};
use wasm_bindgen::prelude::*;

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Particles in the plane flowing toward the posterior of a 2-D Bayesian linear regression.
#[wasm_bindgen]
pub struct FlowDemo {
    model: LinearRewardModel,
    prior: GaussianPrior,
    data: Vec<Observation>,
    particles: ParticleSet,
    config: DgfConfig,
    rng: Rng,
    exact_mean: Vec<f64>,
    exact_cov: Vec<f64>,
}

#[wasm_bindgen]
impl FlowDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, particles: usize, observations: usize, step_size: f64) -> Result<FlowDemo, JsError> {
        let seed = u64::from(seed);
        let mut rng = seed::from_seed(seed);
        let noise = 0.5;
        let model = LinearRewardModel::new(2, vec![noise]).map_err(js)?;
        let prior = GaussianPrior::new(1.0).map_err(js)?;
        let truth = [std_normal(&mut rng), std_normal(&mut rng)];
        let mut exact = LinTsAgent::new("exact", 2, 1.0, vec![noise], seed).map_err(js)?;
        let mut data = Vec::with_capacity(observations);
        for _ in 0..observations {
            let x = vec![std_normal(&mut rng), std_normal(&mut rng)];
            let r = x[0] * truth[0] + x[1] * truth[1] + noise.sqrt() * std_normal(&mut rng);
            exact.observe(&x, 0, r).map_err(js)?;
            data.push(Observation::new(x, 0, r));
        }
        let set = ParticleSet::from_prior(particles, 2, prior, &mut rng).map_err(js)?;
        let config = DgfConfig {
            step_size,
            inner_steps: 1,
            preconditioning: Preconditioning::Identity,
            ..DgfConfig::default()
        };
        config.validate().map_err(js)?;
        Ok(FlowDemo {
            model,
            prior,
            data,
            particles: set,
            config,
            rng,
            exact_mean: exact.posterior(0).mean().to_vec(),
            exact_cov: exact.posterior(0).covariance().to_vec(),
        })
    }

    /// Advance the flow by `steps` inner steps.
    pub fn step(&mut self, steps: usize) -> Result<(), JsError> {
        let cfg = DgfConfig {
            inner_steps: steps,
            ..self.config.clone()
        };
        self.particles = evolve(&self.particles, &self.model, &self.data, self.prior, &cfg, &mut self.rng).map_err(js)?;
        Ok(())
    }

    /// Flat `[x0, y0, x1, y1, ...]`.
    pub fn positions(&self) -> Vec<f64> {
        self.particles.particles().iter().flat_map(|p| p.iter().copied().collect::<Vec<_>>()).collect()
    }

    pub fn particle_mean(&self) -> Vec<f64> {
        self.particles.mean()
    }

    pub fn exact_mean(&self) -> Vec<f64> {
        self.exact_mean.clone()
    }

    /// Row-major 2×2 covariance of the exact posterior.
    pub fn exact_covariance(&self) -> Vec<f64> {
        self.exact_cov.clone()
    }
}

/// Radial component of the transport force on a particle at distance `r` from one anchor,
/// sampled at `samples` points in `[0, r_max]`. Positive pushes away from the anchor.
#[wasm_bindgen]
pub fn sinkhorn_profile(lambda: f64, r_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    let cfg = DgfConfig {
        sinkhorn_lambda: lambda,
        sinkhorn_scale: Some(1.0),
        ..DgfConfig::default()
    };
    cfg.validate().map_err(js)?;
    let anchor = vec![0.0].into();
    (0..samples)
        .map(|i| {
            let r = r_max * i as f64 / (samples.max(2) - 1) as f64;
            let f = sinkhorn_force(0, &[vec![r].into()], std::slice::from_ref(&anchor), &cfg).map_err(js)?;
            Ok(f[0])
        })
        .collect()
}

/// π-TS, Lin-TS and uniform play on one shared linear bandit, each with its own copy
/// of the environment so they see the same contexts.
#[wasm_bindgen]
pub struct BanditRace {
    players: Vec<(Box<dyn Agent>, LinearBanditEnv, f64)>,
}

#[wasm_bindgen]
impl BanditRace {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, arms: usize, dim: usize, particles: usize) -> Result<BanditRace, JsError> {
        let seed = u64::from(seed);
        let env = make_linear_env(arms, dim, 1.0, &mut seed::stream(seed, "environment", 0, "env")).map_err(js)?;
        let noise = env.noise_variances().unwrap_or_default().to_vec();
        let cfg = DgfConfig {
            step_size: 0.5,
            inner_steps: 10,
            preconditioning: Preconditioning::Curvature,
            ..DgfConfig::default()
        };
        let model = LinearRewardModel::new(dim, noise.clone()).map_err(js)?;
        let prior = GaussianPrior::new(1.0).map_err(js)?;
        let agents: Vec<Box<dyn Agent>> = vec![
            Box::new(PiTsAgent::new("pits", Box::new(model), prior, particles, cfg, seed ^ 1).map_err(js)?),
            Box::new(LinTsAgent::new("lin-ts", dim, 1.0, noise, seed ^ 2).map_err(js)?),
            Box::new(UniformAgent::new("uniform", arms, seed ^ 3).map_err(js)?),
        ];
        Ok(BanditRace {
            players: agents.into_iter().map(|a| (a, env.clone(), 0.0)).collect(),
        })
    }

    /// Play `rounds` more rounds and return the cumulative regrets (π-TS, Lin-TS, uniform).
    pub fn advance(&mut self, rounds: usize) -> Result<Vec<f64>, JsError> {
        for (agent, env, regret) in &mut self.players {
            for _ in 0..rounds {
                let x = env.sample_context().map_err(js)?;
                let a = agent.select_action(&x).map_err(js)?;
                let out = env.pull(&x, a).map_err(js)?;
                agent.observe(&x, a, out.reward).map_err(js)?;
                *regret += out.regret();
            }
        }
        Ok(self.regrets())
    }

    pub fn regrets(&self) -> Vec<f64> {
        self.players.iter().map(|(_, _, r)| *r).collect()
    }
}
