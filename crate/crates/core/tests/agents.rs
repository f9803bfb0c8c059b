mod common;

use common::{batch_posterior, max_abs_diff, normals, rng};
use pits::agent::{
    warmup, Agent, BatchPolicy, FeatureMap, GreedyAgent, LinTsAgent, NeuralLinearAgent, PiTsAgent, RetrainSchedule,
};
use pits::env::{make_linear_env, BanditEnv};
use pits::model::{GaussianPrior, LinearRewardModel, MlpRewardModel};
use pits::wgf::{DgfConfig, ParticleSet, Preconditioning};
use rand::seq::SliceRandom;

fn linear_pits(d: usize, noise: Vec<f64>, m: usize, cfg: DgfConfig, seed: u64) -> PiTsAgent {
    let model = LinearRewardModel::new(d, noise).unwrap();
    PiTsAgent::new("pits", Box::new(model), GaussianPrior::new(1.0).unwrap(), m, cfg, seed).unwrap()
}

#[test]
fn particle_usage_is_uniform() {
    // Particle i puts all weight on arm i, so the chosen arm reveals the drawn particle.
    let m = 4;
    let particles = (0..m)
        .map(|i| {
            let mut w = vec![0.0; m];
            w[i] = 1.0;
            w.into()
        })
        .collect();
    let mut agent = linear_pits(1, vec![1.0; m], m, DgfConfig::default(), 1)
        .with_particles(ParticleSet::new(particles).unwrap())
        .unwrap();
    let n = 10_000;
    let mut counts = vec![0usize; m];
    for _ in 0..n {
        counts[agent.select_action(&[1.0]).unwrap()] += 1;
    }
    let p = 1.0 / m as f64;
    for c in counts {
        assert!((c as f64 / n as f64 - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{c}");
    }
}

#[test]
fn argmax_is_invariant_to_positive_scaling() {
    let mut r = rng(2);
    let set: Vec<_> = (0..5).map(|_| normals(&mut r, 12, 1.0).into()).collect();
    let scaled: Vec<_> = set.iter().map(|p: &pits::ParamVector| p.iter().map(|v| 3.5 * v).collect::<Vec<_>>().into()).collect();
    let base = || linear_pits(3, vec![1.0; 4], 5, DgfConfig::default(), 9);
    let mut a = base().with_particles(ParticleSet::new(set).unwrap()).unwrap();
    let mut b = base().with_particles(ParticleSet::new(scaled).unwrap()).unwrap();
    for _ in 0..500 {
        let x = normals(&mut r, 3, 1.0);
        assert_eq!(a.select_action(&x).unwrap(), b.select_action(&x).unwrap());
    }
}

#[test]
fn pits_particle_mean_approaches_conjugate_posterior() {
    let cfg = DgfConfig {
        step_size: 0.5,
        inner_steps: 30,
        preconditioning: Preconditioning::Curvature,
        ..DgfConfig::default()
    };
    let mut agent = linear_pits(2, vec![0.5], 20, cfg, 3);
    let mut r = rng(4);
    let truth = [0.7, -0.4];
    let (mut xs, mut rs) = (Vec::new(), Vec::new());
    for _ in 0..200 {
        let x = normals(&mut r, 2, 1.0);
        let reward = x[0] * truth[0] + x[1] * truth[1] + normals(&mut r, 1, 0.5f64.sqrt())[0];
        agent.observe(&x, 0, reward).unwrap();
        xs.push(x);
        rs.push(reward);
    }
    let (mean, cov) = batch_posterior(&xs, &rs, 1.0, 0.5);
    let got = agent.particles().mean();
    for c in 0..2 {
        assert!((got[c] - mean[c]).abs() < 0.1 * cov[c * 3].sqrt(), "{got:?} vs {mean:?}");
    }
}

#[test]
fn identical_agents_stay_identical() {
    let cfg = DgfConfig {
        inner_steps: 5,
        ..DgfConfig::default()
    };
    let mut a = linear_pits(3, vec![0.1; 3], 6, cfg.clone(), 5);
    let mut b = linear_pits(3, vec![0.1; 3], 6, cfg, 5);
    let mut env = make_linear_env(3, 3, 1.0, &mut rng(6)).unwrap();
    for _ in 0..40 {
        let x = env.sample_context().unwrap();
        let (ua, ub) = (a.select_action(&x).unwrap(), b.select_action(&x).unwrap());
        assert_eq!(ua, ub);
        let out = env.pull(&x, ua).unwrap();
        a.observe(&x, ua, out.reward).unwrap();
        b.observe(&x, ub, out.reward).unwrap();
    }
    assert_eq!(a.particles(), b.particles());
}

#[test]
fn warmup_precedes_adaptive_play() {
    let mut env = make_linear_env(8, 3, 1.0, &mut rng(7)).unwrap();
    let cfg = DgfConfig {
        inner_steps: 1,
        ..DgfConfig::default()
    };
    let mut agent = linear_pits(3, vec![0.1; 8], 3, cfg, 8);
    assert!(warmup(&mut agent, &mut env, 0).unwrap().is_empty());
    let outcomes = warmup(&mut agent, &mut env, 2).unwrap();
    assert_eq!(outcomes.len(), 16);
    assert_eq!(agent.history().len(), 16);
    let arms: Vec<usize> = agent.history().iter().map(|o| o.action).collect();
    assert_eq!(&arms[..8], &[0, 1, 2, 3, 4, 5, 6, 7]);
}

fn run_pair(first: &mut dyn Agent, second: &mut dyn Agent, rounds: usize, seed: u64) -> Vec<usize> {
    let mut env = make_linear_env(first.num_arms(), 4, 1.0, &mut rng(seed)).unwrap();
    let mut actions = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let x = env.sample_context().unwrap();
        let a = first.select_action(&x).unwrap();
        assert_eq!(a, second.select_action(&x).unwrap());
        let out = env.pull(&x, a).unwrap();
        first.observe(&x, a, out.reward).unwrap();
        second.observe(&x, a, out.reward).unwrap();
        actions.push(a);
    }
    actions
}

#[test]
fn single_particle_without_transport_is_greedy() {
    for (precond, batch) in [
        (Preconditioning::Identity, BatchPolicy::default()),
        (Preconditioning::Curvature, BatchPolicy { full_batch_limit: 40, minibatch_size: 16 }),
    ] {
        let cfg = DgfConfig {
            step_size: if precond == Preconditioning::Identity { 0.001 } else { 0.5 },
            inner_steps: 10,
            sinkhorn_scale: Some(0.0),
            preconditioning: precond,
            ..DgfConfig::default()
        };
        let noise = vec![1.0; 5];
        let prior = GaussianPrior::new(1.0).unwrap();
        let mut pits = PiTsAgent::new("p", Box::new(LinearRewardModel::new(4, noise.clone()).unwrap()), prior, 1, cfg.clone(), 10)
            .unwrap()
            .with_batch_policy(batch);
        let mut greedy = GreedyAgent::new("g", Box::new(LinearRewardModel::new(4, noise).unwrap()), prior, cfg, 10)
            .unwrap()
            .with_batch_policy(batch);
        run_pair(&mut pits, &mut greedy, 200, 11);
        assert_eq!(&pits.particles().particles()[0][..], &greedy.theta()[..]);
    }
}

#[test]
fn lints_matches_batch_solve_in_any_order() {
    let mut r = rng(12);
    for trial in 0..5 {
        let d = 1 + trial % 4;
        let xs: Vec<Vec<f64>> = (0..50).map(|_| normals(&mut r, d, 1.0)).collect();
        let rs = normals(&mut r, 50, 1.0);
        let (mean, cov) = batch_posterior(&xs, &rs, 2.0, 0.3);
        let mut order: Vec<usize> = (0..50).collect();
        for _ in 0..2 {
            let mut agent = LinTsAgent::new("l", d, 2.0, vec![0.3, 0.3], 0).unwrap();
            for &i in &order {
                agent.observe(&xs[i], 1, rs[i]).unwrap();
            }
            assert!(max_abs_diff(agent.posterior(1).mean(), &mean) < 1e-8);
            assert!(max_abs_diff(agent.posterior(1).covariance(), &cov) < 1e-8);
            order.shuffle(&mut r);
        }
    }
}

#[test]
fn lints_near_deterministic_limit() {
    let mut agent = LinTsAgent::new("l", 2, 1.0, vec![1.0, 1.0], 13).unwrap();
    let beta = [[1.0, -0.5], [0.2, 0.9]];
    let mut r = rng(14);
    for _ in 0..500_000 {
        for (a, b) in beta.iter().enumerate() {
            let x = normals(&mut r, 2, 1.0);
            agent.observe(&x, a, x[0] * b[0] + x[1] * b[1]).unwrap();
        }
    }
    for _ in 0..200 {
        let x = normals(&mut r, 2, 1.0);
        let means: Vec<f64> = (0..2).map(|a| agent.posterior(a).mean().iter().zip(&x).map(|(m, v)| m * v).sum()).collect();
        if (means[0] - means[1]).abs() < 0.05 {
            continue;
        }
        let best = if means[0] > means[1] { 0 } else { 1 };
        assert_eq!(agent.select_action(&x).unwrap(), best);
    }
}

#[test]
fn lints_symmetric_prior_at_zero_context() {
    let mut agent = LinTsAgent::new("l", 3, 1.0, vec![1.0, 1.0], 15).unwrap();
    let n = 20_000;
    let ones = (0..n).filter(|_| agent.select_action(&[0.0; 3]).unwrap() == 1).count();
    assert!((ones as f64 / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
}

#[test]
fn neural_linear_with_identity_trunk_is_lints() {
    let noise = vec![0.05; 5];
    let mut nl = NeuralLinearAgent::new("nl", 4, FeatureMap::Identity, 1.0, noise.clone(), RetrainSchedule::default(), 16).unwrap();
    let mut lt = LinTsAgent::new("lt", 4, 1.0, noise, 16).unwrap();
    run_pair(&mut nl, &mut lt, 500, 17);
}

fn assert_posteriors_match_features(agent: &NeuralLinearAgent, noise: f64) {
    let fm = agent.feature_map();
    for arm in 0..2 {
        let rows: Vec<_> = agent.buffer().iter().filter(|o| o.action == arm).collect();
        let xs: Vec<Vec<f64>> = rows.iter().map(|o| fm.apply(&o.context)).collect();
        let rs: Vec<f64> = rows.iter().map(|o| o.reward).collect();
        let (mean, cov) = batch_posterior(&xs, &rs, 1.0, noise);
        assert!(max_abs_diff(agent.posterior(arm).mean(), &mean) < 1e-8);
        assert!(max_abs_diff(agent.posterior(arm).covariance(), &cov) < 1e-8);
    }
}

#[test]
fn neural_linear_posteriors_match_batch_solve_on_features() {
    let trunk = MlpRewardModel::new(3, 2, &[6, 4], 0.5).unwrap();
    let mut r = rng(18);
    for every in [None, Some(25)] {
        let schedule = RetrainSchedule {
            every,
            epochs: 5,
            learning_rate: 1e-2,
            batch_size: 8,
        };
        let fm = NeuralLinearAgent::network_features(trunk.clone(), 19);
        let frozen = fm.clone();
        let mut agent = NeuralLinearAgent::new("nl", 3, fm, 1.0, vec![0.5, 0.5], schedule, 20).unwrap();
        for t in 0..100 {
            let x = normals(&mut r, 3, 1.0);
            agent.observe(&x, t % 2, x[0] - x[1] * x[2]).unwrap();
        }
        let (FeatureMap::Network { theta: now, .. }, FeatureMap::Network { theta: then, .. }) = (agent.feature_map(), &frozen) else {
            unreachable!()
        };
        assert_eq!(now == then, every.is_none());
        assert_posteriors_match_features(&agent, 0.5);
    }
}
