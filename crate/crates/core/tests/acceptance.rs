//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion that could run fails. A criterion whose input data is
//! missing prints FAIL marked as blocked without failing the process.
//! Pass criterion ids to run a subset: `cargo test --test acceptance -- 3 4`.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{batch_posterior, conjugate_instance, max_abs_diff, normals, random_data, rng};
use pits::agent::{Agent, BatchPolicy, FeatureMap, GreedyAgent, LinTsAgent, NeuralLinearAgent, PiTsAgent, RetrainSchedule};
use pits::env::{make_linear_env, BanditEnv};
use pits::harness::{
    agent_seeds, run_experiment, run_particle_ablation, summarize, write_results, AgentSummary, ExperimentConfig,
};
use pits::model::{GaussianPrior, LinearRewardModel, MlpRewardModel, RewardModel};
use pits::wgf::{evolve, sinkhorn_force, DgfConfig, ParticleSet, Preconditioning};

struct Outcome {
    passed: bool,
    blocked: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        blocked: false,
        detail: detail.into(),
    }
}

fn blocked(detail: impl Into<String>) -> Outcome {
    Outcome {
        passed: false,
        blocked: true,
        detail: format!("blocked, {}", detail.into()),
    }
}

fn fd_worst(model: &dyn RewardModel, seed: u64) -> f64 {
    let mut r = rng(seed);
    let prior = GaussianPrior::new(1.0).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let data = random_data(model, 10, &mut r);
        let theta = normals(&mut r, model.num_params(), 0.5);
        let g = model.grad_potential(&theta, &data, prior).unwrap();
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] += h;
            let up = model.log_potential(&t, &data, prior).unwrap();
            t[k] = theta[k] - h;
            let down = model.log_potential(&t, &data, prior).unwrap();
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-2));
        }
    }
    worst
}

fn gradients() -> Outcome {
    let lin = fd_worst(&LinearRewardModel::new(5, vec![0.1, 0.5, 1.0, 2.0]).unwrap(), 101);
    let mlp = fd_worst(&MlpRewardModel::new(4, 3, &[8, 6], 0.5).unwrap(), 102);
    outcome(lin < 1e-5 && mlp < 1e-4, format!("max rel error linear {lin:.2e} (tol 1e-5), mlp {mlp:.2e} (tol 1e-4)"))
}

fn conjugate_lints() -> Outcome {
    let mut r = rng(201);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let d = 1 + i % 5;
        let n = 1 + (i * 7) % 50;
        let lambda = 0.5 + (i % 3) as f64;
        let sigma2 = 0.05 * (1 + i % 4) as f64;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| normals(&mut r, d, 1.0)).collect();
        let rs = normals(&mut r, n, 1.0);
        let mut agent = LinTsAgent::new("lin-ts", d, lambda, vec![sigma2], 0).unwrap();
        for (x, y) in xs.iter().zip(&rs) {
            agent.observe(x, 0, *y).unwrap();
        }
        let (mean, cov) = batch_posterior(&xs, &rs, lambda, sigma2);
        worst = worst.max(max_abs_diff(agent.posterior(0).mean(), &mean));
        worst = worst.max(max_abs_diff(agent.posterior(0).covariance(), &cov));
    }
    outcome(worst < 1e-8, format!("max entrywise deviation {worst:.2e} over 20 instances (tol 1e-8)"))
}

fn sampler_convergence() -> Outcome {
    let cfg = DgfConfig {
        step_size: 0.05,
        inner_steps: 500,
        preconditioning: Preconditioning::Identity,
        ..DgfConfig::default()
    };
    let (mut worst_mean, mut worst_var): (f64, f64) = (0.0, 0.0);
    for i in 0..10u64 {
        let inst = conjugate_instance(2, 5 + 4 * i as usize, 300 + i);
        let mut r = rng(400 + i);
        let set = ParticleSet::from_prior(50, 2, inst.prior, &mut r).unwrap();
        let out = evolve(&set, &inst.model, &inst.data, inst.prior, &cfg, &mut r).unwrap();
        let (mean, var) = (out.mean(), out.marginal_variances());
        for c in 0..2 {
            let exact = inst.cov[c * 2 + c];
            worst_mean = worst_mean.max((mean[c] - inst.mean[c]).abs() / exact.sqrt());
            worst_var = worst_var.max((var[c] / exact - 1.0).abs());
        }
    }
    outcome(
        worst_mean < 0.1 && worst_var < 0.2,
        format!("worst mean error {worst_mean:.3} sd (tol 0.1), worst variance error {:.1}% (tol 20%)", 100.0 * worst_var),
    )
}

fn sinkhorn_signs() -> Outcome {
    let mut r = rng(501);
    let mut wrong = 0;
    let mut tested = 0;
    let mut worst_zero: f64 = 0.0;
    for _ in 0..1000 {
        let dim = 1 + (normals(&mut r, 1, 1.0)[0].abs() * 3.0) as usize % 5;
        let lambda = 0.1 + 5.0 * normals(&mut r, 1, 1.0)[0].abs();
        let theta = normals(&mut r, dim, 1.5);
        let anchor = normals(&mut r, dim, 1.5);
        let cfg = DgfConfig {
            sinkhorn_lambda: lambda,
            sinkhorn_scale: Some(1.0),
            ..DgfConfig::default()
        };
        let c: f64 = theta.iter().zip(&anchor).map(|(a, b)| (a - b).powi(2)).sum();
        if (c / lambda - 1.0).abs() > 1e-9 {
            tested += 1;
            let f = sinkhorn_force(0, &[theta.clone().into()], &[anchor.clone().into()], &cfg).unwrap();
            let dot: f64 = f.iter().zip(theta.iter().zip(&anchor)).map(|(f, (t, a))| f * (t - a)).sum();
            if (c < lambda) != (dot > 0.0) || dot == 0.0 {
                wrong += 1;
            }
        }
        // Same direction, rescaled so that the squared distance is exactly λ₂ up to rounding.
        let delta: Vec<f64> = theta.iter().zip(&anchor).map(|(t, a)| t - a).collect();
        let scale = (lambda / c).sqrt();
        let on_circle: Vec<f64> = anchor.iter().zip(&delta).map(|(a, d)| a + d * scale).collect();
        let f = sinkhorn_force(0, &[on_circle.into()], &[anchor.into()], &cfg).unwrap();
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_zero = worst_zero.max(norm / lambda.sqrt());
    }
    outcome(
        wrong == 0 && worst_zero < 1e-12,
        format!("{wrong} sign errors in {tested} instances, max |force| on c=λ₂ {worst_zero:.1e} (tol 1e-12)"),
    )
}

fn bandit_config(kind: &str, dim: usize, realizations: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        "horizon = 2000\nrealizations = {realizations}\nbase_seed = 2024\nwarmup_pulls_per_arm = 1\n\n\
         [environment]\nkind = \"{kind}\"\nnum_arms = 8\ncontext_dim = {dim}\n\n\
         [[agents]]\nkind = \"pits\"\nparticles = 20\ninner_steps = 20\n\n\
         [[agents]]\nkind = \"lin-ts\"\n\n[[agents]]\nkind = \"uniform\"\n"
    ))
    .unwrap()
}

fn mean_of<'a>(rows: &'a [AgentSummary], agent: &str) -> &'a AgentSummary {
    rows.iter().find(|r| r.agent == agent).unwrap()
}

fn ordering(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> (Outcome, Vec<AgentSummary>) {
    let traces = run_experiment(cfg).unwrap();
    let rows = summarize(&traces, cfg.uniform_name().as_deref()).unwrap();
    if let Some(dir) = out_dir {
        write_results(dir, cfg, agent_seeds(cfg), &traces, &rows).unwrap();
    }
    let (p, l, u) = (mean_of(&rows, "pits"), mean_of(&rows, "lin-ts"), mean_of(&rows, "uniform"));
    let (p, l, u) = (p.final_cum_regret_mean, l.final_cum_regret_mean, u.final_cum_regret_mean);
    let passed = p <= 1.5 * l && p <= 0.35 * u;
    let detail = format!(
        "pits {p:.1}, lin-ts {l:.1}, uniform {u:.1}; pits/lin-ts {:.3} (≤ 1.5), pits/uniform {:.3} (≤ 0.35)",
        p / l,
        p / u
    );
    (outcome(passed, detail), rows)
}

fn linear_ordering_and_determinism() -> (Outcome, Outcome) {
    let cfg = bandit_config("linear", 10, 10);
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("a"), dir.path().join("b"));
    let (ord, _) = ordering(&cfg, Some(&first));
    let (_, _) = ordering(&cfg, Some(&second));
    let a = std::fs::read(first.join("traces.csv")).unwrap();
    let b = std::fs::read(second.join("traces.csv")).unwrap();
    let det = outcome(a == b, format!("traces.csv {} bytes, identical: {}", a.len(), a == b));
    (ord, det)
}

fn sparse_ordering() -> Outcome {
    ordering(&bandit_config("sparse", 10, 10), None).0
}

fn wide_context_ordering() -> Outcome {
    ordering(&bandit_config("linear", 20, 3), None).0
}

fn particle_ablation() -> Outcome {
    let base = ExperimentConfig::from_toml_str(
        "horizon = 2000\nrealizations = 10\nbase_seed = 7\n\n[environment]\nkind = \"linear\"\nnum_arms = 8\ncontext_dim = 10\n\n\
         [[agents]]\nkind = \"pits\"\ninner_steps = 20\n",
    )
    .unwrap();
    let run = run_particle_ablation(&base, &[1, 5, 20, 50]).unwrap();
    let finals = |m: usize| mean_of(&run.summary, &format!("pits-m{m}")).clone();
    let (m1, m5, m20, m50) = (finals(1), finals(5), finals(20), finals(50));
    let pooled = (m5.final_cum_regret_stderr.powi(2) + m50.final_cum_regret_stderr.powi(2)).sqrt();
    let passed = m50.final_cum_regret_mean < m1.final_cum_regret_mean
        && m50.final_cum_regret_mean <= m5.final_cum_regret_mean + pooled;
    outcome(
        passed,
        format!(
            "mean final regret M=1 {:.1}, M=5 {:.1}, M=20 {:.1}, M=50 {:.1}; pooled stderr (5, 50) {pooled:.1}",
            m1.final_cum_regret_mean, m5.final_cum_regret_mean, m20.final_cum_regret_mean, m50.final_cum_regret_mean
        ),
    )
}

fn dataset_path() -> Option<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("datasets");
    std::env::var_os("PITS_STATLOG_CSV")
        .map(PathBuf::from)
        .or_else(|| Some(dir.join("statlog.csv")))
        .filter(|p| p.exists())
}

fn dataset_smoke() -> Outcome {
    let Some(csv) = dataset_path() else {
        return blocked("Statlog CSV not found; set PITS_STATLOG_CSV or place it at crates/core/datasets/statlog.csv");
    };
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("datasets/statlog.toml");
    let cfg = ExperimentConfig::from_toml_str(&format!(
        "horizon = 5000\nrealizations = 3\nbase_seed = 11\n\n[environment]\nkind = \"dataset\"\npath = {:?}\nspec = {:?}\n\n\
         [[agents]]\nkind = \"pits\"\nparticles = 10\ninner_steps = 5\nstep_size = 5.0\n\n[[agents]]\nkind = \"lin-ts\"\n\n[[agents]]\nkind = \"uniform\"\n",
        csv.display().to_string(),
        spec.display().to_string()
    ))
    .unwrap();
    let traces = match run_experiment(&cfg) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let rows = summarize(&traces, Some("uniform")).unwrap();
    let p = mean_of(&rows, "pits").normalized_regret.unwrap();
    let l = mean_of(&rows, "lin-ts").normalized_regret.unwrap();
    outcome(p < 60.0 && l < 60.0, format!("normalized regret pits {p:.2}, lin-ts {l:.2} (each < 60)"))
}

fn reductions() -> Outcome {
    let cfg = DgfConfig {
        step_size: 0.5,
        inner_steps: 10,
        sinkhorn_scale: Some(0.0),
        preconditioning: Preconditioning::Curvature,
        ..DgfConfig::default()
    };
    let noise: Vec<f64> = (1..=6).map(|a| 0.01 * a as f64).collect();
    let prior = GaussianPrior::new(1.0).unwrap();
    let batch = BatchPolicy {
        full_batch_limit: 100,
        minibatch_size: 32,
    };
    let mut pits = PiTsAgent::new("pits", Box::new(LinearRewardModel::new(5, noise.clone()).unwrap()), prior, 1, cfg.clone(), 3)
        .unwrap()
        .with_batch_policy(batch);
    let mut greedy = GreedyAgent::new("greedy", Box::new(LinearRewardModel::new(5, noise.clone()).unwrap()), prior, cfg, 3)
        .unwrap()
        .with_batch_policy(batch);
    let mut nl = NeuralLinearAgent::new("nl", 5, FeatureMap::Identity, 1.0, noise.clone(), RetrainSchedule::default(), 4).unwrap();
    let mut lt = LinTsAgent::new("lin-ts", 5, 1.0, noise, 4).unwrap();

    let mut env_a = make_linear_env(6, 5, 1.0, &mut rng(601)).unwrap();
    let mut env_b = env_a.clone();
    let (mut greedy_diffs, mut action_diffs) = (0, 0);
    for _ in 0..500 {
        let x = env_a.sample_context().unwrap();
        let (ap, ag) = (pits.select_action(&x).unwrap(), greedy.select_action(&x).unwrap());
        greedy_diffs += usize::from(ap != ag || pits.particles().particles()[0][..] != greedy.theta()[..]);
        let out = env_a.pull(&x, ap).unwrap();
        pits.observe(&x, ap, out.reward).unwrap();
        greedy.observe(&x, ag, out.reward).unwrap();

        let x = env_b.sample_context().unwrap();
        let (an, al) = (nl.select_action(&x).unwrap(), lt.select_action(&x).unwrap());
        action_diffs += usize::from(an != al);
        let out = env_b.pull(&x, an).unwrap();
        nl.observe(&x, an, out.reward).unwrap();
        lt.observe(&x, al, out.reward).unwrap();
    }
    let bitwise = pits.particles().particles()[0][..] == greedy.theta()[..];
    outcome(
        greedy_diffs == 0 && bitwise && action_diffs == 0,
        format!("pits(M=1, γ=0) vs greedy: {greedy_diffs} mismatched rounds; neural-linear(identity) vs lin-ts: {action_diffs} differing actions"),
    )
}

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| selected.is_empty() || selected.iter().any(|s| s == id);

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let report = |results: &mut Vec<(&'static str, Outcome)>, id: &'static str, o: Outcome, secs: f64| {
        println!("{} criterion {id}: {} [{secs:.1}s]", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o));
    };
    let single: [(&'static str, fn() -> Outcome); 4] =
        [("1", gradients), ("2", conjugate_lints), ("3", sampler_convergence), ("4", sinkhorn_signs)];
    let later: [(&'static str, fn() -> Outcome); 5] = [
        ("5-d20", wide_context_ordering),
        ("6", sparse_ordering),
        ("7", particle_ablation),
        ("8", dataset_smoke),
        ("10", reductions),
    ];
    for (id, f) in single {
        if wanted(id) {
            let start = Instant::now();
            let o = f();
            report(&mut results, id, o, start.elapsed().as_secs_f64());
        }
    }
    if wanted("5") || wanted("9") {
        // Criterion 9 repeats criterion 5's run, so both come from one pair of runs.
        let start = Instant::now();
        let (ord, det) = linear_ordering_and_determinism();
        let secs = start.elapsed().as_secs_f64();
        report(&mut results, "5", ord, secs);
        report(&mut results, "9", det, secs);
    }
    for (id, f) in later {
        if wanted(id) {
            let start = Instant::now();
            let o = f();
            report(&mut results, id, o, start.elapsed().as_secs_f64());
        }
    }

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.passed && !o.blocked).map(|(id, _)| *id).collect();
    let stuck: Vec<&str> = results.iter().filter(|(_, o)| o.blocked).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {} passed, {} failed, {} blocked",
        results.len() - failed.len() - stuck.len(),
        failed.len(),
        stuck.len()
    );
    if !stuck.is_empty() {
        println!("blocked criteria (missing input data): {}", stuck.join(", "));
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
