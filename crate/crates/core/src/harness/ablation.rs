use super::config::{AgentSpec, EnvFactory, EnvSpec, ExperimentConfig, FlowSpec, NoiseSpec};
use super::runner::{run_cells, Cell, RegretTrace};
use super::summary::{cell_seeds, summarize, AgentSummary};
use std::collections::BTreeMap;
use crate::error::{Error, Result};

pub const ABLATION_PARTICLES: [usize; 4] = [1, 5, 20, 50];
pub const ABLATION_NOISE_VARIANCE: f64 = 0.1;
pub const ABLATION_WARMUP: usize = 2;

/// Ablation settings derived from `base`: shared noise 0.1, two warmup pulls per arm,
/// and one π-TS agent per particle count built from the first π-TS spec (or defaults).
pub fn ablation_config(base: &ExperimentConfig, counts: &[usize]) -> Result<ExperimentConfig> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Config("particle counts must be positive".into()));
    }
    let template = base
        .agents
        .iter()
        .find_map(|a| match a {
            AgentSpec::Pits(flow) => Some(flow.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let mut cfg = base.clone();
    match &mut cfg.environment {
        EnvSpec::Linear { noise_variance, .. } | EnvSpec::Sparse { noise_variance, .. } => {
            *noise_variance = Some(NoiseSpec::Shared(ABLATION_NOISE_VARIANCE));
        }
        EnvSpec::Dataset { .. } => {
            return Err(Error::Config("the particle ablation runs on synthetic environments".into()));
        }
    }
    cfg.warmup_pulls_per_arm = ABLATION_WARMUP;
    cfg.agents = counts
        .iter()
        .map(|&m| {
            AgentSpec::Pits(FlowSpec {
                name: Some(format!("pits-m{m}")),
                particles: Some(m),
                ..template.clone()
            })
        })
        .collect();
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, Vec<u64>>,
    pub traces: Vec<RegretTrace>,
    pub summary: Vec<AgentSummary>,
}

/// Run the ablation. Every particle count shares the environment streams and
/// the agent seed, so differences come from `M` alone. `M = 1` is labelled greedy.
pub fn run_particle_ablation(base: &ExperimentConfig, counts: &[usize]) -> Result<AblationRun> {
    let cfg = ablation_config(base, counts)?;
    let factory = EnvFactory::new(&cfg)?;
    let owner = "pits-ablation".to_string();
    let cells: Vec<Cell> = cfg
        .resolved_agents()
        .into_iter()
        .flat_map(|spec| {
            let seed_owner = if matches!(spec, AgentSpec::Pits(_)) { owner.clone() } else { spec.name() };
            (0..cfg.realizations).map(move |r| Cell {
                spec: spec.clone(),
                seed_owner: seed_owner.clone(),
                realization: r,
            })
        })
        .collect();
    let traces = run_cells(&cfg, &factory, &cells)?;
    let mut rows = summarize(&traces, cfg.uniform_name().as_deref())?;
    for row in &mut rows {
        if row.agent == "pits-m1" {
            row.label = Some("greedy".into());
        }
    }
    Ok(AblationRun {
        seeds: cell_seeds(cfg.base_seed, &cells),
        config: cfg,
        traces,
        summary: rows,
    })
}
