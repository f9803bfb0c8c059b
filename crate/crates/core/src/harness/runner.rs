use serde::{Deserialize, Serialize};

use super::config::{AgentSpec, EnvFactory, ExperimentConfig};
use crate::agent::warmup;
use crate::error::{Error, Result};

/// Regret of one agent on one realization, one entry per pull (warmup included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub agent: String,
    pub realization: usize,
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn from_instant(agent: impl Into<String>, realization: usize, instant: Vec<f64>) -> Self {
        let cumulative = instant
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        Self {
            agent: agent.into(),
            realization,
            instant,
            cumulative,
        }
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }
}

/// One agent on one realization. The environment stream is keyed by the
/// realization only, so every agent faces the same contexts and noise.
pub fn run_realization(
    config: &ExperimentConfig,
    factory: &EnvFactory,
    spec: &AgentSpec,
    seed_owner: &str,
    realization: usize,
) -> Result<RegretTrace> {
    let mut env = factory.build(realization)?;
    let mut agent = factory.build_agent(spec, seed_owner, config.base_seed, realization)?;
    let warm = config.warmup_pulls_per_arm * env.num_arms();
    if let Some(rows) = factory.dataset_len() {
        if warm + config.horizon > rows {
            return Err(Error::Config(format!(
                "warmup ({warm} pulls) plus horizon ({}) exceeds the {rows} dataset rows; use a horizon of at most {}",
                config.horizon,
                rows.saturating_sub(warm)
            )));
        }
    }
    let mut instant = Vec::with_capacity(warm + config.horizon);
    for outcome in warmup(agent.as_mut(), env.as_mut(), config.warmup_pulls_per_arm)? {
        instant.push(outcome.regret());
    }
    for _ in 0..config.horizon {
        let context = env.sample_context()?;
        let action = agent.select_action(&context)?;
        let outcome = env.pull(&context, action)?;
        agent.observe(&context, action, outcome.reward)?;
        instant.push(outcome.regret());
    }
    Ok(RegretTrace::from_instant(spec.name(), realization, instant))
}

/// A unit of work: which agent spec to run and which name keys its seeds.
#[derive(Clone, Debug)]
pub struct Cell {
    pub spec: AgentSpec,
    pub seed_owner: String,
    pub realization: usize,
}

/// Cells in agent-major order.
pub fn cells_for(agents: &[AgentSpec], realizations: usize) -> Vec<Cell> {
    agents
        .iter()
        .flat_map(|spec| {
            (0..realizations).map(move |r| Cell {
                spec: spec.clone(),
                seed_owner: spec.name(),
                realization: r,
            })
        })
        .collect()
}

/// Run cells, in parallel when the `parallel` feature is on. Output order matches `cells`.
pub fn run_cells(config: &ExperimentConfig, factory: &EnvFactory, cells: &[Cell]) -> Result<Vec<RegretTrace>> {
    let run = |cell: &Cell| {
        run_realization(config, factory, &cell.spec, &cell.seed_owner, cell.realization).map_err(|e| Error::Cell {
            agent: cell.spec.name(),
            realization: cell.realization,
            source: Box::new(e),
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cells.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cells.iter().map(run).collect()
    }
}

/// Every configured agent (plus the uniform baseline when normalizing) on every realization.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RegretTrace>> {
    config.validate()?;
    let factory = EnvFactory::new(config)?;
    let cells = cells_for(&config.resolved_agents(), config.realizations);
    run_cells(config, &factory, &cells)
}
