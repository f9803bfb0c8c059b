//! Experiment configuration (TOML). Unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{
    Agent, BatchPolicy, FeatureMap, GreedyAgent, LinTsAgent, NeuralLinearAgent, PiTsAgent, RetrainSchedule,
    UniformAgent,
};
use crate::env::{
    default_sparsity, load_dataset, make_linear_env, make_sparse_env, BanditEnv, DatasetBanditEnv, DatasetSpec,
    RewardScheme,
};
use crate::error::{Error, Result};
use crate::model::{GaussianPrior, LinearRewardModel, MlpRewardModel, RewardModel};
use crate::seed;
use crate::wgf::{Bandwidth, DgfConfig, Preconditioning};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub warmup_pulls_per_arm: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Report regret relative to the uniform policy (added automatically when missing).
    #[serde(default = "default_true")]
    pub normalize: bool,
    pub environment: EnvSpec,
    pub agents: Vec<AgentSpec>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

/// Scalar shared by every arm or one value per arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Shared(f64),
    PerArm(Vec<f64>),
}

impl NoiseSpec {
    pub fn resolve(&self, num_arms: usize) -> Result<Vec<f64>> {
        match self {
            NoiseSpec::Shared(v) => Ok(vec![*v; num_arms]),
            NoiseSpec::PerArm(v) if v.len() == num_arms => Ok(v.clone()),
            NoiseSpec::PerArm(v) => Err(Error::Config(format!(
                "noise_variance lists {} values for {num_arms} arms",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Linear {
        #[serde(default = "default_arms")]
        num_arms: usize,
        #[serde(default = "default_context_dim")]
        context_dim: usize,
        #[serde(default = "default_variance")]
        prior_variance: f64,
        /// Overrides the graded `0.01·a` noise.
        noise_variance: Option<NoiseSpec>,
    },
    Sparse {
        #[serde(default = "default_arms")]
        num_arms: usize,
        #[serde(default = "default_context_dim")]
        context_dim: usize,
        #[serde(default = "default_variance")]
        prior_variance: f64,
        noise_variance: Option<NoiseSpec>,
        sparsity: Option<usize>,
    },
    Dataset {
        path: PathBuf,
        spec: PathBuf,
        /// Noise variance assumed by model-based agents.
        #[serde(default = "default_variance")]
        noise_variance: f64,
        reward_scheme: Option<RewardScheme>,
    },
}

fn default_arms() -> usize {
    8
}

fn default_context_dim() -> usize {
    10
}

fn default_variance() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub name: Option<String>,
    /// Particle count; greedy agents always use one point estimate.
    pub particles: Option<usize>,
    /// Reward model; defaults to linear on synthetic environments and mlp on datasets.
    pub model: Option<ModelKind>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Defaults to 1 for the linear model and to the unit-output-variance value for the mlp.
    pub prior_variance: Option<f64>,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_inner")]
    pub inner_steps: usize,
    #[serde(default = "default_variance")]
    pub sinkhorn_lambda: f64,
    /// Defaults to `1/M²`.
    pub sinkhorn_scale: Option<f64>,
    /// Fixed kernel bandwidth; median heuristic when absent.
    pub bandwidth: Option<f64>,
    #[serde(default = "default_preconditioning")]
    pub preconditioning: Preconditioning,
    #[serde(default = "default_full_batch_limit")]
    pub full_batch_limit: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch_size: usize,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            name: None,
            particles: None,
            model: None,
            hidden: default_hidden(),
            prior_variance: None,
            step_size: default_step(),
            inner_steps: default_inner(),
            sinkhorn_lambda: default_variance(),
            sinkhorn_scale: None,
            bandwidth: None,
            preconditioning: default_preconditioning(),
            full_batch_limit: default_full_batch_limit(),
            minibatch_size: default_minibatch(),
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![50, 50]
}

fn default_step() -> f64 {
    0.5
}

fn default_inner() -> usize {
    100
}

fn default_preconditioning() -> Preconditioning {
    Preconditioning::Curvature
}

fn default_full_batch_limit() -> usize {
    crate::agent::FULL_BATCH_LIMIT
}

fn default_minibatch() -> usize {
    crate::agent::MINIBATCH_SIZE
}

impl FlowSpec {
    pub fn dgf_config(&self) -> DgfConfig {
        DgfConfig {
            step_size: self.step_size,
            sinkhorn_lambda: self.sinkhorn_lambda,
            sinkhorn_scale: self.sinkhorn_scale,
            bandwidth: self.bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed),
            inner_steps: self.inner_steps,
            batch_size: None,
            preconditioning: self.preconditioning,
        }
    }

    fn batch_policy(&self) -> BatchPolicy {
        BatchPolicy {
            full_batch_limit: self.full_batch_limit,
            minibatch_size: self.minibatch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentSpec {
    Uniform {
        name: Option<String>,
    },
    LinTs {
        name: Option<String>,
        #[serde(default = "default_variance")]
        prior_variance: f64,
    },
    Pits(FlowSpec),
    Greedy(FlowSpec),
    NeuralLinear {
        name: Option<String>,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_variance")]
        prior_variance: f64,
        /// Rounds between retrains; 0 never retrains.
        #[serde(default = "default_retrain_every")]
        retrain_every: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
    },
}

pub const DEFAULT_PARTICLES: usize = 20;

fn default_retrain_every() -> usize {
    100
}

fn default_epochs() -> usize {
    100
}

fn default_learning_rate() -> f64 {
    1e-3
}

impl AgentSpec {
    /// Default spec for a kind name as accepted by `--agents`.
    pub fn from_kind(kind: &str) -> Result<Self> {
        let spec = match kind {
            "uniform" => AgentSpec::Uniform { name: None },
            "lin-ts" => AgentSpec::LinTs {
                name: None,
                prior_variance: default_variance(),
            },
            "pits" => AgentSpec::Pits(FlowSpec::default()),
            "greedy" => AgentSpec::Greedy(FlowSpec::default()),
            "neural-linear" => AgentSpec::NeuralLinear {
                name: None,
                hidden: default_hidden(),
                prior_variance: default_variance(),
                retrain_every: default_retrain_every(),
                epochs: default_epochs(),
                learning_rate: default_learning_rate(),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown agent kind `{other}` (expected uniform, lin-ts, pits, greedy, neural-linear)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentSpec::Uniform { .. } => "uniform",
            AgentSpec::LinTs { .. } => "lin-ts",
            AgentSpec::Pits(_) => "pits",
            AgentSpec::Greedy(_) => "greedy",
            AgentSpec::NeuralLinear { .. } => "neural-linear",
        }
    }

    pub fn name(&self) -> String {
        let explicit = match self {
            AgentSpec::Uniform { name }
            | AgentSpec::LinTs { name, .. }
            | AgentSpec::Pits(FlowSpec { name, .. })
            | AgentSpec::Greedy(FlowSpec { name, .. })
            | AgentSpec::NeuralLinear { name, .. } => name.clone(),
        };
        explicit.unwrap_or_else(|| self.kind().to_string())
    }

    pub fn with_name(mut self, new_name: impl Into<String>) -> Self {
        match &mut self {
            AgentSpec::Uniform { name }
            | AgentSpec::LinTs { name, .. }
            | AgentSpec::Pits(FlowSpec { name, .. })
            | AgentSpec::Greedy(FlowSpec { name, .. })
            | AgentSpec::NeuralLinear { name, .. } => *name = Some(new_name.into()),
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{}: {what} must be positive, got {v}", self.name())))
            }
        };
        match self {
            AgentSpec::Uniform { .. } => Ok(()),
            AgentSpec::LinTs { prior_variance, .. } => positive("prior_variance", *prior_variance),
            AgentSpec::Pits(flow) => {
                if flow.particles == Some(0) {
                    return Err(Error::Config(format!("{}: particles must be at least 1", self.name())));
                }
                validate_flow(flow, &self.name())
            }
            AgentSpec::Greedy(flow) => {
                if flow.particles.is_some() {
                    return Err(Error::Config(format!("{}: greedy agents take no particle count", self.name())));
                }
                validate_flow(flow, &self.name())
            }
            AgentSpec::NeuralLinear {
                hidden,
                prior_variance,
                learning_rate,
                ..
            } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::Config(format!("{}: hidden widths must be nonempty and positive", self.name())));
                }
                positive("prior_variance", *prior_variance)?;
                positive("learning_rate", *learning_rate)
            }
        }
    }
}

fn validate_flow(flow: &FlowSpec, name: &str) -> Result<()> {
    flow.dgf_config()
        .validate()
        .map_err(|e| Error::Config(format!("{name}: {e}")))?;
    if flow.prior_variance.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("{name}: prior_variance must be positive")));
    }
    if flow.minibatch_size == 0 {
        return Err(Error::Config(format!("{name}: minibatch_size must be positive")));
    }
    if flow.hidden.contains(&0) {
        return Err(Error::Config(format!("{name}: hidden widths must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Dataset paths are relative to the config file.
        if let (EnvSpec::Dataset { path: data, spec, .. }, Some(base)) = (&mut cfg.environment, path.parent()) {
            if data.is_relative() {
                *data = base.join(&*data);
            }
            if spec.is_relative() {
                *spec = base.join(&*spec);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.agents.is_empty() && !self.normalize {
            return Err(Error::Config("no agents configured".into()));
        }
        let mut names = BTreeSet::new();
        for agent in &self.agents {
            agent.validate()?;
            if !names.insert(agent.name()) {
                return Err(Error::Config(format!("duplicate agent name `{}`", agent.name())));
            }
        }
        match &self.environment {
            EnvSpec::Linear {
                num_arms,
                context_dim,
                prior_variance,
                noise_variance,
            }
            | EnvSpec::Sparse {
                num_arms,
                context_dim,
                prior_variance,
                noise_variance,
                ..
            } => {
                if *num_arms == 0 || *context_dim == 0 {
                    return Err(Error::Config("num_arms and context_dim must be at least 1".into()));
                }
                if !(*prior_variance >= 0.0) {
                    return Err(Error::Config("prior_variance must be nonnegative".into()));
                }
                if let Some(n) = noise_variance {
                    n.resolve(*num_arms)?;
                }
                if let EnvSpec::Sparse { sparsity: Some(s), .. } = &self.environment {
                    if *s == 0 || s > context_dim {
                        return Err(Error::Config(format!("sparsity must be in 1..={context_dim}")));
                    }
                }
            }
            EnvSpec::Dataset { noise_variance, .. } => {
                if !(*noise_variance > 0.0) {
                    return Err(Error::Config("noise_variance must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Agent list with a uniform baseline appended when normalization needs one.
    pub fn resolved_agents(&self) -> Vec<AgentSpec> {
        let mut agents = self.agents.clone();
        if self.normalize && !agents.iter().any(|a| matches!(a, AgentSpec::Uniform { .. })) {
            agents.push(AgentSpec::Uniform { name: None });
        }
        agents
    }

    pub fn uniform_name(&self) -> Option<String> {
        self.resolved_agents()
            .iter()
            .find(|a| matches!(a, AgentSpec::Uniform { .. }))
            .map(AgentSpec::name)
    }
}

/// Builds per-realization environments; a dataset is read once and reshuffled per realization.
#[derive(Debug)]
pub struct EnvFactory {
    spec: EnvSpec,
    base_seed: u64,
    dataset: Option<DatasetBanditEnv>,
}

impl EnvFactory {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let dataset = match &config.environment {
            EnvSpec::Dataset {
                path,
                spec,
                reward_scheme,
                ..
            } => {
                let mut ds = DatasetSpec::from_file(spec)?;
                if let Some(scheme) = reward_scheme {
                    ds.reward_scheme = *scheme;
                }
                Some(load_dataset(path, &ds)?)
            }
            _ => None,
        };
        Ok(Self {
            spec: config.environment.clone(),
            base_seed: config.base_seed,
            dataset,
        })
    }

    pub fn num_arms(&self) -> usize {
        match (&self.spec, &self.dataset) {
            (EnvSpec::Linear { num_arms, .. } | EnvSpec::Sparse { num_arms, .. }, _) => *num_arms,
            (_, Some(ds)) => ds.num_arms(),
            _ => unreachable!("dataset factory always holds its data"),
        }
    }

    pub fn context_dim(&self) -> usize {
        match (&self.spec, &self.dataset) {
            (EnvSpec::Linear { context_dim, .. } | EnvSpec::Sparse { context_dim, .. }, _) => *context_dim,
            (_, Some(ds)) => ds.context_dim(),
            _ => unreachable!("dataset factory always holds its data"),
        }
    }

    pub fn is_dataset(&self) -> bool {
        self.dataset.is_some()
    }

    pub fn dataset_len(&self) -> Option<usize> {
        self.dataset.as_ref().map(DatasetBanditEnv::len)
    }

    /// Noise variances handed to model-based agents.
    pub fn agent_noise_variances(&self) -> Result<Vec<f64>> {
        let k = self.num_arms();
        match &self.spec {
            EnvSpec::Linear { noise_variance, .. } | EnvSpec::Sparse { noise_variance, .. } => {
                let v = match noise_variance {
                    Some(n) => n.resolve(k)?,
                    None => (1..=k).map(|a| 0.01 * a as f64).collect(),
                };
                // Noiseless arms would give the agents an infinite-precision likelihood.
                Ok(v.into_iter().map(|x| x.max(1e-6)).collect())
            }
            EnvSpec::Dataset { noise_variance, .. } => Ok(vec![*noise_variance; k]),
        }
    }

    pub fn build(&self, realization: usize) -> Result<Box<dyn BanditEnv>> {
        let mut rng = seed::stream(self.base_seed, "environment", realization as u64, "env");
        match &self.spec {
            EnvSpec::Linear {
                num_arms,
                context_dim,
                prior_variance,
                noise_variance,
            } => {
                let mut env = make_linear_env(*num_arms, *context_dim, *prior_variance, &mut rng)?;
                if let Some(n) = noise_variance {
                    env = env.with_noise_variances(n.resolve(*num_arms)?)?;
                }
                Ok(Box::new(env))
            }
            EnvSpec::Sparse {
                num_arms,
                context_dim,
                prior_variance,
                noise_variance,
                sparsity,
            } => {
                let s = sparsity.unwrap_or_else(|| default_sparsity(*context_dim));
                let mut env = make_sparse_env(*num_arms, *context_dim, *prior_variance, s, &mut rng)?;
                if let Some(n) = noise_variance {
                    env = env.with_noise_variances(n.resolve(*num_arms)?)?;
                }
                Ok(Box::new(env))
            }
            EnvSpec::Dataset { .. } => {
                let mut env = self.dataset.clone().expect("dataset loaded at construction");
                env.shuffle(&mut rng);
                Ok(Box::new(env))
            }
        }
    }

    /// Instantiate an agent; `seed_owner` keys its random stream.
    pub fn build_agent(&self, spec: &AgentSpec, seed_owner: &str, base_seed: u64, realization: usize) -> Result<Box<dyn Agent>> {
        let seed = seed::derive_seed(base_seed, seed_owner, realization as u64, "agent");
        let k = self.num_arms();
        let d = self.context_dim();
        let name = spec.name();
        let noise = self.agent_noise_variances()?;
        let agent: Box<dyn Agent> = match spec {
            AgentSpec::Uniform { .. } => Box::new(UniformAgent::new(name, k, seed)?),
            AgentSpec::LinTs { prior_variance, .. } => Box::new(LinTsAgent::new(name, d, *prior_variance, noise, seed)?),
            AgentSpec::Pits(flow) => {
                let particles = flow.particles.unwrap_or(DEFAULT_PARTICLES);
                let (model, prior) = self.flow_model(flow, &noise)?;
                Box::new(
                    PiTsAgent::new(name, model, prior, particles, flow.dgf_config(), seed)?
                        .with_batch_policy(flow.batch_policy()),
                )
            }
            AgentSpec::Greedy(flow) => {
                let (model, prior) = self.flow_model(flow, &noise)?;
                Box::new(GreedyAgent::new(name, model, prior, flow.dgf_config(), seed)?.with_batch_policy(flow.batch_policy()))
            }
            AgentSpec::NeuralLinear {
                hidden,
                prior_variance,
                retrain_every,
                epochs,
                learning_rate,
                ..
            } => {
                let trunk = MlpRewardModel::new(d, k, hidden, noise[0])?;
                let features: FeatureMap = NeuralLinearAgent::network_features(trunk, seed::splitmix64(seed));
                let schedule = RetrainSchedule {
                    every: (*retrain_every > 0).then_some(*retrain_every),
                    epochs: *epochs,
                    learning_rate: *learning_rate,
                    ..RetrainSchedule::default()
                };
                Box::new(NeuralLinearAgent::new(name, d, features, *prior_variance, noise, schedule, seed)?)
            }
        };
        Ok(agent)
    }

    fn flow_model(&self, flow: &FlowSpec, noise: &[f64]) -> Result<(Box<dyn RewardModel>, GaussianPrior)> {
        let kind = flow.model.unwrap_or(if self.is_dataset() { ModelKind::Mlp } else { ModelKind::Linear });
        let (model, default_variance): (Box<dyn RewardModel>, f64) = match kind {
            ModelKind::Linear => (Box::new(LinearRewardModel::new(self.context_dim(), noise.to_vec())?), 1.0),
            ModelKind::Mlp => {
                let mlp = MlpRewardModel::new(self.context_dim(), self.num_arms(), &flow.hidden, noise[0])?;
                let v = mlp.unit_output_prior_variance();
                (Box::new(mlp), v)
            }
        };
        Ok((model, GaussianPrior::new(flow.prior_variance.unwrap_or(default_variance))?))
    }
}
