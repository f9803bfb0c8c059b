//! Experiment configuration, execution and result files.

mod ablation;
mod check;
mod config;
mod runner;
mod summary;

pub use ablation::{ablation_config, AblationRun, run_particle_ablation, ABLATION_NOISE_VARIANCE, ABLATION_PARTICLES, ABLATION_WARMUP};
pub use check::{run_checks, CheckResult};
pub use config::{
    AgentSpec, EnvFactory, EnvSpec, ExperimentConfig, FlowSpec, ModelKind, NoiseSpec, DEFAULT_PARTICLES,
};
pub use runner::{cells_for, run_cells, run_experiment, run_realization, Cell, RegretTrace};
pub use summary::{
    agent_seeds, cell_seeds, curves, finals_by_agent, format_table, mean_stderr, normalize_regret, read_summary,
    read_traces_csv, summarize, version_string, write_curves_csv, write_results, write_traces_csv, AgentSummary,
    SummaryFile,
};
