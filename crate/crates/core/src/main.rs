use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pits::harness::{
    agent_seeds, format_table, run_checks, run_experiment, run_particle_ablation, summarize, write_results,
    AgentSpec, EnvSpec, ExperimentConfig, ABLATION_PARTICLES,
};
use pits::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "pits", version, about = "Particle-interactive Thompson sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Linear-Gaussian bandit with graded noise.
    RunLinear(RunArgs),
    /// Sparse linear bandit.
    RunSparse(RunArgs),
    /// Classification dataset turned into a bandit (requires --config).
    RunDataset(RunArgs),
    /// Regret as a function of the particle count.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        /// Particle counts to compare.
        #[arg(long, value_delimiter = ',', default_values_t = ABLATION_PARTICLES)]
        counts: Vec<usize>,
    },
    /// Numerical self-tests.
    Check,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for traces.csv, summary.json and curves.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Particle count for every π-TS agent.
    #[arg(long)]
    particles: Option<usize>,
    /// Agent kinds or configured agent names to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
}

fn default_config(kind: &str) -> Result<ExperimentConfig> {
    let text = format!(
        "horizon = 1000\nrealizations = 5\n\n[environment]\nkind = \"{kind}\"\n\n\
         [[agents]]\nkind = \"pits\"\n\n[[agents]]\nkind = \"lin-ts\"\n\n[[agents]]\nkind = \"uniform\"\n"
    );
    ExperimentConfig::from_toml_str(&text)
}

fn load_config(args: &RunArgs, kind: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None if kind == "dataset" => {
            return Err(Error::Config("run-dataset needs --config naming the data and spec files".into()))
        }
        None => default_config(kind)?,
    };
    let actual = match cfg.environment {
        EnvSpec::Linear { .. } => "linear",
        EnvSpec::Sparse { .. } => "sparse",
        EnvSpec::Dataset { .. } => "dataset",
    };
    if actual != kind {
        return Err(Error::Config(format!("config describes a {actual} environment, not {kind}")));
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(r) = args.realizations {
        cfg.realizations = r;
    }
    if let Some(t) = args.horizon {
        cfg.horizon = t;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(wanted) = &args.agents {
        cfg.agents = wanted
            .iter()
            .map(|w| match cfg.agents.iter().find(|a| a.name() == *w) {
                Some(a) => Ok(a.clone()),
                None => AgentSpec::from_kind(w),
            })
            .collect::<Result<_>>()?;
    }
    if let Some(m) = args.particles {
        for agent in &mut cfg.agents {
            if let AgentSpec::Pits(flow) = agent {
                flow.particles = Some(m);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, kind: &str) -> Result<()> {
    let cfg = load_config(args, kind)?;
    let traces = run_experiment(&cfg)?;
    let rows = summarize(&traces, cfg.uniform_name().as_deref())?;
    let files = write_results(&cfg.out_dir, &cfg, agent_seeds(&cfg), &traces, &rows)?;
    print!("{}", format_table(&rows));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn ablation(args: &RunArgs, counts: &[usize]) -> Result<()> {
    let base = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_file(path)?;
            let kind = match cfg.environment {
                EnvSpec::Sparse { .. } => "sparse",
                _ => "linear",
            };
            load_config(args, kind)?
        }
        None => load_config(args, "linear")?,
    };
    let run = run_particle_ablation(&base, counts)?;
    let files = write_results(&run.config.out_dir, &run.config, run.seeds.clone(), &run.traces, &run.summary)?;
    print!("{}", format_table(&run.summary));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn check() -> Result<bool> {
    let mut ok = true;
    for c in run_checks() {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::RunLinear(a) => run(a, "linear").map(|_| true),
        Command::RunSparse(a) => run(a, "sparse").map(|_| true),
        Command::RunDataset(a) => run(a, "dataset").map(|_| true),
        Command::Ablation { run, counts } => ablation(run, counts).map(|_| true),
        Command::Check => check(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let config_error = match &e {
                Error::Cell { source, .. } => source.is_config(),
                other => other.is_config(),
            };
            ExitCode::from(if config_error { 1 } else { 2 })
        }
    }
}
