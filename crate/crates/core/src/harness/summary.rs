use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::RegretTrace;
use crate::error::{Error, Result};

/// Sample mean and standard error (n − 1 divisor; zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    /// Display label when it differs from the agent name.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub realizations: usize,
    pub final_cum_regret_mean: f64,
    pub final_cum_regret_stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalized_regret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalized_regret_stderr: Option<f64>,
}

/// `100 · mean(agent) / mean(uniform)` with a delta-method standard error
/// treating the two means as independent.
pub fn normalize_regret(agent_finals: &[f64], uniform_finals: &[f64]) -> Result<(f64, f64)> {
    if agent_finals.is_empty() || uniform_finals.is_empty() {
        return Err(Error::InvalidArgument("normalization needs at least one realization".into()));
    }
    let (ma, sa) = mean_stderr(agent_finals);
    let (mu, su) = mean_stderr(uniform_finals);
    if mu == 0.0 || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "uniform baseline has cumulative regret {mu}; normalized regret is undefined"
        )));
    }
    let value = 100.0 * (ma / mu);
    let se = 100.0 * ((sa / mu).powi(2) + (ma * su / (mu * mu)).powi(2)).sqrt();
    Ok((value, se))
}

/// Final cumulative regret per agent, in first-appearance order.
pub fn finals_by_agent(traces: &[RegretTrace]) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for t in traces {
        match out.iter_mut().find(|(name, _)| *name == t.agent) {
            Some((_, v)) => v.push(t.final_regret()),
            None => out.push((t.agent.clone(), vec![t.final_regret()])),
        }
    }
    out
}

pub fn summarize(traces: &[RegretTrace], uniform: Option<&str>) -> Result<Vec<AgentSummary>> {
    let finals = finals_by_agent(traces);
    let baseline = match uniform {
        Some(name) => Some(
            finals
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::InvalidArgument(format!("baseline `{name}` has no traces")))?,
        ),
        None => None,
    };
    finals
        .iter()
        .map(|(agent, v)| {
            let (mean, se) = mean_stderr(v);
            let (normalized_regret, normalized_regret_stderr) = match &baseline {
                Some(u) => {
                    let (n, s) = normalize_regret(v, u)?;
                    (Some(n), Some(s))
                }
                None => (None, None),
            };
            Ok(AgentSummary {
                agent: agent.clone(),
                label: None,
                realizations: v.len(),
                final_cum_regret_mean: mean,
                final_cum_regret_stderr: se,
                normalized_regret,
                normalized_regret_stderr,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub version: String,
    /// Warmup pulls are part of every trace and of the reported regret.
    pub warmup_counted_in_regret: bool,
    pub base_seed: u64,
    pub seeds: BTreeMap<String, Vec<u64>>,
    pub config: serde_json::Value,
    pub agents: Vec<AgentSummary>,
}

pub fn version_string() -> String {
    match option_env!("PITS_GIT_DESCRIBE") {
        Some(describe) if !describe.is_empty() => format!("{} ({describe})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Per-step mean and standard deviation (n − 1 divisor) of cumulative regret.
pub fn curves(traces: &[RegretTrace]) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut grouped: Vec<(String, Vec<&RegretTrace>)> = Vec::new();
    for t in traces {
        match grouped.iter_mut().find(|(n, _)| *n == t.agent) {
            Some((_, v)) => v.push(t),
            None => grouped.push((t.agent.clone(), vec![t])),
        }
    }
    grouped
        .into_iter()
        .map(|(agent, ts)| {
            let len = ts.iter().map(|t| t.len()).min().unwrap_or(0);
            let rows = (0..len)
                .map(|i| {
                    let vals: Vec<f64> = ts.iter().map(|t| t.cumulative[i]).collect();
                    let (mean, se) = mean_stderr(&vals);
                    (mean, se * (vals.len() as f64).sqrt())
                })
                .collect();
            (agent, rows)
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_traces_csv(path: &Path, traces: &[RegretTrace]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?);
    w.write_record(["agent", "realization", "t", "instant_regret", "cum_regret"])?;
    for tr in traces {
        for (i, (inst, cum)) in tr.instant.iter().zip(&tr.cumulative).enumerate() {
            w.write_record([
                tr.agent.clone(),
                tr.realization.to_string(),
                (i + 1).to_string(),
                inst.to_string(),
                cum.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_traces_csv`].
pub fn read_traces_csv(path: &Path) -> Result<Vec<RegretTrace>> {
    #[derive(Deserialize)]
    struct Row {
        agent: String,
        realization: usize,
        t: usize,
        instant_regret: f64,
        cum_regret: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut traces: Vec<RegretTrace> = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let fresh = row.t == 1
            || traces
                .last()
                .is_none_or(|t| t.agent != row.agent || t.realization != row.realization);
        if fresh {
            traces.push(RegretTrace {
                agent: row.agent,
                realization: row.realization,
                instant: Vec::new(),
                cumulative: Vec::new(),
            });
        }
        let tr = traces.last_mut().expect("pushed above");
        tr.instant.push(row.instant_regret);
        tr.cumulative.push(row.cum_regret);
    }
    Ok(traces)
}

pub fn write_curves_csv(path: &Path, traces: &[RegretTrace]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?);
    w.write_record(["agent", "t", "mean_cum_regret", "std_cum_regret"])?;
    for (agent, rows) in curves(traces) {
        for (i, (mean, sd)) in rows.iter().enumerate() {
            w.write_record([agent.clone(), (i + 1).to_string(), mean.to_string(), sd.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Seeds handed to each agent, per realization.
pub fn agent_seeds(config: &ExperimentConfig) -> BTreeMap<String, Vec<u64>> {
    let cells = super::runner::cells_for(&config.resolved_agents(), config.realizations);
    cell_seeds(config.base_seed, &cells)
}

pub fn cell_seeds(base_seed: u64, cells: &[super::runner::Cell]) -> BTreeMap<String, Vec<u64>> {
    let mut out: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for cell in cells {
        out.entry(cell.spec.name())
            .or_default()
            .push(crate::seed::derive_seed(base_seed, &cell.seed_owner, cell.realization as u64, "agent"));
    }
    out
}

/// Write `traces.csv`, `summary.json` and `curves.csv` into `out_dir`.
pub fn write_results(
    out_dir: &Path,
    config: &ExperimentConfig,
    seeds: BTreeMap<String, Vec<u64>>,
    traces: &[RegretTrace],
    agents: &[AgentSummary],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let traces_path = out_dir.join("traces.csv");
    let summary_path = out_dir.join("summary.json");
    let curves_path = out_dir.join("curves.csv");
    write_traces_csv(&traces_path, traces)?;
    write_curves_csv(&curves_path, traces)?;
    let summary = SummaryFile {
        version: version_string(),
        warmup_counted_in_regret: true,
        base_seed: config.base_seed,
        seeds,
        config: serde_json::to_value(config)?,
        agents: agents.to_vec(),
    };
    let mut f = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n").map_err(|e| Error::io(&summary_path, e))?;
    f.flush().map_err(|e| Error::io(&summary_path, e))?;
    Ok(vec![traces_path, summary_path, curves_path])
}

pub fn read_summary(path: &Path) -> Result<SummaryFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Plain-text table for terminals.
pub fn format_table(agents: &[AgentSummary]) -> String {
    let mut s = format!("{:<20} {:>6} {:>14} {:>10} {:>12}\n", "agent", "runs", "cum regret", "± se", "normalized");
    for a in agents {
        let label = a.label.as_deref().unwrap_or(&a.agent);
        let norm = match (a.normalized_regret, a.normalized_regret_stderr) {
            (Some(n), Some(se)) => format!("{n:.2} ± {se:.2}"),
            _ => "-".into(),
        };
        s.push_str(&format!(
            "{:<20} {:>6} {:>14.3} {:>10.3} {:>12}\n",
            label, a.realizations, a.final_cum_regret_mean, a.final_cum_regret_stderr, norm
        ));
    }
    s
}
