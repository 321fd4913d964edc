use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{fmt_f64, write_json, write_trace};
use super::metrics::{summary_metrics, MetricSummary, RunMetrics};
use super::record::{Recorder, RunRecord};
use crate::agents::{run_agent, AgentConfig};
use crate::domain::Policy;
use crate::envgen::{generate, Instance, InstanceSpec, TensorSampler};
use crate::error::{Error, Result};
use crate::rng::{streams, RngSeed};
use crate::welfare::{maximize_nsw, SolverSettings};

fn default_repetitions() -> usize {
    30
}
fn default_stride() -> u64 {
    100
}

/// A sweep over instances, agents and repetitions.
///
/// Every repetition draws a fresh instance from each spec, shared by all
/// agents in that repetition. Seeds inside instance and agent specs are
/// ignored: all streams derive from `master_seed` and the cell indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instances: Vec<InstanceSpec>,
    pub agents: Vec<AgentConfig>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub horizon: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_stride")]
    pub checkpoint_stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(instances: Vec<InstanceSpec>, agents: Vec<AgentConfig>, horizon: u64) -> Self {
        Self {
            instances,
            agents,
            repetitions: default_repetitions(),
            horizon,
            master_seed: 0,
            checkpoint_stride: default_stride(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() || self.agents.is_empty() {
            return Err(Error::InvalidConfig("need at least one instance and one agent".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let mut labels: Vec<&str> = self.agents.iter().map(AgentConfig::label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "agent labels must be unique; set `name` to tell agents apart".into(),
            ));
        }
        for spec in &self.instances {
            spec.validate()?;
        }
        for (a, agent) in self.agents.iter().enumerate() {
            self.agent_config(a, 0, 0)
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("agent {} ({}): {e}", a, agent.label())))?;
        }
        Ok(())
    }

    pub fn instance_id(&self, index: usize) -> String {
        let s = &self.instances[index];
        format!("i{index:02}-{}-d{}-k{}", s.kind.as_str(), s.users, s.arms)
    }

    fn root(&self) -> RngSeed {
        RngSeed::from_master(self.master_seed)
    }

    pub fn instance_seed(&self, instance: usize, rep: usize) -> RngSeed {
        self.root()
            .derive_path(&[streams::INSTANCE, instance as u64, rep as u64])
    }

    /// Duel outcomes depend only on the instance and repetition, so every
    /// agent in a repetition faces the same feedback stream.
    pub fn environment_seed(&self, instance: usize, rep: usize) -> RngSeed {
        self.root()
            .derive_path(&[streams::ENVIRONMENT, instance as u64, rep as u64])
    }

    pub fn agent_config(&self, agent: usize, instance: usize, rep: usize) -> AgentConfig {
        let mut cfg = self.agents[agent].clone();
        cfg.horizon = self.horizon;
        cfg.seed = self
            .root()
            .derive_path(&[streams::AGENT, instance as u64, agent as u64, rep as u64]);
        cfg
    }
}

/// A generated instance with its reference optimum.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub id: String,
    pub rep: usize,
    pub instance: Instance,
    pub optimum: Policy,
    pub optimal_value: f64,
}

impl PreparedInstance {
    pub fn new(id: String, rep: usize, instance: Instance) -> Self {
        let sol = maximize_nsw(&instance.scores, &SolverSettings::reference());
        Self {
            id,
            rep,
            optimum: sol.policy,
            optimal_value: sol.value,
            instance,
        }
    }
}

/// One agent run against a prepared instance.
pub fn run_single(
    prepared: &PreparedInstance,
    agent: &AgentConfig,
    environment: RngSeed,
    stride: u64,
) -> Result<RunRecord> {
    let inst = &prepared.instance;
    let mut sampler = TensorSampler::new(&inst.tensor, environment);
    let mut recorder =
        Recorder::new(&inst.scores, prepared.optimal_value, stride).with_capacity(agent.horizon.min(1 << 24) as usize);
    let started = Instant::now();
    let outcome = run_agent(&mut sampler, agent, &mut recorder)?;
    Ok(recorder.finish(outcome, started.elapsed()))
}

pub fn trace_file_name(instance_id: &str, agent: &str, rep: usize) -> String {
    format!("{instance_id}__{agent}__rep{rep:03}.csv")
}

pub fn instance_file_name(instance_id: &str, rep: usize) -> String {
    format!("{instance_id}__rep{rep:03}.json")
}

/// Outcome of one (instance, agent, repetition) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instance_id: String,
    pub agent: String,
    pub rep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(default)]
    pub identification_steps: u64,
    /// Cumulative regret at each checkpoint.
    #[serde(skip)]
    pub curve: Vec<(u64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub instance_id: String,
    pub agent: String,
    pub runs: usize,
    pub failed: usize,
    pub truncated_runs: usize,
    pub gini_degenerate_runs: usize,
    pub metrics: Vec<MetricSummary>,
}

impl SummaryCell {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<SummaryCell>,
}

impl Summary {
    pub fn cell(&self, instance_id: &str, agent: &str) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.instance_id == instance_id && c.agent == agent)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(super::io::create_file(path)?);
        w.write_record(["instance_id", "agent", "metric", "mean", "ci95"])?;
        for cell in &self.cells {
            for m in &cell.metrics {
                w.write_record([
                    cell.instance_id.as_str(),
                    cell.agent.as_str(),
                    m.metric.as_str(),
                    &fmt_f64(m.stat.mean),
                    &fmt_f64(m.stat.ci95),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Groups runs by (instance, agent) in first-appearance order.
pub fn summarize(runs: &[RunSummary]) -> Summary {
    let mut cells: Vec<SummaryCell> = Vec::new();
    let mut groups: Vec<Vec<&RunSummary>> = Vec::new();
    for run in runs {
        match cells
            .iter()
            .position(|c| c.instance_id == run.instance_id && c.agent == run.agent)
        {
            Some(k) => groups[k].push(run),
            None => {
                cells.push(SummaryCell {
                    instance_id: run.instance_id.clone(),
                    agent: run.agent.clone(),
                    runs: 0,
                    failed: 0,
                    truncated_runs: 0,
                    gini_degenerate_runs: 0,
                    metrics: Vec::new(),
                });
                groups.push(vec![run]);
            }
        }
    }
    for (cell, group) in cells.iter_mut().zip(groups) {
        let ok: Vec<RunMetrics> = group.iter().filter_map(|r| r.metrics).collect();
        cell.runs = group.len();
        cell.failed = group.len() - ok.len();
        cell.truncated_runs = ok.iter().filter(|m| m.truncated).count();
        cell.gini_degenerate_runs = ok.iter().filter(|m| m.gini_degenerate).count();
        cell.metrics = summary_metrics(&ok);
    }
    Summary { cells }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub instance_id: String,
    pub rep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winners: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub instances: Vec<InstanceEntry>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub runs: Vec<RunSummary>,
    pub instances: Vec<InstanceEntry>,
}

impl ExperimentResult {
    pub fn failures(&self) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

/// Runs every cell of the sweep on `jobs` threads (0 means one per core).
/// With `out`, writes instances, traces, `manifest.json`, `summary.json`
/// and `summary.csv` there. Failed runs are recorded rather than fatal.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>, jobs: usize) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| execute(config, out))
}

fn execute(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    let reps = config.repetitions;
    let slots: Vec<(usize, usize)> = (0..config.instances.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    // indexed by `i * reps + r`
    let prepared: Vec<Result<PreparedInstance>> = slots
        .par_iter()
        .map(|&(i, r)| {
            let spec = config.instances[i].clone().with_seed(config.instance_seed(i, r));
            Ok(PreparedInstance::new(config.instance_id(i), r, generate(&spec)?))
        })
        .collect();

    let mut entries = Vec::with_capacity(prepared.len());
    for (&(i, r), p) in slots.iter().zip(&prepared) {
        let id = config.instance_id(i);
        let entry = match p {
            Ok(p) => {
                let file = instance_file_name(&id, r);
                if let Some(dir) = out {
                    write_json(&dir.join("instances").join(&file), &p.instance.document())?;
                }
                InstanceEntry {
                    instance_id: id,
                    rep: r,
                    file: out.map(|_| file),
                    winners: Some(p.instance.winners.winners().to_vec()),
                    optimal_value: Some(p.optimal_value),
                    error: None,
                }
            }
            Err(e) => {
                warn!("instance {id} rep {r}: {e}");
                InstanceEntry {
                    instance_id: id,
                    rep: r,
                    file: None,
                    winners: None,
                    optimal_value: None,
                    error: Some(e.to_string()),
                }
            }
        };
        entries.push(entry);
    }

    let cells: Vec<(usize, usize, usize)> = (0..config.instances.len())
        .flat_map(|i| (0..config.agents.len()).flat_map(move |a| (0..reps).map(move |r| (i, a, r))))
        .collect();
    let total = cells.len();

    let runs: Vec<RunSummary> = cells
        .par_iter()
        .map(|&(i, a, r)| {
            let id = config.instance_id(i);
            let agent = config.agent_config(a, i, r);
            let label = agent.label().to_string();
            let mut summary = RunSummary {
                instance_id: id.clone(),
                agent: label.clone(),
                rep: r,
                trace: None,
                metrics: None,
                identification_steps: 0,
                curve: Vec::new(),
                error: None,
            };
            let prepared = match &prepared[i * reps + r] {
                Ok(p) => p,
                Err(e) => {
                    summary.error = Some(format!("instance unavailable: {e}"));
                    return summary;
                }
            };
            let result = run_single(
                prepared,
                &agent,
                config.environment_seed(i, r),
                config.checkpoint_stride,
            )
            .and_then(|record| {
                if let Some(dir) = out {
                    let file = trace_file_name(&id, &label, r);
                    write_trace(&dir.join("traces").join(&file), &record.steps)?;
                    summary.trace = Some(file);
                }
                Ok(record)
            });
            match result {
                Ok(record) => {
                    summary.metrics = Some(RunMetrics::new(
                        record.cumulative_regret,
                        &record.utilities,
                        record.truncated,
                    ));
                    summary.identification_steps = record.outcome.phases.identify;
                    summary.curve = record.checkpoints.iter().map(|c| (c.t, c.regret_cum)).collect();
                    info!(
                        "{id} {label} rep {r}: regret {:.3} in {:.2?}",
                        record.cumulative_regret, record.duration
                    );
                }
                Err(e) => {
                    warn!("{id} {label} rep {r} failed: {e}");
                    summary.error = Some(e.to_string());
                }
            }
            summary
        })
        .collect();
    debug_assert_eq!(runs.len(), total);

    let summary = summarize(&runs);
    if let Some(dir) = out {
        let manifest = Manifest {
            config: ExperimentConfig {
                output_dir: None,
                ..config.clone()
            },
            instances: entries.clone(),
            runs: runs.clone(),
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        write_json(&dir.join("summary.json"), &summary)?;
        summary.write_csv(&dir.join("summary.csv"))?;
    }
    Ok(ExperimentResult {
        summary,
        runs,
        instances: entries,
    })
}
