//! Rebuilds metrics and regret curves from a sweep directory.

use std::collections::BTreeMap;
use std::path::Path;

use super::experiment::{summarize, Manifest, RunSummary, Summary};
use super::io::{create_file, fmt_f64, read_json, read_trace};
use super::metrics::{RunMetrics, Stat};
use super::record::cumulative_utilities;
use crate::domain::InstanceDocument;
use crate::envgen::Instance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub instance_id: String,
    pub agent: String,
    pub metric: String,
    pub t: u64,
    pub stat: Stat,
}

#[derive(Debug, Clone)]
pub struct Report {
    /// Metrics recomputed from the persisted traces.
    pub summary: Summary,
    pub runs: Vec<RunSummary>,
    pub rows: Vec<ReportRow>,
}

/// Replays every trace listed in `dir/manifest.json` against its stored
/// instance.
pub fn build_report(dir: &Path) -> Result<Report> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    let config = &manifest.config;
    let stride = config.checkpoint_stride.max(1);

    let mut instances: BTreeMap<(String, usize), Instance> = BTreeMap::new();
    for entry in &manifest.instances {
        if let Some(file) = &entry.file {
            let doc: InstanceDocument = read_json(&dir.join("instances").join(file))?;
            instances.insert((entry.instance_id.clone(), entry.rep), Instance::from_document(&doc)?);
        }
    }

    let mut runs = Vec::with_capacity(manifest.runs.len());
    for run in &manifest.runs {
        let mut replayed = RunSummary {
            metrics: None,
            curve: Vec::new(),
            ..run.clone()
        };
        if let (Some(file), Some(online)) = (&run.trace, &run.metrics) {
            let path = dir.join("traces").join(file);
            let inst = instances
                .get(&(run.instance_id.clone(), run.rep))
                .ok_or_else(|| Error::MalformedTrace {
                    path: path.clone(),
                    reason: "its instance file is missing".into(),
                })?;
            let steps = read_trace(&path)?;
            let utilities = cumulative_utilities(steps.iter().map(|s| (s.arm_i, s.arm_j)), &inst.scores);
            let regret = steps.last().map_or(0.0, |s| s.regret_cum);
            replayed.metrics = Some(RunMetrics::new(regret, &utilities, online.truncated));
            replayed.curve = steps
                .iter()
                .filter(|s| s.t % stride == 0 || s.t == steps.len() as u64)
                .map(|s| (s.t, s.regret_cum))
                .collect();
        }
        runs.push(replayed);
    }

    let summary = summarize(&runs);
    let mut rows = Vec::new();
    for cell in &summary.cells {
        let group: Vec<&RunSummary> = runs
            .iter()
            .filter(|r| r.instance_id == cell.instance_id && r.agent == cell.agent && r.metrics.is_some())
            .collect();
        let mut points: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &group {
            for &(t, v) in &r.curve {
                points.entry(t).or_default().push(v);
            }
        }
        for (t, values) in points {
            rows.push(ReportRow {
                instance_id: cell.instance_id.clone(),
                agent: cell.agent.clone(),
                metric: "regret_cum".into(),
                t,
                stat: Stat::from_samples(&values),
            });
        }
        for m in &cell.metrics {
            rows.push(ReportRow {
                instance_id: cell.instance_id.clone(),
                agent: cell.agent.clone(),
                metric: m.metric.clone(),
                t: config.horizon,
                stat: m.stat,
            });
        }
    }
    Ok(Report { summary, runs, rows })
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(["instance_id", "agent", "metric", "t", "mean", "ci95"])?;
    for row in &report.rows {
        w.write_record([
            row.instance_id.as_str(),
            row.agent.as_str(),
            row.metric.as_str(),
            &row.t.to_string(),
            &fmt_f64(row.stat.mean),
            &fmt_f64(row.stat.ci95),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
