//! Regret accounting, fairness metrics and experiment sweeps.

mod experiment;
pub mod io;
mod metrics;
mod record;
mod report;

pub use experiment::{
    instance_file_name, run_experiment, run_single, summarize, trace_file_name, ExperimentConfig, ExperimentResult,
    InstanceEntry, Manifest, PreparedInstance, RunSummary, Summary, SummaryCell,
};
pub use metrics::{geometric_mean, gini, summary_metrics, MetricSummary, RunMetrics, Stat, METRICS};
pub use record::{cumulative_utilities, instantaneous_regret, Checkpoint, Recorder, RunRecord, StepRecord};
pub use report::{build_report, write_report, Report, ReportRow};
