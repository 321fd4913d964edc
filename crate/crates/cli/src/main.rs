use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use nswduel::agents::{AgentConfig, AgentKind};
use nswduel::harness::io::{read_json, write_json, write_trace};
use nswduel::harness::{
    build_report, run_experiment, run_single, write_report, ExperimentConfig, PreparedInstance, RunMetrics,
};
use nswduel::rng::streams;
use nswduel::{generate, Instance, InstanceDocument, InstanceKind, InstanceSpec, RngSeed};

#[derive(Parser)]
#[command(name = "nswduel", version, about = "Fair multi-user dueling bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance.
    Gen(GenArgs),
    /// Run one agent on a stored instance and write its trace.
    Run(RunArgs),
    /// Run a sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Rebuild metrics and regret curves from a sweep directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: InstanceKind,
    #[arg(long)]
    users: usize,
    #[arg(long)]
    arms: usize,
    #[arg(long, default_value_t = 0.1)]
    gap: f64,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "eps-prime")]
    eps_prime: Option<f64>,
    #[arg(long = "target-m")]
    target_m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    agent: AgentKind,
    #[arg(long)]
    horizon: u64,
    #[arg(long = "delta-hat")]
    delta_hat: Option<f64>,
    #[arg(long = "etc-scale")]
    etc_scale: Option<f64>,
    #[arg(long = "eps-scale")]
    eps_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn gen(args: GenArgs) -> Result<()> {
    let seed = RngSeed::from_master(args.seed);
    let spec = InstanceSpec {
        kind: args.kind,
        users: args.users,
        arms: args.arms,
        gap: args.gap,
        rho: args.rho,
        eps: args.eps,
        eps_prime: args.eps_prime,
        target_m: args.target_m,
        seed,
    };
    let inst = generate(&spec)?;
    write_json(&args.out, &inst.document())?;
    info!("wrote {} with winners {:?}", args.out.display(), inst.winners.winners());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let doc: InstanceDocument = read_json(&args.env)?;
    let inst = Instance::from_document(&doc).with_context(|| format!("loading {}", args.env.display()))?;
    let root = RngSeed::from_master(args.seed);
    let mut agent = AgentConfig::new(args.agent, args.horizon).with_seed(root.derive(streams::AGENT));
    if let Some(x) = args.delta_hat {
        agent.delta_hat = x;
    }
    if let Some(x) = args.etc_scale {
        agent.etc_scale = x;
    }
    if let Some(x) = args.eps_scale {
        agent.eps_scale = x;
    }
    agent.validate()?;
    let prepared = PreparedInstance::new("env".into(), 0, inst);
    let record = run_single(&prepared, &agent, root.derive(streams::ENVIRONMENT), 100)?;
    write_trace(&args.out, &record.steps)?;
    let metrics = RunMetrics::new(record.cumulative_regret, &record.utilities, record.truncated);
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut config: ExperimentConfig = read_json(&args.config)?;
    let out = args
        .out
        .or_else(|| config.output_dir.take())
        .context("no output directory: pass --out or set output_dir in the config")?;
    let result = run_experiment(&config, Some(&out), args.jobs)?;
    let failed = result.failures().count();
    for run in result.failures() {
        warn!(
            "{} {} rep {}: {}",
            run.instance_id,
            run.agent,
            run.rep,
            run.error.as_deref().unwrap_or_default()
        );
    }
    info!("{} runs written to {}", result.runs.len(), out.display());
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", result.runs.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<()> {
    if !args.input.join("manifest.json").is_file() {
        bail!("{} has no manifest.json", args.input.display());
    }
    let report = build_report(&args.input)?;
    write_report(&report, &args.out)?;
    info!("{} rows written to {}", report.rows.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a).map(|()| ExitCode::SUCCESS),
        Command::Run(a) => run(a).map(|()| ExitCode::SUCCESS),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a).map(|()| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
