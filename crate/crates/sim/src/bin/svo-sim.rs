use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svo_sim::{run_experiment_matrix, write_outputs, ExperimentConfig, Overrides, SimError};

/// Semi-cooperative highway planner: single runs and experiment sweeps.
#[derive(Parser)]
#[command(name = "svo-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seed at one cooperative proportion, plus its fully egoistic baseline.
    Simulate(Flags),
    /// The seeds × proportions × variants matrix of the config file.
    Sweep(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML file with [sim] and [sweep] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agents: Option<usize>,
    /// Vehicles per hour used for spawn spacing.
    #[arg(long)]
    density: Option<f64>,
    /// Fraction of prosocial agents; the sweep keeps p = 0 as baseline.
    #[arg(long)]
    p_cooperative: Option<f64>,
    /// Initial shared-control neighbourhood size.
    #[arg(long)]
    n_sc: Option<usize>,
    /// Simulated sub-steps per run.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lanes: Option<usize>,
    /// Iteration budgets only (true) or wall-clock budgets as well (false).
    #[arg(long, action = clap::ArgAction::Set)]
    deterministic: Option<bool>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            agents: self.agents,
            density: self.density,
            p_cooperative: self.p_cooperative,
            n_sc: self.n_sc,
            steps: self.steps,
            lanes: self.lanes,
            deterministic: self.deterministic,
            jobs: self.jobs,
        }
    }
}

fn run(command: Command) -> Result<(), SimError> {
    let (flags, single) = match command {
        Command::Simulate(f) => (f, true),
        Command::Sweep(f) => (f, false),
    };
    let mut cfg = match &flags.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if single {
        // A single run: one seed, the configured proportion and one variant.
        let p = flags.p_cooperative.unwrap_or(cfg.sim.p_cooperative);
        cfg.sweep.seeds.truncate(1);
        cfg.sweep.proportions = if p == 0.0 { vec![0.0] } else { vec![0.0, p] };
        cfg.sweep.variants.truncate(1);
        if let Some(v) = cfg.sweep.variants.first_mut() {
            v.n_sc = cfg.sim.ibr.n_sc();
            v.density = cfg.sim.density;
            v.n_agents = Some(cfg.sim.n_agents);
        }
    }
    flags.overrides().apply(&mut cfg);
    let jobs = cfg.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = run_experiment_matrix(&cfg.sim, &cfg.sweep, jobs)?;
    write_outputs(&flags.out, &results)?;
    log::info!(
        "{} runs, {} comparisons, {} skipped; outputs in {}",
        results.runs.len(),
        results.comparisons.len(),
        results.skipped.len(),
        flags.out.display()
    );
    let failed = results.failed_runs();
    if !failed.is_empty() {
        return Err(SimError::RunsFailed(failed));
    }
    Ok(())
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::from(if matches!(e, SimError::Config(_)) { 2 } else { 1 })
        }
    }
}
