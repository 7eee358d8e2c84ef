use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgeinf_core::mdp::ViOptions;
use edgeinf_core::{PolicySpec, MAX_DEADLINE};

mod commands;
mod experiment;

#[derive(Parser)]
#[command(name = "edgeinf", version, about = "Deadline-aware compression scheduling for edge inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scheduling MDP and write its policy table.
    Solve(SolveArgs),
    /// Compute the clairvoyant schedule of an arrival trace.
    Offline(OfflineArgs),
    /// Simulate policies and report completion fractions.
    Simulate(RunArgs),
    /// Simulate policies over a grid of one system parameter.
    Sweep(SweepArgs),
    /// Build conditional outcome tables from a log or synthesize them.
    Tables(TablesArgs),
}

#[derive(Args, Clone, Default)]
struct SystemArgs {
    /// Profile file (TOML with deadline, arrival_prob, slot_loss_prob, options).
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=MAX_DEADLINE as i64))]
    deadline: Option<u32>,
    #[arg(long)]
    arrival_prob: Option<f64>,
    #[arg(long)]
    slot_loss_prob: Option<f64>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Span threshold of relative value iteration.
    #[arg(long, default_value_t = 1e-9)]
    threshold: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
}

impl SolverArgs {
    fn options(&self) -> ViOptions {
        ViOptions { threshold: self.threshold, max_iters: self.max_iters, ..ViOptions::default() }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// One of: baseline, augment-known, augment-uncertainty, retransmission.
    #[arg(long)]
    policy: PolicySpec,
    /// Conditional tables (JSON) for the augmentation policies.
    #[arg(long)]
    tables: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Policy file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the policy with decoded states to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct OfflineArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Arrival slots, one per line.
    #[arg(long, conflicts_with = "horizon")]
    trace: Option<PathBuf>,
    /// Generate a Bernoulli trace of this many slots instead of reading one.
    #[arg(long, requires = "seed")]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the generated trace here.
    #[arg(long, requires = "horizon")]
    write_trace: Option<PathBuf>,
    /// Schedule CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment file; flags below override its fields.
    #[arg(long)]
    experiment: Option<PathBuf>,
    #[command(flatten)]
    system: SystemArgs,
    /// Policy to evaluate (repeatable).
    #[arg(long = "policy")]
    policies: Vec<PolicySpec>,
    /// Previously solved policy file (repeatable).
    #[arg(long = "policy-file")]
    policy_files: Vec<PathBuf>,
    #[arg(long)]
    tables: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// CSV file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// arrival_prob, deadline or slot_loss_prob.
    #[arg(long)]
    parameter: Option<String>,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Inference log with lines `sample,option,n,p_1,...,p_n,correct`.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    log: Option<PathBuf>,
    /// Synthesize tables instead of reading a log.
    #[arg(long)]
    synth: bool,
    #[arg(long, default_value_t = 10)]
    levels: usize,
    /// Smoothing added to every count when building from a log.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Strength of the link between uncertainty and correctness, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    correlation: f64,
    #[arg(long, required_if_eq("synth", "true"))]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => commands::solve(args),
        Command::Offline(args) => commands::offline(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Tables(args) => commands::tables(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
