use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use edgeinf_core::io::{parse_profile, parse_trace, write_schedule, write_trace};
use edgeinf_core::mdp::ViOptions;
use edgeinf_core::{
    build_tables, generate_trace, replicate, solve_offline, summarize, synth_tables, ConditionalTables, Error,
    OutputLog, Policy, PolicyKind, PolicySpec, PolicyTable, SimConfig, SweepParameter, SystemConfig,
};

use crate::experiment::{ExperimentSpec, TablesSource};
use crate::{OfflineArgs, RunArgs, SolveArgs, SweepArgs, SystemArgs, TablesArgs};

/// A command line that parses but asks for something impossible.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(Error::NonConvergence { .. }) = cause.downcast_ref::<Error>() {
            return 4;
        }
    }
    3
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_system(profile: &Path, deadline: Option<u32>, p: Option<f64>, pe: Option<f64>) -> Result<SystemConfig> {
    let mut system = parse_profile(&read(profile)?).with_context(|| format!("profile {}", profile.display()))?;
    if let Some(tau) = deadline {
        system = system.with_deadline(tau)?;
    }
    if let Some(p) = p {
        system = system.with_arrival_prob(p)?;
    }
    if let Some(pe) = pe {
        system = system.with_slot_loss_prob(pe)?;
    }
    Ok(system)
}

fn system_from_args(args: &SystemArgs) -> Result<SystemConfig> {
    let profile = args.profile.as_ref().ok_or_else(|| usage("--profile is required"))?;
    load_system(profile, args.deadline, args.arrival_prob, args.slot_loss_prob)
}

fn load_tables(path: &Path) -> Result<ConditionalTables> {
    ConditionalTables::from_json(&read(path)?).with_context(|| format!("tables {}", path.display()))
}

pub fn solve(args: SolveArgs) -> Result<()> {
    let system = system_from_args(&args.system)?;
    if matches!(args.policy, PolicySpec::LossUnaware | PolicySpec::Fixed(_)) {
        return Err(usage(format!(
            "`{}` has no table to solve; choose baseline, augment-known, augment-uncertainty or retransmission",
            args.policy
        )));
    }
    let tables = args.tables.as_deref().map(load_tables).transpose()?;
    let policy = args.policy.build(&system, tables.as_ref(), &args.solver.options())?;
    let table = policy.table().expect("solved policies carry a table");
    write(&args.out, &table.to_text())?;
    if let Some(path) = &args.dump {
        write(path, &table.dump())?;
    }
    println!(
        "{}: g = {:.9}, {} iterations, span {:.3e}, {} reachable states",
        table.kind,
        table.average_reward,
        table.iterations,
        table.span,
        table.reachable()
    );
    Ok(())
}

pub fn offline(args: OfflineArgs) -> Result<()> {
    let system = system_from_args(&args.system)?;
    let trace = match (&args.trace, args.horizon) {
        (Some(path), _) => parse_trace(&read(path)?).with_context(|| format!("trace {}", path.display()))?,
        (None, Some(horizon)) => {
            let seed = args.seed.ok_or_else(|| usage("--seed is required with --horizon"))?;
            generate_trace(system.arrival_prob(), horizon, seed)?
        }
        (None, None) => return Err(usage("either --trace or --horizon is required")),
    };
    if let Some(path) = &args.write_trace {
        write(path, &write_trace(&trace))?;
    }
    let (_, schedule) = solve_offline(&trace, &system)?;
    write(&args.out, &write_schedule(&schedule, &system.profile))?;
    println!("{} tasks, objective {}", trace.len(), schedule.objective);
    Ok(())
}

/// An experiment with every override applied and every input loaded.
struct Experiment {
    spec: ExperimentSpec,
    system: SystemConfig,
    tables: Option<ConditionalTables>,
    seed: u64,
    solver: ViOptions,
}

fn experiment(args: &RunArgs) -> Result<Experiment> {
    let mut spec = match (&args.experiment, &args.system.profile) {
        (Some(path), _) => ExperimentSpec::load(path)?,
        (None, Some(profile)) => ExperimentSpec::from_profile(profile.clone()),
        (None, None) => return Err(usage("either --experiment or --profile is required")),
    };
    if let (Some(_), Some(profile)) = (&args.experiment, &args.system.profile) {
        spec.profile = profile.clone();
    }
    spec.deadline = args.system.deadline.or(spec.deadline);
    spec.arrival_prob = args.system.arrival_prob.or(spec.arrival_prob);
    spec.slot_loss_prob = args.system.slot_loss_prob.or(spec.slot_loss_prob);
    spec.seed = args.seed.or(spec.seed);
    spec.horizon = args.horizon.or(spec.horizon);
    spec.warmup = args.warmup.or(spec.warmup);
    spec.replications = args.replications.or(spec.replications);
    spec.output = args.out.clone().or(spec.output);
    if !args.policies.is_empty() {
        spec.policies = args.policies.iter().map(ToString::to_string).collect();
    }
    if !args.policy_files.is_empty() {
        spec.policy_files = args.policy_files.clone();
    }
    if let Some(path) = &args.tables {
        spec.tables = Some(TablesSource::File { path: path.clone(), digest: None });
    }
    let seed = spec.seed.ok_or_else(|| usage("a seed is required (--seed or `seed` in the experiment file)"))?;

    let system = load_system(&spec.profile, spec.deadline, spec.arrival_prob, spec.slot_loss_prob)?;
    let tables = match &spec.tables {
        None => None,
        Some(TablesSource::File { path, digest }) => {
            let tables = load_tables(path)?;
            if let Some(expected) = digest {
                if &tables.digest() != expected {
                    return Err(anyhow!("tables {} have digest {}, expected {expected}", path.display(), tables.digest()));
                }
            }
            Some(tables)
        }
        Some(TablesSource::Synth { levels, correlation, seed }) => {
            Some(synth_tables(&system.profile, *levels, *correlation, *seed)?)
        }
    };
    Ok(Experiment { spec, system, tables, seed, solver: args.solver.options() })
}

impl Experiment {
    fn policy_specs(&self) -> Result<Vec<PolicySpec>> {
        if self.spec.policies.is_empty() && self.spec.policy_files.is_empty() {
            return Ok(vec![PolicySpec::Baseline]);
        }
        self.spec
            .policies
            .iter()
            .map(|name| name.parse::<PolicySpec>().map_err(|e| usage(e.to_string())))
            .collect()
    }

    fn sim_config(&self, system: SystemConfig) -> Result<SimConfig> {
        let horizon = self.spec.horizon.unwrap_or(100_000);
        let mut config = SimConfig::new(system, horizon, self.seed);
        if let Some(warmup) = self.spec.warmup {
            if warmup >= horizon {
                return Err(usage(format!("warmup {warmup} must be below the horizon {horizon}")));
            }
            config.warmup = warmup;
        }
        Ok(config)
    }

    fn replications(&self) -> Result<usize> {
        match self.spec.replications.unwrap_or(20) {
            0 => Err(usage("at least one replication is required")),
            n => Ok(n),
        }
    }

    fn output(&self) -> Result<&PathBuf> {
        self.spec.output.as_ref().ok_or_else(|| usage("an output path is required (--out or `output`)"))
    }
}

fn policy_from_file(path: &Path) -> Result<Policy> {
    let table = PolicyTable::from_text(&read(path)?).with_context(|| format!("policy {}", path.display()))?;
    Ok(match table.kind {
        PolicyKind::Baseline => Policy::Baseline(table),
        PolicyKind::AugmentKnown => Policy::AugmentKnown(table),
        PolicyKind::AugmentUncertainty => Policy::AugmentUncertainty(table),
        PolicyKind::Retransmission => Policy::Retransmission(table),
    })
}

pub fn simulate(args: RunArgs) -> Result<()> {
    let exp = experiment(&args)?;
    let config = exp.sim_config(exp.system.clone())?;
    let replications = exp.replications()?;
    let out = exp.output()?;

    let mut policies = Vec::new();
    for spec in exp.policy_specs()? {
        policies.push(spec.build(&exp.system, exp.tables.as_ref(), &exp.solver)?);
    }
    for path in &exp.spec.policy_files {
        policies.push(policy_from_file(path)?);
    }

    let mut csv = String::from(
        "policy,replications,mean,ci_half_width,reward_per_slot,reward_ci_half_width,arrived,completed_correct,completed_wrong,expired,dropped\n",
    );
    for policy in &policies {
        let reports = replicate(&config, policy, exp.tables.as_ref(), replications)
            .with_context(|| format!("simulating {}", policy.name()))?;
        let completion = summarize(&reports.iter().map(|r| r.completion_fraction).collect::<Vec<_>>(), 0.95);
        let reward = summarize(&reports.iter().map(|r| r.reward_per_slot).collect::<Vec<_>>(), 0.95);
        let total = |f: fn(&edgeinf_core::SimulationReport) -> u64| reports.iter().map(f).sum::<u64>();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            policy.name(),
            replications,
            completion.mean,
            completion.half_width,
            reward.mean,
            reward.half_width,
            total(|r| r.arrived),
            total(|r| r.completed_correct),
            total(|r| r.completed_wrong),
            total(|r| r.expired),
            total(|r| r.dropped),
        )
        .unwrap();
        println!("{}: completion {:.5} ± {:.5}", policy.name(), completion.mean, completion.half_width);
    }
    write(out, &csv)
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let exp = experiment(&args.run)?;
    let (parameter, values) = match (&args.parameter, &exp.spec.sweep) {
        (Some(p), _) => (p.clone(), args.values.clone()),
        (None, Some(s)) => (s.parameter.clone(), if args.values.is_empty() { s.values.clone() } else { args.values.clone() }),
        (None, None) => return Err(usage("a sweep parameter is required (--parameter or [sweep])")),
    };
    let parameter: SweepParameter = parameter.parse().map_err(|e: Error| usage(e.to_string()))?;
    if values.is_empty() {
        return Err(usage("no sweep values given"));
    }
    if !exp.spec.policy_files.is_empty() {
        return Err(usage("sweeps re-solve policies at every point; policy files cannot be swept"));
    }
    let config = exp.sim_config(exp.system.clone())?;
    let rows = edgeinf_core::sweep(
        parameter,
        &values,
        &config,
        &exp.policy_specs()?,
        exp.tables.as_ref(),
        exp.replications()?,
        &exp.solver,
    )?;
    let mut csv = String::from("value,policy,replications,mean,ci_half_width\n");
    for row in &rows {
        writeln!(csv, "{},{},{},{},{}", row.value, row.policy, row.replications, row.completion.mean, row.completion.half_width)
            .unwrap();
    }
    write(exp.output()?, &csv)?;
    println!("{} rows over {} values of {}", rows.len(), values.len(), parameter.as_str());
    Ok(())
}

pub fn tables(args: TablesArgs) -> Result<()> {
    let system = load_system(&args.profile, None, None, None)?;
    let tables = match &args.log {
        Some(path) => {
            let log = OutputLog::parse(&read(path)?).with_context(|| format!("log {}", path.display()))?;
            build_tables(&log, system.profile.len(), args.levels, args.alpha)?
        }
        None => {
            let seed = args.seed.ok_or_else(|| usage("--seed is required with --synth"))?;
            synth_tables(&system.profile, args.levels, args.correlation, seed)?
        }
    };
    write(&args.out, &tables.to_json())?;
    println!("{} options, {} levels, digest {}", tables.options(), tables.levels(), tables.digest());
    Ok(())
}
