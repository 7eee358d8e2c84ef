//! Slotted simulation of the edge system.
//!
//! Time advances in whole slots. Arrivals are drawn once per slot boundary; a
//! task that becomes available at boundary `a` must finish by `a + τ`. At each
//! boundary new arrivals join the queue, waiting tasks whose deadline has
//! passed expire, and the policy acts on the head of line. A transmission
//! occupies its slots atomically and is lost when any of them is erased.
//!
//! Three independent random streams drive arrivals, per-slot erasures and
//! inference outcomes, so runs that share seeds share arrival and loss
//! sequences regardless of policy.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::mdp::{QueueState, ViOptions};
use crate::model::SystemConfig;
use crate::offline::{ArrivalTrace, OfflineSchedule};
use crate::policies::{
    AugmentedStateKnown, AugmentedStateUncertainty, FixedRatioPolicy, Policy, PolicyKind, PolicySpec, PolicyTable,
    RetransStateLoss, SKIP, TRANSMIT,
};
use crate::tables::ConditionalTables;

const ARRIVAL_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;
const OUTCOME_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimSeeds {
    pub arrival: u64,
    pub channel: u64,
    pub outcome: u64,
}

impl SimSeeds {
    pub fn from_seed(seed: u64) -> Self {
        Self { arrival: seed, channel: seed, outcome: seed }
    }

    /// Seeds of replication `r`; every stream gets a distinct offset.
    pub fn replication(&self, r: u64) -> Self {
        let step = r.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self {
            arrival: self.arrival.wrapping_add(step),
            channel: self.channel.wrapping_add(step),
            outcome: self.outcome.wrapping_add(step),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSource {
    /// Bernoulli arrivals at the system's arrival probability.
    Bernoulli,
    Trace(ArrivalTrace),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub system: SystemConfig,
    /// Arrivals stop at this boundary; the queue then drains.
    pub horizon: u64,
    /// Tasks arriving and transmissions starting before this slot are not counted.
    pub warmup: u64,
    pub seeds: SimSeeds,
    pub arrivals: ArrivalSource,
    /// Batches used for the standard error of the reward rate.
    pub batches: usize,
    pub record_tasks: bool,
}

impl SimConfig {
    /// Bernoulli arrivals with a 10% warmup.
    pub fn new(system: SystemConfig, horizon: u64, seed: u64) -> Self {
        Self {
            system,
            horizon,
            warmup: horizon / 10,
            seeds: SimSeeds::from_seed(seed),
            arrivals: ArrivalSource::Bernoulli,
            batches: 20,
            record_tasks: false,
        }
    }

    /// Replays a fixed trace, counting every task.
    pub fn for_trace(system: SystemConfig, trace: ArrivalTrace, seed: u64) -> Self {
        let horizon = trace.arrivals().last().map_or(1, |&a| a + 1);
        Self {
            system,
            horizon,
            warmup: 0,
            seeds: SimSeeds::from_seed(seed),
            arrivals: ArrivalSource::Trace(trace),
            batches: 1,
            record_tasks: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon <= self.warmup {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("horizon {} must exceed warmup {}", self.horizon, self.warmup),
            });
        }
        if self.batches == 0 {
            return Err(Error::InvalidParameter { name: "batches", reason: "must be at least 1".into() });
        }
        if let ArrivalSource::Trace(t) = &self.arrivals {
            if t.arrivals().last().is_some_and(|&a| a >= self.horizon) {
                return Err(Error::TraceMismatch(format!("trace extends past horizon {}", self.horizon)));
            }
        }
        Ok(())
    }
}

/// Bernoulli(`p`) arrivals at boundaries `0..horizon`.
pub fn generate_trace(p: f64, horizon: u64, seed: u64) -> Result<ArrivalTrace> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter { name: "arrival_prob", reason: format!("{p} is outside [0, 1]") });
    }
    let mut rng = stream(seed, ARRIVAL_STREAM);
    ArrivalTrace::new((0..horizon).filter(|_| rng.gen_bool(p)).collect())
}

fn erasures(pe: f64, slots: u64, seed: u64) -> Vec<bool> {
    let mut rng = stream(seed, CHANNEL_STREAM);
    (0..slots).map(|_| rng.gen_bool(pe)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    CompletedCorrect,
    CompletedWrong,
    /// Deadline passed while the task waited.
    Expired,
    /// Abandoned by the policy, or left without any delivered result.
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Correct(bool),
    Level(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub slot: u64,
    /// Option considered or sent; `None` for a drop.
    pub option: Option<usize>,
    pub transmitted: bool,
    pub lost: bool,
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub id: usize,
    pub arrival_slot: u64,
    pub decisions: Vec<Decision>,
    /// Sweep steps (skips and transmissions) taken for this task.
    pub considerations: u32,
    pub outcome: Outcome,
    /// End of the last delivered transmission, or the slot the task left.
    pub completion_slot: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationReport {
    pub arrived: u64,
    pub completed_correct: u64,
    pub completed_wrong: u64,
    pub expired: u64,
    pub dropped: u64,
    /// `completed_correct / arrived`, or 1 when nothing arrived.
    pub completion_fraction: f64,
    pub no_arrivals: bool,
    /// Sum over counted tasks of the success probability of the result they kept.
    pub expected_accuracy: f64,
    /// Per-transmission reward as the policy's MDP defines it, summed over
    /// transmissions starting inside the measurement window.
    pub reward: f64,
    pub window_slots: u64,
    pub reward_per_slot: f64,
    /// Batch-means standard error of `reward_per_slot`.
    pub reward_std_error: f64,
    /// Decisions (transitions) taken inside the window.
    pub transitions: u64,
    pub transmissions: u64,
    pub losses: u64,
    /// States the policy table had no entry for; a fallback action was used.
    pub policy_misses: u64,
}

impl SimulationReport {
    fn finish(&mut self) {
        self.no_arrivals = self.arrived == 0;
        self.completion_fraction =
            if self.no_arrivals { 1.0 } else { self.completed_correct as f64 / self.arrived as f64 };
        self.reward_per_slot = if self.window_slots > 0 { self.reward / self.window_slots as f64 } else { 0.0 };
    }

    /// Outcome counts add up to the arrivals.
    pub fn is_conserved(&self) -> bool {
        self.arrived == self.completed_correct + self.completed_wrong + self.expired + self.dropped
    }
}

#[derive(Debug, Clone, Copy)]
struct Held {
    correct: bool,
    /// Probability the result is correct given what the scheduler observed.
    accuracy: f64,
}

#[derive(Debug, Clone)]
struct Active {
    id: usize,
    arrival: u64,
    due: u64,
    last: Option<usize>,
    level: usize,
    held: Option<Held>,
    considered: usize,
    attempts: u32,
    considerations: u32,
    decisions: Vec<Decision>,
}

impl Active {
    fn new(w: Waiting) -> Self {
        Self {
            id: w.id,
            arrival: w.arrival,
            due: w.due,
            last: None,
            level: 0,
            held: None,
            considered: 0,
            attempts: 0,
            considerations: 0,
            decisions: Vec::new(),
        }
    }
}

struct Waiting {
    id: usize,
    arrival: u64,
    due: u64,
}

enum Strategy<'a> {
    Baseline { table: &'a PolicyTable, retry: bool },
    Fixed(FixedRatioPolicy),
    Known { table: &'a PolicyTable, tables: &'a ConditionalTables },
    Uncertainty { table: &'a PolicyTable, tables: &'a ConditionalTables },
    Retransmission(&'a PolicyTable),
}

fn check_table(table: &PolicyTable, kind: PolicyKind, system: &SystemConfig, tables: Option<&ConditionalTables>) -> Result<()> {
    if table.kind != kind {
        return Err(Error::IncompatiblePolicy(format!("expected a {kind} table, got {}", table.kind)));
    }
    if table.deadline != system.deadline {
        return Err(Error::IncompatiblePolicy(format!(
            "policy solved for deadline {}, system has {}",
            table.deadline, system.deadline
        )));
    }
    if table.options != system.profile.len() || table.profile_digest != system.profile.digest() {
        return Err(Error::IncompatiblePolicy("policy solved for a different compression profile".into()));
    }
    if let Some(t) = tables {
        if table.tables_digest.as_deref() != Some(t.digest().as_str()) {
            return Err(Error::IncompatiblePolicy("policy solved with different conditional tables".into()));
        }
    }
    Ok(())
}

fn strategy<'a>(policy: &'a Policy, system: &SystemConfig, tables: Option<&'a ConditionalTables>) -> Result<Strategy<'a>> {
    Ok(match policy {
        Policy::Baseline(t) | Policy::LossUnaware(t) => {
            check_table(t, PolicyKind::Baseline, system, None)?;
            Strategy::Baseline { table: t, retry: matches!(policy, Policy::LossUnaware(_)) }
        }
        Policy::Fixed(f) => {
            if f.option >= system.profile.len() {
                return Err(Error::IncompatiblePolicy(format!("fixed option {} is not in the profile", f.option)));
            }
            Strategy::Fixed(*f)
        }
        Policy::AugmentKnown(t) => {
            let tables = tables.ok_or(Error::MissingTables("augment-known"))?;
            check_table(t, PolicyKind::AugmentKnown, system, Some(tables))?;
            Strategy::Known { table: t, tables }
        }
        Policy::AugmentUncertainty(t) => {
            let tables = tables.ok_or(Error::MissingTables("augment-uncertainty"))?;
            check_table(t, PolicyKind::AugmentUncertainty, system, Some(tables))?;
            Strategy::Uncertainty { table: t, tables }
        }
        Policy::Retransmission(t) => {
            check_table(t, PolicyKind::Retransmission, system, None)?;
            Strategy::Retransmission(t)
        }
    })
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    strategy: Strategy<'a>,
    tau: u64,
    erased: Vec<bool>,
    outcomes: ChaCha8Rng,
    report: SimulationReport,
    batch_reward: Vec<f64>,
    records: Vec<TaskRecord>,
}

impl Sim<'_> {
    fn counted(&self, arrival: u64) -> bool {
        arrival >= self.cfg.warmup && arrival < self.cfg.horizon
    }

    fn in_window(&self, slot: u64) -> bool {
        slot >= self.cfg.warmup && slot < self.cfg.horizon
    }

    fn earn(&mut self, slot: u64, reward: f64) {
        if self.in_window(slot) {
            self.report.reward += reward;
            let len = self.cfg.horizon - self.cfg.warmup;
            let b = ((slot - self.cfg.warmup) as u128 * self.cfg.batches as u128 / len as u128) as usize;
            self.batch_reward[b] += reward;
        }
    }

    fn queue_bits(&self, current: &Active, waiting: &VecDeque<Waiting>, t: u64) -> QueueState {
        let mut bits = 0u32;
        if current.due > t {
            bits |= 1 << (current.due - t - 1);
        }
        for w in waiting {
            bits |= 1 << (w.due - t - 1);
        }
        QueueState::from_bits(bits, self.tau as u32).expect("deadlines within tau")
    }

    fn finish(&mut self, task: Active, outcome: Option<Outcome>, slot: u64) {
        let outcome = outcome.unwrap_or(match task.held {
            Some(h) if h.correct => Outcome::CompletedCorrect,
            Some(_) => Outcome::CompletedWrong,
            None => Outcome::Dropped,
        });
        let completion_slot = match outcome {
            Outcome::CompletedCorrect | Outcome::CompletedWrong => task.decisions.iter().rev().find(|d| d.transmitted && !d.lost).map_or(slot, |d| {
                d.slot + self.cfg.system.profile.slots(d.option.expect("transmissions carry an option")) as u64
            }),
            _ => slot,
        };
        debug_assert!(outcome == Outcome::Expired || completion_slot <= task.due);
        if self.counted(task.arrival) {
            let r = &mut self.report;
            r.arrived += 1;
            match outcome {
                Outcome::CompletedCorrect => r.completed_correct += 1,
                Outcome::CompletedWrong => r.completed_wrong += 1,
                Outcome::Expired => r.expired += 1,
                Outcome::Dropped => r.dropped += 1,
            }
            if let Some(h) = task.held {
                r.expected_accuracy += h.accuracy;
            }
        }
        if self.cfg.record_tasks {
            self.records.push(TaskRecord {
                id: task.id,
                arrival_slot: task.arrival,
                decisions: task.decisions,
                considerations: task.considerations,
                outcome,
                completion_slot,
            });
        }
    }

    /// Sends `option` starting at `t`; returns whether the transmission was lost.
    fn transmit(&mut self, t: u64, option: usize) -> bool {
        let slots = self.cfg.system.profile.slots(option) as u64;
        let lost = self.erased[t as usize..(t + slots) as usize].iter().any(|&e| e);
        if self.in_window(t) {
            self.report.transmissions += 1;
            self.report.losses += lost as u64;
        }
        lost
    }

    fn lookup(&mut self, table: &PolicyTable, key: usize, fallback: usize) -> usize {
        match table.action(key) {
            Some(a) => a,
            None => {
                self.report.policy_misses += 1;
                fallback
            }
        }
    }

    /// Takes one decision for the head of line. Returns the new time and the
    /// task if it stays at the head of line.
    fn step(&mut self, mut task: Active, waiting: &VecDeque<Waiting>, t: u64) -> (u64, Option<Active>) {
        let profile = &self.cfg.system.profile;
        let n = profile.len();
        let remaining = task.due.saturating_sub(t) as u32;
        if self.in_window(t) {
            self.report.transitions += 1;
        }
        match self.strategy {
            Strategy::Baseline { .. } | Strategy::Fixed(_) => {
                if remaining == 0 {
                    self.finish(task, Some(Outcome::Dropped), t);
                    return (t, None);
                }
                let fits = |k: usize| profile.slots(k) <= remaining;
                let action = match self.strategy {
                    Strategy::Baseline { table, .. } => {
                        let key = self.queue_bits(&task, waiting, t).bits() as usize;
                        let fallback = (0..n).rev().find(|&k| fits(k)).map_or(0, |k| k + 1);
                        self.lookup(table, key, fallback)
                    }
                    Strategy::Fixed(f) => {
                        if fits(f.option) {
                            f.option + 1
                        } else {
                            0
                        }
                    }
                    _ => unreachable!(),
                };
                if action == 0 {
                    task.decisions.push(Decision { slot: t, option: None, transmitted: false, lost: false, observation: None });
                    self.finish(task, Some(Outcome::Dropped), t);
                    return (t, None);
                }
                let k = action - 1;
                let lost = self.transmit(t, k);
                let end = t + profile.slots(k) as u64;
                let mut observation = None;
                if !lost {
                    let rho = profile.accuracy(k);
                    let correct = self.outcomes.gen_bool(rho);
                    observation = Some(Observation::Correct(correct));
                    task.held = Some(Held { correct, accuracy: rho });
                    self.earn(t, correct as u8 as f64);
                }
                task.decisions.push(Decision { slot: t, option: Some(k), transmitted: true, lost, observation });
                let retry = matches!(self.strategy, Strategy::Baseline { retry: true, .. });
                if lost && retry {
                    return (end, Some(task));
                }
                self.finish(task, None, end);
                (end, None)
            }
            Strategy::Known { table, tables } => {
                let queue = self.queue_bits(&task, waiting, t);
                let correct = task.held.is_some_and(|h| h.correct);
                let state = AugmentedStateKnown {
                    queue,
                    last: task.last,
                    considered: task.considered,
                    correct,
                    detached: task.due <= t,
                };
                let c = task.considered;
                let can_send = !state.detached && !correct && profile.slots(c) <= remaining;
                let action = self.lookup(table, state.key(n), if can_send { TRANSMIT } else { SKIP });
                task.considerations += 1;
                let mut end = t;
                if action == TRANSMIT {
                    let lost = self.transmit(t, c);
                    end = t + profile.slots(c) as u64;
                    let mut observation = None;
                    if !lost {
                        let f = self.outcomes.gen::<f64>() < tables.p_a(c, true, task.last);
                        observation = Some(Observation::Correct(f));
                        task.last = Some(c);
                        task.held = Some(Held { correct: f, accuracy: f as u8 as f64 });
                        self.earn(t, f as u8 as f64);
                    }
                    task.decisions.push(Decision { slot: t, option: Some(c), transmitted: true, lost, observation });
                } else {
                    task.decisions.push(Decision { slot: t, option: Some(c), transmitted: false, lost: false, observation: None });
                }
                self.advance_sweep(task, end)
            }
            Strategy::Uncertainty { table, tables } => {
                let queue = self.queue_bits(&task, waiting, t);
                let state = AugmentedStateUncertainty {
                    queue,
                    last: task.last,
                    considered: task.considered,
                    level: task.level,
                    detached: task.due <= t,
                };
                let c = task.considered;
                let can_send = !state.detached && profile.slots(c) <= remaining;
                let action = self.lookup(table, state.key(n, tables.levels()), if can_send { TRANSMIT } else { SKIP });
                task.considerations += 1;
                let mut end = t;
                if action == TRANSMIT {
                    let lost = self.transmit(t, c);
                    end = t + profile.slots(c) as u64;
                    let mut observation = None;
                    if !lost {
                        let mut x = self.outcomes.gen::<f64>();
                        let mut level = tables.levels() - 1;
                        for l in 0..tables.levels() {
                            x -= tables.p_u(c, l, task.last, task.level);
                            if x < 0.0 {
                                level = l;
                                break;
                            }
                        }
                        let accuracy = tables.acc_joint(c, task.last, task.level, level);
                        let gain = accuracy - tables.acc_marg(task.last, task.level);
                        let correct = self.outcomes.gen::<f64>() < accuracy;
                        observation = Some(Observation::Level(level));
                        task.last = Some(c);
                        task.level = level;
                        task.held = Some(Held { correct, accuracy });
                        self.earn(t, gain);
                    }
                    task.decisions.push(Decision { slot: t, option: Some(c), transmitted: true, lost, observation });
                } else {
                    task.decisions.push(Decision { slot: t, option: Some(c), transmitted: false, lost: false, observation: None });
                }
                self.advance_sweep(task, end)
            }
            Strategy::Retransmission(table) => {
                let queue = self.queue_bits(&task, waiting, t);
                let state = RetransStateLoss { queue, last: task.last, attempts: task.attempts, detached: task.due <= t };
                let fallback = if state.detached {
                    SKIP
                } else {
                    (0..n).rev().find(|&k| profile.slots(k) <= remaining).map_or(SKIP, |k| k + 1)
                };
                let action = self.lookup(table, state.key(n, self.tau as u32), fallback);
                task.considerations += 1;
                let mut end = t;
                if action == SKIP {
                    task.decisions.push(Decision { slot: t, option: None, transmitted: false, lost: false, observation: None });
                } else {
                    let k = action - 1;
                    let lost = self.transmit(t, k);
                    end = t + profile.slots(k) as u64;
                    let mut observation = None;
                    if !lost {
                        let rho = profile.accuracy(k);
                        let correct = self.outcomes.gen_bool(rho);
                        observation = Some(Observation::Correct(correct));
                        let gain = rho - task.last.map_or(0.0, |l| profile.accuracy(l));
                        task.last = Some(k);
                        task.held = Some(Held { correct, accuracy: rho });
                        self.earn(t, gain);
                    }
                    task.decisions.push(Decision { slot: t, option: Some(k), transmitted: true, lost, observation });
                }
                task.attempts += 1;
                if task.attempts < self.tau as u32 {
                    (end, Some(task))
                } else {
                    self.finish(task, None, end);
                    (end, None)
                }
            }
        }
    }

    fn advance_sweep(&mut self, mut task: Active, t: u64) -> (u64, Option<Active>) {
        if task.considered + 1 < self.cfg.system.profile.len() {
            task.considered += 1;
            (t, Some(task))
        } else {
            self.finish(task, None, t);
            (t, None)
        }
    }
}

/// Simulates `policy` and returns the task records when `record_tasks` is set.
pub fn run_with_records(
    config: &SimConfig,
    policy: &Policy,
    tables: Option<&ConditionalTables>,
) -> Result<(SimulationReport, Vec<TaskRecord>)> {
    config.validate()?;
    let strategy = strategy(policy, &config.system, tables)?;
    let tau = config.system.deadline as u64;
    let trace = match &config.arrivals {
        ArrivalSource::Bernoulli => generate_trace(config.system.arrival_prob(), config.horizon, config.seeds.arrival)?,
        ArrivalSource::Trace(t) => t.clone(),
    };
    let mut sim = Sim {
        cfg: config,
        strategy,
        tau,
        erased: erasures(config.system.slot_loss_prob(), config.horizon + tau + 1, config.seeds.channel),
        outcomes: stream(config.seeds.outcome, OUTCOME_STREAM),
        report: SimulationReport { window_slots: config.horizon - config.warmup, ..Default::default() },
        batch_reward: vec![0.0; config.batches],
        records: Vec::new(),
    };

    let arrivals = trace.arrivals();
    let mut next = 0;
    let mut waiting: VecDeque<Waiting> = VecDeque::new();
    let mut current: Option<Active> = None;
    let mut t = 0u64;
    loop {
        while next < arrivals.len() && arrivals[next] <= t {
            let a = arrivals[next];
            waiting.push_back(Waiting { id: next, arrival: a, due: a + tau });
            next += 1;
        }
        while waiting.front().is_some_and(|w| w.due <= t) {
            let w = waiting.pop_front().expect("front exists");
            let task = Active::new(w);
            sim.finish(task, Some(Outcome::Expired), t);
        }
        if current.is_none() {
            current = waiting.pop_front().map(Active::new);
        }
        match current.take() {
            None => {
                if next >= arrivals.len() {
                    break;
                }
                t += 1;
            }
            Some(task) => {
                let (nt, still) = sim.step(task, &waiting, t);
                t = nt;
                current = still;
            }
        }
    }

    let mut report = sim.report;
    let b = config.batches;
    let len = (config.horizon - config.warmup) as f64;
    if b > 1 {
        let rates: Vec<f64> = sim.batch_reward.iter().map(|r| r * b as f64 / len).collect();
        let mean = rates.iter().sum::<f64>() / b as f64;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        report.reward_std_error = (var / b as f64).sqrt();
    }
    report.finish();
    debug_assert!(report.is_conserved());
    Ok((report, sim.records))
}

/// Simulates `policy` under `config`.
pub fn run(config: &SimConfig, policy: &Policy, tables: Option<&ConditionalTables>) -> Result<SimulationReport> {
    run_with_records(config, policy, tables).map(|(r, _)| r)
}

/// Executes an offline schedule on its trace with sampled losses and outcomes.
pub fn replay_offline(
    trace: &ArrivalTrace,
    schedule: &OfflineSchedule,
    system: &SystemConfig,
    seeds: SimSeeds,
) -> Result<SimulationReport> {
    if schedule.tasks.len() != trace.len()
        || schedule.tasks.iter().zip(trace.arrivals()).any(|(s, &a)| s.arrival != a)
    {
        return Err(Error::TraceMismatch(format!(
            "schedule has {} tasks, trace has {} arrivals",
            schedule.tasks.len(),
            trace.len()
        )));
    }
    let tau = system.deadline as u64;
    let end = trace.arrivals().last().map_or(0, |&a| a + tau + 1);
    let erased = erasures(system.slot_loss_prob(), end, seeds.channel);
    let mut rng = stream(seeds.outcome, OUTCOME_STREAM);
    let mut report = SimulationReport { window_slots: end, ..Default::default() };
    for task in &schedule.tasks {
        report.arrived += 1;
        report.transitions += 1;
        let Some(k) = task.option else {
            report.dropped += 1;
            continue;
        };
        let slots = system.profile.slots(k) as u64;
        if task.start < task.arrival || task.start + slots > task.arrival + tau {
            return Err(Error::TraceMismatch(format!("task arriving at {} is scheduled outside its window", task.arrival)));
        }
        report.transmissions += 1;
        if erased[task.start as usize..(task.start + slots) as usize].iter().any(|&e| e) {
            report.losses += 1;
            report.dropped += 1;
            continue;
        }
        let rho = system.profile.accuracy(k);
        report.expected_accuracy += rho;
        if rng.gen_bool(rho) {
            report.completed_correct += 1;
            report.reward += 1.0;
        } else {
            report.completed_wrong += 1;
        }
    }
    report.finish();
    Ok(report)
}

/// Mean and confidence half-width of replicated measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub half_width: f64,
}

/// Two-sided Student-t interval at `confidence` (e.g. 0.95).
pub fn summarize(samples: &[f64], confidence: f64) -> Summary {
    let count = samples.len();
    let mean = if count == 0 { f64::NAN } else { samples.iter().sum::<f64>() / count as f64 };
    if count < 2 {
        return Summary { count, mean, std_dev: 0.0, half_width: 0.0 };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
    let std_dev = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (count - 1) as f64).expect("positive dof").inverse_cdf(0.5 + confidence / 2.0);
    Summary { count, mean, std_dev, half_width: t * std_dev / (count as f64).sqrt() }
}

/// One-sided lower confidence bound on the mean of `samples`.
pub fn lower_bound(samples: &[f64], confidence: f64) -> f64 {
    let s = summarize(samples, 2.0 * confidence - 1.0);
    s.mean - s.half_width
}

/// Runs `replications` seeded replications in parallel; report `r` uses
/// `config.seeds.replication(r)`.
pub fn replicate(
    config: &SimConfig,
    policy: &Policy,
    tables: Option<&ConditionalTables>,
    replications: usize,
) -> Result<Vec<SimulationReport>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig { seeds: config.seeds.replication(r), ..config.clone() };
            run(&cfg, policy, tables)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    ArrivalProb,
    Deadline,
    SlotLossProb,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arrival_prob" => Ok(SweepParameter::ArrivalProb),
            "deadline" => Ok(SweepParameter::Deadline),
            "slot_loss_prob" => Ok(SweepParameter::SlotLossProb),
            other => Err(Error::InvalidParameter {
                name: "sweep parameter",
                reason: format!("unknown `{other}`; expected arrival_prob, deadline or slot_loss_prob"),
            }),
        }
    }
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::ArrivalProb => "arrival_prob",
            SweepParameter::Deadline => "deadline",
            SweepParameter::SlotLossProb => "slot_loss_prob",
        }
    }

    pub fn apply(self, system: &SystemConfig, value: f64) -> Result<SystemConfig> {
        match self {
            SweepParameter::ArrivalProb => system.with_arrival_prob(value),
            SweepParameter::SlotLossProb => system.with_slot_loss_prob(value),
            SweepParameter::Deadline => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidParameter { name: "deadline", reason: format!("{value} is not a positive integer") });
                }
                system.with_deadline(value as u32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub policy: String,
    pub replications: usize,
    pub completion: Summary,
    pub reward_per_slot: Summary,
}

/// Rebuilds every policy at each parameter value and runs common-seed
/// replications. Rows come out ordered by value, then by policy.
pub fn sweep(
    parameter: SweepParameter,
    values: &[f64],
    base: &SimConfig,
    policies: &[PolicySpec],
    tables: Option<&ConditionalTables>,
    replications: usize,
    solver: &ViOptions,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len() * policies.len());
    for &value in values {
        let system = parameter.apply(&base.system, value)?;
        let config = SimConfig { system: system.clone(), ..base.clone() };
        for spec in policies {
            let policy = spec.build(&system, tables, solver)?;
            let reports = replicate(&config, &policy, tables, replications)?;
            let completion: Vec<f64> = reports.iter().map(|r| r.completion_fraction).collect();
            let reward: Vec<f64> = reports.iter().map(|r| r.reward_per_slot).collect();
            rows.push(SweepRow {
                value,
                policy: spec.to_string(),
                replications,
                completion: summarize(&completion, 0.95),
                reward_per_slot: summarize(&reward, 0.95),
            });
        }
    }
    Ok(rows)
}
