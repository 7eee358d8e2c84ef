//! Information augmentation with known correctness: after each successful
//! transmission the receiver reports whether the result was correct, and the
//! scheduler may send the same task again at a less compressed option.
//!
//! Options are swept in order of increasing slot count. At sweep position
//! `considered` the scheduler either skips (zero time) or transmits at that
//! option. A transmission is only allowed while no correct result is known.
//! After the last option the task leaves the queue and the sweep restarts.
//!
//! `detached` marks a head of line whose deadline ran out while it was being
//! transmitted: it no longer occupies a queue bit but its sweep finishes.

use super::{after_transmission, SKIP};
use super::table::{PolicyKind, PolicyTable};
use crate::error::{Error, Result};
use crate::mdp::{relative_value_iteration, ArrivalBlocks, Mdp, QueueState, ViOptions};
use crate::model::SystemConfig;
use crate::tables::ConditionalTables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AugmentedStateKnown {
    pub queue: QueueState,
    /// Last option whose result arrived for the current task.
    pub last: Option<usize>,
    /// Sweep position: the option the next decision is about.
    pub considered: usize,
    pub correct: bool,
    pub detached: bool,
}

impl AugmentedStateKnown {
    /// Start of a sweep over the head of line of `queue`.
    pub fn fresh(queue: QueueState) -> Self {
        Self { queue, last: None, considered: 0, correct: false, detached: false }
    }

    pub fn key(&self, options: usize) -> usize {
        let last = self.last.unwrap_or(options);
        ((((self.queue.bits() as usize * (options + 1) + last) * options + self.considered) * 2 + self.correct as usize)
            * 2)
            + self.detached as usize
    }

    pub fn from_key(key: usize, options: usize) -> Self {
        let detached = key % 2 == 1;
        let key = key / 2;
        let correct = key % 2 == 1;
        let key = key / 2;
        let considered = key % options;
        let key = key / options;
        let last = key % (options + 1);
        let queue = QueueState::raw((key / (options + 1)) as u32);
        Self { queue, last: (last < options).then_some(last), considered, correct, detached }
    }

    pub fn has_task(&self) -> bool {
        self.detached || !self.queue.is_empty()
    }

    /// Moves past the option under consideration, ending the task after the last one.
    pub fn next_option(self, options: usize) -> Self {
        if self.considered + 1 < options {
            Self { considered: self.considered + 1, ..self }
        } else {
            let queue = if self.detached { self.queue } else { self.queue.without_hol() };
            Self::fresh(queue)
        }
    }
}

pub struct AugmentKnownMdp<'a> {
    tau: u32,
    slots: Vec<u32>,
    loss: Vec<f64>,
    blocks: ArrivalBlocks,
    tables: &'a ConditionalTables,
}

impl<'a> AugmentKnownMdp<'a> {
    pub fn new(config: &SystemConfig, tables: &'a ConditionalTables) -> Result<Self> {
        check_tables(config, tables)?;
        let slots: Vec<u32> = (0..config.profile.len()).map(|k| config.profile.slots(k)).collect();
        Ok(Self {
            tau: config.deadline,
            loss: slots.iter().map(|&t| config.channel.per(t)).collect(),
            blocks: ArrivalBlocks::new(config.profile.max_slots().min(config.deadline), config.arrival_prob()),
            slots,
            tables,
        })
    }

    fn options(&self) -> usize {
        self.slots.len()
    }
}

pub(crate) fn check_tables(config: &SystemConfig, tables: &ConditionalTables) -> Result<()> {
    if tables.options() != config.profile.len() {
        return Err(Error::ShapeMismatch {
            table: "options",
            expected: config.profile.len(),
            found: tables.options(),
        });
    }
    Ok(())
}

impl Mdp for AugmentKnownMdp<'_> {
    fn state_count(&self) -> usize {
        (1 << self.tau) * (self.options() + 1) * self.options() * 4
    }

    fn action_count(&self) -> usize {
        2
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn is_feasible(&self, state: usize, action: usize) -> bool {
        let s = AugmentedStateKnown::from_key(state, self.options());
        if !s.has_task() {
            return action == SKIP;
        }
        action == SKIP
            || (!s.detached
                && !s.correct
                && s.queue.hol_deadline().is_some_and(|d| d >= self.slots[s.considered]))
    }

    fn duration(&self, state: usize, action: usize) -> u32 {
        let s = AugmentedStateKnown::from_key(state, self.options());
        match (s.has_task(), action) {
            (false, _) => 1,
            (true, SKIP) => 0,
            _ => self.slots[s.considered],
        }
    }

    fn transitions<F: FnMut(usize, f64, f64)>(&self, state: usize, action: usize, mut f: F) {
        let n = self.options();
        let s = AugmentedStateKnown::from_key(state, n);
        if !s.has_task() {
            for (i, &p) in self.blocks.block(1).iter().enumerate() {
                f(AugmentedStateKnown::fresh(QueueState::shift(0, 1, i as u32, self.tau)).key(n), p, 0.0);
            }
            return;
        }
        if action == SKIP {
            f(s.next_option(n).key(n), 1.0, 0.0);
            return;
        }
        let c = s.considered;
        let t = self.slots[c];
        let pe = self.loss[c];
        let ok = [self.tables.p_a(c, false, s.last), self.tables.p_a(c, true, s.last)];
        for (i, &p) in self.blocks.block(t).iter().enumerate() {
            let (queue, detached) = after_transmission(s.queue, t, i as u32, self.tau);
            for correct in [false, true] {
                let next = AugmentedStateKnown { queue, last: Some(c), considered: c, correct, detached };
                f(next.next_option(n).key(n), p * (1.0 - pe) * ok[correct as usize], correct as u8 as f64);
            }
            if pe > 0.0 {
                let next = AugmentedStateKnown { queue, detached, ..s };
                f(next.next_option(n).key(n), p * pe, 0.0);
            }
        }
    }
}

/// Solves the known-correctness augmentation MDP.
pub fn build_augmentation_known(
    config: &SystemConfig,
    tables: &ConditionalTables,
    options: &ViOptions,
) -> Result<PolicyTable> {
    let mdp = AugmentKnownMdp::new(config, tables)?;
    let result = relative_value_iteration(&mdp, options)?.ensure_converged()?;
    PolicyTable::from_result(PolicyKind::AugmentKnown, config, 0, Some(tables.digest()), &mdp, &result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tables::synth_tables;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn key_roundtrip(bits in 0u32..64, last in 0usize..4, considered in 0usize..3, correct: bool, detached: bool) {
            let s = AugmentedStateKnown {
                queue: QueueState::raw(bits),
                last: (last < 3).then_some(last),
                considered,
                correct,
                detached,
            };
            prop_assert_eq!(AugmentedStateKnown::from_key(s.key(3), 3), s);
        }
    }

    #[test]
    fn sweep_ends_by_removing_the_head_of_line() {
        let q = QueueState::encode(&[2, 5], 6).unwrap();
        let s = AugmentedStateKnown { queue: q, last: Some(1), considered: 2, correct: true, detached: false };
        assert_eq!(s.next_option(3), AugmentedStateKnown::fresh(QueueState::encode(&[5], 6).unwrap()));
        let s = AugmentedStateKnown { detached: true, ..s };
        assert_eq!(s.next_option(3), AugmentedStateKnown::fresh(q));
    }

    #[test]
    fn known_correctness_never_loses_to_the_baseline() {
        let cfg = fixtures::mnist().with_deadline(8).unwrap().with_arrival_prob(0.3).unwrap();
        let tables = synth_tables(&cfg.profile, 4, 0.5, 7).unwrap();
        let opts = ViOptions::default();
        let aug = build_augmentation_known(&cfg, &tables, &opts).unwrap();
        let base = super::super::build_baseline(&cfg, &opts).unwrap();
        assert!(aug.average_reward >= base.average_reward - 1e-6);
    }

    #[test]
    fn transitions_are_distributions() {
        let cfg = fixtures::cifar10().with_deadline(6).unwrap().with_arrival_prob(0.4).unwrap().with_slot_loss_prob(0.1).unwrap();
        let tables = synth_tables(&cfg.profile, 3, 0.3, 1).unwrap();
        let mdp = AugmentKnownMdp::new(&cfg, &tables).unwrap();
        for key in (0..mdp.state_count()).step_by(7) {
            for a in 0..2 {
                if mdp.is_feasible(key, a) {
                    let mut total = 0.0;
                    mdp.transitions(key, a, |_, p, _| total += p);
                    assert!((total - 1.0).abs() < 1e-9, "key {key} action {a}: {total}");
                }
            }
        }
    }
}
