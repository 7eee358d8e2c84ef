//! Information augmentation under uncertainty: the receiver reports only the
//! quantized uncertainty level of each result, not its correctness.
//!
//! Same sweep structure as the known-correctness MDP. The reward of a
//! transmission is the expected accuracy gained over the result already held,
//! `ρ(c | last, u, u') - ρ(last | u)`. A state with no result holds level 0.

use super::{after_transmission, SKIP};
use super::augment::check_tables;
use super::table::{PolicyKind, PolicyTable};
use crate::error::Result;
use crate::mdp::{relative_value_iteration, ArrivalBlocks, Mdp, QueueState, ViOptions};
use crate::model::SystemConfig;
use crate::tables::ConditionalTables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AugmentedStateUncertainty {
    pub queue: QueueState,
    pub last: Option<usize>,
    pub considered: usize,
    /// Quantized uncertainty of the result at `last`.
    pub level: usize,
    pub detached: bool,
}

impl AugmentedStateUncertainty {
    pub fn fresh(queue: QueueState) -> Self {
        Self { queue, last: None, considered: 0, level: 0, detached: false }
    }

    pub fn key(&self, options: usize, levels: usize) -> usize {
        let last = self.last.unwrap_or(options);
        (((self.queue.bits() as usize * (options + 1) + last) * options + self.considered) * levels + self.level) * 2
            + self.detached as usize
    }

    pub fn from_key(key: usize, options: usize, levels: usize) -> Self {
        let detached = key % 2 == 1;
        let key = key / 2;
        let level = key % levels;
        let key = key / levels;
        let considered = key % options;
        let key = key / options;
        let last = key % (options + 1);
        let queue = QueueState::raw((key / (options + 1)) as u32);
        Self { queue, last: (last < options).then_some(last), considered, level, detached }
    }

    pub fn has_task(&self) -> bool {
        self.detached || !self.queue.is_empty()
    }

    pub fn next_option(self, options: usize) -> Self {
        if self.considered + 1 < options {
            Self { considered: self.considered + 1, ..self }
        } else {
            let queue = if self.detached { self.queue } else { self.queue.without_hol() };
            Self::fresh(queue)
        }
    }
}

pub struct AugmentUncertaintyMdp<'a> {
    tau: u32,
    slots: Vec<u32>,
    loss: Vec<f64>,
    blocks: ArrivalBlocks,
    tables: &'a ConditionalTables,
}

impl<'a> AugmentUncertaintyMdp<'a> {
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

    fn levels(&self) -> usize {
        self.tables.levels()
    }

    fn decode(&self, key: usize) -> AugmentedStateUncertainty {
        AugmentedStateUncertainty::from_key(key, self.options(), self.levels())
    }
}

impl Mdp for AugmentUncertaintyMdp<'_> {
    fn state_count(&self) -> usize {
        (1 << self.tau) * (self.options() + 1) * self.options() * self.levels() * 2
    }

    fn action_count(&self) -> usize {
        2
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn is_feasible(&self, state: usize, action: usize) -> bool {
        let s = self.decode(state);
        if !s.has_task() {
            return action == SKIP;
        }
        action == SKIP || (!s.detached && s.queue.hol_deadline().is_some_and(|d| d >= self.slots[s.considered]))
    }

    fn duration(&self, state: usize, action: usize) -> u32 {
        let s = self.decode(state);
        match (s.has_task(), action) {
            (false, _) => 1,
            (true, SKIP) => 0,
            _ => self.slots[s.considered],
        }
    }

    fn transitions<F: FnMut(usize, f64, f64)>(&self, state: usize, action: usize, mut f: F) {
        let (n, u) = (self.options(), self.levels());
        let s = self.decode(state);
        if !s.has_task() {
            for (i, &p) in self.blocks.block(1).iter().enumerate() {
                f(AugmentedStateUncertainty::fresh(QueueState::shift(0, 1, i as u32, self.tau)).key(n, u), p, 0.0);
            }
            return;
        }
        if action == SKIP {
            f(s.next_option(n).key(n, u), 1.0, 0.0);
            return;
        }
        let c = s.considered;
        let t = self.slots[c];
        let pe = self.loss[c];
        let held = self.tables.acc_marg(s.last, s.level);
        let outcomes: Vec<(usize, f64, f64)> = (0..u)
            .map(|next| {
                (
                    next,
                    self.tables.p_u(c, next, s.last, s.level),
                    self.tables.acc_joint(c, s.last, s.level, next) - held,
                )
            })
            .collect();
        for (i, &p) in self.blocks.block(t).iter().enumerate() {
            let (queue, detached) = after_transmission(s.queue, t, i as u32, self.tau);
            for &(level, pu, gain) in &outcomes {
                let next = AugmentedStateUncertainty { queue, last: Some(c), considered: c, level, detached };
                f(next.next_option(n).key(n, u), p * (1.0 - pe) * pu, gain);
            }
            if pe > 0.0 {
                let next = AugmentedStateUncertainty { queue, detached, ..s };
                f(next.next_option(n).key(n, u), p * pe, 0.0);
            }
        }
    }
}

/// Solves the uncertainty-driven augmentation MDP.
pub fn build_augmentation_uncertainty(
    config: &SystemConfig,
    tables: &ConditionalTables,
    options: &ViOptions,
) -> Result<PolicyTable> {
    let mdp = AugmentUncertaintyMdp::new(config, tables)?;
    let result = relative_value_iteration(&mdp, options)?.ensure_converged()?;
    PolicyTable::from_result(
        PolicyKind::AugmentUncertainty,
        config,
        tables.levels(),
        Some(tables.digest()),
        &mdp,
        &result,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tables::synth_tables;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn key_roundtrip(bits in 0u32..64, last in 0usize..4, considered in 0usize..3, level in 0usize..5, detached: bool) {
            let s = AugmentedStateUncertainty {
                queue: QueueState::raw(bits),
                last: (last < 3).then_some(last),
                considered,
                level,
                detached,
            };
            prop_assert_eq!(AugmentedStateUncertainty::from_key(s.key(3, 5), 3, 5), s);
        }
    }

    #[test]
    fn transitions_are_distributions() {
        let cfg = fixtures::mnist().with_deadline(5).unwrap().with_arrival_prob(0.4).unwrap().with_slot_loss_prob(0.1).unwrap();
        let tables = synth_tables(&cfg.profile, 3, 0.6, 2).unwrap();
        let mdp = AugmentUncertaintyMdp::new(&cfg, &tables).unwrap();
        for key in (0..mdp.state_count()).step_by(5) {
            for a in 0..2 {
                if mdp.is_feasible(key, a) {
                    let mut total = 0.0;
                    mdp.transitions(key, a, |_, p, _| total += p);
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_tables_for_another_profile() {
        let cfg = fixtures::mnist();
        let tables = synth_tables(&crate::model::CompressionProfile::new(vec![
            crate::model::CompressionOption::new(4.0, 2, 0.9),
        ])
        .unwrap(), 2, 0.5, 0)
        .unwrap();
        assert!(build_augmentation_uncertainty(&cfg, &tables, &ViOptions::default()).is_err());
    }
}
