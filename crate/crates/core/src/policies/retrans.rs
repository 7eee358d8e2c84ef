//! Loss-aware retransmission on an erasure channel.
//!
//! The head of line gets up to `τ` decisions. Each decision either skips
//! (zero time, counts as a decision) or transmits at some option. A success
//! replaces the held result and earns the accuracy gained over it; a loss
//! earns nothing. After `τ` decisions the task leaves the queue.

use super::{after_transmission, SKIP};
use super::table::{PolicyKind, PolicyTable};
use crate::error::Result;
use crate::mdp::{relative_value_iteration, ArrivalBlocks, Mdp, QueueState, ViOptions};
use crate::model::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RetransStateLoss {
    pub queue: QueueState,
    /// Option of the last successful transmission of the head of line.
    pub last: Option<usize>,
    /// Decisions already taken for the head of line.
    pub attempts: u32,
    pub detached: bool,
}

impl RetransStateLoss {
    pub fn fresh(queue: QueueState) -> Self {
        Self { queue, last: None, attempts: 0, detached: false }
    }

    pub fn key(&self, options: usize, tau: u32) -> usize {
        let last = self.last.unwrap_or(options);
        ((self.queue.bits() as usize * (options + 1) + last) * tau as usize + self.attempts as usize) * 2
            + self.detached as usize
    }

    pub fn from_key(key: usize, options: usize, tau: u32) -> Self {
        let detached = key % 2 == 1;
        let key = key / 2;
        let attempts = (key % tau as usize) as u32;
        let key = key / tau as usize;
        let last = key % (options + 1);
        let queue = QueueState::raw((key / (options + 1)) as u32);
        Self { queue, last: (last < options).then_some(last), attempts, detached }
    }

    pub fn has_task(&self) -> bool {
        self.detached || !self.queue.is_empty()
    }

    /// Counts one decision, ending the task after the last one.
    pub fn next_attempt(self, tau: u32) -> Self {
        if self.attempts + 1 < tau {
            Self { attempts: self.attempts + 1, ..self }
        } else {
            let queue = if self.detached { self.queue } else { self.queue.without_hol() };
            Self::fresh(queue)
        }
    }
}

pub struct RetransMdp {
    tau: u32,
    slots: Vec<u32>,
    accuracy: Vec<f64>,
    loss: Vec<f64>,
    blocks: ArrivalBlocks,
}

impl RetransMdp {
    pub fn new(config: &SystemConfig) -> Self {
        let slots: Vec<u32> = (0..config.profile.len()).map(|k| config.profile.slots(k)).collect();
        Self {
            tau: config.deadline,
            accuracy: (0..slots.len()).map(|k| config.profile.accuracy(k)).collect(),
            loss: slots.iter().map(|&t| config.channel.per(t)).collect(),
            blocks: ArrivalBlocks::new(config.profile.max_slots().min(config.deadline), config.arrival_prob()),
            slots,
        }
    }

    fn options(&self) -> usize {
        self.slots.len()
    }

    fn decode(&self, key: usize) -> RetransStateLoss {
        RetransStateLoss::from_key(key, self.options(), self.tau)
    }
}

impl Mdp for RetransMdp {
    fn state_count(&self) -> usize {
        (1 << self.tau) * (self.options() + 1) * self.tau as usize * 2
    }

    fn action_count(&self) -> usize {
        self.options() + 1
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn is_feasible(&self, state: usize, action: usize) -> bool {
        let s = self.decode(state);
        if !s.has_task() {
            return action == SKIP;
        }
        action == SKIP
            || (!s.detached && s.queue.hol_deadline().is_some_and(|d| d >= self.slots[action - 1]))
    }

    fn duration(&self, state: usize, action: usize) -> u32 {
        let s = self.decode(state);
        match (s.has_task(), action) {
            (false, _) => 1,
            (true, SKIP) => 0,
            (true, a) => self.slots[a - 1],
        }
    }

    fn transitions<F: FnMut(usize, f64, f64)>(&self, state: usize, action: usize, mut f: F) {
        let (n, tau) = (self.options(), self.tau);
        let s = self.decode(state);
        if !s.has_task() {
            for (i, &p) in self.blocks.block(1).iter().enumerate() {
                f(RetransStateLoss::fresh(QueueState::shift(0, 1, i as u32, tau)).key(n, tau), p, 0.0);
            }
            return;
        }
        if action == SKIP {
            f(s.next_attempt(tau).key(n, tau), 1.0, 0.0);
            return;
        }
        let k = action - 1;
        let t = self.slots[k];
        let pe = self.loss[k];
        let gain = self.accuracy[k] - s.last.map_or(0.0, |l| self.accuracy[l]);
        for (i, &p) in self.blocks.block(t).iter().enumerate() {
            let (queue, detached) = after_transmission(s.queue, t, i as u32, tau);
            let next = RetransStateLoss { queue, last: Some(k), detached, ..s };
            f(next.next_attempt(tau).key(n, tau), p * (1.0 - pe), gain);
            if pe > 0.0 {
                let next = RetransStateLoss { queue, detached, ..s };
                f(next.next_attempt(tau).key(n, tau), p * pe, 0.0);
            }
        }
    }
}

/// Solves the loss-aware retransmission MDP.
pub fn build_retransmission(config: &SystemConfig, options: &ViOptions) -> Result<PolicyTable> {
    let mdp = RetransMdp::new(config);
    let result = relative_value_iteration(&mdp, options)?.ensure_converged()?;
    PolicyTable::from_result(PolicyKind::Retransmission, config, 0, None, &mdp, &result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policies::build_baseline;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn key_roundtrip(bits in 0u32..256, last in 0usize..4, attempts in 0u32..8, detached: bool) {
            let s = RetransStateLoss { queue: QueueState::raw(bits), last: (last < 3).then_some(last), attempts, detached };
            prop_assert_eq!(RetransStateLoss::from_key(s.key(3, 8), 3, 8), s);
        }
    }

    #[test]
    fn lossless_channel_matches_the_baseline() {
        let cfg = fixtures::mnist().with_deadline(6).unwrap().with_arrival_prob(0.4).unwrap();
        let opts = ViOptions::default();
        let r = build_retransmission(&cfg, &opts).unwrap();
        let b = build_baseline(&cfg, &opts).unwrap();
        assert!((r.average_reward - b.average_reward).abs() < 1e-6);
    }

    #[test]
    fn retrying_pays_on_a_lossy_channel() {
        let cfg = fixtures::mnist().with_deadline(8).unwrap().with_arrival_prob(0.2).unwrap().with_slot_loss_prob(0.2).unwrap();
        let opts = ViOptions::default();
        let r = build_retransmission(&cfg, &opts).unwrap();
        let b = build_baseline(&cfg, &opts).unwrap();
        assert!(r.average_reward > b.average_reward + 1e-3);
    }
}
