//! Queue MDP without retransmission: at every decision the head of line is
//! either dropped or sent once at one compression option.
//!
//! State key: the queue bitmask. Action 0 drops the head of line (or idles for
//! one slot when the queue is empty); action `k >= 1` transmits at option
//! `k - 1`, feasible when the head of line has at least `T_{k-1}` slots left.

use super::table::{PolicyKind, PolicyTable};
use crate::error::Result;
use crate::mdp::{relative_value_iteration, ArrivalBlocks, Mdp, QueueState, ViOptions};
use crate::model::SystemConfig;

pub struct BaselineMdp {
    tau: u32,
    slots: Vec<u32>,
    rewards: Vec<f64>,
    blocks: ArrivalBlocks,
}

impl BaselineMdp {
    pub fn new(config: &SystemConfig) -> Self {
        Self {
            tau: config.deadline,
            slots: (0..config.profile.len()).map(|k| config.profile.slots(k)).collect(),
            rewards: config.option_rewards(),
            blocks: ArrivalBlocks::new(config.profile.max_slots().min(config.deadline), config.arrival_prob()),
        }
    }
}

impl Mdp for BaselineMdp {
    fn state_count(&self) -> usize {
        1 << self.tau
    }

    fn action_count(&self) -> usize {
        self.slots.len() + 1
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn is_feasible(&self, state: usize, action: usize) -> bool {
        let q = QueueState::raw(state as u32);
        match q.hol_deadline() {
            None => action == 0,
            Some(_) if action == 0 => true,
            Some(d) => self.slots[action - 1] <= d,
        }
    }

    fn duration(&self, state: usize, action: usize) -> u32 {
        match (state, action) {
            (0, _) => 1,
            (_, 0) => 0,
            (_, a) => self.slots[a - 1],
        }
    }

    fn transitions<F: FnMut(usize, f64, f64)>(&self, state: usize, action: usize, mut f: F) {
        let q = QueueState::raw(state as u32);
        if state == 0 {
            for (i, &p) in self.blocks.block(1).iter().enumerate() {
                f(QueueState::shift(0, 1, i as u32, self.tau).bits() as usize, p, 0.0);
            }
            return;
        }
        let rest = q.without_hol().bits();
        if action == 0 {
            f(rest as usize, 1.0, 0.0);
            return;
        }
        let t = self.slots[action - 1];
        let w = self.rewards[action - 1];
        for (i, &p) in self.blocks.block(t).iter().enumerate() {
            f(QueueState::shift(rest, t, i as u32, self.tau).bits() as usize, p, w);
        }
    }
}

/// Solves the baseline MDP; fails with `NonConvergence` if value iteration
/// does not converge.
pub fn build_baseline(config: &SystemConfig, options: &ViOptions) -> Result<PolicyTable> {
    let mdp = BaselineMdp::new(config);
    let result = relative_value_iteration(&mdp, options)?.ensure_converged()?;
    PolicyTable::from_result(PolicyKind::Baseline, config, 0, None, &mdp, &result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn saturated_tight_deadline_earns_first_option_accuracy() {
        let cfg = fixtures::mnist().with_deadline(2).unwrap().with_arrival_prob(1.0).unwrap();
        let t = build_baseline(&cfg, &ViOptions::default()).unwrap();
        assert!((t.average_reward - 0.89).abs() < 1e-6, "{}", t.average_reward);
    }

    #[test]
    fn single_task_at_a_time_uses_the_best_option() {
        let cfg = fixtures::mnist().with_arrival_prob(0.01).unwrap();
        let t = build_baseline(&cfg, &ViOptions::default()).unwrap();
        let lone = QueueState::encode(&[12], 12).unwrap().bits() as usize;
        assert_eq!(t.action(lone), Some(3));
    }

    #[test]
    fn every_reachable_action_is_feasible() {
        let cfg = fixtures::cifar10().with_deadline(8).unwrap().with_arrival_prob(0.5).unwrap();
        let mdp = BaselineMdp::new(&cfg);
        let t = build_baseline(&cfg, &ViOptions::default()).unwrap();
        assert!(t.reachable() > 1);
        for (k, a) in t.entries() {
            assert!(mdp.is_feasible(k, a));
        }
    }
}
