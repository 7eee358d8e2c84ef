//! Clairvoyant schedule for a known arrival trace.
//!
//! `F(m, t)` is the best expected reward of the first `m` tasks when all of
//! them are finished by slot `t`; `G(m, t)` is the number of slots spent on
//! task `m` in the maximizing choice. A duration with no matching option earns
//! nothing, which models idling before giving up on the task. Duration 0 is the
//! drop option: the task is abandoned without using the channel.

use crate::error::{Error, Result};
use crate::model::{expected_reward, SystemConfig};

/// Arrival slots of a finite run, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArrivalTrace {
    arrival_slots: Vec<u64>,
}

impl ArrivalTrace {
    pub fn new(arrival_slots: Vec<u64>) -> Result<Self> {
        if let Some(w) = arrival_slots.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTrace(format!(
                "arrival {} (slot {}) does not follow slot {}",
                w + 1,
                arrival_slots[w + 1],
                arrival_slots[w]
            )));
        }
        Ok(Self { arrival_slots })
    }

    pub fn arrivals(&self) -> &[u64] {
        &self.arrival_slots
    }

    pub fn len(&self) -> usize {
        self.arrival_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_slots.is_empty()
    }
}

/// Dense `F` and `G` tables, rows `0..=M`, columns `0..=a_M + τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTables {
    width: usize,
    value: Vec<f64>,
    choice: Vec<u32>,
}

impl DpTables {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.value.len() / self.width
    }

    pub fn value(&self, m: usize, t: u64) -> f64 {
        self.value[m * self.width + t as usize]
    }

    pub fn choice(&self, m: usize, t: u64) -> u32 {
        self.choice[m * self.width + t as usize]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.value[m * self.width..(m + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledTask {
    pub arrival: u64,
    pub start: u64,
    /// Chosen option, `None` when the task is dropped.
    pub option: Option<usize>,
    pub slots: u32,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSchedule {
    pub tasks: Vec<ScheduledTask>,
    pub objective: f64,
}

/// Expected reward of spending exactly `d` slots on a task, indexed by `d`.
fn duration_rewards(config: &SystemConfig) -> Vec<f64> {
    let mut w = vec![0.0; config.deadline as usize + 1];
    for o in config.profile.options() {
        if (o.slots as usize) < w.len() {
            w[o.slots as usize] = expected_reward(o, &config.channel);
        }
    }
    w
}

/// One entry of the recurrence: best `F(m-1, i) + W(t - i)` over `i ∈ [a_m, t]`,
/// where `i = t` drops the task.
///
/// `prior_row` is the full row `F(m-1, ·)`. Ties go to the shortest duration.
pub fn dp_cell(arrival: u64, t: u64, prior_row: &[f64], config: &SystemConfig) -> (f64, u32) {
    cell(arrival, t, prior_row, &duration_rewards(config))
}

fn cell(arrival: u64, t: u64, prior_row: &[f64], rewards: &[f64]) -> (f64, u32) {
    debug_assert!(t > arrival);
    let mut best = f64::NEG_INFINITY;
    let mut best_d = 0;
    for d in 0..=(t - arrival) {
        let w = rewards.get(d as usize).copied().unwrap_or(0.0);
        let v = prior_row[(t - d) as usize] + w;
        if v > best {
            best = v;
            best_d = d as u32;
        }
    }
    (best, best_d)
}

/// Fills the DP tables and backtracks the optimal schedule.
pub fn solve_offline(trace: &ArrivalTrace, config: &SystemConfig) -> Result<(DpTables, OfflineSchedule)> {
    if trace.is_empty() {
        return Err(Error::InvalidTrace("trace has no arrivals".into()));
    }
    let a = trace.arrivals();
    let tau = config.deadline as u64;
    let m_count = a.len();
    let horizon = a[m_count - 1] + tau;
    let width = horizon as usize + 1;
    let rewards = duration_rewards(config);

    let mut value = vec![0.0; (m_count + 1) * width];
    let mut choice = vec![0u32; (m_count + 1) * width];
    for m in 1..=m_count {
        let am = a[m - 1];
        let (prev, cur) = value.split_at_mut(m * width);
        let prior = &prev[(m - 1) * width..];
        let row = &mut cur[..width];
        let choice_row = &mut choice[m * width..(m + 1) * width];
        // Before the task arrives it can only have been dropped.
        row[..=am as usize].copy_from_slice(&prior[..=am as usize]);
        for t in am + 1..=am + tau {
            let (v, d) = cell(am, t, prior, &rewards);
            row[t as usize] = v;
            choice_row[t as usize] = d;
        }
        // Past its deadline the task cannot finish any later.
        let last = row[(am + tau) as usize];
        for v in &mut row[(am + tau) as usize + 1..] {
            *v = last;
        }
    }
    let tables = DpTables { width, value, choice };

    let mut chosen = vec![None; m_count];
    let mut t = horizon;
    for m in (1..=m_count).rev() {
        let d = tables.choice(m, t);
        chosen[m - 1] = config.profile.by_slots(d);
        t -= d as u64;
        if m >= 2 {
            t = t.min(a[m - 2] + tau);
        }
    }

    let mut tasks = Vec::with_capacity(m_count);
    let mut free_at = 0u64;
    for (m, &option) in chosen.iter().enumerate() {
        let start = free_at.max(a[m]);
        let (slots, reward) = match option {
            Some(k) => (config.profile.slots(k), expected_reward(config.profile.option(k), &config.channel)),
            None => (0, 0.0),
        };
        tasks.push(ScheduledTask { arrival: a[m], start, option, slots, reward });
        free_at = start + slots as u64;
    }
    let objective = tables.value(m_count, horizon);
    Ok((tables, OfflineSchedule { tasks, objective }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn mnist(tau: u32) -> SystemConfig {
        fixtures::mnist().with_deadline(tau).unwrap().with_arrival_prob(0.0).unwrap()
    }

    #[test]
    fn single_task_picks_most_accurate_fitting_option() {
        let (_, s) = solve_offline(&ArrivalTrace::new(vec![0]).unwrap(), &mnist(12)).unwrap();
        assert_eq!(s.tasks[0].option, Some(2));
        assert!((s.objective - 0.98).abs() < 1e-12);

        let (_, s) = solve_offline(&ArrivalTrace::new(vec![0]).unwrap(), &mnist(2)).unwrap();
        assert_eq!(s.tasks[0].option, Some(0));
        assert!((s.objective - 0.89).abs() < 1e-12);
    }

    #[test]
    fn three_tight_tasks() {
        let (_, s) = solve_offline(&ArrivalTrace::new(vec![0, 1, 2]).unwrap(), &mnist(4)).unwrap();
        assert!((s.objective - 2.75).abs() < 1e-12);
        let sum: f64 = s.tasks.iter().map(|t| t.reward).sum();
        assert!((sum - s.objective).abs() < 1e-12);
    }

    #[test]
    fn dp_cell_examples() {
        let cfg = mnist(12);
        let zeros = vec![0.0; 20];
        assert_eq!(dp_cell(3, 4, &zeros, &cfg), (0.89, 1));
        assert_eq!(dp_cell(3, 5, &zeros, &cfg), (0.89, 1));
        assert_eq!(dp_cell(3, 7, &zeros, &cfg), (0.97, 3));
    }

    #[test]
    fn schedule_respects_constraints() {
        let cfg = mnist(12).with_slot_loss_prob(0.05).unwrap();
        let trace = ArrivalTrace::new(vec![0, 2, 3, 4, 9, 10, 11, 30, 31]).unwrap();
        let (tables, s) = solve_offline(&trace, &cfg).unwrap();
        let mut prev_end = 0;
        for (i, t) in s.tasks.iter().enumerate() {
            assert!(t.start >= t.arrival);
            if i > 0 {
                assert_eq!(t.start, prev_end.max(t.arrival));
            }
            assert!(t.start + t.slots as u64 <= t.arrival + 12);
            prev_end = t.start + t.slots as u64;
        }
        for m in 0..tables.rows() {
            let row = tables.row(m);
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
            assert!(row.iter().all(|&v| v >= 0.0 && v <= m as f64));
        }
        let sum: f64 = s.tasks.iter().map(|t| t.reward).sum();
        assert!((sum - s.objective).abs() < 1e-9);
    }

    #[test]
    fn dropping_frees_the_channel() {
        let profile = crate::model::CompressionProfile::new(vec![crate::model::CompressionOption::new(2.0, 3, 0.9)]).unwrap();
        let cfg = SystemConfig::new(3, profile, crate::model::ChannelModel::new(0.0).unwrap(), crate::model::ArrivalModel::new(0.5).unwrap())
            .unwrap();
        let (_, s) = solve_offline(&ArrivalTrace::new(vec![1, 2, 5, 7, 8, 9]).unwrap(), &cfg).unwrap();
        assert!((s.objective - 2.7).abs() < 1e-12);
        let sent: Vec<bool> = s.tasks.iter().map(|t| t.option.is_some()).collect();
        assert_eq!(sent, [true, false, true, false, true, false]);
    }

    #[test]
    fn rejects_bad_traces() {
        assert!(ArrivalTrace::new(vec![0, 3, 3]).is_err());
        assert!(ArrivalTrace::new(vec![5, 2]).is_err());
        assert!(solve_offline(&ArrivalTrace::default(), &mnist(12)).is_err());
    }
}
