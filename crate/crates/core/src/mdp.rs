//! Queue-state encoding, arrival blocks and the average-reward solver shared
//! by every online policy.
//!
//! A queue is a `τ`-bit integer: bit `k` is set when a queued task has exactly
//! `k + 1` slots of deadline left. Serving a task for `T` slots shifts the
//! queue right by `T` and ORs in the block of arrivals seen during those slots
//! at the top `T` bits.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Bitmask of remaining deadlines; the lowest set bit is the head of line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct QueueState(u32);

impl QueueState {
    pub const EMPTY: QueueState = QueueState(0);

    pub fn from_bits(bits: u32, tau: u32) -> Result<Self> {
        if tau < 32 && bits >> tau != 0 {
            return Err(Error::InvalidParameter {
                name: "queue state",
                reason: format!("{bits} does not fit in {tau} bits"),
            });
        }
        Ok(Self(bits))
    }

    pub(crate) const fn raw(bits: u32) -> Self {
        Self(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Encodes a set of remaining deadlines, each in `[1, τ]`.
    pub fn encode(remaining: &[u32], tau: u32) -> Result<Self> {
        let mut bits = 0u32;
        for &d in remaining {
            if d == 0 || d > tau {
                return Err(Error::OutOfRange { deadline: d, tau });
            }
            let bit = 1 << (d - 1);
            if bits & bit != 0 {
                return Err(Error::InvalidParameter {
                    name: "remaining deadlines",
                    reason: format!("deadline {d} appears twice"),
                });
            }
            bits |= bit;
        }
        Ok(Self(bits))
    }

    /// Remaining deadlines in ascending order.
    pub fn decode(self) -> Vec<u32> {
        (0..32).filter(|k| self.0 & (1 << k) != 0).map(|k| k + 1).collect()
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Remaining deadline of the head-of-line task.
    pub fn hol_deadline(self) -> Option<u32> {
        (self.0 != 0).then(|| self.0.trailing_zeros() + 1)
    }

    pub fn without_hol(self) -> Self {
        Self(self.0 & self.0.wrapping_sub(1))
    }

    /// Lets `elapsed` slots pass, optionally after removing the head of line,
    /// and adds the arrivals of `block` (bit `j` = arrival at the end of slot `j`).
    ///
    /// Tasks shifted below bit 0 have missed their deadline and vanish.
    pub fn advance(self, elapsed: u32, block: u32, remove_hol: bool, tau: u32) -> Result<Self> {
        if remove_hol && self.is_empty() {
            return Err(Error::EmptyQueue);
        }
        if elapsed > tau {
            return Err(Error::InvalidParameter {
                name: "elapsed",
                reason: format!("{elapsed} slots exceed the deadline {tau}"),
            });
        }
        if elapsed < 32 && block >> elapsed != 0 {
            return Err(Error::InvalidParameter {
                name: "arrival block",
                reason: format!("{block} does not fit in {elapsed} bits"),
            });
        }
        let base = if remove_hol { self.without_hol() } else { self };
        Ok(Self::shift(base.0, elapsed, block, tau))
    }

    #[inline]
    pub(crate) fn shift(bits: u32, elapsed: u32, block: u32, tau: u32) -> Self {
        if elapsed == 0 {
            return Self(bits);
        }
        let kept = if elapsed >= 32 { 0 } else { bits >> elapsed };
        Self(kept | (block << (tau - elapsed)))
    }
}

/// `p^B(i) (1-p)^(T-B(i))`: probability of the arrival pattern `i` over `T` slots.
pub fn arrival_block_prob(block: u32, slots: u32, p: f64) -> f64 {
    let ones = block.count_ones() as i32;
    p.powi(ones) * (1.0 - p).powi(slots as i32 - ones)
}

/// Precomputed arrival-pattern probabilities for every duration up to `max_slots`.
#[derive(Debug, Clone)]
pub struct ArrivalBlocks {
    arrival_prob: f64,
    by_slots: Vec<Vec<f64>>,
}

impl ArrivalBlocks {
    pub fn new(max_slots: u32, arrival_prob: f64) -> Self {
        let by_slots = (0..=max_slots)
            .map(|t| (0..1u32 << t).map(|i| arrival_block_prob(i, t, arrival_prob)).collect())
            .collect();
        Self { arrival_prob, by_slots }
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    /// Probabilities of all `2^slots` patterns, indexed by pattern.
    pub fn block(&self, slots: u32) -> &[f64] {
        &self.by_slots[slots as usize]
    }
}

/// A finite MDP whose states are keys in `0..state_count()`.
///
/// Actions are indexed `0..action_count()`. When two actions tie, the solver
/// prefers the larger index, so implementors order actions from least to most
/// preferred. Actions with zero duration happen instantaneously; they must not
/// form cycles.
pub trait Mdp: Sync {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    fn initial_state(&self) -> usize;
    fn is_feasible(&self, state: usize, action: usize) -> bool;
    /// Slots that pass while the action executes.
    fn duration(&self, state: usize, action: usize) -> u32;
    /// Calls `f(next_state, probability, reward)` for every outcome.
    fn transitions<F: FnMut(usize, f64, f64)>(&self, state: usize, action: usize, f: F);
}

/// Closure of the states reachable from a start state.
#[derive(Debug, Clone)]
pub struct ReachableStates {
    keys: Vec<usize>,
    index: Vec<u32>,
}

const UNREACHED: u32 = u32::MAX;

impl ReachableStates {
    pub fn keys(&self) -> &[usize] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: usize) -> bool {
        self.index_of(key).is_some()
    }

    pub fn index_of(&self, key: usize) -> Option<usize> {
        self.index.get(key).filter(|&&i| i != UNREACHED).map(|&i| i as usize)
    }
}

/// Breadth-first closure under all feasible actions.
pub fn enumerate_reachable_states<M: Mdp>(mdp: &M, initial: usize) -> ReachableStates {
    let mut index = vec![UNREACHED; mdp.state_count()];
    let mut keys = vec![initial];
    index[initial] = 0;
    let mut head = 0;
    while head < keys.len() {
        let s = keys[head];
        head += 1;
        for a in 0..mdp.action_count() {
            if !mdp.is_feasible(s, a) {
                continue;
            }
            mdp.transitions(s, a, |next, prob, _| {
                if prob > 0.0 && index[next] == UNREACHED {
                    index[next] = keys.len() as u32;
                    keys.push(next);
                }
            });
        }
    }
    ReachableStates { keys, index }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViOptions {
    /// Stop once the span of the Bellman residual falls below this.
    pub threshold: f64,
    pub max_iters: usize,
    /// Weight of the real transition against a self-loop, in (0, 1]. Values
    /// below 1 make every policy aperiodic without changing the optimum.
    pub aperiodicity: f64,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self { threshold: 1e-9, max_iters: 1_000_000, aperiodicity: 0.5 }
    }
}

/// Actions whose values differ by less than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub states: ReachableStates,
    /// Relative values, zero at the initial state, indexed like `states`.
    pub values: Vec<f64>,
    pub policy: Vec<u16>,
    /// Long-run reward per slot.
    pub average_reward: f64,
    pub iterations: usize,
    pub span: f64,
    pub converged: bool,
}

impl ValueIterationResult {
    pub fn action(&self, key: usize) -> Option<usize> {
        self.states.index_of(key).map(|i| self.policy[i] as usize)
    }

    pub fn value(&self, key: usize) -> Option<f64> {
        self.states.index_of(key).map(|i| self.values[i])
    }

    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence { iterations: self.iterations, span: self.span })
        }
    }
}

/// Picks the best action, preferring the highest index among near-ties.
fn select(q: &[f64]) -> (f64, usize) {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let action = q.iter().rposition(|&v| v >= best - TIE_TOLERANCE).unwrap_or(0);
    (best, action)
}

/// Orders states so that every zero-duration successor comes before its predecessor.
fn zero_duration_order<M: Mdp>(mdp: &M, states: &ReachableStates) -> Result<Vec<u32>> {
    let n = states.len();
    let mut succ: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, &s) in states.keys().iter().enumerate() {
        for a in 0..mdp.action_count() {
            if mdp.is_feasible(s, a) && mdp.duration(s, a) == 0 {
                mdp.transitions(s, a, |next, prob, _| {
                    if prob > 0.0 {
                        succ[i].push(states.index_of(next).expect("closed under transitions") as u32);
                    }
                });
            }
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if mark[root as usize] != 0 {
            continue;
        }
        stack.push((root, 0));
        mark[root as usize] = 1;
        while let Some(top) = stack.last_mut() {
            let v = top.0;
            let child = succ[v as usize].get(top.1).copied();
            top.1 += 1;
            if let Some(w) = child {
                match mark[w as usize] {
                    0 => {
                        mark[w as usize] = 1;
                        stack.push((w, 0));
                    }
                    1 => return Err(Error::ZeroDurationCycle(states.keys()[w as usize])),
                    _ => {}
                }
            } else {
                mark[v as usize] = 2;
                order.push(v);
                stack.pop();
            }
        }
    }
    Ok(order)
}

/// Average-reward relative value iteration over the states reachable from
/// `mdp.initial_state()`.
///
/// Rewards are earned per transition but averaged per slot: a transmission of
/// `d` slots is uniformized into `d` unit steps, and zero-duration actions are
/// resolved within the sweep after their successors. Values are renormalized
/// to zero at the initial state after every sweep.
pub fn relative_value_iteration<M: Mdp>(mdp: &M, options: &ViOptions) -> Result<ValueIterationResult> {
    let states = enumerate_reachable_states(mdp, mdp.initial_state());
    let h = vec![0.0; states.len()];
    iterate(mdp, states, h, options)
}

/// Same as [`relative_value_iteration`], starting from given relative values.
pub fn relative_value_iteration_from<M: Mdp>(
    mdp: &M,
    options: &ViOptions,
    initial_values: &ValueIterationResult,
) -> Result<ValueIterationResult> {
    let states = initial_values.states.clone();
    iterate(mdp, states, initial_values.values.clone(), options)
}

fn iterate<M: Mdp>(mdp: &M, states: ReachableStates, mut h: Vec<f64>, options: &ViOptions) -> Result<ValueIterationResult> {
    let eta = options.aperiodicity;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter { name: "aperiodicity", reason: format!("{eta} is outside (0, 1]") });
    }
    let n = states.len();
    let na = mdp.action_count();
    for &s in states.keys() {
        if !(0..na).any(|a| mdp.is_feasible(s, a)) {
            return Err(Error::NoFeasibleAction(s));
        }
    }
    let order = zero_duration_order(mdp, &states)?;

    let mut q = vec![f64::NEG_INFINITY; n * na];
    let mut w = vec![0.0; n];
    let mut policy = vec![0u16; n];
    let mut span = f64::INFINITY;
    let mut g = 0.0;
    let mut iterations = 0;

    while iterations < options.max_iters {
        iterations += 1;
        let keys = states.keys();
        let hv = &h;
        let st = &states;
        q.par_chunks_mut(na).enumerate().for_each(|(i, qs)| {
            let s = keys[i];
            for (a, slot) in qs.iter_mut().enumerate() {
                *slot = f64::NEG_INFINITY;
                if !mdp.is_feasible(s, a) {
                    continue;
                }
                let d = mdp.duration(s, a);
                if d == 0 {
                    *slot = f64::NAN;
                    continue;
                }
                let mut acc = 0.0;
                mdp.transitions(s, a, |next, prob, reward| {
                    if prob > 0.0 {
                        acc += prob * (reward + hv[st.index_of(next).unwrap()]);
                    }
                });
                let step = eta / d as f64;
                *slot = step * acc + (1.0 - step) * hv[i];
            }
        });
        for &i in &order {
            let i = i as usize;
            let s = keys[i];
            let qs = &mut q[i * na..(i + 1) * na];
            for (a, slot) in qs.iter_mut().enumerate() {
                if slot.is_nan() {
                    let mut acc = 0.0;
                    mdp.transitions(s, a, |next, prob, reward| {
                        if prob > 0.0 {
                            acc += prob * (reward + w[st.index_of(next).unwrap()]);
                        }
                    });
                    *slot = acc;
                }
            }
            let (best, action) = select(qs);
            w[i] = best;
            policy[i] = action as u16;
        }

        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (wi, hi_) in w.iter().zip(&h) {
            let diff = wi - hi_;
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        span = hi - lo;
        g = 0.5 * (lo + hi) / eta;
        let reference = w[0];
        for (hv, wv) in h.iter_mut().zip(&w) {
            *hv = wv - reference;
        }
        if span < options.threshold {
            break;
        }
    }

    Ok(ValueIterationResult {
        states,
        values: h,
        policy,
        average_reward: g,
        iterations,
        span,
        converged: span < options.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        assert_eq!(QueueState::encode(&[], 12).unwrap().bits(), 0);
        assert_eq!(QueueState::encode(&[2, 5], 12).unwrap().bits(), 18);
        let all: Vec<u32> = (1..=12).collect();
        assert_eq!(QueueState::encode(&all, 12).unwrap().bits(), 4095);
        assert_eq!(QueueState::encode(&[13], 12), Err(Error::OutOfRange { deadline: 13, tau: 12 }));
        assert_eq!(QueueState::encode(&[0], 12), Err(Error::OutOfRange { deadline: 0, tau: 12 }));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(QueueState::raw(18).decode(), vec![2, 5]);
        assert!(QueueState::raw(0).decode().is_empty());
        assert_eq!(QueueState::raw(1).decode(), vec![1]);
        assert_eq!(QueueState::raw(18).hol_deadline(), Some(2));
    }

    #[test]
    fn advance_examples() {
        let s = QueueState::raw(18);
        assert_eq!(s.advance(1, 0, true, 12).unwrap().bits(), 8);
        assert_eq!(s.advance(1, 1, true, 12).unwrap().bits(), 2056);
        assert_eq!(s.advance(0, 0, true, 12).unwrap().bits(), 16);
        assert_eq!(QueueState::EMPTY.advance(1, 0, true, 12), Err(Error::EmptyQueue));
        assert!(s.advance(2, 4, false, 12).is_err());
    }

    #[test]
    fn block_probabilities() {
        assert!((arrival_block_prob(0, 3, 0.5) - 0.125).abs() < 1e-15);
        assert!((arrival_block_prob(5, 3, 0.11) - 0.11 * 0.11 * 0.89).abs() < 1e-15);
        let blocks = ArrivalBlocks::new(10, 0.37);
        for t in 0..=10 {
            let total: f64 = blocks.block(t).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(ArrivalBlocks::new(3, 0.0).block(3)[0], 1.0);
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(bits in 0u32..(1 << 12)) {
            let s = QueueState::raw(bits);
            let d = s.decode();
            prop_assert_eq!(QueueState::encode(&d, 12).unwrap(), s);
            prop_assert_eq!(d.len() as u32, s.len());
        }
    }

    /// One state, one unit-duration action.
    struct Constant(f64);

    impl Mdp for Constant {
        fn state_count(&self) -> usize {
            1
        }
        fn action_count(&self) -> usize {
            1
        }
        fn initial_state(&self) -> usize {
            0
        }
        fn is_feasible(&self, _: usize, _: usize) -> bool {
            true
        }
        fn duration(&self, _: usize, _: usize) -> u32 {
            1
        }
        fn transitions<F: FnMut(usize, f64, f64)>(&self, _: usize, _: usize, mut f: F) {
            f(0, 1.0, self.0)
        }
    }

    #[test]
    fn saturated_single_state() {
        let r = relative_value_iteration(&Constant(0.89), &ViOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        assert!((r.average_reward - 0.89).abs() < 1e-12);
    }

    /// Two states with a deterministic period-2 cycle and a slower alternative.
    struct TwoCycle;

    impl Mdp for TwoCycle {
        fn state_count(&self) -> usize {
            2
        }
        fn action_count(&self) -> usize {
            2
        }
        fn initial_state(&self) -> usize {
            0
        }
        fn is_feasible(&self, s: usize, a: usize) -> bool {
            s == 0 || a == 0
        }
        fn duration(&self, _: usize, a: usize) -> u32 {
            if a == 0 {
                1
            } else {
                3
            }
        }
        fn transitions<F: FnMut(usize, f64, f64)>(&self, s: usize, a: usize, mut f: F) {
            match (s, a) {
                (0, 0) => f(1, 1.0, 1.0),
                (0, 1) => f(0, 1.0, 2.5),
                _ => f(0, 1.0, 0.0),
            }
        }
    }

    #[test]
    fn periodic_chain_converges_to_reward_per_slot() {
        // Cycling 0 -> 1 -> 0 earns 1 per 2 slots; the slow action earns 2.5 per 3.
        let r = relative_value_iteration(&TwoCycle, &ViOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.average_reward - 2.5 / 3.0).abs() < 1e-8);
        assert_eq!(r.action(0), Some(1));
    }

    struct ZeroLoop;

    impl Mdp for ZeroLoop {
        fn state_count(&self) -> usize {
            2
        }
        fn action_count(&self) -> usize {
            1
        }
        fn initial_state(&self) -> usize {
            0
        }
        fn is_feasible(&self, _: usize, _: usize) -> bool {
            true
        }
        fn duration(&self, _: usize, _: usize) -> u32 {
            0
        }
        fn transitions<F: FnMut(usize, f64, f64)>(&self, s: usize, _: usize, mut f: F) {
            f(1 - s, 1.0, 0.0)
        }
    }

    #[test]
    fn zero_duration_cycles_are_rejected() {
        assert!(matches!(
            relative_value_iteration(&ZeroLoop, &ViOptions::default()),
            Err(Error::ZeroDurationCycle(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let opts = ViOptions { max_iters: 1, threshold: 0.0, ..ViOptions::default() };
        let r = relative_value_iteration(&TwoCycle, &opts).unwrap();
        assert!(!r.converged);
        assert!(matches!(r.ensure_converged(), Err(Error::NonConvergence { .. })));
    }
}
