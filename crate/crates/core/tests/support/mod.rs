//! Reference implementations written independently of the library code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// One feasible action of the dense model.
pub struct DenseAction {
    pub duration: f64,
    pub reward: f64,
    pub row: Vec<f64>,
}

/// Baseline queue MDP with an explicit `S x S` matrix per action.
pub struct DenseBaseline {
    pub states: usize,
    pub actions: usize,
    /// Indexed `[state * actions + action]`.
    pub entries: Vec<Option<DenseAction>>,
}

fn ones(mut x: usize) -> i32 {
    let mut n = 0;
    while x > 0 {
        n += (x % 2) as i32;
        x /= 2;
    }
    n
}

/// Builds the matrices from the queue formula: after serving the head of line
/// for `T` slots, `s' = 2^(τ-T) i + floor((s - hol) / 2^T)` with probability
/// `p^B(i) (1-p)^(T-B(i))`.
pub fn dense_baseline(tau: u32, slots: &[u32], accuracy: &[f64], p: f64, pe: f64) -> DenseBaseline {
    let states = 2usize.pow(tau);
    let actions = slots.len() + 1;
    let mut entries = Vec::with_capacity(states * actions);
    for s in 0..states {
        if s == 0 {
            let mut row = vec![0.0; states];
            row[0] += 1.0 - p;
            row[2usize.pow(tau - 1)] += p;
            entries.push(Some(DenseAction { duration: 1.0, reward: 0.0, row }));
            entries.extend((1..actions).map(|_| None));
            continue;
        }
        let mut k = 0;
        while (s / 2usize.pow(k)) % 2 == 0 {
            k += 1;
        }
        let hol = 2usize.pow(k);
        let remaining = k + 1;
        let rest = s - hol;
        let mut row = vec![0.0; states];
        row[rest] = 1.0;
        entries.push(Some(DenseAction { duration: 0.0, reward: 0.0, row }));
        for (&t, &rho) in slots.iter().zip(accuracy) {
            if t > remaining {
                entries.push(None);
                continue;
            }
            let mut row = vec![0.0; states];
            for i in 0..2usize.pow(t) {
                let b = ones(i);
                let next = 2usize.pow(tau - t) * i + rest / 2usize.pow(t);
                row[next] += p.powi(b) * (1.0 - p).powi(t as i32 - b);
            }
            let success = (1.0 - pe).powi(t as i32);
            entries.push(Some(DenseAction { duration: t as f64, reward: rho * success, row }));
        }
    }
    DenseBaseline { states, actions, entries }
}

pub struct OracleSolution {
    pub gain: f64,
    /// Relative values with `h(0) = 0`.
    pub values: Vec<f64>,
    /// Greedy action, ties within 1e-10 going to the highest index.
    pub policy: Vec<usize>,
}

fn q_value(a: &DenseAction, h: &[f64], g: f64) -> f64 {
    a.reward - g * a.duration + a.row.iter().zip(h).map(|(p, v)| p * v).sum::<f64>()
}

/// Policy iteration with exact evaluation of `h + g d = r + P h`, `h(0) = 0`.
pub fn policy_iteration(m: &DenseBaseline) -> OracleSolution {
    let (n, na) = (m.states, m.actions);
    let mut policy: Vec<usize> =
        (0..n).map(|s| (0..na).find(|&a| m.entries[s * na + a].is_some()).expect("feasible action")).collect();
    loop {
        let mut lhs = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for s in 0..n {
            let a = m.entries[s * na + policy[s]].as_ref().unwrap();
            lhs[(s, s)] += 1.0;
            for (j, &p) in a.row.iter().enumerate() {
                lhs[(s, j)] -= p;
            }
            lhs[(s, n)] = a.duration;
            rhs[s] = a.reward;
        }
        lhs[(n, 0)] = 1.0;
        let x = lhs.lu().solve(&rhs).expect("nonsingular evaluation system");
        let h: Vec<f64> = x.iter().take(n).copied().collect();
        let g = x[n];

        let mut changed = false;
        let mut greedy = vec![0; n];
        for s in 0..n {
            let q: Vec<f64> = (0..na)
                .map(|a| m.entries[s * na + a].as_ref().map_or(f64::NEG_INFINITY, |e| q_value(e, &h, g)))
                .collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            greedy[s] = (0..na).rev().find(|&a| q[a] >= best - 1e-10).unwrap();
            if q[policy[s]] < best - 1e-12 {
                policy[s] = (0..na).find(|&a| q[a] == best).unwrap();
                changed = true;
            }
        }
        if !changed {
            return OracleSolution { gain: g, values: h, policy: greedy };
        }
    }
}

/// Best total expected reward of serving `arrivals` in order, each task either
/// dropped or sent at one option as early as possible, by exhaustive search.
pub fn brute_force_offline(arrivals: &[u64], tau: u64, options: &[(u32, f64)]) -> f64 {
    fn go(i: usize, free_at: u64, acc: f64, arrivals: &[u64], tau: u64, options: &[(u32, f64)]) -> f64 {
        if i == arrivals.len() {
            return acc;
        }
        let mut best = go(i + 1, free_at, acc, arrivals, tau, options);
        for &(slots, reward) in options {
            let start = free_at.max(arrivals[i]);
            if start + slots as u64 <= arrivals[i] + tau {
                best = best.max(go(i + 1, start + slots as u64, acc + reward, arrivals, tau, options));
            }
        }
        best
    }
    go(0, 0, 0.0, arrivals, tau, options)
}
