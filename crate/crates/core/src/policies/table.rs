use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{AugmentedStateKnown, AugmentedStateUncertainty, RetransStateLoss};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, QueueState, ValueIterationResult};
use crate::model::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Baseline,
    AugmentKnown,
    AugmentUncertainty,
    Retransmission,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::AugmentKnown => "augment-known",
            PolicyKind::AugmentUncertainty => "augment-uncertainty",
            PolicyKind::Retransmission => "retransmission",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => PolicyKind::Baseline,
            "augment-known" => PolicyKind::AugmentKnown,
            "augment-uncertainty" => PolicyKind::AugmentUncertainty,
            "retransmission" => PolicyKind::Retransmission,
            other => return Err(Error::Format(format!("unknown policy kind `{other}`"))),
        })
    }
}

const UNREACHABLE: u8 = u8::MAX;

/// A solved policy: the chosen action for every reachable state key, plus the
/// parameters it was solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub kind: PolicyKind,
    pub deadline: u32,
    pub options: usize,
    /// Uncertainty levels; zero for kinds that do not use them.
    pub levels: usize,
    pub profile_digest: String,
    pub tables_digest: Option<String>,
    pub arrival_prob: f64,
    pub slot_loss_prob: f64,
    /// Long-run expected reward per slot under this policy.
    pub average_reward: f64,
    pub iterations: usize,
    pub span: f64,
    pub converged: bool,
    actions: Vec<u8>,
}

impl PolicyTable {
    pub(crate) fn from_result<M: Mdp>(
        kind: PolicyKind,
        config: &SystemConfig,
        levels: usize,
        tables_digest: Option<String>,
        mdp: &M,
        result: &ValueIterationResult,
    ) -> Result<Self> {
        let mut actions = vec![UNREACHABLE; mdp.state_count()];
        for (&key, &a) in result.states.keys().iter().zip(&result.policy) {
            if !mdp.is_feasible(key, a as usize) {
                return Err(Error::NoFeasibleAction(key));
            }
            actions[key] = a as u8;
        }
        Ok(Self {
            kind,
            deadline: config.deadline,
            options: config.profile.len(),
            levels,
            profile_digest: config.profile.digest(),
            tables_digest,
            arrival_prob: config.arrival_prob(),
            slot_loss_prob: config.slot_loss_prob(),
            average_reward: result.average_reward,
            iterations: result.iterations,
            span: result.span,
            converged: result.converged,
            actions,
        })
    }

    /// Chosen action, `None` for keys the policy never reaches.
    pub fn action(&self, key: usize) -> Option<usize> {
        match self.actions.get(key) {
            Some(&a) if a != UNREACHABLE => Some(a as usize),
            _ => None,
        }
    }

    pub fn key_count(&self) -> usize {
        self.actions.len()
    }

    pub fn reachable(&self) -> usize {
        self.actions.iter().filter(|&&a| a != UNREACHABLE).count()
    }

    /// `(key, action)` for every reachable state in key order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions.iter().enumerate().filter(|(_, &a)| a != UNREACHABLE).map(|(k, &a)| (k, a as usize))
    }

    fn key_space(kind: PolicyKind, deadline: u32, options: usize, levels: usize) -> usize {
        let q = 1usize << deadline;
        match kind {
            PolicyKind::Baseline => q,
            PolicyKind::AugmentKnown => q * (options + 1) * options * 4,
            PolicyKind::AugmentUncertainty => q * (options + 1) * options * levels * 2,
            PolicyKind::Retransmission => q * (options + 1) * deadline as usize * 2,
        }
    }

    /// Human-readable state for `key`.
    pub fn describe_state(&self, key: usize) -> String {
        let n = self.options;
        let fmt_last = |l: Option<usize>| l.map_or("none".to_string(), |l| l.to_string());
        match self.kind {
            PolicyKind::Baseline => format!("queue={:?}", QueueState::raw(key as u32).decode()),
            PolicyKind::AugmentKnown => {
                let s = AugmentedStateKnown::from_key(key, n);
                format!(
                    "queue={:?} last={} considered={} correct={} detached={}",
                    s.queue.decode(),
                    fmt_last(s.last),
                    s.considered,
                    s.correct as u8,
                    s.detached as u8
                )
            }
            PolicyKind::AugmentUncertainty => {
                let s = AugmentedStateUncertainty::from_key(key, n, self.levels);
                format!(
                    "queue={:?} last={} considered={} level={} detached={}",
                    s.queue.decode(),
                    fmt_last(s.last),
                    s.considered,
                    s.level,
                    s.detached as u8
                )
            }
            PolicyKind::Retransmission => {
                let s = RetransStateLoss::from_key(key, n, self.deadline);
                format!(
                    "queue={:?} last={} attempts={} detached={}",
                    s.queue.decode(),
                    fmt_last(s.last),
                    s.attempts,
                    s.detached as u8
                )
            }
        }
    }

    /// Human-readable name of an action.
    pub fn describe_action(&self, key: usize, action: usize) -> String {
        match self.kind {
            PolicyKind::Baseline if key == 0 => "idle".into(),
            PolicyKind::Baseline | PolicyKind::Retransmission if action == 0 => {
                if self.kind == PolicyKind::Baseline {
                    "drop".into()
                } else {
                    "skip".into()
                }
            }
            PolicyKind::Baseline | PolicyKind::Retransmission => format!("option {}", action - 1),
            _ if action == 1 => "transmit".into(),
            _ => "skip".into(),
        }
    }

    /// Writes the policy as `key=value` header lines followed by one
    /// `state action` line per reachable state.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# edgeinf policy\n");
        let _ = writeln!(out, "kind={}", self.kind);
        let _ = writeln!(out, "deadline={}", self.deadline);
        let _ = writeln!(out, "options={}", self.options);
        let _ = writeln!(out, "levels={}", self.levels);
        let _ = writeln!(out, "profile={}", self.profile_digest);
        let _ = writeln!(out, "tables={}", self.tables_digest.as_deref().unwrap_or("-"));
        let _ = writeln!(out, "arrival_prob={}", self.arrival_prob);
        let _ = writeln!(out, "slot_loss_prob={}", self.slot_loss_prob);
        let _ = writeln!(out, "average_reward={}", self.average_reward);
        let _ = writeln!(out, "iterations={}", self.iterations);
        let _ = writeln!(out, "span={}", self.span);
        let _ = writeln!(out, "converged={}", self.converged);
        let _ = writeln!(out, "states={}", self.reachable());
        for (k, a) in self.entries() {
            let _ = writeln!(out, "{k} {a}");
        }
        out
    }

    /// Like [`to_text`](Self::to_text) but with decoded states and action names.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "# {} policy, deadline {}, reward per slot {:.6}, {} states\n",
            self.kind,
            self.deadline,
            self.average_reward,
            self.reachable()
        );
        for (k, a) in self.entries() {
            let _ = writeln!(out, "{} -> {}", self.describe_state(k), self.describe_action(k, a));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = BTreeMap::new();
        let mut body = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            if let Some((k, v)) = line.split_once('=') {
                if !body.is_empty() {
                    return Err(err("header line after state lines".into()));
                }
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                let mut it = line.split_whitespace();
                let parse = |s: Option<&str>| -> Result<usize> {
                    s.and_then(|s| s.parse().ok()).ok_or_else(|| err(format!("expected `key action`, got `{line}`")))
                };
                let key = parse(it.next())?;
                let action = parse(it.next())?;
                if it.next().is_some() {
                    return Err(err(format!("expected `key action`, got `{line}`")));
                }
                body.push((i + 1, key, action));
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("policy file missing `{k}`")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Format(format!("policy file: bad `{k}` value `{v}`")))
        }
        let kind: PolicyKind = get("kind")?.parse()?;
        let deadline: u32 = num("deadline", get("deadline")?)?;
        if deadline == 0 || deadline > crate::model::MAX_DEADLINE {
            return Err(Error::Format(format!("policy file: deadline {deadline} out of range")));
        }
        let options: usize = num("options", get("options")?)?;
        let levels: usize = num("levels", get("levels")?)?;
        let space = Self::key_space(kind, deadline, options, levels);
        let mut actions = vec![UNREACHABLE; space];
        let action_limit = match kind {
            PolicyKind::Baseline | PolicyKind::Retransmission => options + 1,
            _ => 2,
        };
        for (line, key, action) in body {
            if key >= space || action >= action_limit {
                return Err(Error::Parse { line, message: format!("state {key} action {action} out of range") });
            }
            actions[key] = action as u8;
        }
        let tables = get("tables")?;
        Ok(Self {
            kind,
            deadline,
            options,
            levels,
            profile_digest: get("profile")?.clone(),
            tables_digest: (tables != "-").then(|| tables.clone()),
            arrival_prob: num("arrival_prob", get("arrival_prob")?)?,
            slot_loss_prob: num("slot_loss_prob", get("slot_loss_prob")?)?,
            average_reward: num("average_reward", get("average_reward")?)?,
            iterations: num("iterations", get("iterations")?)?,
            span: num("span", get("span")?)?,
            converged: num("converged", get("converged")?)?,
            actions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mdp::ViOptions;
    use crate::policies::build_baseline;

    #[test]
    fn text_roundtrip() {
        let cfg = fixtures::mnist().with_deadline(6).unwrap();
        let t = build_baseline(&cfg, &ViOptions::default()).unwrap();
        let back = PolicyTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert!(t.dump().contains("queue=[] -> idle"));
    }

    #[test]
    fn malformed_files() {
        assert!(PolicyTable::from_text("kind=baseline\n").is_err());
        let cfg = fixtures::mnist().with_deadline(4).unwrap();
        let text = build_baseline(&cfg, &ViOptions::default()).unwrap().to_text();
        let bad = format!("{text}99999 1\n");
        assert!(matches!(PolicyTable::from_text(&bad), Err(Error::Parse { .. })));
        let bad = text.replace("kind=baseline", "kind=greedy");
        assert!(PolicyTable::from_text(&bad).is_err());
    }
}
