//! Online policies: the baseline queue MDP, the two information-augmentation
//! MDPs, the loss-aware retransmission MDP, and simple fixed baselines.

mod augment;
mod baseline;
mod retrans;
mod table;
mod uncertainty;

use std::fmt;
use std::str::FromStr;

pub use augment::{build_augmentation_known, AugmentKnownMdp, AugmentedStateKnown};
pub use baseline::{build_baseline, BaselineMdp};
pub use retrans::{build_retransmission, RetransMdp, RetransStateLoss};
pub use table::{PolicyKind, PolicyTable};
pub use uncertainty::{build_augmentation_uncertainty, AugmentUncertaintyMdp, AugmentedStateUncertainty};

use crate::error::{Error, Result};
use crate::mdp::{QueueState, ViOptions};
use crate::model::{CompressionProfile, SystemConfig};
use crate::tables::ConditionalTables;

/// Action index of skipping (or dropping) in the sweep-based MDPs.
pub const SKIP: usize = 0;
/// Action index of sending the considered option in the augmentation MDPs.
pub const TRANSMIT: usize = 1;

/// Always serves the head of line at one option, dropping tasks it cannot fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedRatioPolicy {
    pub option: usize,
}

pub fn fixed_ratio_policy(option: usize, profile: &CompressionProfile) -> Result<FixedRatioPolicy> {
    if option >= profile.len() {
        return Err(Error::InvalidParameter {
            name: "option",
            reason: format!("index {option} but the profile has {} options", profile.len()),
        });
    }
    Ok(FixedRatioPolicy { option })
}

/// A policy ready to be simulated.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Baseline MDP; a lost transmission fails the task.
    Baseline(PolicyTable),
    /// Baseline MDP re-consulted after a lost transmission.
    LossUnaware(PolicyTable),
    Fixed(FixedRatioPolicy),
    AugmentKnown(PolicyTable),
    AugmentUncertainty(PolicyTable),
    Retransmission(PolicyTable),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Baseline(_) => "baseline".into(),
            Policy::LossUnaware(_) => "loss-unaware".into(),
            Policy::Fixed(f) => format!("fixed:{}", f.option),
            Policy::AugmentKnown(_) => "augment-known".into(),
            Policy::AugmentUncertainty(_) => "augment-uncertainty".into(),
            Policy::Retransmission(_) => "retransmission".into(),
        }
    }

    pub fn table(&self) -> Option<&PolicyTable> {
        match self {
            Policy::Fixed(_) => None,
            Policy::Baseline(t)
            | Policy::LossUnaware(t)
            | Policy::AugmentKnown(t)
            | Policy::AugmentUncertainty(t)
            | Policy::Retransmission(t) => Some(t),
        }
    }

    pub fn needs_tables(&self) -> bool {
        matches!(self, Policy::AugmentKnown(_) | Policy::AugmentUncertainty(_))
    }
}

/// On a lost transmission keep the task queued and ask the baseline policy again.
pub fn loss_unaware_retransmission(baseline: PolicyTable) -> Result<Policy> {
    if baseline.kind != PolicyKind::Baseline {
        return Err(Error::IncompatiblePolicy(format!("expected a baseline table, got {}", baseline.kind)));
    }
    Ok(Policy::LossUnaware(baseline))
}

/// Policy names accepted on the command line and in experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySpec {
    Baseline,
    LossUnaware,
    Fixed(usize),
    AugmentKnown,
    AugmentUncertainty,
    Retransmission,
}

pub const POLICY_NAMES: &str = "baseline, loss-unaware, fixed:<option>, augment-known, augment-uncertainty, retransmission";

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => PolicySpec::Baseline,
            "loss-unaware" => PolicySpec::LossUnaware,
            "augment-known" => PolicySpec::AugmentKnown,
            "augment-uncertainty" => PolicySpec::AugmentUncertainty,
            "retransmission" => PolicySpec::Retransmission,
            other => match other.strip_prefix("fixed:").and_then(|k| k.parse().ok()) {
                Some(k) => PolicySpec::Fixed(k),
                None => {
                    return Err(Error::InvalidParameter {
                        name: "policy",
                        reason: format!("unknown policy `{other}`; expected one of {POLICY_NAMES}"),
                    })
                }
            },
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Baseline => write!(f, "baseline"),
            PolicySpec::LossUnaware => write!(f, "loss-unaware"),
            PolicySpec::Fixed(k) => write!(f, "fixed:{k}"),
            PolicySpec::AugmentKnown => write!(f, "augment-known"),
            PolicySpec::AugmentUncertainty => write!(f, "augment-uncertainty"),
            PolicySpec::Retransmission => write!(f, "retransmission"),
        }
    }
}

impl PolicySpec {
    pub fn needs_tables(&self) -> bool {
        matches!(self, PolicySpec::AugmentKnown | PolicySpec::AugmentUncertainty)
    }

    /// Solves whatever MDP the policy needs for `config`.
    pub fn build(&self, config: &SystemConfig, tables: Option<&ConditionalTables>, options: &ViOptions) -> Result<Policy> {
        let need = |name| tables.ok_or(Error::MissingTables(name));
        Ok(match *self {
            PolicySpec::Baseline => Policy::Baseline(build_baseline(config, options)?),
            PolicySpec::LossUnaware => loss_unaware_retransmission(build_baseline(config, options)?)?,
            PolicySpec::Fixed(k) => Policy::Fixed(fixed_ratio_policy(k, &config.profile)?),
            PolicySpec::AugmentKnown => {
                Policy::AugmentKnown(build_augmentation_known(config, need("augment-known")?, options)?)
            }
            PolicySpec::AugmentUncertainty => {
                Policy::AugmentUncertainty(build_augmentation_uncertainty(config, need("augment-uncertainty")?, options)?)
            }
            PolicySpec::Retransmission => Policy::Retransmission(build_retransmission(config, options)?),
        })
    }
}

/// Queue after the head of line transmits for `slots` slots and stays with
/// its task; the flag is set when the head of line ran out of deadline and
/// left the queue.
#[inline]
pub(crate) fn after_transmission(queue: QueueState, slots: u32, block: u32, tau: u32) -> (QueueState, bool) {
    let hol = queue.hol_deadline().expect("transmitting from an empty queue");
    let rest = QueueState::shift(queue.without_hol().bits(), slots, block, tau);
    if hol > slots {
        (QueueState::raw(rest.bits() | 1 << (hol - slots - 1)), false)
    } else {
        (rest, true)
    }
}
