//! System model: compression options, the erasure channel, Bernoulli arrivals.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest supported deadline. Queue states are `deadline`-bit integers and
/// the baseline MDP is solved densely over all of them.
pub const MAX_DEADLINE: u32 = 20;

/// One selectable compression level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionOption {
    /// Raw size over compressed size, at least 1.
    pub ratio: f64,
    /// Slots needed to transmit the compressed sample.
    pub slots: u32,
    /// Probability that inference on the compressed sample is correct.
    pub accuracy: f64,
}

impl CompressionOption {
    pub fn new(ratio: f64, slots: u32, accuracy: f64) -> Self {
        Self { ratio, slots, accuracy }
    }

    /// The virtual option that abandons a task: no slots, no reward.
    pub fn drop_option() -> Self {
        Self { ratio: f64::INFINITY, slots: 0, accuracy: 0.0 }
    }

    fn check(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| Error::InvalidOption { index, reason: reason.to_string() };
        if !(self.ratio >= 1.0) || !self.ratio.is_finite() {
            return Err(bad("ratio must be a finite number >= 1"));
        }
        if self.slots == 0 {
            return Err(bad("slots must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(bad("accuracy must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Validated set of compression options, sorted by descending ratio.
///
/// Sorting by descending ratio means slots strictly increase with the option
/// index and accuracy never decreases, so option 0 is the fastest and the
/// last option the most accurate. The drop option is not stored; solvers add
/// it to their action sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionProfile {
    options: Vec<CompressionOption>,
}

/// Sorts and checks a list of options.
///
/// Slot counts must be distinct so that a duration maps back to at most one
/// option, and neither slots nor accuracy may grow with the ratio.
pub fn validate_profile(mut options: Vec<CompressionOption>) -> Result<CompressionProfile> {
    if options.is_empty() {
        return Err(Error::EmptyProfile);
    }
    for (i, o) in options.iter().enumerate() {
        o.check(i)?;
    }
    options.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    for i in 0..options.len() {
        for j in i + 1..options.len() {
            if options[i].slots == options[j].slots {
                return Err(Error::DuplicateSlots { first: i, second: j, slots: options[i].slots });
            }
        }
    }
    for (i, pair) in options.windows(2).enumerate() {
        let (hi, lo) = (&pair[0], &pair[1]);
        if hi.ratio == lo.ratio || hi.slots > lo.slots || hi.accuracy > lo.accuracy {
            return Err(Error::MonotonicityViolation { first: i, second: i + 1 });
        }
    }
    Ok(CompressionProfile { options })
}

impl CompressionProfile {
    pub fn new(options: Vec<CompressionOption>) -> Result<Self> {
        validate_profile(options)
    }

    pub fn options(&self) -> &[CompressionOption] {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn option(&self, index: usize) -> &CompressionOption {
        &self.options[index]
    }

    pub fn slots(&self, index: usize) -> u32 {
        self.options[index].slots
    }

    pub fn accuracy(&self, index: usize) -> f64 {
        self.options[index].accuracy
    }

    /// Inverse of T: the option that takes exactly `slots` slots.
    pub fn by_slots(&self, slots: u32) -> Option<usize> {
        self.options.iter().position(|o| o.slots == slots)
    }

    pub fn min_slots(&self) -> u32 {
        self.options[0].slots
    }

    pub fn max_slots(&self) -> u32 {
        self.options[self.options.len() - 1].slots
    }

    /// Stable digest of the options, used to tie serialized policies to a profile.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for o in &self.options {
            h.update(o.ratio.to_bits().to_le_bytes());
            h.update(o.slots.to_le_bytes());
            h.update(o.accuracy.to_bits().to_le_bytes());
        }
        short_hex(&h.finalize())
    }
}

pub(crate) fn short_hex(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// i.i.d. per-slot packet erasures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    slot_loss_prob: f64,
}

impl ChannelModel {
    pub fn new(slot_loss_prob: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&slot_loss_prob) {
            return Err(Error::InvalidParameter {
                name: "slot_loss_prob",
                reason: format!("{slot_loss_prob} is outside [0, 1)"),
            });
        }
        Ok(Self { slot_loss_prob })
    }

    pub fn lossless() -> Self {
        Self { slot_loss_prob: 0.0 }
    }

    pub fn slot_loss_prob(&self) -> f64 {
        self.slot_loss_prob
    }

    /// Packet error ratio of a `slots`-long transmission.
    pub fn per(&self, slots: u32) -> f64 {
        per_of(slots, self)
    }
}

/// Probability that at least one of `slots` packets is lost: 1 − (1 − p_e)^slots.
pub fn per_of(slots: u32, channel: &ChannelModel) -> f64 {
    1.0 - (1.0 - channel.slot_loss_prob).powi(slots as i32)
}

/// Expected reward of serving a task with `option`: accuracy times delivery probability.
pub fn expected_reward(option: &CompressionOption, channel: &ChannelModel) -> f64 {
    option.accuracy * (1.0 - per_of(option.slots, channel))
}

/// Bernoulli task arrivals, at most one per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    arrival_prob: f64,
}

impl ArrivalModel {
    pub fn new(arrival_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&arrival_prob) {
            return Err(Error::InvalidParameter {
                name: "arrival_prob",
                reason: format!("{arrival_prob} is outside [0, 1]"),
            });
        }
        Ok(Self { arrival_prob })
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub deadline: u32,
    pub profile: CompressionProfile,
    pub channel: ChannelModel,
    pub arrivals: ArrivalModel,
}

impl SystemConfig {
    pub fn new(deadline: u32, profile: CompressionProfile, channel: ChannelModel, arrivals: ArrivalModel) -> Result<Self> {
        if deadline == 0 || deadline > MAX_DEADLINE {
            return Err(Error::InvalidParameter {
                name: "deadline",
                reason: format!("{deadline} is outside [1, {MAX_DEADLINE}]"),
            });
        }
        Ok(Self { deadline, profile, channel, arrivals })
    }

    pub fn with_deadline(&self, deadline: u32) -> Result<Self> {
        Self::new(deadline, self.profile.clone(), self.channel, self.arrivals)
    }

    pub fn with_arrival_prob(&self, p: f64) -> Result<Self> {
        Self::new(self.deadline, self.profile.clone(), self.channel, ArrivalModel::new(p)?)
    }

    pub fn with_slot_loss_prob(&self, pe: f64) -> Result<Self> {
        Self::new(self.deadline, self.profile.clone(), ChannelModel::new(pe)?, self.arrivals)
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrivals.arrival_prob()
    }

    pub fn slot_loss_prob(&self) -> f64 {
        self.channel.slot_loss_prob()
    }

    /// Expected reward of each option on this system's channel.
    pub fn option_rewards(&self) -> Vec<f64> {
        self.profile.options().iter().map(|o| expected_reward(o, &self.channel)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mnist() -> Vec<CompressionOption> {
        vec![
            CompressionOption::new(49.0, 1, 0.89),
            CompressionOption::new(16.0, 3, 0.97),
            CompressionOption::new(4.0, 10, 0.98),
        ]
    }

    #[test]
    fn per_matches_closed_form() {
        let ch = ChannelModel::new(0.1).unwrap();
        assert!((per_of(1, &ch) - 0.1).abs() < 1e-15);
        assert_eq!(per_of(0, &ch), 0.0);
        assert!((per_of(3, &ch) - 0.271).abs() < 1e-12);
    }

    #[test]
    fn per_composes_over_independent_blocks() {
        for pe in [0.0, 0.03, 0.5, 0.9] {
            let ch = ChannelModel::new(pe).unwrap();
            for s1 in 0..6 {
                for s2 in 0..6 {
                    let joint = 1.0 - (1.0 - per_of(s1, &ch)) * (1.0 - per_of(s2, &ch));
                    assert!((per_of(s1 + s2, &ch) - joint).abs() < 1e-12);
                    if s2 > s1 {
                        assert!(per_of(s2, &ch) >= per_of(s1, &ch));
                    }
                }
            }
        }
    }

    #[test]
    fn expected_reward_examples() {
        let lossless = ChannelModel::lossless();
        assert_eq!(expected_reward(&CompressionOption::new(49.0, 1, 0.89), &lossless), 0.89);
        assert_eq!(expected_reward(&CompressionOption::drop_option(), &ChannelModel::new(0.3).unwrap()), 0.0);
        let r = expected_reward(&CompressionOption::new(16.0, 3, 0.97), &ChannelModel::new(0.1).unwrap());
        assert!((r - 0.70713).abs() < 1e-12);
    }

    #[test]
    fn fixtures_validate() {
        let p = validate_profile(mnist()).unwrap();
        assert_eq!(p.len(), 3);
        let c = validate_profile(vec![
            CompressionOption::new(1.0, 8, 0.92),
            CompressionOption::new(7.0, 1, 0.81),
            CompressionOption::new(4.0, 2, 0.87),
        ])
        .unwrap();
        assert_eq!(c.options().iter().map(|o| o.slots).collect::<Vec<_>>(), vec![1, 2, 8]);
        assert_eq!(c.by_slots(2), Some(1));
        assert_eq!(c.by_slots(3), None);
    }

    #[test]
    fn validation_errors() {
        let dup = validate_profile(vec![CompressionOption::new(49.0, 1, 0.89), CompressionOption::new(16.0, 1, 0.97)]);
        assert!(matches!(dup, Err(Error::DuplicateSlots { .. })));
        assert_eq!(validate_profile(vec![]), Err(Error::EmptyProfile));
        let non_mono = validate_profile(vec![CompressionOption::new(49.0, 1, 0.95), CompressionOption::new(16.0, 3, 0.90)]);
        assert!(matches!(non_mono, Err(Error::MonotonicityViolation { .. })));
        let slots_up = validate_profile(vec![CompressionOption::new(49.0, 4, 0.8), CompressionOption::new(16.0, 3, 0.9)]);
        assert!(matches!(slots_up, Err(Error::MonotonicityViolation { .. })));
        let bad_acc = validate_profile(vec![CompressionOption::new(49.0, 1, 1.2)]);
        assert!(matches!(bad_acc, Err(Error::InvalidOption { .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_profile(mnist()).unwrap();
        let twice = validate_profile(once.options().to_vec()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.digest(), twice.digest());
    }

    #[test]
    fn parameter_ranges() {
        assert!(ChannelModel::new(1.0).is_err());
        assert!(ArrivalModel::new(1.0).is_ok());
        assert!(ArrivalModel::new(-0.1).is_err());
        let p = validate_profile(mnist()).unwrap();
        assert!(SystemConfig::new(0, p.clone(), ChannelModel::lossless(), ArrivalModel::new(0.1).unwrap()).is_err());
        assert!(SystemConfig::new(12, p, ChannelModel::lossless(), ArrivalModel::new(0.1).unwrap()).is_ok());
    }
}
