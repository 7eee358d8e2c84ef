//! Plain-text file formats: profiles, arrival traces and offline schedules.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, ChannelModel, CompressionOption, CompressionProfile, SystemConfig};
use crate::offline::{ArrivalTrace, OfflineSchedule};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    deadline: u32,
    #[serde(default)]
    arrival_prob: f64,
    #[serde(default)]
    slot_loss_prob: f64,
    options: Vec<CompressionOption>,
}

/// Reads a TOML profile: `deadline`, `arrival_prob`, `slot_loss_prob` and an
/// `[[options]]` array of `{ ratio, slots, accuracy }`.
pub fn parse_profile(text: &str) -> Result<SystemConfig> {
    let file: ProfileFile = toml::from_str(text).map_err(|e| Error::Format(format!("profile: {e}")))?;
    SystemConfig::new(
        file.deadline,
        CompressionProfile::new(file.options)?,
        ChannelModel::new(file.slot_loss_prob)?,
        ArrivalModel::new(file.arrival_prob)?,
    )
}

pub fn write_profile(config: &SystemConfig) -> String {
    let file = ProfileFile {
        deadline: config.deadline,
        arrival_prob: config.arrival_prob(),
        slot_loss_prob: config.slot_loss_prob(),
        options: config.profile.options().to_vec(),
    };
    toml::to_string(&file).expect("profile serializes")
}

/// One arrival slot per line; blank lines and `#` comments are ignored.
pub fn parse_trace(text: &str) -> Result<ArrivalTrace> {
    let mut slots: Vec<u64> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let slot = line
            .parse::<u64>()
            .map_err(|e| Error::Parse { line: i + 1, message: format!("`{line}`: {e}") })?;
        if let Some(&prev) = slots.last() {
            if slot <= prev {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("arrival {slot} does not follow {prev}"),
                });
            }
        }
        slots.push(slot);
    }
    ArrivalTrace::new(slots)
}

pub fn write_trace(trace: &ArrivalTrace) -> String {
    let mut out = String::new();
    for a in trace.arrivals() {
        writeln!(out, "{a}").unwrap();
    }
    out
}

/// CSV with one row per task plus a trailing objective comment.
pub fn write_schedule(schedule: &OfflineSchedule, profile: &CompressionProfile) -> String {
    let mut out = String::from("task,arrival,start,slots,ratio,reward\n");
    for (i, t) in schedule.tasks.iter().enumerate() {
        let ratio = t.option.map_or("drop".to_string(), |k| profile.option(k).ratio.to_string());
        writeln!(out, "{},{},{},{},{},{}", i + 1, t.arrival, t.start, t.slots, ratio, t.reward).unwrap();
    }
    writeln!(out, "# objective,{}", schedule.objective).unwrap();
    out
}
