//! Deadline-constrained scheduling of compressed inference requests over a
//! slotted uplink: offline optimum, average-reward MDP policies, and a
//! discrete-time simulator.

pub mod error;
pub mod fixtures;
pub mod io;
pub mod mdp;
pub mod model;
pub mod offline;
pub mod policies;
pub mod simulator;
pub mod tables;

pub use error::{Error, Result};
pub use mdp::{
    arrival_block_prob, enumerate_reachable_states, relative_value_iteration, relative_value_iteration_from,
    ArrivalBlocks, Mdp, QueueState, ReachableStates, ValueIterationResult, ViOptions,
};
pub use model::{
    expected_reward, per_of, validate_profile, ArrivalModel, ChannelModel, CompressionOption, CompressionProfile,
    SystemConfig, MAX_DEADLINE,
};
pub use offline::{dp_cell, solve_offline, ArrivalTrace, DpTables, OfflineSchedule, ScheduledTask};
pub use policies::{
    build_augmentation_known, build_augmentation_uncertainty, build_baseline, build_retransmission,
    fixed_ratio_policy, loss_unaware_retransmission, FixedRatioPolicy, Policy, PolicyKind, PolicySpec, PolicyTable,
};
pub use tables::{build_tables, quantize, synth_tables, uncertainty, validate_tables, ConditionalTables, OutputLog};
pub use simulator::{
    generate_trace, replay_offline, replicate, run, run_with_records, summarize, sweep, ArrivalSource, Outcome,
    SimConfig, SimSeeds, SimulationReport, Summary, SweepParameter, SweepRow, TaskRecord,
};
