use thiserror::Error;

/// Errors produced by the solvers, the simulator and the file readers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("compression profile has no options")]
    EmptyProfile,
    #[error("invalid compression option {index}: {reason}")]
    InvalidOption { index: usize, reason: String },
    #[error("slots and accuracy must not increase with the compression ratio (options {first} and {second})")]
    MonotonicityViolation { first: usize, second: usize },
    #[error("options {first} and {second} both take {slots} slots")]
    DuplicateSlots { first: usize, second: usize, slots: u32 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid arrival trace: {0}")]
    InvalidTrace(String),
    #[error("remaining deadline {deadline} outside [1, {tau}]")]
    OutOfRange { deadline: u32, tau: u32 },
    #[error("cannot remove the head-of-line task from an empty queue")]
    EmptyQueue,

    #[error("state {0} has no feasible action")]
    NoFeasibleAction(usize),
    #[error("zero-duration actions form a cycle through state {0}")]
    ZeroDurationCycle(usize),
    #[error("value iteration did not converge after {iterations} sweeps (span {span:e})")]
    NonConvergence { iterations: usize, span: f64 },

    #[error("invalid conditional table: {0}")]
    InvalidConditionalTable(String),
    #[error("uncertainty levels mismatch: tables have {tables}, expected {expected}")]
    LevelMismatch { tables: usize, expected: usize },
    #[error("row {row:?} of `{table}` sums to {sum}")]
    RowSumViolation { table: &'static str, row: Vec<usize>, sum: f64 },
    #[error("entry {index:?} of `{table}` is {value}, outside [0, 1]")]
    RangeViolation { table: &'static str, index: Vec<usize>, value: f64 },
    #[error("table `{table}` has {found} entries, expected {expected}")]
    ShapeMismatch { table: &'static str, expected: usize, found: usize },
    #[error("invalid output distribution: {0}")]
    InvalidDistribution(String),
    #[error("output log does not cover option {0}")]
    MissingOption(usize),
    #[error("output log samples cannot be joined across options: {0}")]
    UnjoinableSamples(String),

    #[error("policy is incompatible with the simulated system: {0}")]
    IncompatiblePolicy(String),
    #[error("policy `{0}` needs conditional tables")]
    MissingTables(&'static str),
    #[error("schedule does not match the trace: {0}")]
    TraceMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
