use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state space needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("duplicate state label {0:?}")]
    DuplicateLabel(String),
    #[error("state index {index} out of range for {n} states")]
    StateOutOfRange { index: usize, n: usize },

    #[error("negative rate at ({from}, {to})")]
    NegativeRate { from: usize, to: usize },
    #[error("duplicate rate entry ({from}, {to})")]
    DuplicateEntry { from: usize, to: usize },
    #[error("self loop at state {0}")]
    SelfLoop(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("row {row} of the generator sums to {sum:e}")]
    RowSum { row: usize, sum: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("measure weight at state {0} is not strictly positive")]
    NonPositiveWeight(usize),

    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("invalid times s = {s}, t = {t} (need 0 <= s <= t)")]
    BadTimes { s: f64, t: f64 },

    #[error("jump graph is not strongly connected ({components} components)")]
    Reducible { components: usize },
    #[error("measure is not invariant for the generator (residual {residual:e})")]
    NotInvariant { residual: f64 },
    #[error("generator is not reversible w.r.t. the measure (residual {residual:e})")]
    NotReversible { residual: f64 },
    #[error("linear solve failed: {0}")]
    Singular(&'static str),

    #[error("non-reversible base needs a nonnegative direction (min f = {min}); shift f by a constant, e.g. shift_to_nonnegative")]
    NegativeDirection { min: f64 },
    #[error("b violates the mu0-balance condition (residual {residual:e})")]
    BalanceViolation { residual: f64 },
    #[error("b({from}, {to}) < 0 where c({from}, {to}) = 0")]
    UnboundedBelow { from: usize, to: usize },
    #[error("delta = {delta} outside the family's validity range (cap {cap})")]
    DeltaTooLarge { delta: f64, cap: f64 },
    #[error("negative perturbation strength {0}")]
    NegativeDelta(f64),
    #[error("malformed cycle: {0}")]
    MalformedCycle(String),
    #[error("negative cycle weight alpha = {0}")]
    NegativeAlpha(f64),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("malformed edge set: {0}")]
    MalformedGraph(String),
    #[error("direction does not match the family's direction")]
    DirectionMismatch,
    #[error("the generator at delta = {delta} is not symmetric w.r.t. its tilted measure (residual {residual:e})")]
    NotSymmetricFamily { delta: f64, residual: f64 },

    #[error("initial measure is not a probability measure")]
    UnnormalizedInitial,
    #[error("precondition for derivative mode {mode} failed (residual {residual:e})")]
    ModePreconditionFailed { mode: &'static str, residual: f64 },

    #[error("empty grid")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("time step too large: dt * sup|b| = {0} >= 0.1")]
    UnstableStep(f64),
    #[error("negative discretized rate {rate} at grid node {node}; refine the grid")]
    RateNegative { node: usize, rate: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
