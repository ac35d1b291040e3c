use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("class {class}: {reason}")]
    InvalidClass { class: usize, reason: String },

    #[error("scenario has no customer classes")]
    NoClasses,

    #[error("expected {expected} per-class values, got {got} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Exact enumeration was asked for a state space beyond the configured bound.
    #[error("state space has {states} states, above the enumeration bound of {bound}")]
    StateSpaceTooLarge { states: f64, bound: f64 },

    #[error("no capacity up to {ceiling} meets the targets")]
    TargetsUnreachable { ceiling: u64 },

    #[error("class {class} is saturated (LoLP = 1); its price is undefined")]
    SaturatedClass { class: usize },

    #[error("class {class} has zero price and positive utility weight; demand is unbounded")]
    UnboundedDemand { class: usize },
}
