use thiserror::Error;

use crate::geometry::Limit;
use crate::params::ProtocolFlavor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported MCS {mcs} for protocol {flavor} (supported: 0..={max})")]
    UnsupportedMcs {
        flavor: ProtocolFlavor,
        mcs: usize,
        max: usize,
    },

    #[error("MSDU does not fit in one MPDU: padded length {padded_len} B exceeds {available} B")]
    MsduTooLarge { padded_len: u64, available: u64 },

    #[error("BER must lie in [0, 1), got {0}")]
    InvalidBer(f64),

    #[error("MSDU length must be at least 1 byte")]
    EmptyMsdu,

    #[error("invalid aggregation plan: {0}")]
    InvalidPlan(String),

    #[error("plan violates the {0} limit")]
    Infeasible(Limit),

    #[error("scenario admits no transmission")]
    NoFeasiblePlan,

    #[error("x alone exceeds the airtime budget ({x} MPDUs)")]
    BudgetExceeded { x: f64 },

    #[error("closed-form optimum needs BER > 0; use reliable-channel crossover instead")]
    ReliableChannel,

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
