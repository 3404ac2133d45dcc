use thiserror::Error;

use crate::field::LatticeSite;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A query needed lattice data outside what has been materialized.
    #[error("boundary unsound at {site}: {reason}")]
    BoundaryUnsound { site: LatticeSite, reason: String },

    #[error("scan of {sites} sites exceeds the cap of {cap}")]
    ResourceLimit { sites: u128, cap: u128 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
