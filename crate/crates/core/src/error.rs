//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::routing::ConstraintTag;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (probabilities, rates, empty grids, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A decision violates the decision-space constraints for a state.
    #[error("infeasible decision for technician {technician}: {constraint}")]
    Infeasible { technician: u32, constraint: ConstraintTag },

    /// Inconsistent data handed across module boundaries, e.g. a failed-visit
    /// set containing a customer that was never assigned as risky.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Structurally invalid input, e.g. a route listing a customer twice.
    #[error("structural error: {0}")]
    Structure(String),

    /// Travel-time lookup for a node id that is not part of the model.
    #[error("unknown node id {0}")]
    UnknownNode(u32),

    /// A persisted document could not be parsed.
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    /// A persisted document carries an unsupported format version.
    #[error("unsupported format version {found}, expected {expected}")]
    Version { expected: u32, found: u32 },

    /// Weight/dimension mismatch when loading a model.
    #[error("model shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    /// Non-finite values in a loaded or evaluated model.
    #[error("model corruption: {0}")]
    ModelCorruption(String),

    /// Problem size exceeds what the exact oracle is willing to enumerate.
    #[error("oracle refusal: {0}")]
    OracleRefusal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
