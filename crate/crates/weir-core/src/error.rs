//! Crate-wide error type.
//!
//! Errors split into two categories: `Validation` covers anything wrong
//! with an input document or configuration (detectable before a run), and
//! `Runtime` covers failures while a run is in progress. The CLI maps the
//! categories to distinct exit codes.

use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    // Document and schema problems.
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path} line {line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate community id `{0}`")]
    DuplicateCommunity(String),
    #[error("duplicate edge `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` references missing node `{node}`")]
    DanglingEdge { edge: String, node: String },
    #[error("support edge `{0}` must have weight > 0")]
    NonPositiveWeight(String),
    #[error("edge `{edge}`: {message}")]
    BadEdge { edge: String, message: String },
    #[error("node `{node}`: {message}")]
    BadNode { node: String, message: String },
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("unknown community id `{0}`")]
    UnknownCommunity(String),
    #[error("patch for community `{community}` rejected: {message}")]
    PatchRejected { community: String, message: String },
    #[error("scenario invalid: {0}")]
    Scenario(String),

    // Runtime problems.
    #[error("packet energy cost must be > 0 (got {0})")]
    NonPositivePacketCost(f64),
    #[error("state-of-charge history is empty")]
    EmptyHistory,
    #[error("capacity cap {cap} infeasible: pinned usage alone is {pinned_usage}")]
    CapacityInfeasible { cap: u64, pinned_usage: u64 },
    #[error("unknown observation id `{0}`")]
    UnknownObservation(String),
    #[error("runs are not comparable: {0}")]
    NotComparable(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            context: context.to_string(),
            source,
        }
    }

    pub fn schema(path: impl fmt::Display, message: impl fmt::Display) -> Self {
        Error::Schema {
            path: path.to_string(),
            message: message.to_string(),
        }
    }

    /// Validation errors are detectable by inspecting inputs; runtime errors
    /// only surface while executing a run.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Schema { .. }
            | Error::Line { .. }
            | Error::DuplicateNode(_)
            | Error::DuplicateCommunity(_)
            | Error::DuplicateEdge(_)
            | Error::DanglingEdge { .. }
            | Error::NonPositiveWeight(_)
            | Error::BadEdge { .. }
            | Error::BadNode { .. }
            | Error::UnknownNode(_)
            | Error::UnknownCommunity(_)
            | Error::PatchRejected { .. }
            | Error::Scenario(_) => ErrorCategory::Validation,
            Error::NonPositivePacketCost(_)
            | Error::EmptyHistory
            | Error::CapacityInfeasible { .. }
            | Error::UnknownObservation(_)
            | Error::NotComparable(_)
            | Error::Io { .. } => ErrorCategory::Runtime,
        }
    }
}
