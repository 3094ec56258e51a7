//! Agent-based assignment planning for manufacturing.
//!
//! Working steps of workpieces become nodes of a constraint network that
//! propagate start positions along each piece, check cross-piece constraints
//! and widen their value sets when they run dry. The sequence of those
//! activities is driven by two small Petri nets. On top sits an ant colony
//! optimizer that explores machine choices, deliberate start delays and
//! within-group step orders, and an exhaustive oracle for small instances.

pub mod aco;
pub mod csp;
pub mod generate;
pub mod model;
pub mod oracle;
pub mod protocol;
pub mod render;

use thiserror::Error;

/// Any failure of the library, for callers that do not care which stage failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] model::ParseError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Csp(#[from] csp::CspError),
    #[error(transparent)]
    Aco(#[from] aco::AcoError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}

impl Error {
    /// Name of the failing error variant, e.g. `HorizonExhausted`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Parse(model::ParseError::Syntax { .. }) => "SyntaxError",
            Error::Parse(_) => "SemanticError",
            Error::Model(_) => "ModelError",
            Error::Csp(e) => e.name(),
            Error::Aco(e) => e.name(),
            Error::Oracle(oracle::OracleError::LimitExceeded(_)) => "LimitExceeded",
            Error::Oracle(oracle::OracleError::Infeasible) => "Infeasible",
        }
    }
}
