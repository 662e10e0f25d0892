// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("net `{net}` references unknown instance or port `{reference}`")]
    DanglingReference { net: String, reference: String },

    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("net `{0}` has fewer than two pins")]
    DegenerateNet(String),

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("infeasible macro area: {area} exceeds budget {budget}")]
    InfeasibleArea { area: f64, budget: f64 },

    #[error("prototype is missing a position for `{0}`")]
    MissingInstance(String),

    #[error("prototype diverged: objective increased for {0} consecutive iterations")]
    Divergence(usize),

    #[error("non-finite objective or gradient in angle optimization: {0}")]
    NonFinite(String),

    #[error("every group/corner assignment is banned or masked")]
    AllBanned,

    #[error("iteration {iteration}: no macro group could be placed ({unplaced} macros left)")]
    Stuck { iteration: usize, unplaced: usize },

    #[error("outer iteration cap {0} reached with macros still unplaced")]
    CapExceeded(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("placement file: {0}")]
    Placement(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
