use std::path::PathBuf;

use crate::expr::ExprError;

/// Standing assumption a scenario can violate. Validation errors name one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Drift, coupling and cost must be finite where evaluated.
    Finiteness,
    /// Lipschitz continuity of the drift and coupling in (t, x).
    Lipschitz,
    /// Coupling nonnegativity and linear growth of the drift.
    CouplingAndGrowth,
    /// Convexity and global Lipschitz continuity of the potential.
    Potential,
    /// The friction measure is finite and nonnegative.
    Measure,
    /// The target tube has closed graph.
    TargetClosed,
    /// The cost is finite and Lipschitz near the target.
    CostRegularity,
    /// Everything not covered above: grids, controls, numerics.
    Configuration,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Assumption::Finiteness => "finiteness of data",
            Assumption::Lipschitz => "Lipschitz drift and coupling",
            Assumption::CouplingAndGrowth => "coupling positivity and drift growth",
            Assumption::Potential => "convex Lipschitz potential",
            Assumption::Measure => "friction measure",
            Assumption::TargetClosed => "closed target graph",
            Assumption::CostRegularity => "cost regularity near target",
            Assumption::Configuration => "configuration",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("expression error in `{field}`: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("validation failed ({assumption}): {message}; witness: {witness}")]
    Validation { assumption: Assumption, message: String, witness: String },
    #[error("degenerate state box: {0}")]
    DegenerateBox(String),
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("query ({t}, {x:?}) lies outside the grid")]
    OutOfGrid { t: f64, x: Vec<f64> },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("no decreasing direction at t = {t}, x = {x:?} (best quotient {best})")]
    NoDecreasingDirection { t: f64, x: Vec<f64>, best: f64 },
    #[error("start point is outside the steering neighborhood (distance {distance} >= theta {theta})")]
    OutsideNeighborhood { distance: f64, theta: f64 },
    #[error("target tube has no boundary inside the state box")]
    NoBoundary,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(assumption: Assumption, message: impl Into<String>, witness: impl Into<String>) -> Self {
        Error::Validation { assumption, message: message.into(), witness: witness.into() }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Parse(_) | Error::Expr { .. } | Error::DegenerateBox(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
