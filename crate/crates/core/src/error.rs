use thiserror::Error;

use crate::lp::LpError;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read instance: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed instance: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid instance at node `{node}`: {rule}")]
    Validation { node: String, rule: String },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("stage {stage} out of range 1..={max}")]
    StageOutOfRange { stage: usize, max: usize },

    #[error("node set mixes stages {0} and {1}")]
    MixedStages(usize, usize),

    #[error("node `{node}` has no realization field `{field}`")]
    MissingXiField { node: String, field: String },

    #[error("instance is infeasible")]
    InstanceInfeasible,

    #[error("instance is unbounded")]
    InstanceUnbounded,

    #[error("policy is infeasible at node `{0}`")]
    InfeasiblePolicy(String),

    #[error("Benders reached {iterations} passes with bounds [{lower}, {upper}]")]
    IterationLimit {
        iterations: usize,
        lower: f64,
        upper: f64,
    },

    #[error("invalid removal set: {0}")]
    InvalidRemoval(String),

    #[error("outcome does not belong to this tree")]
    NotSolved,

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error(transparent)]
    Lp(#[from] LpError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
