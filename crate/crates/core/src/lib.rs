//! Multistage distributionally robust optimization over finite scenario trees
//! with total-variation ambiguity sets.
//!
//! The crate solves the nested problem exactly ([`solver`]), labels realizations
//! and scenario paths as effective or ineffective from the primal categories
//! of each node's children ([`effectiveness`]), and checks those labels
//! against re-solved assessment problems ([`oracle`]).

pub mod effectiveness;
pub mod error;
pub mod gen;
pub mod lp;
pub mod oracle;
pub mod report;
pub mod risk;
pub mod solver;
pub mod stage;
pub mod tree;

pub use effectiveness::{C2MassRule, ClassifyOptions, CondLabel, Label, PathLabel};
pub use error::{Error, Result};
pub use oracle::{AssessmentResult, RemovalKind, RemovalSet};
pub use solver::{Policy, SolveOutcome, SolverKind};
pub use tree::{load_instance, NodeId, ScenarioTree};
