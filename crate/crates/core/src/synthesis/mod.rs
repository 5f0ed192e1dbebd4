//! The optimal deployment problem: given a universe, a node catalog with
//! per-type budgets, and a target request, find a correct configuration
//! of minimum total node cost (ties broken toward fewer instances).
//!
//! The solver is a branch-and-bound over per-type instance counts bounded
//! by [`instance_bound`], with exact port-feasibility checks, exact
//! minimum-cost packing of instances onto nodes, and a fractional
//! resource-cost relaxation as lower bound. [`brute_force_optimal`] is a
//! deliberately independent exhaustive oracle used by the test suites.

mod bounds;
mod brute;
mod concretize;
mod encode;
mod packing;
mod ports;
mod search;

pub use bounds::instance_bound;
pub use bounds::throughput_floors;
pub use brute::{brute_force_optimal, BruteOutcome};
pub use concretize::{apply_delta, complete_bindings, fresh_instance_id, fresh_node_id};
pub use encode::{encode, Cmp, ConstraintSystem, LinearConstraint, SlotId, VarId, VarKind};
pub use search::{solve, solve_delta, solve_request, DeltaSolution};

use crate::model::{Universe, UniverseIssue};
use crate::pipeline::PipelineError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Default cap on provisioned nodes per node type.
pub const DEFAULT_NODE_BUDGET: u64 = 300;

/// How many nodes of each type the solver may provision.
pub type NodeBudget = BTreeMap<String, u64>;

/// A budget of [`DEFAULT_NODE_BUDGET`] for every node type in the universe.
pub fn default_node_budget(universe: &Universe) -> NodeBudget {
    universe
        .nodes
        .iter()
        .map(|n| (n.name.clone(), DEFAULT_NODE_BUDGET))
        .collect()
}

/// Minimum throughput the deployment must sustain, defined against a
/// named pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputTarget {
    pub pipeline: String,
    /// Messages per second.
    pub rate: u64,
}

/// What the deployment must contain: minimum instance counts per type
/// and/or a pipeline throughput to sustain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TargetRequest {
    #[serde(default)]
    pub instances: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput: Option<ThroughputTarget>,
}

impl TargetRequest {
    pub fn counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        TargetRequest {
            instances: counts.into_iter().collect(),
            throughput: None,
        }
    }
}

/// Outcome class of a solve run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Search completed; no satisfying assignment has a lower objective.
    Optimal,
    /// A correct configuration was found but optimality was not proven
    /// (the time budget ran out first).
    Feasible,
    /// No configuration satisfies the request within the node budget.
    Infeasible,
    /// The time budget ran out before any configuration was found.
    TimedOut,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::Feasible => write!(f, "feasible"),
            SolveStatus::Infeasible => write!(f, "infeasible"),
            SolveStatus::TimedOut => write!(f, "timed-out"),
        }
    }
}

/// Result of [`solve`]: when `status` is `Optimal` or `Feasible` the
/// configuration is present and passes the correctness predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub configuration: Option<crate::model::Configuration>,
    pub objective_cost: Option<u64>,
    pub instance_total: Option<u64>,
    /// True when the search stopped on the time budget.
    pub timed_out: bool,
    pub wall: std::time::Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthesisError {
    UnknownServiceType(String),
    UnknownNodeType(String),
    /// The request names a pipeline that was not supplied.
    UnknownPipeline { requested: String },
    /// The request carries a throughput target but no pipeline spec was
    /// given to resolve it against.
    PipelineRequired(String),
    InvalidUniverse(Vec<UniverseIssue>),
    /// The request transitively requires a port no type provides.
    UnprovidablePort { port: String, required_by: String },
    /// The exhaustive oracle refused: candidate space over the guard.
    SearchSpaceTooLarge { size: u128, limit: u128 },
    /// The request is empty: no instance counts and no throughput.
    EmptyRequest,
    Pipeline(PipelineError),
    /// An aggregate assignment could not be realized as concrete bindings
    /// or placements. Indicates an encoding bug; never repaired silently.
    Internal(String),
}

impl fmt::Display for SynthesisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthesisError::UnknownServiceType(name) => {
                write!(f, "unknown microservice type {name:?}")
            }
            SynthesisError::UnknownNodeType(name) => write!(f, "unknown node type {name:?}"),
            SynthesisError::UnknownPipeline { requested } => {
                write!(f, "throughput target names unknown pipeline {requested:?}")
            }
            SynthesisError::PipelineRequired(name) => write!(
                f,
                "request targets throughput on pipeline {name:?} but no pipeline spec was supplied"
            ),
            SynthesisError::InvalidUniverse(issues) => {
                write!(f, "universe fails validation: ")?;
                for (i, issue) in issues.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{issue}")?;
                }
                Ok(())
            }
            SynthesisError::UnprovidablePort { port, required_by } => write!(
                f,
                "port {port:?} required by {required_by:?} is provided by no type"
            ),
            SynthesisError::SearchSpaceTooLarge { size, limit } => {
                write!(f, "search space of {size} candidate count-vectors exceeds {limit}")
            }
            SynthesisError::EmptyRequest => write!(f, "request carries no constraint"),
            SynthesisError::Pipeline(e) => write!(f, "{e}"),
            SynthesisError::Internal(msg) => write!(f, "internal: {msg}"),
        }
    }
}

impl std::error::Error for SynthesisError {}

impl From<PipelineError> for SynthesisError {
    fn from(e: PipelineError) -> Self {
        SynthesisError::Pipeline(e)
    }
}
