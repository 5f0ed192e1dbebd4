//! Deployment plans: ordered action sequences that transform one correct
//! configuration into another with every prefix safe to execute.
//!
//! Strong dependencies are bound atomically at deploy time and torn down
//! only by undeploying the requirer, so no prefix ever observes a strong
//! violation. Weak requirements may be transiently unsatisfied while a
//! plan runs; the final configuration must satisfy them again.

mod apply;
mod synthesize;

pub use apply::apply_action;
pub use synthesize::{synthesize_plan, validate_plan};

use crate::model::{Binding, InstanceId, NodeId, Violation};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A strong connection established together with a deploy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongBinding {
    pub port: String,
    pub provider: InstanceId,
}

/// One reconfiguration step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    CreateNode {
        node: NodeId,
        node_type: String,
    },
    DeleteNode {
        node: NodeId,
    },
    /// Instances come up already wired to every strong dependency: the
    /// initial bindings must cover the type's strong requirements at
    /// exactly their arities, and nothing else.
    Deploy {
        instance: InstanceId,
        #[serde(rename = "type")]
        service: String,
        node: NodeId,
        #[serde(default)]
        strong_bindings: Vec<StrongBinding>,
    },
    Bind {
        port: String,
        requirer: InstanceId,
        provider: InstanceId,
    },
    Unbind {
        port: String,
        requirer: InstanceId,
        provider: InstanceId,
    },
    Undeploy {
        instance: InstanceId,
    },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::CreateNode { node, node_type } => write!(f, "create-node {node}:{node_type}"),
            Action::DeleteNode { node } => write!(f, "delete-node {node}"),
            Action::Deploy {
                instance,
                service,
                node,
                strong_bindings,
            } => write!(
                f,
                "deploy {instance}:{service} on {node} ({} strong bindings)",
                strong_bindings.len()
            ),
            Action::Bind {
                port,
                requirer,
                provider,
            } => write!(f, "bind {requirer} -[{port}]-> {provider}"),
            Action::Unbind {
                port,
                requirer,
                provider,
            } => write!(f, "unbind {requirer} -[{port}]-> {provider}"),
            Action::Undeploy { instance } => write!(f, "undeploy {instance}"),
        }
    }
}

/// An ordered action sequence between two configurations, pinned to them
/// by digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentPlan {
    pub source_digest: String,
    pub target_digest: String,
    pub actions: Vec<Action>,
}

impl DeploymentPlan {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }
}

/// Why a single action cannot be applied to a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepError {
    MissingNode { node: NodeId },
    MissingInstance { instance: InstanceId },
    UnknownNodeType { name: String },
    UnknownServiceType { name: String },
    DuplicateNode { node: NodeId },
    DuplicateInstance { instance: InstanceId },
    Duplicate { binding: Binding },
    MissingBinding { binding: Binding },
    SelfBinding { instance: InstanceId, port: String },
    /// The provider does not provide, or the requirer does not require,
    /// the named port.
    PortMismatch { instance: InstanceId, port: String },
    /// Bind/unbind touched a strong requirement; strong wiring changes
    /// only through deploy and undeploy.
    StrongPortMutation { instance: InstanceId, port: String },
    CapacityExceeded { provider: InstanceId, port: String },
    ResourceExceeded { node: NodeId, resource: String },
    /// Deploy arrived with fewer distinct providers than a strong
    /// requirement's arity.
    MissingStrongBinding {
        instance: InstanceId,
        port: String,
        required: u64,
        given: u64,
    },
    /// Deploy carried a binding for a port that is not one of the type's
    /// strong requirements, or more providers than the arity asks.
    ExtraStrongBinding { instance: InstanceId, port: String },
    /// Undeploying the provider would strand a live strong requirer.
    StrongDependencyBroken {
        provider: InstanceId,
        port: String,
        requirer: InstanceId,
    },
    NodeNotEmpty { node: NodeId },
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::MissingNode { node } => write!(f, "node {node} does not exist"),
            StepError::MissingInstance { instance } => {
                write!(f, "instance {instance} does not exist")
            }
            StepError::UnknownNodeType { name } => write!(f, "unknown node type {name:?}"),
            StepError::UnknownServiceType { name } => write!(f, "unknown service type {name:?}"),
            StepError::DuplicateNode { node } => write!(f, "node {node} already exists"),
            StepError::DuplicateInstance { instance } => {
                write!(f, "instance {instance} already exists")
            }
            StepError::Duplicate { binding } => write!(f, "binding {binding} already exists"),
            StepError::MissingBinding { binding } => write!(f, "binding {binding} does not exist"),
            StepError::SelfBinding { instance, port } => {
                write!(f, "{instance} cannot bind itself on {port:?}")
            }
            StepError::PortMismatch { instance, port } => {
                write!(f, "{instance} does not expose port {port:?} for this role")
            }
            StepError::StrongPortMutation { instance, port } => write!(
                f,
                "port {port:?} of {instance} is a strong requirement; rebind requires redeploy"
            ),
            StepError::CapacityExceeded { provider, port } => {
                write!(f, "provider {provider} port {port:?} is at capacity")
            }
            StepError::ResourceExceeded { node, resource } => {
                write!(f, "node {node} cannot supply more {resource:?}")
            }
            StepError::MissingStrongBinding {
                instance,
                port,
                required,
                given,
            } => write!(
                f,
                "deploy of {instance} covers {given} of {required} strong providers on {port:?}"
            ),
            StepError::ExtraStrongBinding { instance, port } => write!(
                f,
                "deploy of {instance} carries a binding on {port:?} beyond its strong requirements"
            ),
            StepError::StrongDependencyBroken {
                provider,
                port,
                requirer,
            } => write!(
                f,
                "undeploying {provider} breaks strong dependency of {requirer} on {port:?}"
            ),
            StepError::NodeNotEmpty { node } => write!(f, "node {node} still hosts instances"),
        }
    }
}

impl std::error::Error for StepError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Source,
    Target,
}

/// Why a whole plan is invalid or could not be synthesized.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanError {
    /// An endpoint configuration fails the correctness predicate.
    EndpointIncorrect {
        endpoint: Endpoint,
        violations: Vec<Violation>,
    },
    /// An endpoint references types missing from the universe.
    EndpointUnknownType { endpoint: Endpoint, detail: String },
    SourceDigestMismatch { expected: String, actual: String },
    TargetDigestMismatch { expected: String, actual: String },
    /// New instances form a strong-dependency cycle: no deploy order can
    /// satisfy creation-time wiring.
    StrongCycle { instances: Vec<InstanceId> },
    /// Replay failed at `index`.
    Step {
        index: usize,
        action: Action,
        error: StepError,
    },
    /// The replayed final configuration violates the correctness
    /// predicate (weak arities included).
    FinalIncorrect { violations: Vec<Violation> },
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::EndpointIncorrect {
                endpoint,
                violations,
            } => write!(
                f,
                "{endpoint:?} configuration is incorrect ({} violations)",
                violations.len()
            ),
            PlanError::EndpointUnknownType { endpoint, detail } => {
                write!(f, "{endpoint:?} configuration: {detail}")
            }
            PlanError::SourceDigestMismatch { expected, actual } => write!(
                f,
                "plan was built for source {expected}, got configuration {actual}"
            ),
            PlanError::TargetDigestMismatch { expected, actual } => write!(
                f,
                "replay produced {actual}, plan promises target {expected}"
            ),
            PlanError::StrongCycle { instances } => {
                write!(f, "strong-dependency cycle among new instances: ")?;
                for (i, id) in instances.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
            PlanError::Step {
                index,
                action,
                error,
            } => write!(f, "step {index} ({action}): {error}"),
            PlanError::FinalIncorrect { violations } => write!(
                f,
                "final configuration is incorrect ({} violations)",
                violations.len()
            ),
        }
    }
}

impl std::error::Error for PlanError {}
