//! The configuration correctness predicate and node-cost accounting.

use super::{Configuration, InstanceId, ModelError, NodeId, ReqMode, Universe};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// One way a configuration fails the correctness predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// An instance has fewer distinct providers bound on a port than the
    /// requirement's arity demands.
    UnsatisfiedRequirement {
        instance: InstanceId,
        port: String,
        mode: ReqMode,
        required: u64,
        bound: u64,
    },
    /// More requirers are bound to a provider instance's port than its
    /// finite capacity allows.
    CapacityExceeded {
        provider: InstanceId,
        port: String,
        capacity: u64,
        bound: u64,
    },
    /// The instances hosted on a node consume more of a resource than the
    /// node supplies.
    ResourceExceeded {
        node: NodeId,
        resource: String,
        capacity: u64,
        used: u64,
    },
    /// A binding or placement references something that does not exist:
    /// a missing instance, a missing node, a port the provider does not
    /// provide, or a port the requirer does not require.
    DanglingReference { detail: String },
    /// A binding whose requirer and provider are the same instance.
    SelfBinding { instance: InstanceId, port: String },
    /// The same (port, requirer, provider) triple appears more than once.
    Duplicate {
        port: String,
        requirer: InstanceId,
        provider: InstanceId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnsatisfiedRequirement {
                instance,
                port,
                mode,
                required,
                bound,
            } => write!(
                f,
                "{instance} has {bound} of {required} required {mode} providers on port {port:?}"
            ),
            Violation::CapacityExceeded {
                provider,
                port,
                capacity,
                bound,
            } => write!(
                f,
                "{provider} port {port:?} has {bound} requirers bound, capacity {capacity}"
            ),
            Violation::ResourceExceeded {
                node,
                resource,
                capacity,
                used,
            } => write!(
                f,
                "node {node} over {resource:?}: {used} used of {capacity}"
            ),
            Violation::DanglingReference { detail } => write!(f, "dangling reference: {detail}"),
            Violation::SelfBinding { instance, port } => {
                write!(f, "{instance} bound to itself on port {port:?}")
            }
            Violation::Duplicate {
                port,
                requirer,
                provider,
            } => write!(
                f,
                "duplicate binding {requirer} -[{port}]-> {provider}"
            ),
        }
    }
}

/// Exhaustive result of the correctness predicate: `ok` iff no violations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl CorrectnessReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        CorrectnessReport {
            ok: violations.is_empty(),
            violations,
        }
    }
}

/// Checks every correctness condition and reports all violations found,
/// not just the first. Errs only when the configuration names a service
/// or node type missing from the universe.
pub fn check_correct(
    universe: &Universe,
    config: &Configuration,
) -> Result<CorrectnessReport, ModelError> {
    for node_type in config.nodes.values() {
        if universe.node_type(node_type).is_none() {
            return Err(ModelError::UnknownNodeType(node_type.clone()));
        }
    }
    for placement in config.instances.values() {
        if universe.service(&placement.service).is_none() {
            return Err(ModelError::UnknownServiceType(placement.service.clone()));
        }
    }

    let mut violations = Vec::new();

    // Placements must name provisioned nodes.
    for (id, placement) in &config.instances {
        if !config.nodes.contains_key(&placement.node) {
            violations.push(Violation::DanglingReference {
                detail: format!("instance {id} placed on missing node {}", placement.node),
            });
        }
    }

    // Binding endpoints must exist, differ, match their port declarations,
    // and appear at most once.
    let mut seen = BTreeSet::new();
    for binding in &config.bindings {
        if !seen.insert(binding) {
            violations.push(Violation::Duplicate {
                port: binding.port.clone(),
                requirer: binding.requirer.clone(),
                provider: binding.provider.clone(),
            });
            continue;
        }
        if binding.requirer == binding.provider {
            violations.push(Violation::SelfBinding {
                instance: binding.requirer.clone(),
                port: binding.port.clone(),
            });
            continue;
        }
        let mut endpoints_ok = true;
        match config.instances.get(&binding.requirer) {
            None => {
                violations.push(Violation::DanglingReference {
                    detail: format!("binding {binding} names missing requirer"),
                });
                endpoints_ok = false;
            }
            Some(placement) => {
                let svc = universe.service(&placement.service).expect("checked above");
                if svc.requirement(&binding.port).is_none() {
                    violations.push(Violation::DanglingReference {
                        detail: format!(
                            "binding {binding}: type {} does not require port {:?}",
                            svc.name, binding.port
                        ),
                    });
                }
            }
        }
        match config.instances.get(&binding.provider) {
            None => {
                violations.push(Violation::DanglingReference {
                    detail: format!("binding {binding} names missing provider"),
                });
                endpoints_ok = false;
            }
            Some(placement) => {
                let svc = universe.service(&placement.service).expect("checked above");
                if svc.provided_port(&binding.port).is_none() {
                    violations.push(Violation::DanglingReference {
                        detail: format!(
                            "binding {binding}: type {} does not provide port {:?}",
                            svc.name, binding.port
                        ),
                    });
                }
            }
        }
        let _ = endpoints_ok;
    }

    // Requirement arities, counting distinct providers only.
    for (id, placement) in &config.instances {
        let svc = universe.service(&placement.service).expect("checked above");
        for req in &svc.requires {
            let bound: BTreeSet<&InstanceId> = config.bound_providers(id, &req.port).collect();
            if (bound.len() as u64) < req.arity {
                violations.push(Violation::UnsatisfiedRequirement {
                    instance: id.clone(),
                    port: req.port.clone(),
                    mode: req.mode,
                    required: req.arity,
                    bound: bound.len() as u64,
                });
            }
        }
    }

    // Port capacities, per provider instance.
    for (id, placement) in &config.instances {
        let svc = universe.service(&placement.service).expect("checked above");
        for provided in &svc.provides {
            let load = config.provider_load(id, &provided.port);
            if !provided.capacity.allows(load) {
                violations.push(Violation::CapacityExceeded {
                    provider: id.clone(),
                    port: provided.port.clone(),
                    capacity: provided.capacity.slots(),
                    bound: load,
                });
            }
        }
    }

    // Per-node resource packing.
    for (node_id, node_type) in &config.nodes {
        let node = universe.node_type(node_type).expect("checked above");
        let mut used: BTreeMap<&str, u64> = BTreeMap::new();
        for instance in config.hosted_on(node_id) {
            let placement = &config.instances[instance];
            let svc = universe.service(&placement.service).expect("checked above");
            for (res, amount) in &svc.consumption {
                *used.entry(res.as_str()).or_insert(0) += amount;
            }
        }
        for (res, amount) in used {
            let capacity = node.capacity_of(res);
            if amount > capacity {
                violations.push(Violation::ResourceExceeded {
                    node: node_id.clone(),
                    resource: res.to_owned(),
                    capacity,
                    used: amount,
                });
            }
        }
    }

    Ok(CorrectnessReport::from_violations(violations))
}

/// Sum of node costs per time unit. Nodes hosting zero instances still
/// count: cost attaches to provisioned nodes.
pub fn total_cost(config: &Configuration, universe: &Universe) -> Result<u64, ModelError> {
    let mut sum = 0u64;
    for node_type in config.nodes.values() {
        let node = universe
            .node_type(node_type)
            .ok_or_else(|| ModelError::UnknownNodeType(node_type.clone()))?;
        sum += node.cost;
    }
    Ok(sum)
}
