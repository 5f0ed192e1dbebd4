//! Static checks on a universe, run before anything else consumes it.

use super::Universe;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Problems found in a universe. `Error`-severity issues make the
/// universe unusable; warnings are advisory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UniverseIssue {
    DuplicateResource { name: String },
    DuplicateService { name: String },
    DuplicateNodeType { name: String },
    DuplicatePort { service: String, port: String },
    DuplicateRequirement { service: String, port: String },
    /// A type requires a port it also provides.
    SelfLoop { service: String, port: String },
    /// A strong requirement with arity zero is meaningless.
    ZeroArityStrong { service: String, port: String },
    ZeroMaxLoad { service: String },
    /// Consumption or capacity references a resource kind not declared.
    UnknownResource { owner: String, resource: String },
    /// Some type requires this port but no type provides it. A closed-world
    /// warning: requests touching the port will be unsatisfiable.
    UnprovidablePort { port: String, required_by: String },
    /// No node type can host even one instance of this service.
    UndeployableType { service: String },
}

impl UniverseIssue {
    pub fn is_error(&self) -> bool {
        !matches!(self, UniverseIssue::UnprovidablePort { .. })
    }
}

impl fmt::Display for UniverseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UniverseIssue::DuplicateResource { name } => write!(f, "duplicate resource {name:?}"),
            UniverseIssue::DuplicateService { name } => write!(f, "duplicate service {name:?}"),
            UniverseIssue::DuplicateNodeType { name } => write!(f, "duplicate node type {name:?}"),
            UniverseIssue::DuplicatePort { service, port } => {
                write!(f, "service {service:?} provides port {port:?} twice")
            }
            UniverseIssue::DuplicateRequirement { service, port } => {
                write!(f, "service {service:?} requires port {port:?} twice")
            }
            UniverseIssue::SelfLoop { service, port } => {
                write!(f, "service {service:?} requires its own port {port:?}")
            }
            UniverseIssue::ZeroArityStrong { service, port } => write!(
                f,
                "service {service:?} has a strong requirement of arity 0 on {port:?}"
            ),
            UniverseIssue::ZeroMaxLoad { service } => {
                write!(f, "service {service:?} has max_load 0")
            }
            UniverseIssue::UnknownResource { owner, resource } => {
                write!(f, "{owner} references undeclared resource {resource:?}")
            }
            UniverseIssue::UnprovidablePort { port, required_by } => write!(
                f,
                "port {port:?} required by {required_by:?} is provided by no type"
            ),
            UniverseIssue::UndeployableType { service } => {
                write!(f, "service {service:?} fits on no node type")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub errors: Vec<UniverseIssue>,
    pub warnings: Vec<UniverseIssue>,
}

/// Reports duplicate names, self-loops, unprovidable required ports,
/// undeployable types, and zero max_load. Never fails; the report carries
/// everything found.
pub fn validate_universe(universe: &Universe) -> ValidationReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let mut resource_names = BTreeSet::new();
    for res in &universe.resources {
        if !resource_names.insert(res.name.as_str()) {
            errors.push(UniverseIssue::DuplicateResource {
                name: res.name.clone(),
            });
        }
    }

    let provided: BTreeSet<&str> = universe
        .services
        .iter()
        .flat_map(|s| s.provides.iter().map(|p| p.port.as_str()))
        .collect();

    let mut service_names = BTreeSet::new();
    for svc in &universe.services {
        if !service_names.insert(svc.name.as_str()) {
            errors.push(UniverseIssue::DuplicateService {
                name: svc.name.clone(),
            });
        }
        let mut ports = BTreeSet::new();
        for p in &svc.provides {
            if !ports.insert(p.port.as_str()) {
                errors.push(UniverseIssue::DuplicatePort {
                    service: svc.name.clone(),
                    port: p.port.clone(),
                });
            }
        }
        let mut reqs = BTreeSet::new();
        for r in &svc.requires {
            if !reqs.insert(r.port.as_str()) {
                errors.push(UniverseIssue::DuplicateRequirement {
                    service: svc.name.clone(),
                    port: r.port.clone(),
                });
            }
            if svc.provided_port(&r.port).is_some() {
                errors.push(UniverseIssue::SelfLoop {
                    service: svc.name.clone(),
                    port: r.port.clone(),
                });
            }
            if r.mode == super::ReqMode::Strong && r.arity == 0 {
                errors.push(UniverseIssue::ZeroArityStrong {
                    service: svc.name.clone(),
                    port: r.port.clone(),
                });
            }
            if !provided.contains(r.port.as_str()) {
                warnings.push(UniverseIssue::UnprovidablePort {
                    port: r.port.clone(),
                    required_by: svc.name.clone(),
                });
            }
        }
        if svc.max_load == 0 {
            errors.push(UniverseIssue::ZeroMaxLoad {
                service: svc.name.clone(),
            });
        }
        for res in svc.consumption.keys() {
            if !resource_names.contains(res.as_str()) {
                errors.push(UniverseIssue::UnknownResource {
                    owner: format!("service {:?}", svc.name),
                    resource: res.clone(),
                });
            }
        }
        if !universe.nodes.is_empty()
            && !universe.nodes.iter().any(|n| n.fits(svc) != Some(0))
        {
            errors.push(UniverseIssue::UndeployableType {
                service: svc.name.clone(),
            });
        }
    }

    let mut node_names = BTreeSet::new();
    for node in &universe.nodes {
        if !node_names.insert(node.name.as_str()) {
            errors.push(UniverseIssue::DuplicateNodeType {
                name: node.name.clone(),
            });
        }
        for res in node.capacity.keys() {
            if !resource_names.contains(res.as_str()) {
                errors.push(UniverseIssue::UnknownResource {
                    owner: format!("node type {:?}", node.name),
                    resource: res.clone(),
                });
            }
        }
    }

    ValidationReport {
        ok: errors.is_empty(),
        errors,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MicroserviceType, NodeType, Requirement, ResourceKind};

    #[test]
    fn empty_universe_is_ok() {
        let report = validate_universe(&Universe::default());
        assert!(report.ok);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn unprovidable_port_is_a_warning() {
        let universe = Universe {
            resources: vec![],
            services: vec![MicroserviceType {
                name: "a".into(),
                provides: vec![],
                requires: vec![Requirement {
                    port: "db".into(),
                    arity: 1,
                    mode: crate::model::ReqMode::Weak,
                }],
                consumption: Default::default(),
                max_load: 10,
            }],
            nodes: vec![],
        };
        let report = validate_universe(&universe);
        assert!(report.ok);
        assert!(matches!(
            report.warnings.as_slice(),
            [UniverseIssue::UnprovidablePort { .. }]
        ));
    }

    #[test]
    fn oversized_consumption_is_undeployable() {
        let universe = Universe {
            resources: vec![ResourceKind {
                name: "mem".into(),
                unit: "MiB".into(),
            }],
            services: vec![MicroserviceType {
                name: "big".into(),
                provides: vec![],
                requires: vec![],
                consumption: [("mem".to_string(), 16384)].into(),
                max_load: 10,
            }],
            nodes: vec![NodeType {
                name: "n".into(),
                cost: 1,
                capacity: [("mem".to_string(), 8192)].into(),
            }],
        };
        let report = validate_universe(&universe);
        assert!(!report.ok);
        assert!(report
            .errors
            .iter()
            .any(|e| matches!(e, UniverseIssue::UndeployableType { .. })));
    }
}
