//! Domain model for microservice architectures: service and node types,
//! configurations (nodes, instances, bindings), and the correctness
//! predicate everything else builds on.
//!
//! All values are immutable after construction and safe to share across
//! threads; the operations in this module are pure functions.

mod check;
mod validate;

pub use check::{check_correct, total_cost, CorrectnessReport, Violation};
pub use validate::{validate_universe, UniverseIssue, ValidationReport};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A measurable resource (e.g. CPU cores, memory) that nodes supply and
/// service instances consume. Quantities are non-negative integers in the
/// stated unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceKind {
    pub name: String,
    pub unit: String,
}

/// Capacity of a provided port: how many requirer instances may be bound
/// to one provider instance simultaneously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PortCapacity {
    Finite(u64),
    Unbounded,
}

impl PortCapacity {
    pub fn allows(&self, bound: u64) -> bool {
        match self {
            PortCapacity::Finite(cap) => bound <= *cap,
            PortCapacity::Unbounded => true,
        }
    }

    /// Usable slots per provider instance, saturating for unbounded ports.
    pub fn slots(&self) -> u64 {
        match self {
            PortCapacity::Finite(cap) => *cap,
            PortCapacity::Unbounded => u64::MAX,
        }
    }
}

impl fmt::Display for PortCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortCapacity::Finite(cap) => write!(f, "{cap}"),
            PortCapacity::Unbounded => write!(f, "unbounded"),
        }
    }
}

impl Serialize for PortCapacity {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            PortCapacity::Finite(cap) => ser.serialize_u64(*cap),
            PortCapacity::Unbounded => ser.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for PortCapacity {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(cap) => Ok(PortCapacity::Finite(cap)),
            Raw::Text(s) if s == "unbounded" => Ok(PortCapacity::Unbounded),
            Raw::Text(s) => Err(D::Error::custom(format!(
                "port capacity must be an integer or \"unbounded\", got {s:?}"
            ))),
        }
    }
}

/// A port offered by a microservice type, with a bound on simultaneous
/// requirers per provider instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidedPort {
    pub port: String,
    pub capacity: PortCapacity,
}

/// Whether a requirement must be satisfied at deploy time (strong) or may
/// be bound and unbound during the instance's life (weak). Weak
/// requirements must still hold in final configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReqMode {
    Strong,
    Weak,
}

impl fmt::Display for ReqMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReqMode::Strong => write!(f, "strong"),
            ReqMode::Weak => write!(f, "weak"),
        }
    }
}

/// A dependency of a microservice type on a port: `arity` distinct
/// provider instances must be bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub port: String,
    pub arity: u64,
    pub mode: ReqMode,
}

/// A microservice type: what it provides, what it requires, what it
/// consumes, and the message rate one instance sustains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroserviceType {
    pub name: String,
    #[serde(default)]
    pub provides: Vec<ProvidedPort>,
    #[serde(default)]
    pub requires: Vec<Requirement>,
    #[serde(default)]
    pub consumption: BTreeMap<String, u64>,
    /// Messages per second one instance can process. Always positive.
    pub max_load: u64,
}

impl MicroserviceType {
    pub fn provided_port(&self, port: &str) -> Option<&ProvidedPort> {
        self.provides.iter().find(|p| p.port == port)
    }

    pub fn requirement(&self, port: &str) -> Option<&Requirement> {
        self.requires.iter().find(|r| r.port == port)
    }

    pub fn consumption_of(&self, resource: &str) -> u64 {
        self.consumption.get(resource).copied().unwrap_or(0)
    }
}

/// A priced computational unit (e.g. a virtual machine flavor). Cost is
/// money-units per simulated time unit; capacities are per resource kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeType {
    pub name: String,
    pub cost: u64,
    #[serde(default)]
    pub capacity: BTreeMap<String, u64>,
}

impl NodeType {
    pub fn capacity_of(&self, resource: &str) -> u64 {
        self.capacity.get(resource).copied().unwrap_or(0)
    }

    /// How many instances of `svc` fit on one empty node of this type,
    /// ignoring co-tenants. `None` means no resource limits the count.
    pub fn fits(&self, svc: &MicroserviceType) -> Option<u64> {
        let mut bound: Option<u64> = None;
        for (res, need) in &svc.consumption {
            if *need == 0 {
                continue;
            }
            let per_node = self.capacity_of(res) / need;
            bound = Some(bound.map_or(per_node, |b| b.min(per_node)));
        }
        bound
    }
}

/// The component repository: every resource kind, microservice type, and
/// node type a deployment may draw from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Universe {
    #[serde(default)]
    pub resources: Vec<ResourceKind>,
    #[serde(default)]
    pub services: Vec<MicroserviceType>,
    #[serde(default)]
    pub nodes: Vec<NodeType>,
}

impl Universe {
    pub fn service(&self, name: &str) -> Option<&MicroserviceType> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn node_type(&self, name: &str) -> Option<&NodeType> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// All (provider type, capacity) pairs for a port, in declaration order.
    pub fn providers_of(&self, port: &str) -> Vec<(&MicroserviceType, PortCapacity)> {
        self.services
            .iter()
            .filter_map(|s| s.provided_port(port).map(|p| (s, p.capacity)))
            .collect()
    }
}

/// Identifier of a provisioned node. Opaque, case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

/// Identifier of a running microservice instance. Opaque, case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub String);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<&str> for InstanceId {
    fn from(s: &str) -> Self {
        InstanceId(s.to_owned())
    }
}

/// Where an instance runs and what type it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    #[serde(rename = "type")]
    pub service: String,
    pub node: NodeId,
}

/// One established connection: `requirer` is bound to `provider` on `port`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binding {
    pub port: String,
    pub requirer: InstanceId,
    pub provider: InstanceId,
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -[{}]-> {}", self.requirer, self.port, self.provider)
    }
}

/// A snapshot of a running system: provisioned nodes, placed instances,
/// and port bindings.
///
/// Bindings are kept as a list so that duplicate entries read from a file
/// can be detected and reported by [`check_correct`] rather than silently
/// collapsed. All constructors in this crate keep the list sorted and
/// deduplicated; [`Configuration::canonicalize`] restores that form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    #[serde(default)]
    pub nodes: BTreeMap<NodeId, String>,
    #[serde(default)]
    pub instances: BTreeMap<InstanceId, Placement>,
    #[serde(default)]
    pub bindings: Vec<Binding>,
}

impl Configuration {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn canonicalize(&mut self) {
        self.bindings.sort();
        self.bindings.dedup();
    }

    /// Set-semantics equality on bindings, exact on nodes and instances.
    pub fn same_deployment(&self, other: &Configuration) -> bool {
        if self.nodes != other.nodes || self.instances != other.instances {
            return false;
        }
        let a: BTreeSet<&Binding> = self.bindings.iter().collect();
        let b: BTreeSet<&Binding> = other.bindings.iter().collect();
        a == b
    }

    /// Instances hosted on `node`, in id order.
    pub fn hosted_on<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a InstanceId> {
        self.instances
            .iter()
            .filter(move |(_, p)| &p.node == node)
            .map(|(id, _)| id)
    }

    /// Instance ids of a given service type, in id order.
    pub fn instances_of<'a>(&'a self, service: &'a str) -> impl Iterator<Item = &'a InstanceId> {
        self.instances
            .iter()
            .filter(move |(_, p)| p.service == service)
            .map(|(id, _)| id)
    }

    pub fn count_of(&self, service: &str) -> u64 {
        self.instances_of(service).count() as u64
    }

    /// Distinct providers bound to `requirer` on `port`.
    pub fn bound_providers<'a>(
        &'a self,
        requirer: &'a InstanceId,
        port: &'a str,
    ) -> impl Iterator<Item = &'a InstanceId> {
        self.bindings
            .iter()
            .filter(move |b| &b.requirer == requirer && b.port == port)
            .map(|b| &b.provider)
    }

    /// Number of requirers bound to `provider` on `port`.
    pub fn provider_load(&self, provider: &InstanceId, port: &str) -> u64 {
        self.bindings
            .iter()
            .filter(|b| &b.provider == provider && b.port == port)
            .count() as u64
    }

    pub fn has_binding(&self, binding: &Binding) -> bool {
        self.bindings.contains(binding)
    }

    /// SHA-256 digest of the canonical form, used to pin plan endpoints.
    pub fn digest(&self) -> String {
        let mut canon = self.clone();
        canon.canonicalize();
        let bytes = serde_json::to_vec(&canon).expect("configuration serializes");
        let hash = Sha256::digest(&bytes);
        let mut out = String::with_capacity(64);
        for byte in hash {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

/// Configuration or operation referenced a type the universe does not know.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    UnknownServiceType(String),
    UnknownNodeType(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::UnknownServiceType(name) => {
                write!(f, "unknown microservice type {name:?}")
            }
            ModelError::UnknownNodeType(name) => write!(f, "unknown node type {name:?}"),
        }
    }
}

impl std::error::Error for ModelError {}
