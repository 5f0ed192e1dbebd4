//! From aggregate solutions to concrete configurations: id assignment,
//! placement, and deterministic binding distribution.

use super::packing::Packing;
use super::SynthesisError;
use crate::model::{check_correct, Binding, Configuration, InstanceId, NodeId, Placement, Universe};
use crate::pipeline::{ConfigurationDelta, DeltaNode};
use std::collections::BTreeMap;

/// Next free id of the form `{prefix}-{n}`, scanning existing users.
fn next_index<'a>(prefix: &str, existing: impl Iterator<Item = &'a str>) -> u64 {
    let mut max = 0u64;
    for id in existing {
        if let Some(rest) = id.strip_prefix(prefix) {
            if let Some(num) = rest.strip_prefix('-') {
                if let Ok(n) = num.parse::<u64>() {
                    max = max.max(n);
                }
            }
        }
    }
    max + 1
}

pub fn fresh_node_id(config: &Configuration, node_type: &str) -> NodeId {
    let next = next_index(node_type, config.nodes.keys().map(|n| n.0.as_str()));
    NodeId(format!("{node_type}-{next}"))
}

pub fn fresh_instance_id(config: &Configuration, service: &str) -> InstanceId {
    let next = next_index(service, config.instances.keys().map(|i| i.0.as_str()));
    InstanceId(format!("{service}-{next}"))
}

/// Adds every binding needed to bring all instances up to their
/// requirement arities. Providers are filled in a deterministic
/// round-robin: each binding goes to the provider with the most free
/// slots, ties broken by instance id, skipping providers the requirer
/// already uses.
///
/// Fails with [`SynthesisError::Internal`] when the demand cannot be
/// realized; callers treat that as an encoding bug to surface, never to
/// repair silently.
pub fn complete_bindings(
    universe: &Universe,
    config: &mut Configuration,
) -> Result<(), SynthesisError> {
    let instances: Vec<(InstanceId, String)> = config
        .instances
        .iter()
        .map(|(id, p)| (id.clone(), p.service.clone()))
        .collect();

    // Ports with any requirement, in deterministic order.
    let mut ports: Vec<String> = instances
        .iter()
        .filter_map(|(_, ty)| universe.service(ty))
        .flat_map(|svc| svc.requires.iter().map(|r| r.port.clone()))
        .collect();
    ports.sort();
    ports.dedup();

    for port in &ports {
        // (deficit, requirer id) sorted by descending deficit then id.
        let mut requirers: Vec<(u64, InstanceId)> = Vec::new();
        for (id, ty) in &instances {
            let svc = universe
                .service(ty)
                .ok_or_else(|| SynthesisError::UnknownServiceType(ty.clone()))?;
            if let Some(req) = svc.requirement(port) {
                let bound = config.bound_providers(id, port).count() as u64;
                if req.arity > bound {
                    requirers.push((req.arity - bound, id.clone()));
                }
            }
        }
        requirers.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut residuals: BTreeMap<InstanceId, u64> = BTreeMap::new();
        for (id, ty) in &instances {
            let svc = universe.service(ty).expect("checked above");
            if let Some(provided) = svc.provided_port(port) {
                let load = config.provider_load(id, port);
                let slots = provided.capacity.slots().saturating_sub(load);
                residuals.insert(id.clone(), slots);
            }
        }

        for (deficit, requirer) in requirers {
            for _ in 0..deficit {
                let already: Vec<InstanceId> =
                    config.bound_providers(&requirer, port).cloned().collect();
                let pick = residuals
                    .iter()
                    .filter(|(id, slots)| {
                        **slots > 0 && **id != requirer && !already.contains(id)
                    })
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(id, _)| id.clone());
                let provider = pick.ok_or_else(|| {
                    SynthesisError::Internal(format!(
                        "binding fill stuck: no provider left for {requirer} on port {port:?}"
                    ))
                })?;
                *residuals.get_mut(&provider).expect("picked from map") -= 1;
                config.bindings.push(Binding {
                    port: port.clone(),
                    requirer: requirer.clone(),
                    provider,
                });
            }
        }
    }
    config.canonicalize();
    Ok(())
}

/// Materializes a packed solution as a configuration: nodes named
/// `{node-type}-{n}`, instances named `{service}-{n}`, bindings filled
/// round-robin, and the result checked against the correctness predicate.
pub(crate) fn concretize_packing(
    universe: &Universe,
    packing: &Packing,
) -> Result<Configuration, SynthesisError> {
    let delta = ConfigurationDelta {
        nodes: packing
            .nodes
            .iter()
            .filter(|(_, load)| !load.is_empty())
            .map(|(node_type, load)| DeltaNode {
                node_type: node_type.clone(),
                instances: load.clone(),
            })
            .collect(),
    };
    apply_delta(universe, &Configuration::empty(), &delta)
}

/// Applies an additive configuration diff: provision the delta's nodes
/// under fresh ids, deploy its instances under fresh ids, then complete
/// every unsatisfied requirement arity. The result must pass the
/// correctness predicate or the call fails.
pub fn apply_delta(
    universe: &Universe,
    base: &Configuration,
    delta: &ConfigurationDelta,
) -> Result<Configuration, SynthesisError> {
    let mut config = base.clone();
    for node in &delta.nodes {
        if universe.node_type(&node.node_type).is_none() {
            return Err(SynthesisError::UnknownNodeType(node.node_type.clone()));
        }
        let node_id = fresh_node_id(&config, &node.node_type);
        config.nodes.insert(node_id.clone(), node.node_type.clone());
        for (service, count) in &node.instances {
            if universe.service(service).is_none() {
                return Err(SynthesisError::UnknownServiceType(service.clone()));
            }
            for _ in 0..*count {
                let id = fresh_instance_id(&config, service);
                config.instances.insert(
                    id,
                    Placement {
                        service: service.clone(),
                        node: node_id.clone(),
                    },
                );
            }
        }
    }
    complete_bindings(universe, &mut config)?;
    let report = check_correct(universe, &config).map_err(|e| {
        SynthesisError::Internal(format!("concretized configuration references {e}"))
    })?;
    if !report.ok {
        return Err(SynthesisError::Internal(format!(
            "concretized configuration is incorrect: {}",
            report
                .violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        MicroserviceType, NodeType, PortCapacity, ProvidedPort, ReqMode, Requirement, ResourceKind,
    };

    fn universe() -> Universe {
        Universe {
            resources: vec![ResourceKind {
                name: "cpu".into(),
                unit: "cores".into(),
            }],
            services: vec![
                MicroserviceType {
                    name: "a".into(),
                    provides: vec![],
                    requires: vec![Requirement {
                        port: "p".into(),
                        arity: 1,
                        mode: ReqMode::Weak,
                    }],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 1000,
                },
                MicroserviceType {
                    name: "b".into(),
                    provides: vec![ProvidedPort {
                        port: "p".into(),
                        capacity: PortCapacity::Finite(2),
                    }],
                    requires: vec![],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 1000,
                },
            ],
            nodes: vec![NodeType {
                name: "n".into(),
                cost: 100,
                capacity: [("cpu".to_string(), 8)].into(),
            }],
        }
    }

    fn delta(loads: &[(&str, &[(&str, u64)])]) -> ConfigurationDelta {
        ConfigurationDelta {
            nodes: loads
                .iter()
                .map(|(ty, instances)| DeltaNode {
                    node_type: (*ty).into(),
                    instances: instances
                        .iter()
                        .map(|(s, n)| ((*s).to_string(), *n))
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn forced_bindings_share_one_provider() {
        let u = universe();
        let config =
            apply_delta(&u, &Configuration::empty(), &delta(&[("n", &[("a", 2), ("b", 1)])]))
                .unwrap();
        assert_eq!(config.bindings.len(), 2);
        assert!(config.bindings.iter().all(|b| b.provider == "b-1".into()));
    }

    #[test]
    fn round_robin_splits_load_across_providers() {
        let u = universe();
        let config =
            apply_delta(&u, &Configuration::empty(), &delta(&[("n", &[("a", 3), ("b", 2)])]))
                .unwrap();
        let load1 = config.provider_load(&"b-1".into(), "p");
        let load2 = config.provider_load(&"b-2".into(), "p");
        assert_eq!(load1 + load2, 3);
        assert!(load1 <= 2 && load2 <= 2, "capacity respected: {load1}/{load2}");
    }

    #[test]
    fn overfull_demand_is_surfaced_as_internal() {
        let u = universe();
        let result =
            apply_delta(&u, &Configuration::empty(), &delta(&[("n", &[("a", 5), ("b", 2)])]));
        assert!(matches!(result, Err(SynthesisError::Internal(_))));
    }

    #[test]
    fn fresh_ids_continue_existing_counters() {
        let u = universe();
        let base =
            apply_delta(&u, &Configuration::empty(), &delta(&[("n", &[("b", 1)])])).unwrap();
        let grown = apply_delta(&u, &base, &delta(&[("n", &[("b", 2)])])).unwrap();
        let ids: Vec<&str> = grown.instances.keys().map(|i| i.0.as_str()).collect();
        assert_eq!(ids, ["b-1", "b-2", "b-3"]);
        let nodes: Vec<&str> = grown.nodes.keys().map(|n| n.0.as_str()).collect();
        assert_eq!(nodes, ["n-1", "n-2"]);
    }
}
