//! Single-step semantics: pure functional application of one action.

use super::{Action, StepError, StrongBinding};
use crate::model::{Binding, Configuration, InstanceId, NodeId, ReqMode, Universe};
use std::collections::BTreeSet;

/// Applies one action, checking the stepwise safety rules: references
/// exist, strong requirements are covered exactly at deploy time, port
/// capacities and node resources are never exceeded, and no strong
/// dependency of a live instance is broken. Weak arities are *not*
/// checked here; they may be transiently unsatisfied during a plan.
pub fn apply_action(
    universe: &Universe,
    config: &Configuration,
    action: &Action,
) -> Result<Configuration, StepError> {
    let mut next = config.clone();
    match action {
        Action::CreateNode { node, node_type } => {
            if universe.node_type(node_type).is_none() {
                return Err(StepError::UnknownNodeType {
                    name: node_type.clone(),
                });
            }
            if next.nodes.contains_key(node) {
                return Err(StepError::DuplicateNode { node: node.clone() });
            }
            next.nodes.insert(node.clone(), node_type.clone());
        }
        Action::DeleteNode { node } => {
            if !next.nodes.contains_key(node) {
                return Err(StepError::MissingNode { node: node.clone() });
            }
            if next.hosted_on(node).next().is_some() {
                return Err(StepError::NodeNotEmpty { node: node.clone() });
            }
            next.nodes.remove(node);
        }
        Action::Deploy {
            instance,
            service,
            node,
            strong_bindings,
        } => {
            deploy(universe, &mut next, instance, service, node, strong_bindings)?;
        }
        Action::Bind {
            port,
            requirer,
            provider,
        } => {
            let binding = Binding {
                port: port.clone(),
                requirer: requirer.clone(),
                provider: provider.clone(),
            };
            if requirer == provider {
                return Err(StepError::SelfBinding {
                    instance: requirer.clone(),
                    port: port.clone(),
                });
            }
            if next.has_binding(&binding) {
                return Err(StepError::Duplicate { binding });
            }
            let req_mode = requirement_mode(universe, &next, requirer, port)?;
            if req_mode == ReqMode::Strong {
                return Err(StepError::StrongPortMutation {
                    instance: requirer.clone(),
                    port: port.clone(),
                });
            }
            check_provides(universe, &next, provider, port)?;
            check_capacity(universe, &next, provider, port, 1)?;
            insert_binding(&mut next, binding);
        }
        Action::Unbind {
            port,
            requirer,
            provider,
        } => {
            let binding = Binding {
                port: port.clone(),
                requirer: requirer.clone(),
                provider: provider.clone(),
            };
            if !next.has_binding(&binding) {
                return Err(StepError::MissingBinding { binding });
            }
            let req_mode = requirement_mode(universe, &next, requirer, port)?;
            if req_mode == ReqMode::Strong {
                return Err(StepError::StrongPortMutation {
                    instance: requirer.clone(),
                    port: port.clone(),
                });
            }
            next.bindings.retain(|b| b != &binding);
        }
        Action::Undeploy { instance } => {
            let placement = next
                .instances
                .get(instance)
                .ok_or_else(|| StepError::MissingInstance {
                    instance: instance.clone(),
                })?
                .clone();
            let _ = placement;
            // A live strong requirer must never lose a provider.
            for binding in &next.bindings {
                if &binding.provider != instance || &binding.requirer == instance {
                    continue;
                }
                if let Some(requirer_placement) = next.instances.get(&binding.requirer) {
                    let svc = universe
                        .service(&requirer_placement.service)
                        .ok_or_else(|| StepError::UnknownServiceType {
                            name: requirer_placement.service.clone(),
                        })?;
                    if let Some(req) = svc.requirement(&binding.port) {
                        if req.mode == ReqMode::Strong {
                            return Err(StepError::StrongDependencyBroken {
                                provider: instance.clone(),
                                port: binding.port.clone(),
                                requirer: binding.requirer.clone(),
                            });
                        }
                    }
                }
            }
            next.instances.remove(instance);
            next.bindings
                .retain(|b| &b.requirer != instance && &b.provider != instance);
        }
    }
    next.canonicalize();
    Ok(next)
}

fn deploy(
    universe: &Universe,
    next: &mut Configuration,
    instance: &InstanceId,
    service: &str,
    node: &NodeId,
    strong_bindings: &[StrongBinding],
) -> Result<(), StepError> {
    let svc = universe
        .service(service)
        .ok_or_else(|| StepError::UnknownServiceType {
            name: service.to_string(),
        })?;
    if next.instances.contains_key(instance) {
        return Err(StepError::DuplicateInstance {
            instance: instance.clone(),
        });
    }
    let node_type_name =
        next.nodes
            .get(node)
            .cloned()
            .ok_or_else(|| StepError::MissingNode { node: node.clone() })?;
    let node_type =
        universe
            .node_type(&node_type_name)
            .ok_or_else(|| StepError::UnknownNodeType {
                name: node_type_name.clone(),
            })?;

    // Node resources after hosting this instance.
    for (resource, need) in &svc.consumption {
        if *need == 0 {
            continue;
        }
        let mut used = *need;
        for hosted in next.hosted_on(node) {
            let hosted_svc = universe
                .service(&next.instances[hosted].service)
                .ok_or_else(|| StepError::UnknownServiceType {
                    name: next.instances[hosted].service.clone(),
                })?;
            used += hosted_svc.consumption_of(resource);
        }
        if used > node_type.capacity_of(resource) {
            return Err(StepError::ResourceExceeded {
                node: node.clone(),
                resource: resource.clone(),
            });
        }
    }

    // Initial bindings cover the strong requirements exactly.
    for sb in strong_bindings {
        let req = svc
            .requirement(&sb.port)
            .ok_or_else(|| StepError::ExtraStrongBinding {
                instance: instance.clone(),
                port: sb.port.clone(),
            })?;
        if req.mode != ReqMode::Strong {
            return Err(StepError::ExtraStrongBinding {
                instance: instance.clone(),
                port: sb.port.clone(),
            });
        }
        if &sb.provider == instance {
            return Err(StepError::SelfBinding {
                instance: instance.clone(),
                port: sb.port.clone(),
            });
        }
    }
    for req in &svc.requires {
        if req.mode != ReqMode::Strong {
            continue;
        }
        let providers: BTreeSet<&InstanceId> = strong_bindings
            .iter()
            .filter(|sb| sb.port == req.port)
            .map(|sb| &sb.provider)
            .collect();
        let given = strong_bindings
            .iter()
            .filter(|sb| sb.port == req.port)
            .count() as u64;
        if (providers.len() as u64) < req.arity {
            return Err(StepError::MissingStrongBinding {
                instance: instance.clone(),
                port: req.port.clone(),
                required: req.arity,
                given: providers.len() as u64,
            });
        }
        if given > req.arity {
            return Err(StepError::ExtraStrongBinding {
                instance: instance.clone(),
                port: req.port.clone(),
            });
        }
    }
    for sb in strong_bindings {
        check_provides(universe, next, &sb.provider, &sb.port)?;
        check_capacity(universe, next, &sb.provider, &sb.port, 1)?;
    }

    next.instances.insert(
        instance.clone(),
        crate::model::Placement {
            service: service.to_string(),
            node: node.clone(),
        },
    );
    for sb in strong_bindings {
        let binding = Binding {
            port: sb.port.clone(),
            requirer: instance.clone(),
            provider: sb.provider.clone(),
        };
        if next.has_binding(&binding) {
            return Err(StepError::Duplicate { binding });
        }
        insert_binding(next, binding);
    }
    Ok(())
}

fn requirement_mode(
    universe: &Universe,
    config: &Configuration,
    requirer: &InstanceId,
    port: &str,
) -> Result<ReqMode, StepError> {
    let placement = config
        .instances
        .get(requirer)
        .ok_or_else(|| StepError::MissingInstance {
            instance: requirer.clone(),
        })?;
    let svc = universe
        .service(&placement.service)
        .ok_or_else(|| StepError::UnknownServiceType {
            name: placement.service.clone(),
        })?;
    svc.requirement(port)
        .map(|r| r.mode)
        .ok_or_else(|| StepError::PortMismatch {
            instance: requirer.clone(),
            port: port.to_string(),
        })
}

fn check_provides(
    universe: &Universe,
    config: &Configuration,
    provider: &InstanceId,
    port: &str,
) -> Result<(), StepError> {
    let placement = config
        .instances
        .get(provider)
        .ok_or_else(|| StepError::MissingInstance {
            instance: provider.clone(),
        })?;
    let svc = universe
        .service(&placement.service)
        .ok_or_else(|| StepError::UnknownServiceType {
            name: placement.service.clone(),
        })?;
    if svc.provided_port(port).is_none() {
        return Err(StepError::PortMismatch {
            instance: provider.clone(),
            port: port.to_string(),
        });
    }
    Ok(())
}

fn check_capacity(
    universe: &Universe,
    config: &Configuration,
    provider: &InstanceId,
    port: &str,
    adding: u64,
) -> Result<(), StepError> {
    let placement = config.instances.get(provider).expect("checked");
    let svc = universe.service(&placement.service).expect("checked");
    let provided = svc.provided_port(port).expect("checked");
    let load = config.provider_load(provider, port);
    if !provided.capacity.allows(load + adding) {
        return Err(StepError::CapacityExceeded {
            provider: provider.clone(),
            port: port.to_string(),
        });
    }
    Ok(())
}

fn insert_binding(config: &mut Configuration, binding: Binding) {
    config.bindings.push(binding);
    config.canonicalize();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        MicroserviceType, NodeType, Placement, PortCapacity, ProvidedPort, Requirement,
        ResourceKind,
    };

    fn universe() -> Universe {
        Universe {
            resources: vec![ResourceKind {
                name: "cpu".into(),
                unit: "cores".into(),
            }],
            services: vec![
                MicroserviceType {
                    name: "api".into(),
                    provides: vec![],
                    requires: vec![
                        Requirement {
                            port: "db".into(),
                            arity: 1,
                            mode: ReqMode::Strong,
                        },
                        Requirement {
                            port: "cache".into(),
                            arity: 1,
                            mode: ReqMode::Weak,
                        },
                    ],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 100,
                },
                MicroserviceType {
                    name: "db".into(),
                    provides: vec![ProvidedPort {
                        port: "db".into(),
                        capacity: PortCapacity::Finite(2),
                    }],
                    requires: vec![],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 100,
                },
                MicroserviceType {
                    name: "cache".into(),
                    provides: vec![ProvidedPort {
                        port: "cache".into(),
                        capacity: PortCapacity::Unbounded,
                    }],
                    requires: vec![],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 100,
                },
            ],
            nodes: vec![NodeType {
                name: "node".into(),
                cost: 10,
                capacity: [("cpu".to_string(), 2)].into(),
            }],
        }
    }

    fn base() -> Configuration {
        let mut config = Configuration::empty();
        config.nodes.insert("node-1".into(), "node".into());
        config.nodes.insert("node-2".into(), "node".into());
        config.instances.insert(
            "db-1".into(),
            Placement {
                service: "db".into(),
                node: "node-1".into(),
            },
        );
        config.instances.insert(
            "cache-1".into(),
            Placement {
                service: "cache".into(),
                node: "node-1".into(),
            },
        );
        config
    }

    fn deploy_api(with_db: bool) -> Action {
        Action::Deploy {
            instance: "api-1".into(),
            service: "api".into(),
            node: "node-2".into(),
            strong_bindings: if with_db {
                vec![StrongBinding {
                    port: "db".into(),
                    provider: "db-1".into(),
                }]
            } else {
                vec![]
            },
        }
    }

    #[test]
    fn create_node_on_fresh_id() {
        let universe = universe();
        let next = apply_action(
            &universe,
            &Configuration::empty(),
            &Action::CreateNode {
                node: "node-1".into(),
                node_type: "node".into(),
            },
        )
        .unwrap();
        assert_eq!(next.nodes.len(), 1);
    }

    #[test]
    fn deploy_without_strong_bindings_is_rejected() {
        let universe = universe();
        let err = apply_action(&universe, &base(), &deploy_api(false)).unwrap_err();
        assert!(matches!(err, StepError::MissingStrongBinding { .. }));
    }

    #[test]
    fn duplicate_bind_is_rejected() {
        let universe = universe();
        let config = apply_action(&universe, &base(), &deploy_api(true)).unwrap();
        let bind = Action::Bind {
            port: "cache".into(),
            requirer: "api-1".into(),
            provider: "cache-1".into(),
        };
        let config = apply_action(&universe, &config, &bind).unwrap();
        let err = apply_action(&universe, &config, &bind).unwrap_err();
        assert!(matches!(err, StepError::Duplicate { .. }));
    }

    #[test]
    fn undeploy_of_strong_provider_is_blocked_until_requirer_leaves() {
        let universe = universe();
        let config = apply_action(&universe, &base(), &deploy_api(true)).unwrap();
        let err = apply_action(
            &universe,
            &config,
            &Action::Undeploy {
                instance: "db-1".into(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, StepError::StrongDependencyBroken { .. }));

        let config = apply_action(
            &universe,
            &config,
            &Action::Undeploy {
                instance: "api-1".into(),
            },
        )
        .unwrap();
        assert!(config.bindings.is_empty(), "strong binding dropped with requirer");
        apply_action(
            &universe,
            &config,
            &Action::Undeploy {
                instance: "db-1".into(),
            },
        )
        .unwrap();
    }

    #[test]
    fn weak_unbind_is_free_strong_unbind_is_not() {
        let universe = universe();
        let config = apply_action(&universe, &base(), &deploy_api(true)).unwrap();
        let err = apply_action(
            &universe,
            &config,
            &Action::Unbind {
                port: "db".into(),
                requirer: "api-1".into(),
                provider: "db-1".into(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, StepError::StrongPortMutation { .. }));
    }

    #[test]
    fn deploy_respects_node_resources() {
        let universe = universe();
        let mut config = base();
        // node-1 already hosts db + cache (2 cpu of 2).
        config.instances.insert(
            "api-9".into(),
            Placement {
                service: "api".into(),
                node: "node-2".into(),
            },
        );
        let err = apply_action(
            &universe,
            &config,
            &Action::Deploy {
                instance: "api-2".into(),
                service: "api".into(),
                node: "node-1".into(),
                strong_bindings: vec![StrongBinding {
                    port: "db".into(),
                    provider: "db-1".into(),
                }],
            },
        )
        .unwrap_err();
        assert!(matches!(err, StepError::ResourceExceeded { .. }));
    }

    #[test]
    fn delete_node_requires_evacuation() {
        let universe = universe();
        let err = apply_action(
            &universe,
            &base(),
            &Action::DeleteNode {
                node: "node-1".into(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, StepError::NodeNotEmpty { .. }));
    }
}
