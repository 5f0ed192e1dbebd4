//! Plan synthesis between two correct configurations, and validation of
//! arbitrary plans by exact replay.

use super::{Action, DeploymentPlan, Endpoint, PlanError, StrongBinding};
use crate::model::{check_correct, Configuration, InstanceId, NodeId, ReqMode, Universe};
use std::collections::{BTreeMap, BTreeSet};

fn endpoint_check(
    universe: &Universe,
    config: &Configuration,
    endpoint: Endpoint,
) -> Result<(), PlanError> {
    match check_correct(universe, config) {
        Err(e) => Err(PlanError::EndpointUnknownType {
            endpoint,
            detail: e.to_string(),
        }),
        Ok(report) if !report.ok => Err(PlanError::EndpointIncorrect {
            endpoint,
            violations: report.violations,
        }),
        Ok(_) => Ok(()),
    }
}

/// Strong-mode bindings of one instance as (port, provider) pairs.
fn strong_bindings_of(
    universe: &Universe,
    config: &Configuration,
    instance: &InstanceId,
) -> BTreeSet<(String, InstanceId)> {
    let mut out = BTreeSet::new();
    let service = match config.instances.get(instance) {
        Some(p) => &p.service,
        None => return out,
    };
    let svc = match universe.service(service) {
        Some(svc) => svc,
        None => return out,
    };
    for binding in &config.bindings {
        if &binding.requirer != instance {
            continue;
        }
        if let Some(req) = svc.requirement(&binding.port) {
            if req.mode == ReqMode::Strong {
                out.insert((binding.port.clone(), binding.provider.clone()));
            }
        }
    }
    out
}

/// Topological order with lexicographic tie-break: every id is emitted
/// only after all ids it points to in `precedes` have been emitted.
/// `precedes[a]` lists ids that must come before `a`.
fn ordered(
    members: &BTreeSet<InstanceId>,
    precedes: &BTreeMap<InstanceId, BTreeSet<InstanceId>>,
) -> Result<Vec<InstanceId>, Vec<InstanceId>> {
    let mut remaining: BTreeMap<&InstanceId, usize> = members
        .iter()
        .map(|id| {
            let deps = precedes
                .get(id)
                .map(|d| d.iter().filter(|p| members.contains(*p)).count())
                .unwrap_or(0);
            (id, deps)
        })
        .collect();
    let mut dependents: BTreeMap<&InstanceId, Vec<&InstanceId>> = BTreeMap::new();
    for (id, deps) in precedes {
        if !members.contains(id) {
            continue;
        }
        for dep in deps {
            if members.contains(dep) {
                dependents.entry(dep).or_default().push(id);
            }
        }
    }
    let mut order = Vec::with_capacity(members.len());
    loop {
        let next = remaining
            .iter()
            .filter(|(_, deps)| **deps == 0)
            .map(|(id, _)| (*id).clone())
            .next();
        match next {
            Some(id) => {
                remaining.remove(&id);
                order.push(id.clone());
                if let Some(deps) = dependents.get(&id) {
                    for dependent in deps {
                        if let Some(count) = remaining.get_mut(*dependent) {
                            *count -= 1;
                        }
                    }
                }
            }
            None => break,
        }
    }
    if order.len() != members.len() {
        let cycle: Vec<InstanceId> = remaining.keys().map(|id| (*id).clone()).collect();
        return Err(cycle);
    }
    Ok(order)
}

/// Builds the action sequence taking `source` to `target`.
///
/// Ordering: fresh nodes first; then removals (weak unbinds, undeploys of
/// removed and replaced instances in reverse strong order, node
/// deletions); then re-created nodes, deploys in strong-dependency order
/// with their strong bindings attached, and weak binds. Instances whose
/// type, host, or strong wiring changes between the endpoints are
/// replaced (undeployed and redeployed), as are instances whose host node
/// changes type, and, transitively, live strong requirers of replaced
/// providers.
pub fn synthesize_plan(
    universe: &Universe,
    source: &Configuration,
    target: &Configuration,
) -> Result<DeploymentPlan, PlanError> {
    endpoint_check(universe, source, Endpoint::Source)?;
    endpoint_check(universe, target, Endpoint::Target)?;

    let replaced_nodes: BTreeSet<NodeId> = source
        .nodes
        .iter()
        .filter(|(id, ty)| target.nodes.get(*id).is_some_and(|t| t != *ty))
        .map(|(id, _)| id.clone())
        .collect();
    let removed_nodes: BTreeSet<NodeId> = source
        .nodes
        .keys()
        .filter(|id| !target.nodes.contains_key(*id))
        .cloned()
        .collect();
    let added_nodes: BTreeSet<NodeId> = target
        .nodes
        .keys()
        .filter(|id| !source.nodes.contains_key(*id))
        .cloned()
        .collect();

    // Instances present on both sides that must be torn down and redone.
    let mut replaced: BTreeSet<InstanceId> = BTreeSet::new();
    for (id, src) in &source.instances {
        let Some(tgt) = target.instances.get(id) else {
            continue;
        };
        let rewired = strong_bindings_of(universe, source, id)
            != strong_bindings_of(universe, target, id);
        if src.service != tgt.service
            || src.node != tgt.node
            || rewired
            || replaced_nodes.contains(&src.node)
        {
            replaced.insert(id.clone());
        }
    }
    // Tearing down a provider mid-plan forces its live strong requirers
    // down too, transitively.
    loop {
        let mut grew = false;
        for binding in &source.bindings {
            let provider_goes = replaced.contains(&binding.provider)
                || !target.instances.contains_key(&binding.provider);
            if !provider_goes {
                continue;
            }
            if replaced.contains(&binding.requirer)
                || !target.instances.contains_key(&binding.requirer)
                || !source.instances.contains_key(&binding.requirer)
            {
                continue;
            }
            let svc = universe
                .service(&source.instances[&binding.requirer].service)
                .expect("endpoint checked");
            let strong = svc
                .requirement(&binding.port)
                .is_some_and(|r| r.mode == ReqMode::Strong);
            if strong {
                replaced.insert(binding.requirer.clone());
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }

    let removed_instances: BTreeSet<InstanceId> = source
        .instances
        .keys()
        .filter(|id| !target.instances.contains_key(*id))
        .cloned()
        .chain(replaced.iter().cloned())
        .collect();
    let added_instances: BTreeSet<InstanceId> = target
        .instances
        .keys()
        .filter(|id| !source.instances.contains_key(*id))
        .cloned()
        .chain(replaced.iter().cloned())
        .collect();

    // Deploy order: providers before their strong dependents.
    let mut deploy_deps: BTreeMap<InstanceId, BTreeSet<InstanceId>> = BTreeMap::new();
    for id in &added_instances {
        let deps: BTreeSet<InstanceId> = strong_bindings_of(universe, target, id)
            .into_iter()
            .map(|(_, provider)| provider)
            .filter(|p| added_instances.contains(p))
            .collect();
        deploy_deps.insert(id.clone(), deps);
    }
    let deploy_order = ordered(&added_instances, &deploy_deps)
        .map_err(|cycle| PlanError::StrongCycle { instances: cycle })?;

    // Undeploy order: strong requirers before their providers.
    let mut undeploy_deps: BTreeMap<InstanceId, BTreeSet<InstanceId>> = BTreeMap::new();
    for id in &removed_instances {
        undeploy_deps.entry(id.clone()).or_default();
    }
    for id in &removed_instances {
        for (_, provider) in strong_bindings_of(universe, source, id) {
            if removed_instances.contains(&provider) {
                undeploy_deps
                    .entry(provider.clone())
                    .or_default()
                    .insert(id.clone());
            }
        }
    }
    let undeploy_order = ordered(&removed_instances, &undeploy_deps).map_err(|cycle| {
        // Strong cycles in the source cannot block teardown: every cycle
        // member is being removed, but a cycle here means the source was
        // not deployable action-by-action in the first place.
        PlanError::StrongCycle { instances: cycle }
    })?;

    let survives = |id: &InstanceId| {
        source.instances.contains_key(id)
            && target.instances.contains_key(id)
            && !replaced.contains(id)
    };

    let source_bindings: BTreeSet<_> = source.bindings.iter().collect();
    let target_bindings: BTreeSet<_> = target.bindings.iter().collect();

    let unbinds: Vec<Action> = source
        .bindings
        .iter()
        .filter(|b| {
            survives(&b.requirer) && survives(&b.provider) && !target_bindings.contains(b)
        })
        .map(|b| Action::Unbind {
            port: b.port.clone(),
            requirer: b.requirer.clone(),
            provider: b.provider.clone(),
        })
        .collect();

    let shipped: BTreeSet<(InstanceId, String, InstanceId)> = added_instances
        .iter()
        .flat_map(|id| {
            strong_bindings_of(universe, target, id)
                .into_iter()
                .map(move |(port, provider)| (id.clone(), port, provider))
        })
        .collect();

    let binds: Vec<Action> = target
        .bindings
        .iter()
        .filter(|b| {
            let kept_from_source = source_bindings.contains(*b)
                && survives(&b.requirer)
                && survives(&b.provider);
            let in_deploy =
                shipped.contains(&(b.requirer.clone(), b.port.clone(), b.provider.clone()));
            !kept_from_source && !in_deploy
        })
        .map(|b| Action::Bind {
            port: b.port.clone(),
            requirer: b.requirer.clone(),
            provider: b.provider.clone(),
        })
        .collect();

    let mut actions = Vec::new();
    for node in &added_nodes {
        actions.push(Action::CreateNode {
            node: node.clone(),
            node_type: target.nodes[node].clone(),
        });
    }
    actions.extend(unbinds);
    for id in undeploy_order {
        actions.push(Action::Undeploy { instance: id });
    }
    for node in removed_nodes.iter().chain(replaced_nodes.iter()) {
        actions.push(Action::DeleteNode { node: node.clone() });
    }
    for node in &replaced_nodes {
        actions.push(Action::CreateNode {
            node: node.clone(),
            node_type: target.nodes[node].clone(),
        });
    }
    for id in deploy_order {
        let placement = &target.instances[&id];
        let strong_bindings: Vec<StrongBinding> = strong_bindings_of(universe, target, &id)
            .into_iter()
            .map(|(port, provider)| StrongBinding { port, provider })
            .collect();
        actions.push(Action::Deploy {
            instance: id,
            service: placement.service.clone(),
            node: placement.node.clone(),
            strong_bindings,
        });
    }
    actions.extend(binds);

    Ok(DeploymentPlan {
        source_digest: source.digest(),
        target_digest: target.digest(),
        actions,
    })
}

/// Replays a plan from `source`, step-checking every prefix, and returns
/// the final configuration. The final configuration must pass the full
/// correctness predicate (weak arities included) and match the plan's
/// target digest.
pub fn validate_plan(
    universe: &Universe,
    source: &Configuration,
    plan: &DeploymentPlan,
) -> Result<Configuration, PlanError> {
    endpoint_check(universe, source, Endpoint::Source)?;
    let source_digest = source.digest();
    if source_digest != plan.source_digest {
        return Err(PlanError::SourceDigestMismatch {
            expected: plan.source_digest.clone(),
            actual: source_digest,
        });
    }
    let mut current = source.clone();
    for (index, action) in plan.actions.iter().enumerate() {
        current = super::apply_action(universe, &current, action).map_err(|error| {
            PlanError::Step {
                index,
                action: action.clone(),
                error,
            }
        })?;
    }
    match check_correct(universe, &current) {
        Err(e) => {
            return Err(PlanError::EndpointUnknownType {
                endpoint: Endpoint::Target,
                detail: e.to_string(),
            })
        }
        Ok(report) if !report.ok => {
            return Err(PlanError::FinalIncorrect {
                violations: report.violations,
            })
        }
        Ok(_) => {}
    }
    let final_digest = current.digest();
    if final_digest != plan.target_digest {
        return Err(PlanError::TargetDigestMismatch {
            expected: plan.target_digest.clone(),
            actual: final_digest,
        });
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Binding, MicroserviceType, NodeType, Placement, PortCapacity, ProvidedPort, Requirement,
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
                    name: "a".into(),
                    provides: vec![ProvidedPort {
                        port: "a-out".into(),
                        capacity: PortCapacity::Unbounded,
                    }],
                    requires: vec![Requirement {
                        port: "p".into(),
                        arity: 1,
                        mode: ReqMode::Strong,
                    }],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 100,
                },
                MicroserviceType {
                    name: "b".into(),
                    provides: vec![ProvidedPort {
                        port: "p".into(),
                        capacity: PortCapacity::Unbounded,
                    }],
                    requires: vec![],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 100,
                },
            ],
            nodes: vec![
                NodeType {
                    name: "node".into(),
                    cost: 10,
                    capacity: [("cpu".to_string(), 4)].into(),
                },
                NodeType {
                    name: "big".into(),
                    cost: 20,
                    capacity: [("cpu".to_string(), 8)].into(),
                },
            ],
        }
    }

    fn with_ab() -> Configuration {
        let mut config = Configuration::empty();
        config.nodes.insert("node-1".into(), "node".into());
        config.instances.insert(
            "b-1".into(),
            Placement {
                service: "b".into(),
                node: "node-1".into(),
            },
        );
        config.instances.insert(
            "a-1".into(),
            Placement {
                service: "a".into(),
                node: "node-1".into(),
            },
        );
        config.bindings.push(Binding {
            port: "p".into(),
            requirer: "a-1".into(),
            provider: "b-1".into(),
        });
        config.canonicalize();
        config
    }

    #[test]
    fn identity_plan_is_empty() {
        let u = universe();
        let config = with_ab();
        let plan = synthesize_plan(&u, &config, &config).unwrap();
        assert!(plan.is_empty());
        let replayed = validate_plan(&u, &config, &plan).unwrap();
        assert!(replayed.same_deployment(&config));
    }

    #[test]
    fn provider_deploys_before_strong_dependent() {
        let u = universe();
        let source = Configuration::empty();
        let target = with_ab();
        let plan = synthesize_plan(&u, &source, &target).unwrap();
        let deploys: Vec<&InstanceId> = plan
            .actions
            .iter()
            .filter_map(|a| match a {
                Action::Deploy { instance, .. } => Some(instance),
                _ => None,
            })
            .collect();
        assert_eq!(deploys, [&InstanceId::from("b-1"), &InstanceId::from("a-1")]);
        let replayed = validate_plan(&u, &source, &plan).unwrap();
        assert!(replayed.same_deployment(&target));
    }

    #[test]
    fn mutual_strong_requirements_are_a_cycle() {
        let mut u = universe();
        u.services[1].requires.push(Requirement {
            port: "a-out".into(),
            arity: 1,
            mode: ReqMode::Strong,
        });
        let mut target = with_ab();
        target.bindings.push(Binding {
            port: "a-out".into(),
            requirer: "b-1".into(),
            provider: "a-1".into(),
        });
        target.canonicalize();
        let err = synthesize_plan(&u, &Configuration::empty(), &target).unwrap_err();
        assert!(matches!(err, PlanError::StrongCycle { .. }));
    }

    #[test]
    fn teardown_unbinds_then_undeploys_dependents_first() {
        let u = universe();
        let source = with_ab();
        let target = Configuration::empty();
        let plan = synthesize_plan(&u, &source, &target).unwrap();
        let kinds: Vec<&'static str> = plan
            .actions
            .iter()
            .map(|a| match a {
                Action::Undeploy { .. } => "undeploy",
                Action::DeleteNode { .. } => "delete",
                _ => "other",
            })
            .collect();
        assert_eq!(kinds, ["undeploy", "undeploy", "delete"]);
        match &plan.actions[0] {
            Action::Undeploy { instance } => assert_eq!(instance, &InstanceId::from("a-1")),
            other => panic!("expected undeploy, got {other}"),
        }
        validate_plan(&u, &source, &plan).unwrap();
    }

    #[test]
    fn node_retype_forces_replacement_of_hosted_instances() {
        let u = universe();
        let source = with_ab();
        let mut target = with_ab();
        target.nodes.insert("node-1".into(), "big".into());
        let plan = synthesize_plan(&u, &source, &target).unwrap();
        // Everything on node-1 must come down, the node is recreated as
        // "big", and the instances come back in dependency order.
        let replayed = validate_plan(&u, &source, &plan).unwrap();
        assert!(replayed.same_deployment(&target));
        assert!(plan
            .actions
            .iter()
            .any(|a| matches!(a, Action::DeleteNode { .. })));
    }

    #[test]
    fn swap_on_a_full_node_is_replayable() {
        // node capacity 4; source hosts four cpu of b; target hosts four
        // cpu of a variant. Additions cannot precede removals here.
        let u = universe();
        let mut source = Configuration::empty();
        source.nodes.insert("node-1".into(), "node".into());
        source.nodes.insert("node-2".into(), "node".into());
        for i in 1..=4 {
            source.instances.insert(
                InstanceId(format!("b-{i}")),
                Placement {
                    service: "b".into(),
                    node: "node-1".into(),
                },
            );
        }
        let mut target = source.clone();
        for i in 3..=4 {
            target.instances.remove(&InstanceId(format!("b-{i}")));
        }
        for i in 1..=2 {
            target.instances.insert(
                InstanceId(format!("a-{i}")),
                Placement {
                    service: "a".into(),
                    node: "node-1".into(),
                },
            );
            target.bindings.push(Binding {
                port: "p".into(),
                requirer: InstanceId(format!("a-{i}")),
                provider: "b-1".into(),
            });
        }
        target.canonicalize();
        let plan = synthesize_plan(&u, &source, &target).unwrap();
        let replayed = validate_plan(&u, &source, &plan).unwrap();
        assert!(replayed.same_deployment(&target));
    }

    #[test]
    fn wrong_source_is_rejected_by_digest() {
        let u = universe();
        let source = with_ab();
        let plan = synthesize_plan(&u, &source, &Configuration::empty()).unwrap();
        let err = validate_plan(&u, &Configuration::empty(), &plan).unwrap_err();
        assert!(matches!(err, PlanError::SourceDigestMismatch { .. }));
    }
}
