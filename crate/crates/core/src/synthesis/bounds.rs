//! Request floors and the per-type instance bound that makes the search
//! finite.

use super::{NodeBudget, SynthesisError, TargetRequest};
use crate::model::{PortCapacity, Universe};
use crate::pipeline::PipelineSpec;
use std::collections::BTreeMap;

/// Slack applied before taking ceilings of float rate arithmetic, so that
/// values that are integral up to rounding noise do not get bumped.
const CEIL_SLACK: f64 = 1e-7;

pub(crate) fn ceil_rate(x: f64) -> u64 {
    (x - CEIL_SLACK).ceil().max(0.0) as u64
}

/// Minimum instance counts implied by the request: explicit counts merged
/// with per-stage ceilings derived from the throughput target.
pub(crate) fn resolve_floors(
    universe: &Universe,
    request: &TargetRequest,
    pipeline: Option<&PipelineSpec>,
) -> Result<BTreeMap<String, u64>, SynthesisError> {
    if request.instances.is_empty() && request.throughput.is_none() {
        return Err(SynthesisError::EmptyRequest);
    }
    let mut floors: BTreeMap<String, u64> = BTreeMap::new();
    for (ty, count) in &request.instances {
        if universe.service(ty).is_none() {
            return Err(SynthesisError::UnknownServiceType(ty.clone()));
        }
        floors.insert(ty.clone(), *count);
    }
    if let Some(target) = &request.throughput {
        let spec = pipeline
            .ok_or_else(|| SynthesisError::PipelineRequired(target.pipeline.clone()))?;
        if spec.name != target.pipeline {
            return Err(SynthesisError::UnknownPipeline {
                requested: target.pipeline.clone(),
            });
        }
        let visits = spec.expected_visits()?;
        for stage in &spec.stages {
            let v = visits[&stage.name];
            if v <= 0.0 {
                continue;
            }
            for ty in [&stage.service, &stage.balancer] {
                let svc = universe
                    .service(ty)
                    .ok_or_else(|| SynthesisError::UnknownServiceType(ty.clone()))?;
                let need = ceil_rate(target.rate as f64 * v / svc.max_load as f64);
                let entry = floors.entry(ty.clone()).or_insert(0);
                *entry = (*entry).max(need);
            }
        }
    }
    Ok(floors)
}

/// Per-type instance floors that sustain `rate` messages/second on the
/// pipeline: for each stage, worker and balancer counts cover the
/// stage's expected visit share of the rate.
pub fn throughput_floors(
    universe: &Universe,
    spec: &PipelineSpec,
    rate: u64,
) -> Result<BTreeMap<String, u64>, SynthesisError> {
    let request = TargetRequest {
        instances: BTreeMap::new(),
        throughput: Some(super::ThroughputTarget {
            pipeline: spec.name.clone(),
            rate,
        }),
    };
    resolve_floors(universe, &request, Some(spec))
}

/// Most instances of one type that a full node budget can host.
fn global_cap(universe: &Universe, budget: &NodeBudget, service: &str) -> u64 {
    const UNCONSTRAINED: u64 = 1 << 20;
    let svc = match universe.service(service) {
        Some(svc) => svc,
        None => return 0,
    };
    let mut total: u64 = 0;
    for node in &universe.nodes {
        let per_node = node.fits(svc).unwrap_or(UNCONSTRAINED);
        let n = budget.get(&node.name).copied().unwrap_or(0);
        total = total.saturating_add(per_node.saturating_mul(n));
    }
    total.min(UNCONSTRAINED)
}

/// Upper bound on instances of each type that any cost-minimal solution
/// to the request can need.
///
/// The bound starts at the request floors and closes over requirements:
/// a provider type's bound covers the worst case of serving every
/// requirer alone, `max(ceil(total demanded slots / capacity), max
/// arity)`, with unbounded ports needing only `max arity` distinct
/// instances. Everything is clamped to what the node budget can host.
/// The result is monotone in the request.
pub fn instance_bound(
    universe: &Universe,
    request: &TargetRequest,
    pipeline: Option<&PipelineSpec>,
    node_budget: &NodeBudget,
) -> Result<BTreeMap<String, u64>, SynthesisError> {
    let floors = resolve_floors(universe, request, pipeline)?;
    closure_bounds(universe, &floors, node_budget)
}

pub(crate) fn closure_bounds(
    universe: &Universe,
    floors: &BTreeMap<String, u64>,
    node_budget: &NodeBudget,
) -> Result<BTreeMap<String, u64>, SynthesisError> {
    let mut bounds: BTreeMap<String, u64> = floors
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(t, n)| (t.clone(), *n))
        .collect();
    let caps: BTreeMap<String, u64> = universe
        .services
        .iter()
        .map(|s| (s.name.clone(), global_cap(universe, node_budget, &s.name)))
        .collect();
    for (ty, bound) in bounds.iter_mut() {
        *bound = (*bound).min(caps[ty]).max(if floors[ty] > 0 { 1 } else { 0 });
        // Keep the floor even when the budget cannot host it; the search
        // will then report infeasibility instead of silently shrinking
        // the request.
        *bound = (*bound).max(floors[ty]);
    }

    for round in 0.. {
        let mut changed = false;
        // Demand per port under current bounds.
        let mut slots: BTreeMap<&str, u128> = BTreeMap::new();
        let mut max_arity: BTreeMap<&str, u64> = BTreeMap::new();
        for (ty, bound) in &bounds {
            if *bound == 0 {
                continue;
            }
            let svc = universe
                .service(ty)
                .ok_or_else(|| SynthesisError::UnknownServiceType(ty.clone()))?;
            for req in &svc.requires {
                if req.arity == 0 {
                    continue;
                }
                if universe.providers_of(&req.port).is_empty() {
                    return Err(SynthesisError::UnprovidablePort {
                        port: req.port.clone(),
                        required_by: ty.clone(),
                    });
                }
                *slots.entry(req.port.as_str()).or_insert(0) +=
                    *bound as u128 * req.arity as u128;
                let m = max_arity.entry(req.port.as_str()).or_insert(0);
                *m = (*m).max(req.arity);
            }
        }
        let mut updates: Vec<(String, u64)> = Vec::new();
        for (port, demand) in &slots {
            for (svc, capacity) in universe.providers_of(port) {
                let need = match capacity {
                    PortCapacity::Unbounded => max_arity[port],
                    PortCapacity::Finite(0) => 0,
                    PortCapacity::Finite(c) => {
                        let by_slots = demand.div_ceil(c as u128).min(u64::MAX as u128) as u64;
                        by_slots.max(max_arity[port])
                    }
                };
                let need = need.min(caps[&svc.name]);
                if need > bounds.get(&svc.name).copied().unwrap_or(0) {
                    updates.push((svc.name.clone(), need));
                }
            }
        }
        for (ty, need) in updates {
            let entry = bounds.entry(ty).or_insert(0);
            if need > *entry {
                *entry = need;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        if round >= 100 {
            // Mutually amplifying requirement cycles: clamp every growing
            // bound to the budget cap and stop.
            for (ty, bound) in bounds.iter_mut() {
                *bound = (*bound).max(caps[ty].min(*bound * 2));
            }
            break;
        }
    }
    Ok(bounds)
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
                        mode: ReqMode::Strong,
                    }],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 10_000,
                },
                MicroserviceType {
                    name: "b".into(),
                    provides: vec![ProvidedPort {
                        port: "p".into(),
                        capacity: PortCapacity::Finite(2),
                    }],
                    requires: vec![],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 10_000,
                },
            ],
            nodes: vec![NodeType {
                name: "n".into(),
                cost: 100,
                capacity: [("cpu".to_string(), 4)].into(),
            }],
        }
    }

    fn budget() -> NodeBudget {
        [("n".to_string(), 300)].into()
    }

    #[test]
    fn no_requirements_bound_equals_request() {
        let mut u = universe();
        u.services[0].requires.clear();
        let request = TargetRequest::counts([("a".to_string(), 1)]);
        let bounds = instance_bound(&u, &request, None, &budget()).unwrap();
        assert_eq!(bounds.get("a"), Some(&1));
        assert_eq!(bounds.get("b"), None);
    }

    #[test]
    fn provider_bound_follows_capacity_ceiling() {
        let request = TargetRequest::counts([("a".to_string(), 4)]);
        let bounds = instance_bound(&universe(), &request, None, &budget()).unwrap();
        assert_eq!(bounds.get("b"), Some(&2)); // ceil(4 * 1 / 2)
    }

    #[test]
    fn unprovidable_port_is_an_error() {
        let mut u = universe();
        u.services.remove(1);
        let request = TargetRequest::counts([("a".to_string(), 1)]);
        match instance_bound(&u, &request, None, &budget()) {
            Err(SynthesisError::UnprovidablePort { port, .. }) => assert_eq!(port, "p"),
            other => panic!("expected UnprovidablePort, got {other:?}"),
        }
    }

    #[test]
    fn bound_is_monotone_in_the_request() {
        let small = instance_bound(
            &universe(),
            &TargetRequest::counts([("a".to_string(), 2)]),
            None,
            &budget(),
        )
        .unwrap();
        let large = instance_bound(
            &universe(),
            &TargetRequest::counts([("a".to_string(), 3)]),
            None,
            &budget(),
        )
        .unwrap();
        for (ty, bound) in &small {
            assert!(large.get(ty).copied().unwrap_or(0) >= *bound);
        }
    }
}
