//! Exhaustive oracle for the optimal deployment problem.
//!
//! This module is deliberately independent of the solver: bindings are
//! realized by a max-flow construction rather than the Gale–Ryser
//! condition, and placements are enumerated by plain backtracking rather
//! than the multiset/packing search. Test suites compare the two paths.

use super::{NodeBudget, SynthesisError, TargetRequest};
use crate::model::{
    check_correct, Binding, Configuration, InstanceId, NodeId, Placement, PortCapacity, Universe,
};
use crate::pipeline::PipelineSpec;
use std::collections::BTreeMap;

/// Outcome of the exhaustive search within the given per-type bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum BruteOutcome {
    Feasible {
        min_cost: u64,
        witness: Configuration,
    },
    Infeasible,
}

const SPACE_GUARD: u128 = 10_000_000;

/// Enumerates every count vector within `bounds`, realizes bindings by
/// max-flow, and tries every placement of instances onto nodes within
/// the budget. Globally cost-optimal within the bounds, by construction.
pub fn brute_force_optimal(
    universe: &Universe,
    request: &TargetRequest,
    pipeline: Option<&PipelineSpec>,
    bounds: &BTreeMap<String, u64>,
    node_budget: &NodeBudget,
) -> Result<BruteOutcome, SynthesisError> {
    let floors = oracle_floors(universe, request, pipeline)?;
    // Types outside the supplied bounds but floored by the request are
    // enumerated at exactly their floor.
    let types: Vec<&str> = {
        let mut t: Vec<&str> = bounds.keys().map(|s| s.as_str()).collect();
        for ty in floors.keys() {
            if !bounds.contains_key(ty) {
                t.push(ty);
            }
        }
        t.sort_unstable();
        t.dedup();
        t
    };

    let mut space: u128 = 1;
    for ty in &types {
        let bound = bounds
            .get(*ty)
            .copied()
            .unwrap_or_else(|| floors.get(*ty).copied().unwrap_or(0));
        space = space.saturating_mul(bound as u128 + 1);
        if space > SPACE_GUARD {
            return Err(SynthesisError::SearchSpaceTooLarge {
                size: space,
                limit: SPACE_GUARD,
            });
        }
    }

    let mut best: Option<(u64, Configuration)> = None;
    let mut counts: Vec<u64> = vec![0; types.len()];
    loop {
        let candidate: BTreeMap<&str, u64> = types
            .iter()
            .copied()
            .zip(counts.iter().copied())
            .filter(|(_, n)| *n > 0)
            .collect();
        let meets_floors = floors
            .iter()
            .all(|(ty, floor)| candidate.get(ty.as_str()).copied().unwrap_or(0) >= *floor);
        if meets_floors {
            if let Some(bindings) = realize_bindings(universe, &candidate) {
                let ceiling = best.as_ref().map(|(c, _)| *c);
                if let Some((cost, nodes, placement)) =
                    best_placement(universe, &candidate, node_budget, ceiling)
                {
                    let config = assemble(universe, &candidate, nodes, placement, bindings);
                    let report = check_correct(universe, &config).map_err(|e| {
                        SynthesisError::Internal(format!("oracle produced {e}"))
                    })?;
                    if !report.ok {
                        return Err(SynthesisError::Internal(format!(
                            "oracle witness incorrect: {:?}",
                            report.violations
                        )));
                    }
                    if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                        best = Some((cost, config));
                    }
                }
            }
        }
        // Next count vector.
        let mut i = 0;
        loop {
            if i == types.len() {
                return Ok(match best {
                    Some((min_cost, witness)) => BruteOutcome::Feasible { min_cost, witness },
                    None => BruteOutcome::Infeasible,
                });
            }
            let bound = bounds
                .get(types[i])
                .copied()
                .unwrap_or_else(|| floors.get(types[i]).copied().unwrap_or(0));
            if counts[i] < bound {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// Floors implied by the request, recomputed here so the oracle does not
/// share the solver's resolution code.
fn oracle_floors(
    universe: &Universe,
    request: &TargetRequest,
    pipeline: Option<&PipelineSpec>,
) -> Result<BTreeMap<String, u64>, SynthesisError> {
    let mut floors: BTreeMap<String, u64> = BTreeMap::new();
    for (ty, n) in &request.instances {
        if universe.service(ty).is_none() {
            return Err(SynthesisError::UnknownServiceType(ty.clone()));
        }
        floors.insert(ty.clone(), *n);
    }
    if let Some(target) = &request.throughput {
        let spec = pipeline
            .ok_or_else(|| SynthesisError::PipelineRequired(target.pipeline.clone()))?;
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
                let need = ((target.rate as f64 * v / svc.max_load as f64) - 1e-7)
                    .ceil()
                    .max(0.0) as u64;
                let entry = floors.entry(ty.clone()).or_insert(0);
                *entry = (*entry).max(need);
            }
        }
    }
    Ok(floors)
}

/// Instance ids for a count vector, deterministic.
fn instance_ids(candidate: &BTreeMap<&str, u64>) -> Vec<(InstanceId, String)> {
    let mut ids = Vec::new();
    for (ty, n) in candidate {
        for k in 1..=*n {
            ids.push((InstanceId(format!("{ty}-{k}")), (*ty).to_string()));
        }
    }
    ids
}

/// Per-port max-flow: every requirer instance must push `arity` units
/// through distinct unit edges into providers bounded by capacity.
/// Returns the realized bindings or None when some port cannot saturate.
fn realize_bindings(
    universe: &Universe,
    candidate: &BTreeMap<&str, u64>,
) -> Option<Vec<Binding>> {
    let instances = instance_ids(candidate);
    let mut ports: Vec<&str> = Vec::new();
    for (_, ty) in &instances {
        let svc = universe.service(ty)?;
        for req in &svc.requires {
            if req.arity > 0 {
                ports.push(req.port.as_str());
            }
        }
    }
    ports.sort_unstable();
    ports.dedup();

    let mut bindings = Vec::new();
    for port in ports {
        let mut requirers: Vec<(usize, u64)> = Vec::new(); // (instance idx, arity)
        for (idx, (_, ty)) in instances.iter().enumerate() {
            let svc = universe.service(ty).expect("checked above");
            if let Some(req) = svc.requirement(port) {
                if req.arity > 0 {
                    requirers.push((idx, req.arity));
                }
            }
        }
        if requirers.is_empty() {
            continue;
        }
        let demand_total: u64 = requirers.iter().map(|(_, a)| *a).sum();
        let mut providers: Vec<(usize, u64)> = Vec::new(); // (instance idx, capacity)
        for (idx, (_, ty)) in instances.iter().enumerate() {
            let svc = universe.service(ty).expect("checked above");
            if let Some(provided) = svc.provided_port(port) {
                let cap = match provided.capacity {
                    PortCapacity::Unbounded => demand_total,
                    PortCapacity::Finite(c) => c,
                };
                providers.push((idx, cap));
            }
        }
        let flow = max_flow_assignment(&requirers, &providers)?;
        for (r_idx, p_idx) in flow {
            bindings.push(Binding {
                port: port.to_string(),
                requirer: instances[r_idx].0.clone(),
                provider: instances[p_idx].0.clone(),
            });
        }
    }
    Some(bindings)
}

/// Ford–Fulkerson on the unit bipartite network. Returns the saturating
/// edge set or None when total demand cannot be met.
fn max_flow_assignment(
    requirers: &[(usize, u64)],
    providers: &[(usize, u64)],
) -> Option<Vec<(usize, usize)>> {
    // Node ids: 0 = source, 1..=R requirers, R+1..=R+P providers, last = sink.
    let r = requirers.len();
    let p = providers.len();
    let source = 0usize;
    let sink = 1 + r + p;
    let nodes = sink + 1;
    let mut capacity = vec![vec![0i64; nodes]; nodes];
    let mut demand_total: i64 = 0;
    for (i, (r_idx, arity)) in requirers.iter().enumerate() {
        capacity[source][1 + i] = *arity as i64;
        demand_total += *arity as i64;
        for (j, (p_idx, _)) in providers.iter().enumerate() {
            if r_idx != p_idx {
                capacity[1 + i][1 + r + j] = 1; // distinct providers, no self-binding
            }
        }
    }
    for (j, (_, cap)) in providers.iter().enumerate() {
        capacity[1 + r + j][sink] = *cap as i64;
    }

    let mut flow = 0i64;
    loop {
        // BFS for an augmenting path.
        let mut parent = vec![usize::MAX; nodes];
        parent[source] = source;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..nodes {
                if parent[v] == usize::MAX && capacity[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        // Unit capacities on the middle edges: bottleneck is at least 1.
        let mut bottleneck = i64::MAX;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            bottleneck = bottleneck.min(capacity[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            capacity[u][v] -= bottleneck;
            capacity[v][u] += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
    if flow < demand_total {
        return None;
    }
    let mut edges = Vec::new();
    for (i, (r_idx, _)) in requirers.iter().enumerate() {
        for (j, (p_idx, _)) in providers.iter().enumerate() {
            // Saturated middle edge: residual 0 means the unit was used.
            if r_idx != p_idx && capacity[1 + i][1 + r + j] == 0 {
                edges.push((*r_idx, *p_idx));
            }
        }
    }
    Some(edges)
}

/// Exhaustive placement: every instance goes onto some open node or a
/// fresh node of any type, pruned by the running best cost.
fn best_placement(
    universe: &Universe,
    candidate: &BTreeMap<&str, u64>,
    node_budget: &NodeBudget,
    ceiling: Option<u64>,
) -> Option<(u64, Vec<String>, Vec<usize>)> {
    let instances = instance_ids(candidate);
    if instances.is_empty() {
        return Some((0, Vec::new(), Vec::new()));
    }
    let axes: Vec<&str> = universe.resources.iter().map(|r| r.name.as_str()).collect();
    let needs: Vec<Vec<u64>> = instances
        .iter()
        .map(|(_, ty)| {
            let svc = universe.service(ty).expect("checked");
            axes.iter().map(|r| svc.consumption_of(r)).collect()
        })
        .collect();
    let node_kinds: Vec<(&str, u64, Vec<u64>, u64)> = universe
        .nodes
        .iter()
        .map(|n| {
            (
                n.name.as_str(),
                n.cost,
                axes.iter().map(|r| n.capacity_of(r)).collect(),
                node_budget.get(&n.name).copied().unwrap_or(0),
            )
        })
        .collect();

    struct Ctx<'a> {
        needs: &'a [Vec<u64>],
        node_kinds: &'a [(&'a str, u64, Vec<u64>, u64)],
        best: Option<(u64, Vec<String>, Vec<usize>)>,
    }

    fn rec(
        ctx: &mut Ctx,
        idx: usize,
        cost: u64,
        open: &mut Vec<(usize, Vec<u64>)>, // (kind index, residual)
        used_per_kind: &mut Vec<u64>,
        assignment: &mut Vec<usize>,
    ) {
        if let Some((best_cost, _, _)) = &ctx.best {
            if cost >= *best_cost {
                return;
            }
        }
        if idx == ctx.needs.len() {
            ctx.best = Some((
                cost,
                open.iter()
                    .map(|(kind, _)| ctx.node_kinds[*kind].0.to_string())
                    .collect(),
                assignment.clone(),
            ));
            return;
        }
        let need = &ctx.needs[idx];
        // Existing nodes, skipping residual-identical duplicates.
        let mut tried: Vec<(usize, Vec<u64>)> = Vec::new();
        for slot in 0..open.len() {
            let (kind, residual) = open[slot].clone();
            if tried.iter().any(|(k, r)| *k == kind && *r == residual) {
                continue;
            }
            tried.push((kind, residual.clone()));
            if residual.iter().zip(need).all(|(have, n)| have >= n) {
                for (have, n) in open[slot].1.iter_mut().zip(need) {
                    *have -= n;
                }
                assignment.push(slot);
                rec(ctx, idx + 1, cost, open, used_per_kind, assignment);
                assignment.pop();
                for (have, n) in open[slot].1.iter_mut().zip(need) {
                    *have += n;
                }
            }
        }
        // A fresh node of each kind.
        for kind in 0..ctx.node_kinds.len() {
            let (_, node_cost, caps, budget) = &ctx.node_kinds[kind];
            if used_per_kind[kind] >= *budget {
                continue;
            }
            if !caps.iter().zip(need).all(|(have, n)| have >= n) {
                continue;
            }
            let mut residual = caps.clone();
            for (have, n) in residual.iter_mut().zip(need) {
                *have -= n;
            }
            open.push((kind, residual));
            used_per_kind[kind] += 1;
            assignment.push(open.len() - 1);
            rec(ctx, idx + 1, cost + node_cost, open, used_per_kind, assignment);
            assignment.pop();
            used_per_kind[kind] -= 1;
            open.pop();
        }
    }

    let mut ctx = Ctx {
        needs: &needs,
        node_kinds: &node_kinds,
        best: ceiling.map(|c| (c, Vec::new(), Vec::new())),
    };
    let mut open = Vec::new();
    let mut used = vec![0u64; node_kinds.len()];
    let mut assignment = Vec::new();
    rec(&mut ctx, 0, 0, &mut open, &mut used, &mut assignment);
    match ctx.best {
        Some((_, nodes, _)) if nodes.is_empty() => None, // only the ceiling sentinel
        other => other,
    }
}

fn assemble(
    _universe: &Universe,
    candidate: &BTreeMap<&str, u64>,
    node_types: Vec<String>,
    assignment: Vec<usize>,
    bindings: Vec<Binding>,
) -> Configuration {
    let mut config = Configuration::empty();
    let mut node_ids = Vec::new();
    let mut counters: BTreeMap<&str, u64> = BTreeMap::new();
    for ty in &node_types {
        let k = counters.entry(ty.as_str()).or_insert(0);
        *k += 1;
        let id = NodeId(format!("{ty}-{k}"));
        config.nodes.insert(id.clone(), ty.clone());
        node_ids.push(id);
    }
    for ((id, ty), slot) in instance_ids(candidate).into_iter().zip(assignment) {
        config.instances.insert(
            id,
            Placement {
                service: ty,
                node: node_ids[slot].clone(),
            },
        );
    }
    config.bindings = bindings;
    config.canonicalize();
    config
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        MicroserviceType, NodeType, ProvidedPort, ReqMode, Requirement, ResourceKind,
    };
    use crate::synthesis::{solve_request, SolveStatus};
    use std::time::Duration;

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
            nodes: vec![
                NodeType {
                    name: "small".into(),
                    cost: 100,
                    capacity: [("cpu".to_string(), 2)].into(),
                },
                NodeType {
                    name: "large".into(),
                    cost: 180,
                    capacity: [("cpu".to_string(), 4)].into(),
                },
            ],
        }
    }

    fn budget(u: &Universe, n: u64) -> NodeBudget {
        u.nodes.iter().map(|t| (t.name.clone(), n)).collect()
    }

    fn bounds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(t, n)| ((*t).to_string(), *n)).collect()
    }

    #[test]
    fn zero_request_is_free() {
        let u = universe();
        let outcome = brute_force_optimal(
            &u,
            &TargetRequest::counts([("a".to_string(), 0)]),
            None,
            &bounds(&[("a", 2), ("b", 2)]),
            &budget(&u, 3),
        )
        .unwrap();
        match outcome {
            BruteOutcome::Feasible { min_cost, witness } => {
                assert_eq!(min_cost, 0);
                assert!(witness.nodes.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_matches_solver_on_the_spec_worked_example() {
        // Requesting a=2 forces one b (capacity 2); three instances of one
        // cpu each pack onto one large node for 180 < 2 smalls.
        let u = universe();
        let request = TargetRequest::counts([("a".to_string(), 2)]);
        let outcome = brute_force_optimal(
            &u,
            &request,
            None,
            &bounds(&[("a", 3), ("b", 3)]),
            &budget(&u, 3),
        )
        .unwrap();
        let solved = solve_request(&u, &request, None, &budget(&u, 3), Duration::from_secs(10))
            .unwrap();
        match outcome {
            BruteOutcome::Feasible { min_cost, .. } => {
                assert_eq!(min_cost, 180);
                assert_eq!(solved.objective_cost, Some(min_cost));
                assert_eq!(solved.status, SolveStatus::Optimal);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeployable_request_is_infeasible() {
        let mut u = universe();
        u.services[1].consumption.insert("cpu".into(), 10);
        let outcome = brute_force_optimal(
            &u,
            &TargetRequest::counts([("b".to_string(), 1)]),
            None,
            &bounds(&[("a", 2), ("b", 2)]),
            &budget(&u, 3),
        )
        .unwrap();
        assert_eq!(outcome, BruteOutcome::Infeasible);
    }

    #[test]
    fn space_guard_trips() {
        let u = universe();
        let result = brute_force_optimal(
            &u,
            &TargetRequest::counts([("a".to_string(), 1)]),
            None,
            &bounds(&[("a", 10_000), ("b", 10_000)]),
            &budget(&u, 3),
        );
        assert!(matches!(
            result,
            Err(SynthesisError::SearchSpaceTooLarge { .. })
        ));
    }
}
