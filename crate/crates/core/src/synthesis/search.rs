//! Branch-and-bound over per-type instance counts.
//!
//! The search starts at the request floors and grows provider counts only
//! when an exact port-feasibility check demands it, so every explored
//! leaf is a minimal candidate. Candidates are ordered by a fractional
//! resource-cost lower bound; the first exhausted frontier proves
//! optimality. Packing cost is exact, so solved objectives match the
//! exhaustive oracle.

use super::bounds::closure_bounds;
use super::concretize::concretize_packing;
use super::encode::{encode, ConstraintSystem};
use super::packing::{min_cost_packing, Packing, Timeout};
use super::ports::{demanded_ports, port_problem};
use super::{NodeBudget, Solution, SolveStatus, SynthesisError, TargetRequest};
use crate::model::{Configuration, PortCapacity, Universe};
use crate::pipeline::{ConfigurationDelta, DeltaNode, PipelineSpec};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::{Duration, Instant};

/// Encode and solve in one call.
pub fn solve_request(
    universe: &Universe,
    request: &TargetRequest,
    pipeline: Option<&PipelineSpec>,
    node_budget: &NodeBudget,
    time_budget: Duration,
) -> Result<Solution, SynthesisError> {
    let system = encode(universe, request, pipeline, node_budget)?;
    Ok(solve(&system, time_budget))
}

/// Minimize (total node cost, total instance count) lexicographically.
///
/// `Optimal` carries a proof by exhaustion; hitting the time budget
/// downgrades the incumbent to `Feasible` or, with no incumbent, to
/// `TimedOut`. Identical inputs yield identical solutions.
pub fn solve(system: &ConstraintSystem, time_budget: Duration) -> Solution {
    let started = Instant::now();
    let deadline = started + time_budget;
    let universe = &system.universe;

    let types: Vec<String> = system.bounds.keys().cloned().collect();
    let floors_vec: Vec<u64> = types
        .iter()
        .map(|t| system.floors.get(t).copied().unwrap_or(0))
        .collect();
    let bounds_vec: Vec<u64> = types.iter().map(|t| system.bounds[t]).collect();

    let outcome = search(
        universe,
        &types,
        &floors_vec,
        &bounds_vec,
        &system.node_budget,
        deadline,
        |counts| first_infeasible_port(universe, counts, &BTreeMap::new()),
        |counts| min_cost_packing(universe, counts, &system.node_budget, deadline),
    );

    let wall = started.elapsed();
    match outcome {
        SearchOutcome::Best { packing, counts } => {
            let configuration = concretize_packing(universe, &packing)
                .expect("solver-internal: satisfying assignment must concretize");
            Solution {
                status: SolveStatus::Optimal,
                objective_cost: Some(packing.cost),
                instance_total: Some(counts.iter().sum()),
                configuration: Some(configuration),
                timed_out: false,
                wall,
            }
        }
        SearchOutcome::BestTimedOut { packing, counts } => {
            let configuration = concretize_packing(universe, &packing)
                .expect("solver-internal: satisfying assignment must concretize");
            Solution {
                status: SolveStatus::Feasible,
                objective_cost: Some(packing.cost),
                instance_total: Some(counts.iter().sum()),
                configuration: Some(configuration),
                timed_out: true,
                wall,
            }
        }
        SearchOutcome::Infeasible => Solution {
            status: SolveStatus::Infeasible,
            configuration: None,
            objective_cost: None,
            instance_total: None,
            timed_out: false,
            wall,
        },
        SearchOutcome::TimedOut => Solution {
            status: SolveStatus::TimedOut,
            configuration: None,
            objective_cost: None,
            instance_total: None,
            timed_out: true,
            wall,
        },
    }
}

/// Result of an incremental solve: the cheapest additive delta that lifts
/// a base configuration to the requested per-type floors using fresh
/// nodes only.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSolution {
    pub status: SolveStatus,
    pub delta: Option<ConfigurationDelta>,
    pub added_cost: Option<u64>,
    pub added_instances: Option<u64>,
    pub timed_out: bool,
}

/// Solve for the cheapest additive extension of `base` meeting absolute
/// per-type floors. New instances may bind to existing providers with
/// free capacity; existing instances and their bindings are never
/// touched, so deltas from successive calls compose.
pub fn solve_delta(
    universe: &Universe,
    base: &Configuration,
    target_floors: &BTreeMap<String, u64>,
    node_budget: &NodeBudget,
    time_budget: Duration,
) -> Result<DeltaSolution, SynthesisError> {
    let started = Instant::now();
    let deadline = started + time_budget;

    let mut delta_floors: BTreeMap<String, u64> = BTreeMap::new();
    for (ty, floor) in target_floors {
        if universe.service(ty).is_none() {
            return Err(SynthesisError::UnknownServiceType(ty.clone()));
        }
        let have = base.count_of(ty);
        if *floor > have {
            delta_floors.insert(ty.clone(), floor - have);
        }
    }
    if delta_floors.is_empty() {
        return Ok(DeltaSolution {
            status: SolveStatus::Optimal,
            delta: Some(ConfigurationDelta::default()),
            added_cost: Some(0),
            added_instances: Some(0),
            timed_out: false,
        });
    }
    let bounds = closure_bounds(universe, &delta_floors, node_budget)?;

    let types: Vec<String> = bounds.keys().cloned().collect();
    let floors_vec: Vec<u64> = types
        .iter()
        .map(|t| delta_floors.get(t).copied().unwrap_or(0))
        .collect();
    let bounds_vec: Vec<u64> = types.iter().map(|t| bounds[t]).collect();

    // Free capacity on existing provider instances, per port.
    let mut residuals: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (id, placement) in &base.instances {
        let svc = universe
            .service(&placement.service)
            .ok_or_else(|| SynthesisError::UnknownServiceType(placement.service.clone()))?;
        for provided in &svc.provides {
            let load = base.provider_load(id, &provided.port);
            let free = match provided.capacity {
                PortCapacity::Unbounded => u64::MAX,
                PortCapacity::Finite(c) => c.saturating_sub(load),
            };
            if free > 0 {
                residuals
                    .entry(provided.port.clone())
                    .or_default()
                    .push(free);
            }
        }
    }

    let outcome = search(
        universe,
        &types,
        &floors_vec,
        &bounds_vec,
        node_budget,
        deadline,
        |counts| first_infeasible_port(universe, counts, &residuals),
        |counts| min_cost_packing(universe, counts, node_budget, deadline),
    );

    let to_delta = |packing: &Packing| ConfigurationDelta {
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

    Ok(match outcome {
        SearchOutcome::Best { packing, counts } => DeltaSolution {
            status: SolveStatus::Optimal,
            added_cost: Some(packing.cost),
            added_instances: Some(counts.iter().sum()),
            delta: Some(to_delta(&packing)),
            timed_out: false,
        },
        SearchOutcome::BestTimedOut { packing, counts } => DeltaSolution {
            status: SolveStatus::Feasible,
            added_cost: Some(packing.cost),
            added_instances: Some(counts.iter().sum()),
            delta: Some(to_delta(&packing)),
            timed_out: true,
        },
        SearchOutcome::Infeasible => DeltaSolution {
            status: SolveStatus::Infeasible,
            delta: None,
            added_cost: None,
            added_instances: None,
            timed_out: false,
        },
        SearchOutcome::TimedOut => DeltaSolution {
            status: SolveStatus::TimedOut,
            delta: None,
            added_cost: None,
            added_instances: None,
            timed_out: true,
        },
    })
}

enum SearchOutcome {
    Best { packing: Packing, counts: Vec<u64> },
    BestTimedOut { packing: Packing, counts: Vec<u64> },
    Infeasible,
    TimedOut,
}

/// Which port, if any, is not realizable under these counts; extra
/// supplies are residual slots on pre-existing provider instances.
fn first_infeasible_port(
    universe: &Universe,
    counts: &BTreeMap<String, u64>,
    extra: &BTreeMap<String, Vec<u64>>,
) -> Option<String> {
    static EMPTY: Vec<u64> = Vec::new();
    demanded_ports(universe, counts)
        .into_iter()
        .find(|port| {
            let extra_supplies = extra.get(*port).unwrap_or(&EMPTY);
            !port_problem(universe, port, counts, extra_supplies).feasible()
        })
        .map(str::to_owned)
}

/// Fractional lower bound on node cost for hosting `counts`: for each
/// resource, demand times the best cost-per-unit ratio in the catalog;
/// any non-empty deployment also pays for at least one node. `None`
/// means some demanded resource has no supply at all.
fn cost_lower_bound(
    universe: &Universe,
    counts: &BTreeMap<String, u64>,
    node_budget: &NodeBudget,
) -> Option<u64> {
    let mut total_instances: u64 = 0;
    let mut totals: BTreeMap<&str, u128> = BTreeMap::new();
    for (ty, count) in counts {
        if *count == 0 {
            continue;
        }
        total_instances += count;
        let svc = universe.service(ty)?;
        for (res, need) in &svc.consumption {
            if *need > 0 {
                *totals.entry(res.as_str()).or_insert(0) += *need as u128 * *count as u128;
            }
        }
    }
    if total_instances == 0 {
        return Some(0);
    }
    let available: Vec<&crate::model::NodeType> = universe
        .nodes
        .iter()
        .filter(|n| node_budget.get(&n.name).copied().unwrap_or(0) > 0)
        .collect();
    let cheapest_node = available.iter().map(|n| n.cost).min()?;
    let mut lb: u128 = cheapest_node as u128;
    for (res, total) in totals {
        // argmin of cost/capacity over node kinds that supply `res`.
        let mut best: Option<(u128, u128)> = None; // (cost, cap)
        for node in &available {
            let cap = node.capacity_of(res);
            if cap == 0 {
                continue;
            }
            let candidate = (node.cost as u128, cap as u128);
            best = Some(match best {
                None => candidate,
                Some(current) => {
                    if candidate.0 * current.1 < current.0 * candidate.1 {
                        candidate
                    } else {
                        current
                    }
                }
            });
        }
        let (cost, cap) = best?;
        lb = lb.max((total * cost).div_ceil(cap));
    }
    Some(lb.min(u64::MAX as u128) as u64)
}

fn search(
    universe: &Universe,
    types: &[String],
    floors: &[u64],
    bounds: &[u64],
    node_budget: &NodeBudget,
    deadline: Instant,
    port_check: impl Fn(&BTreeMap<String, u64>) -> Option<String>,
    packer: impl Fn(&BTreeMap<String, u64>) -> Result<Option<Packing>, Timeout>,
) -> SearchOutcome {
    #[derive(PartialEq, Eq)]
    struct Key {
        lb: u64,
        instances: u64,
        counts: Vec<u64>,
    }
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.lb
                .cmp(&other.lb)
                .then(self.instances.cmp(&other.instances))
                .then(self.counts.cmp(&other.counts))
        }
    }
    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let to_map = |counts: &[u64]| -> BTreeMap<String, u64> {
        types
            .iter()
            .cloned()
            .zip(counts.iter().copied())
            .filter(|(_, n)| *n > 0)
            .collect()
    };

    let mut best: Option<(u64, u64, Vec<u64>, Packing)> = None;
    let mut timed_out = false;
    let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    let mut visited: BTreeSet<Vec<u64>> = BTreeSet::new();

    let start = floors.to_vec();
    if let Some(lb) = cost_lower_bound(universe, &to_map(&start), node_budget) {
        heap.push(Reverse(Key {
            lb,
            instances: start.iter().sum(),
            counts: start.clone(),
        }));
        visited.insert(start);
    }

    while let Some(Reverse(key)) = heap.pop() {
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        if let Some((best_cost, best_instances, _, _)) = &best {
            // Keys are popped in ascending order, so once the frontier
            // cannot beat the incumbent the search is complete.
            if (key.lb, key.instances) >= (*best_cost, *best_instances) {
                break;
            }
        }
        let counts_map = to_map(&key.counts);
        match port_check(&counts_map) {
            None => {
                match packer(&counts_map) {
                    Ok(Some(packing)) => {
                        let candidate = (packing.cost, key.instances, key.counts.clone(), packing);
                        let better = match &best {
                            None => true,
                            Some((cost, instances, counts, _)) => {
                                (candidate.0, candidate.1, &candidate.2)
                                    < (*cost, *instances, counts)
                            }
                        };
                        if better {
                            best = Some(candidate);
                        }
                    }
                    // Packing demand only grows along this branch; an
                    // unpackable count vector stays unpackable.
                    Ok(None) => {}
                    Err(Timeout) => {
                        timed_out = true;
                        break;
                    }
                }
            }
            Some(port) => {
                for (idx, ty) in types.iter().enumerate() {
                    if key.counts[idx] >= bounds[idx] {
                        continue;
                    }
                    let svc = universe.service(ty).expect("bounds come from universe");
                    if svc.provided_port(&port).is_none() {
                        continue;
                    }
                    let mut counts = key.counts.clone();
                    counts[idx] += 1;
                    if visited.contains(&counts) {
                        continue;
                    }
                    if let Some(lb) = cost_lower_bound(universe, &to_map(&counts), node_budget) {
                        heap.push(Reverse(Key {
                            lb,
                            instances: counts.iter().sum(),
                            counts: counts.clone(),
                        }));
                    }
                    visited.insert(counts);
                }
            }
        }
    }

    match (best, timed_out) {
        (Some((_, _, counts, packing)), false) => SearchOutcome::Best { packing, counts },
        (Some((_, _, counts, packing)), true) => SearchOutcome::BestTimedOut { packing, counts },
        (None, false) => SearchOutcome::Infeasible,
        (None, true) => SearchOutcome::TimedOut,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        MicroserviceType, NodeType, PortCapacity, ProvidedPort, ReqMode, Requirement, ResourceKind,
    };

    fn budget(universe: &Universe, each: u64) -> NodeBudget {
        universe
            .nodes
            .iter()
            .map(|n| (n.name.clone(), each))
            .collect()
    }

    fn service(name: &str, cpu: u64) -> MicroserviceType {
        MicroserviceType {
            name: name.into(),
            provides: vec![],
            requires: vec![],
            consumption: [("cpu".to_string(), cpu)].into(),
            max_load: 1000,
        }
    }

    fn one_node_universe() -> Universe {
        Universe {
            resources: vec![ResourceKind {
                name: "cpu".into(),
                unit: "cores".into(),
            }],
            services: vec![service("a", 1)],
            nodes: vec![NodeType {
                name: "small".into(),
                cost: 100,
                capacity: [("cpu".to_string(), 1)].into(),
            }],
        }
    }

    #[test]
    fn unique_solution_found_optimal() {
        let u = one_node_universe();
        let s = solve_request(
            &u,
            &TargetRequest::counts([("a".to_string(), 1)]),
            None,
            &budget(&u, 5),
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective_cost, Some(100));
        let config = s.configuration.unwrap();
        assert_eq!(config.instances.len(), 1);
        assert_eq!(config.nodes.len(), 1);
    }

    #[test]
    fn colocation_wins_over_two_nodes() {
        let mut u = one_node_universe();
        u.services.push(service("b", 1));
        u.nodes[0].capacity.insert("cpu".into(), 2);
        let s = solve_request(
            &u,
            &TargetRequest::counts([("a".to_string(), 1), ("b".to_string(), 1)]),
            None,
            &budget(&u, 5),
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective_cost, Some(100), "co-located, not 200");
    }

    #[test]
    fn over_budget_request_is_infeasible() {
        let u = one_node_universe();
        let s = solve_request(
            &u,
            &TargetRequest::counts([("a".to_string(), 3)]),
            None,
            &budget(&u, 2),
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn all_zero_request_yields_empty_configuration() {
        let u = one_node_universe();
        let s = solve_request(
            &u,
            &TargetRequest::counts([("a".to_string(), 0)]),
            None,
            &budget(&u, 2),
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective_cost, Some(0));
        assert!(s.configuration.unwrap().nodes.is_empty());
    }

    #[test]
    fn provider_closure_forces_extra_instances() {
        // a strongly requires p arity 1; only b provides p with capacity 2.
        // Requesting 3 a's forces ceil(3/2) = 2 b's.
        let u = Universe {
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
            nodes: vec![NodeType {
                name: "n".into(),
                cost: 10,
                capacity: [("cpu".to_string(), 4)].into(),
            }],
        };
        let s = solve_request(
            &u,
            &TargetRequest::counts([("a".to_string(), 3)]),
            None,
            &budget(&u, 10),
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        let config = s.configuration.unwrap();
        assert_eq!(config.count_of("a"), 3);
        assert_eq!(config.count_of("b"), 2);
        assert_eq!(s.instance_total, Some(5));
    }

    #[test]
    fn delta_solve_reuses_existing_provider_slack() {
        let u = Universe {
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
                        capacity: PortCapacity::Finite(4),
                    }],
                    requires: vec![],
                    consumption: [("cpu".to_string(), 1)].into(),
                    max_load: 1000,
                },
            ],
            nodes: vec![NodeType {
                name: "n".into(),
                cost: 10,
                capacity: [("cpu".to_string(), 2)].into(),
            }],
        };
        let base = solve_request(
            &u,
            &TargetRequest::counts([("a".to_string(), 1), ("b".to_string(), 1)]),
            None,
            &budget(&u, 10),
            Duration::from_secs(10),
        )
        .unwrap()
        .configuration
        .unwrap();

        // Base b has capacity 4, load 1: three more a's fit without a new b.
        let target: BTreeMap<String, u64> = [("a".to_string(), 4), ("b".to_string(), 1)].into();
        let ds = solve_delta(&u, &base, &target, &budget(&u, 10), Duration::from_secs(10))
            .unwrap();
        assert_eq!(ds.status, SolveStatus::Optimal);
        let delta = ds.delta.unwrap();
        assert_eq!(delta.added_counts().get("a"), Some(&3));
        assert_eq!(delta.added_counts().get("b"), None);

        let grown = crate::synthesis::apply_delta(&u, &base, &delta).unwrap();
        assert_eq!(grown.count_of("a"), 4);
        assert_eq!(grown.count_of("b"), 1);
    }
}
