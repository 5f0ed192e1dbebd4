//! The constraint-system view of a deployment request.
//!
//! [`encode`] lowers a request to integer variables and linear rows over
//! node slots: per-slot instance counts, per-slot usage indicators, and
//! aggregate binding counts per (requirer type, port, provider type).
//! The rows are sound aggregate conditions; the one condition linear rows
//! cannot express exactly, realizability of *distinct-provider* demands,
//! is available as [`ConstraintSystem::ports_realizable`] and is enforced
//! by the solver. Satisfying rows plus realizability concretizes to a
//! correct configuration.

use super::bounds::{closure_bounds, resolve_floors};
use super::ports::{demanded_ports, port_problem};
use super::{NodeBudget, SynthesisError, TargetRequest};
use crate::model::{Configuration, PortCapacity, Universe};
use crate::pipeline::PipelineSpec;
use serde::Serialize;
use std::collections::BTreeMap;

/// One provisionable node position: `index`-th node of a type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SlotId {
    pub node_type: String,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum VarKind {
    /// Instances of `service` hosted on `slot`.
    InstanceCount { service: String, slot: SlotId },
    /// Whether the slot is provisioned at all.
    NodeUsed { slot: SlotId },
    /// Bindings on `port` from instances of `requirer` to instances of
    /// `provider`, aggregated over instances.
    BindingCount {
        requirer: String,
        port: String,
        provider: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cmp {
    Le,
    Ge,
}

/// `sum(coefficient * var) cmp rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinearConstraint {
    pub label: String,
    pub terms: Vec<(i64, VarId)>,
    pub cmp: Cmp,
    pub rhs: i64,
}

impl LinearConstraint {
    pub fn holds(&self, values: &[i64]) -> bool {
        let lhs: i64 = self
            .terms
            .iter()
            .map(|(c, VarId(v))| c * values.get(*v).copied().unwrap_or(0))
            .sum();
        match self.cmp {
            Cmp::Le => lhs <= self.rhs,
            Cmp::Ge => lhs >= self.rhs,
        }
    }
}

/// The encoded deployment problem: variables, linear rows, and the data
/// the branch-and-bound search needs (floors, bounds, budget). The
/// objective is lexicographic: minimize the cost of used slots, then the
/// total instance count.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub(crate) universe: Universe,
    pub(crate) floors: BTreeMap<String, u64>,
    pub(crate) bounds: BTreeMap<String, u64>,
    pub(crate) node_budget: NodeBudget,
    pub vars: Vec<VarKind>,
    pub constraints: Vec<LinearConstraint>,
    var_index: BTreeMap<VarKind, VarId>,
}

impl ConstraintSystem {
    pub fn var(&self, kind: &VarKind) -> Option<VarId> {
        self.var_index.get(kind).copied()
    }

    pub fn floors(&self) -> &BTreeMap<String, u64> {
        &self.floors
    }

    pub fn bounds(&self) -> &BTreeMap<String, u64> {
        &self.bounds
    }

    /// Rows violated by an assignment (empty means all rows hold).
    pub fn violated_rows(&self, values: &[i64]) -> Vec<&LinearConstraint> {
        self.constraints
            .iter()
            .filter(|c| !c.holds(values))
            .collect()
    }

    /// Exact distinct-provider realizability of per-type instance counts.
    pub fn ports_realizable(&self, counts: &BTreeMap<String, u64>) -> bool {
        demanded_ports(&self.universe, counts)
            .into_iter()
            .all(|port| port_problem(&self.universe, port, counts, &[]).feasible())
    }

    /// Derives a full variable assignment from a concrete configuration,
    /// mapping nodes of each type to slots in non-increasing load order.
    pub fn assignment_from(&self, config: &Configuration) -> Vec<i64> {
        let mut values = vec![0i64; self.vars.len()];
        for node in self.universe.nodes.iter() {
            let mut loaded: Vec<(u64, &crate::model::NodeId)> = config
                .nodes
                .iter()
                .filter(|(_, ty)| **ty == node.name)
                .map(|(id, _)| (config.hosted_on(id).count() as u64, id))
                .collect();
            loaded.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
            for (index, (_, node_id)) in loaded.iter().enumerate() {
                let slot = SlotId {
                    node_type: node.name.clone(),
                    index: index as u64,
                };
                if let Some(VarId(v)) = self.var(&VarKind::NodeUsed { slot: slot.clone() }) {
                    values[v] = 1;
                }
                for instance in config.hosted_on(node_id) {
                    let service = config.instances[instance].service.clone();
                    if let Some(VarId(v)) = self.var(&VarKind::InstanceCount {
                        service,
                        slot: slot.clone(),
                    }) {
                        values[v] += 1;
                    }
                }
            }
        }
        for binding in &config.bindings {
            let requirer = match config.instances.get(&binding.requirer) {
                Some(p) => p.service.clone(),
                None => continue,
            };
            let provider = match config.instances.get(&binding.provider) {
                Some(p) => p.service.clone(),
                None => continue,
            };
            if let Some(VarId(v)) = self.var(&VarKind::BindingCount {
                requirer,
                port: binding.port.clone(),
                provider,
            }) {
                values[v] += 1;
            }
        }
        values
    }
}

/// Lowers a request against a universe and node budget. Fails when the
/// universe does not validate, when the request is empty or names unknown
/// types, or when it transitively requires a port no type provides.
pub fn encode(
    universe: &Universe,
    request: &TargetRequest,
    pipeline: Option<&PipelineSpec>,
    node_budget: &NodeBudget,
) -> Result<ConstraintSystem, SynthesisError> {
    // Undeployable types are tolerated here: the packing constraints they
    // induce simply have no solution, which the solver reports as
    // infeasibility. Every other validation error breaks encoding
    // assumptions and is rejected.
    let validation = crate::model::validate_universe(universe);
    let blocking: Vec<_> = validation
        .errors
        .iter()
        .filter(|e| !matches!(e, crate::model::UniverseIssue::UndeployableType { .. }))
        .cloned()
        .collect();
    if !blocking.is_empty() {
        return Err(SynthesisError::InvalidUniverse(blocking));
    }
    let floors = resolve_floors(universe, request, pipeline)?;
    let bounds = closure_bounds(universe, &floors, node_budget)?;

    let mut system = ConstraintSystem {
        universe: universe.clone(),
        floors,
        bounds,
        node_budget: node_budget.clone(),
        vars: Vec::new(),
        constraints: Vec::new(),
        var_index: BTreeMap::new(),
    };

    let instance_ceiling: u64 = system.bounds.values().sum();
    let mut slots: Vec<SlotId> = Vec::new();
    for node in &universe.nodes {
        let budget = node_budget.get(&node.name).copied().unwrap_or(0);
        for index in 0..budget.min(instance_ceiling) {
            slots.push(SlotId {
                node_type: node.name.clone(),
                index,
            });
        }
    }

    let add_var = |system: &mut ConstraintSystem, kind: VarKind| -> VarId {
        let id = VarId(system.vars.len());
        system.vars.push(kind.clone());
        system.var_index.insert(kind, id);
        id
    };

    let types: Vec<String> = system.bounds.keys().cloned().collect();
    for slot in &slots {
        add_var(&mut system, VarKind::NodeUsed { slot: slot.clone() });
        for ty in &types {
            add_var(
                &mut system,
                VarKind::InstanceCount {
                    service: ty.clone(),
                    slot: slot.clone(),
                },
            );
        }
    }

    // Target floors: enough instances of each requested type, anywhere.
    for (ty, floor) in system.floors.clone() {
        if floor == 0 {
            continue;
        }
        let terms: Vec<(i64, VarId)> = slots
            .iter()
            .map(|slot| {
                (
                    1,
                    system
                        .var(&VarKind::InstanceCount {
                            service: ty.clone(),
                            slot: slot.clone(),
                        })
                        .expect("declared"),
                )
            })
            .collect();
        system.constraints.push(LinearConstraint {
            label: format!("target:{ty}"),
            terms,
            cmp: Cmp::Ge,
            rhs: floor as i64,
        });
    }

    // Resource packing and occupancy coupling per slot.
    for slot in &slots {
        let node = universe.node_type(&slot.node_type).expect("declared");
        let used = system
            .var(&VarKind::NodeUsed { slot: slot.clone() })
            .expect("declared");
        for res in &universe.resources {
            let mut terms: Vec<(i64, VarId)> = Vec::new();
            for ty in &types {
                let svc = universe.service(ty).expect("validated");
                let need = svc.consumption_of(&res.name);
                if need > 0 {
                    let var = system
                        .var(&VarKind::InstanceCount {
                            service: ty.clone(),
                            slot: slot.clone(),
                        })
                        .expect("declared");
                    terms.push((need as i64, var));
                }
            }
            if terms.is_empty() {
                continue;
            }
            terms.push((-(node.capacity_of(&res.name) as i64), used));
            system.constraints.push(LinearConstraint {
                label: format!("packing:{}#{}:{}", slot.node_type, slot.index, res.name),
                terms,
                cmp: Cmp::Le,
                rhs: 0,
            });
        }
        let mut occupancy: Vec<(i64, VarId)> = types
            .iter()
            .map(|ty| {
                (
                    1,
                    system
                        .var(&VarKind::InstanceCount {
                            service: ty.clone(),
                            slot: slot.clone(),
                        })
                        .expect("declared"),
                )
            })
            .collect();
        occupancy.push((-(instance_ceiling.max(1) as i64), used));
        system.constraints.push(LinearConstraint {
            label: format!("occupancy:{}#{}", slot.node_type, slot.index),
            terms: occupancy,
            cmp: Cmp::Le,
            rhs: 0,
        });
    }

    // Symmetry: within a node type, slots are filled in non-increasing
    // load order.
    for node in &universe.nodes {
        let in_type: Vec<&SlotId> = slots
            .iter()
            .filter(|s| s.node_type == node.name)
            .collect();
        for pair in in_type.windows(2) {
            let mut terms: Vec<(i64, VarId)> = Vec::new();
            for ty in &types {
                terms.push((
                    1,
                    system
                        .var(&VarKind::InstanceCount {
                            service: ty.clone(),
                            slot: pair[0].clone(),
                        })
                        .expect("declared"),
                ));
                terms.push((
                    -1,
                    system
                        .var(&VarKind::InstanceCount {
                            service: ty.clone(),
                            slot: pair[1].clone(),
                        })
                        .expect("declared"),
                ));
            }
            system.constraints.push(LinearConstraint {
                label: format!("symmetry:{}#{}", node.name, pair[0].index),
                terms,
                cmp: Cmp::Ge,
                rhs: 0,
            });
        }
    }

    // Aggregate connection rows per demanded port.
    let counts_at_bounds = system.bounds.clone();
    for port in demanded_ports(universe, &counts_at_bounds) {
        let requirers: Vec<(&str, u64)> = universe
            .services
            .iter()
            .filter(|s| system.bounds.contains_key(&s.name))
            .filter_map(|s| s.requirement(port).map(|r| (s.name.as_str(), r.arity)))
            .filter(|(_, arity)| *arity > 0)
            .collect();
        let providers: Vec<(&str, PortCapacity)> = universe
            .providers_of(port)
            .into_iter()
            .filter(|(s, _)| system.bounds.contains_key(&s.name))
            .map(|(s, c)| (s.name.as_str(), c))
            .collect();
        for (requirer, _) in &requirers {
            for (provider, _) in &providers {
                add_var(
                    &mut system,
                    VarKind::BindingCount {
                        requirer: (*requirer).to_string(),
                        port: port.to_string(),
                        provider: (*provider).to_string(),
                    },
                );
            }
        }
        for (requirer, arity) in &requirers {
            let mut terms: Vec<(i64, VarId)> = providers
                .iter()
                .map(|(provider, _)| {
                    (
                        1,
                        system
                            .var(&VarKind::BindingCount {
                                requirer: (*requirer).to_string(),
                                port: port.to_string(),
                                provider: (*provider).to_string(),
                            })
                            .expect("declared"),
                    )
                })
                .collect();
            for slot in &slots {
                terms.push((
                    -(*arity as i64),
                    system
                        .var(&VarKind::InstanceCount {
                            service: (*requirer).to_string(),
                            slot: slot.clone(),
                        })
                        .expect("declared"),
                ));
            }
            system.constraints.push(LinearConstraint {
                label: format!("require:{requirer}:{port}"),
                terms,
                cmp: Cmp::Ge,
                rhs: 0,
            });
        }
        for (provider, capacity) in &providers {
            let cap = match capacity {
                PortCapacity::Unbounded => continue,
                PortCapacity::Finite(c) => *c,
            };
            let mut terms: Vec<(i64, VarId)> = requirers
                .iter()
                .map(|(requirer, _)| {
                    (
                        1,
                        system
                            .var(&VarKind::BindingCount {
                                requirer: (*requirer).to_string(),
                                port: port.to_string(),
                                provider: (*provider).to_string(),
                            })
                            .expect("declared"),
                    )
                })
                .collect();
            for slot in &slots {
                terms.push((
                    -(cap as i64),
                    system
                        .var(&VarKind::InstanceCount {
                            service: (*provider).to_string(),
                            slot: slot.clone(),
                        })
                        .expect("declared"),
                ));
            }
            system.constraints.push(LinearConstraint {
                label: format!("capacity:{port}:{provider}"),
                terms,
                cmp: Cmp::Le,
                rhs: 0,
            });
        }
    }

    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MicroserviceType, NodeType, ResourceKind};

    fn single_type_universe() -> Universe {
        Universe {
            resources: vec![ResourceKind {
                name: "cpu".into(),
                unit: "cores".into(),
            }],
            services: vec![MicroserviceType {
                name: "a".into(),
                provides: vec![],
                requires: vec![],
                consumption: [("cpu".to_string(), 1)].into(),
                max_load: 1000,
            }],
            nodes: vec![NodeType {
                name: "n".into(),
                cost: 100,
                capacity: [("cpu".to_string(), 2)].into(),
            }],
        }
    }

    #[test]
    fn single_type_request_yields_target_and_packing_rows() {
        let u = single_type_universe();
        let budget = [("n".to_string(), 3)].into();
        let system = encode(
            &u,
            &TargetRequest::counts([("a".to_string(), 1)]),
            None,
            &budget,
        )
        .unwrap();
        let targets: Vec<_> = system
            .constraints
            .iter()
            .filter(|c| c.label.starts_with("target:"))
            .collect();
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0].rhs, 1);
        assert!(system
            .constraints
            .iter()
            .any(|c| c.label.starts_with("packing:")));
    }

    #[test]
    fn oversized_consumption_encodes_to_an_unsatisfiable_system() {
        let mut u = single_type_universe();
        u.services[0].consumption.insert("cpu".into(), 4);
        let budget = [("n".to_string(), 2)].into();
        let system = encode(
            &u,
            &TargetRequest::counts([("a".to_string(), 1)]),
            None,
            &budget,
        )
        .unwrap();
        let solution = super::super::solve(&system, std::time::Duration::from_secs(10));
        assert_eq!(solution.status, crate::synthesis::SolveStatus::Infeasible);
    }

    #[test]
    fn assignment_from_solution_satisfies_all_rows() {
        let u = single_type_universe();
        let budget = [("n".to_string(), 3)].into();
        let request = TargetRequest::counts([("a".to_string(), 3)]);
        let system = encode(&u, &request, None, &budget).unwrap();
        let solution = super::super::solve(&system, std::time::Duration::from_secs(10));
        let config = solution.configuration.expect("feasible");
        let values = system.assignment_from(&config);
        let violated = system.violated_rows(&values);
        assert!(violated.is_empty(), "violated: {violated:?}");
    }
}
