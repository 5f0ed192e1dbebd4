//! Exact feasibility of port demand against provider capacity.
//!
//! Requirer instances each need `arity` *distinct* providers; a provider
//! instance accepts at most `capacity` requirers on the port. Whether a
//! bipartite assignment exists is decided by the Gale–Ryser condition:
//! for every k, the k largest demands must not exceed
//! `sum over providers of min(capacity, k)`.

use crate::model::{PortCapacity, Universe};
use std::collections::BTreeMap;

/// Demand side: `count` requirer instances each needing `arity` distinct
/// providers. Supply side: `count` provider instances of each `capacity`.
#[derive(Debug, Clone, Default)]
pub(crate) struct PortProblem {
    pub demands: Vec<(u64, u64)>,  // (arity, count)
    pub supplies: Vec<(u64, u64)>, // (capacity slots, count), unbounded pre-clamped
}

impl PortProblem {
    pub fn feasible(&self) -> bool {
        let total_requirers: u64 = self
            .demands
            .iter()
            .filter(|(a, _)| *a > 0)
            .map(|(_, n)| *n)
            .sum();
        if total_requirers == 0 {
            return true;
        }
        let mut demands: Vec<(u64, u64)> = self
            .demands
            .iter()
            .copied()
            .filter(|(a, n)| *a > 0 && *n > 0)
            .collect();
        demands.sort_by(|a, b| b.0.cmp(&a.0));

        // lhs(k): greatest total demand of any k requirer instances.
        // rhs(k): sum over provider instances of min(capacity, k).
        let mut lhs: u128 = 0;
        let mut taken: u64 = 0;
        let mut run = demands.iter().copied();
        let mut current = run.next();
        for k in 1..=total_requirers {
            let (arity, left) = match current {
                Some(pair) => pair,
                None => break,
            };
            lhs += arity as u128;
            current = if left == 1 { run.next() } else { Some((arity, left - 1)) };
            taken += 1;
            debug_assert_eq!(taken, k);
            let rhs: u128 = self
                .supplies
                .iter()
                .map(|(cap, n)| (*cap).min(k) as u128 * *n as u128)
                .sum();
            if lhs > rhs {
                return false;
            }
        }
        true
    }
}

/// Clamp a port capacity to a finite slot count that behaves identically
/// in the Gale–Ryser check: no provider ever serves more requirers than
/// exist.
pub(crate) fn capacity_slots(capacity: PortCapacity, total_requirers: u64) -> u64 {
    match capacity {
        PortCapacity::Finite(c) => c,
        PortCapacity::Unbounded => total_requirers,
    }
}

/// All ports demanded (arity > 0) by types with a positive count, sorted.
pub(crate) fn demanded_ports<'a>(
    universe: &'a Universe,
    counts: &BTreeMap<String, u64>,
) -> Vec<&'a str> {
    let mut ports: Vec<&str> = Vec::new();
    for svc in &universe.services {
        if counts.get(&svc.name).copied().unwrap_or(0) == 0 {
            continue;
        }
        for req in &svc.requires {
            if req.arity > 0 {
                ports.push(req.port.as_str());
            }
        }
    }
    ports.sort_unstable();
    ports.dedup();
    ports
}

/// Build the aggregate feasibility problem for one port under per-type
/// instance counts, optionally with extra concrete residual supplies
/// (one entry per existing provider instance with free slots).
pub(crate) fn port_problem(
    universe: &Universe,
    port: &str,
    counts: &BTreeMap<String, u64>,
    extra_supplies: &[u64],
) -> PortProblem {
    let mut problem = PortProblem::default();
    let mut total_requirers: u64 = 0;
    for svc in &universe.services {
        let count = counts.get(&svc.name).copied().unwrap_or(0);
        if count == 0 {
            continue;
        }
        if let Some(req) = svc.requirement(port) {
            if req.arity > 0 {
                problem.demands.push((req.arity, count));
                total_requirers += count;
            }
        }
    }
    for svc in &universe.services {
        let count = counts.get(&svc.name).copied().unwrap_or(0);
        if count == 0 {
            continue;
        }
        if let Some(provided) = svc.provided_port(port) {
            let slots = capacity_slots(provided.capacity, total_requirers);
            if slots > 0 {
                problem.supplies.push((slots, count));
            }
        }
    }
    for residual in extra_supplies {
        let slots = (*residual).min(total_requirers.max(1));
        if slots > 0 {
            problem.supplies.push((slots, 1));
        }
    }
    problem
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feasible(demands: &[(u64, u64)], supplies: &[(u64, u64)]) -> bool {
        PortProblem {
            demands: demands.to_vec(),
            supplies: supplies.to_vec(),
        }
        .feasible()
    }

    #[test]
    fn trivial_cases() {
        assert!(feasible(&[], &[]));
        assert!(feasible(&[(1, 2)], &[(2, 1)]));
        assert!(!feasible(&[(1, 3)], &[(2, 1)]));
    }

    #[test]
    fn distinctness_requires_enough_providers() {
        // Two requirers of arity 2 against one provider of capacity 4:
        // plenty of slots, not enough distinct providers.
        assert!(!feasible(&[(2, 2)], &[(4, 1)]));
        assert!(feasible(&[(2, 2)], &[(2, 2)]));
    }

    #[test]
    fn aggregate_slots_alone_are_not_enough() {
        // Total slots 4 >= total demand 4 and two providers exist, but the
        // second provider can serve only one of the two arity-2 requirers.
        assert!(!feasible(&[(2, 2)], &[(3, 1), (1, 1)]));
        assert!(feasible(&[(2, 1), (1, 1)], &[(3, 1), (1, 1)]));
    }

    #[test]
    fn mixed_demands_sorted_correctly() {
        // Demand profile (2, 1, 1) against capacities (3, 1): k=2 needs
        // lhs 3 <= min(3,2)+min(1,2) = 3.
        assert!(feasible(&[(1, 2), (2, 1)], &[(3, 1), (1, 1)]));
    }
}
