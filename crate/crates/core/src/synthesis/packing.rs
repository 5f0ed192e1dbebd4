//! Minimum-cost packing of instance counts onto priced nodes.
//!
//! Node multisets are enumerated in increasing (cost, node count) order;
//! the first one that can host every instance is cost-optimal. A
//! first-fit-decreasing pass answers most packability questions quickly;
//! when it fails, an exact backtracking packer with symmetry breaking
//! settles the question.

use super::NodeBudget;
use crate::model::{NodeType, Universe};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

/// The search ran into its deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Timeout;

/// A concrete hosting: one entry per node, with per-type instance counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Packing {
    pub cost: u64,
    pub nodes: Vec<(String, BTreeMap<String, u64>)>,
}

/// Per-service demand in a dense resource-indexed form.
#[derive(Debug, Clone)]
struct ItemKind {
    service: String,
    need: Vec<u64>,
    count: u64,
}

fn resource_axes(universe: &Universe) -> Vec<&str> {
    universe.resources.iter().map(|r| r.name.as_str()).collect()
}

fn node_caps(node: &NodeType, axes: &[&str]) -> Vec<u64> {
    axes.iter().map(|r| node.capacity_of(r)).collect()
}

/// Least total node cost that hosts `counts`, with the witness packing.
/// `Ok(None)` means no multiset within the budget can host the demand.
pub(crate) fn min_cost_packing(
    universe: &Universe,
    counts: &BTreeMap<String, u64>,
    node_budget: &NodeBudget,
    deadline: Instant,
) -> Result<Option<Packing>, Timeout> {
    let axes = resource_axes(universe);
    let mut items: Vec<ItemKind> = Vec::new();
    for (service, count) in counts {
        if *count == 0 {
            continue;
        }
        let svc = universe.service(service).expect("validated upstream");
        items.push(ItemKind {
            service: service.clone(),
            need: axes.iter().map(|r| svc.consumption_of(r)).collect(),
            count: *count,
        });
    }
    if items.is_empty() {
        return Ok(Some(Packing {
            cost: 0,
            nodes: Vec::new(),
        }));
    }
    // Largest items first helps both packers.
    items.sort_by(|a, b| {
        b.need
            .iter()
            .sum::<u64>()
            .cmp(&a.need.iter().sum())
            .then(a.service.cmp(&b.service))
    });

    let nodes: Vec<(&NodeType, Vec<u64>, u64)> = universe
        .nodes
        .iter()
        .map(|n| {
            let caps = node_caps(n, &axes);
            let budget = node_budget.get(&n.name).copied().unwrap_or(0);
            (n, caps, budget)
        })
        .collect();

    // Every item kind must fit somewhere at all.
    for item in &items {
        let fits_any = nodes.iter().any(|(_, caps, budget)| {
            *budget > 0 && caps.iter().zip(&item.need).all(|(c, n)| c >= n)
        });
        if !fits_any {
            return Ok(None);
        }
    }

    let totals: Vec<u64> = (0..axes.len())
        .map(|i| items.iter().map(|it| it.need[i] * it.count).sum())
        .collect();

    // Enumerate multisets canonically: a state may only add node kinds at
    // or after the last kind added, so each multiset is generated once.
    #[derive(PartialEq, Eq)]
    struct State {
        cost: u64,
        node_total: u64,
        counts: Vec<u64>,
        last_kind: usize,
    }
    impl Ord for State {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.cost
                .cmp(&other.cost)
                .then(self.node_total.cmp(&other.node_total))
                .then(self.counts.cmp(&other.counts))
        }
    }
    impl PartialOrd for State {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut heap: BinaryHeap<Reverse<State>> = BinaryHeap::new();
    heap.push(Reverse(State {
        cost: 0,
        node_total: 0,
        counts: vec![0; nodes.len()],
        last_kind: 0,
    }));
    // No multiset larger than one node per instance is ever needed.
    let max_nodes: u64 = items.iter().map(|i| i.count).sum();

    while let Some(Reverse(state)) = heap.pop() {
        if Instant::now() >= deadline {
            return Err(Timeout);
        }
        let aggregate_ok = (0..axes.len()).all(|i| {
            let have: u64 = state
                .counts
                .iter()
                .zip(&nodes)
                .map(|(n, (_, caps, _))| n * caps[i])
                .sum();
            have >= totals[i]
        });
        if aggregate_ok && state.node_total > 0 {
            let multiset: Vec<(&NodeType, Vec<u64>)> = expand_multiset(&nodes, &state.counts);
            if let Some(assignment) = pack(&items, &multiset, deadline)? {
                return Ok(Some(Packing {
                    cost: state.cost,
                    nodes: assignment,
                }));
            }
        }
        if state.node_total >= max_nodes {
            continue;
        }
        for kind in state.last_kind..nodes.len() {
            let (node, _, budget) = &nodes[kind];
            if state.counts[kind] >= *budget {
                continue;
            }
            let mut counts = state.counts.clone();
            counts[kind] += 1;
            heap.push(Reverse(State {
                cost: state.cost + node.cost,
                node_total: state.node_total + 1,
                counts,
                last_kind: kind,
            }));
        }
    }
    Ok(None)
}

fn expand_multiset<'a>(
    nodes: &[(&'a NodeType, Vec<u64>, u64)],
    counts: &[u64],
) -> Vec<(&'a NodeType, Vec<u64>)> {
    let mut out = Vec::new();
    for (kind, n) in counts.iter().enumerate() {
        for _ in 0..*n {
            out.push((nodes[kind].0, nodes[kind].1.clone()));
        }
    }
    // Bigger bins first; stable canonical order for determinism.
    out.sort_by(|a, b| {
        b.1.iter()
            .sum::<u64>()
            .cmp(&a.1.iter().sum())
            .then(a.0.name.cmp(&b.0.name))
    });
    out
}

/// Try first-fit-decreasing, then the exact packer.
fn pack(
    items: &[ItemKind],
    bins: &[(&NodeType, Vec<u64>)],
    deadline: Instant,
) -> Result<Option<Vec<(String, BTreeMap<String, u64>)>>, Timeout> {
    if let Some(result) = first_fit_decreasing(items, bins) {
        return Ok(Some(result));
    }
    exact_pack(items, bins, deadline)
}

fn first_fit_decreasing(
    items: &[ItemKind],
    bins: &[(&NodeType, Vec<u64>)],
) -> Option<Vec<(String, BTreeMap<String, u64>)>> {
    let mut residual: Vec<Vec<u64>> = bins.iter().map(|(_, caps)| caps.clone()).collect();
    let mut loads: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); bins.len()];
    for item in items {
        for _ in 0..item.count {
            let slot = (0..bins.len()).find(|&b| {
                residual[b]
                    .iter()
                    .zip(&item.need)
                    .all(|(have, need)| have >= need)
            })?;
            for (have, need) in residual[slot].iter_mut().zip(&item.need) {
                *have -= need;
            }
            *loads[slot].entry(item.service.clone()).or_insert(0) += 1;
        }
    }
    Some(
        bins.iter()
            .zip(loads)
            .map(|((node, _), load)| (node.name.clone(), load))
            .collect(),
    )
}

/// Complete backtracking packer. Bins are processed in order; for each,
/// patterns are enumerated largest-first and must be maximal (no leftover
/// item fits), which preserves completeness for feasibility testing.
/// Runs of identical bins only try patterns lexicographically at or below
/// the previous bin's pattern.
fn exact_pack(
    items: &[ItemKind],
    bins: &[(&NodeType, Vec<u64>)],
    deadline: Instant,
) -> Result<Option<Vec<(String, BTreeMap<String, u64>)>>, Timeout> {
    fn remaining_fits(remaining: &[u64], items: &[ItemKind], residual: &[u64]) -> bool {
        remaining.iter().enumerate().any(|(i, count)| {
            *count > 0
                && residual
                    .iter()
                    .zip(&items[i].need)
                    .all(|(have, need)| have >= need)
        })
    }

    /// Enumerate all maximal patterns for one bin, descending
    /// lexicographically, bounded above by `ceiling` when present.
    fn patterns(
        items: &[ItemKind],
        remaining: &[u64],
        caps: &[u64],
        ceiling: Option<&[u64]>,
        mut visit: &mut dyn FnMut(&[u64]) -> bool,
    ) -> bool {
        fn rec(
            items: &[ItemKind],
            remaining: &[u64],
            residual: &mut Vec<u64>,
            pattern: &mut Vec<u64>,
            idx: usize,
            ceiling: Option<&[u64]>,
            tight: bool,
            visit: &mut dyn FnMut(&[u64]) -> bool,
        ) -> bool {
            if idx == items.len() {
                let maximal = !pattern
                    .iter()
                    .enumerate()
                    .any(|(i, taken)| {
                        remaining[i] > *taken
                            && residual
                                .iter()
                                .zip(&items[i].need)
                                .all(|(have, need)| have >= need)
                    });
                if maximal {
                    return visit(pattern);
                }
                return true;
            }
            let fit = items[idx]
                .need
                .iter()
                .zip(residual.iter())
                .filter(|(need, _)| **need > 0)
                .map(|(need, have)| have / need)
                .min()
                .unwrap_or(remaining[idx]);
            let mut upper = fit.min(remaining[idx]);
            if tight {
                if let Some(ceiling) = ceiling {
                    upper = upper.min(ceiling[idx]);
                }
            }
            let mut take = upper;
            loop {
                let next_tight = tight && ceiling.map_or(false, |c| take == c[idx]);
                for (have, need) in residual.iter_mut().zip(&items[idx].need) {
                    *have -= need * take;
                }
                pattern.push(take);
                let keep_going = rec(
                    items, remaining, residual, pattern, idx + 1, ceiling, next_tight, visit,
                );
                pattern.pop();
                for (have, need) in residual.iter_mut().zip(&items[idx].need) {
                    *have += need * take;
                }
                if !keep_going {
                    return false;
                }
                if take == 0 {
                    break;
                }
                take -= 1;
            }
            true
        }
        let mut residual = caps.to_vec();
        let mut pattern = Vec::with_capacity(items.len());
        rec(
            items,
            remaining,
            &mut residual,
            &mut pattern,
            0,
            ceiling,
            ceiling.is_some(),
            &mut visit,
        )
    }

    fn solve(
        items: &[ItemKind],
        bins: &[(&NodeType, Vec<u64>)],
        bin_idx: usize,
        remaining: &mut Vec<u64>,
        previous: Option<Vec<u64>>,
        out: &mut Vec<Vec<u64>>,
        deadline: Instant,
        ticks: &mut u32,
    ) -> Result<bool, Timeout> {
        *ticks += 1;
        if *ticks % 4096 == 0 && Instant::now() >= deadline {
            return Err(Timeout);
        }
        if remaining.iter().all(|r| *r == 0) {
            out.extend(std::iter::repeat_n(vec![0; items.len()], bins.len() - bin_idx));
            return Ok(true);
        }
        if bin_idx == bins.len() {
            return Ok(false);
        }
        // Aggregate capacity of the remaining bins must cover what's left.
        for axis in 0..bins[0].1.len() {
            let need: u64 = remaining
                .iter()
                .zip(items)
                .map(|(count, item)| count * item.need[axis])
                .sum();
            let have: u64 = bins[bin_idx..].iter().map(|(_, caps)| caps[axis]).sum();
            if have < need {
                return Ok(false);
            }
        }
        let (node, caps) = &bins[bin_idx];
        let same_as_previous = bin_idx > 0 && {
            let (prev_node, prev_caps) = &bins[bin_idx - 1];
            prev_node.name == node.name && prev_caps == caps
        };
        let ceiling = if same_as_previous { previous.as_deref() } else { None };

        let mut found: Option<Vec<u64>> = None;
        let mut error = false;
        let snapshot = remaining.clone();
        patterns(items, &snapshot, caps, ceiling, &mut |pattern| {
            // Apply the pattern and recurse.
            for (r, take) in remaining.iter_mut().zip(pattern) {
                *r -= take;
            }
            let result = solve(
                items,
                bins,
                bin_idx + 1,
                remaining,
                Some(pattern.to_vec()),
                out,
                deadline,
                ticks,
            );
            for (r, take) in remaining.iter_mut().zip(pattern) {
                *r += take;
            }
            match result {
                Ok(true) => {
                    found = Some(pattern.to_vec());
                    false
                }
                Ok(false) => true,
                Err(Timeout) => {
                    error = true;
                    false
                }
            }
        });
        if error {
            return Err(Timeout);
        }
        if let Some(pattern) = found {
            out.push(pattern);
            return Ok(true);
        }
        Ok(false)
    }

    let mut remaining: Vec<u64> = items.iter().map(|i| i.count).collect();
    let mut reversed = Vec::new();
    let mut ticks = 0u32;
    let ok = solve(
        items,
        bins,
        0,
        &mut remaining,
        None,
        &mut reversed,
        deadline,
        &mut ticks,
    )?;
    if !ok {
        return Ok(None);
    }
    let _ = remaining_fits; // kept for clarity in future pruning work
    reversed.reverse();
    Ok(Some(
        bins.iter()
            .zip(reversed)
            .map(|((node, _), pattern)| {
                let mut load = BTreeMap::new();
                for (i, taken) in pattern.iter().enumerate() {
                    if *taken > 0 {
                        load.insert(items[i].service.clone(), *taken);
                    }
                }
                (node.name.clone(), load)
            })
            .collect(),
    ))
}
