//! Pipeline descriptions on top of the domain model: a DAG of stages with
//! routing probabilities, the throughput it supports, named scale plans,
//! and the greedy procedure that picks them against a target rate.

mod builtin;

pub use builtin::{builtin_email_pipeline, builtin_scale_plans, default_node_catalog};

use crate::model::{Configuration, Universe};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// One processing stage: a worker service type fronted by its own load
/// balancer type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub service: String,
    pub balancer: String,
}

/// A routed edge between stages. Edges with the same `group` on the same
/// source stage are mutually exclusive alternatives (probabilities sum to
/// at most 1); ungrouped edges fire independently, so one message may fan
/// out into several sub-pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteEdge {
    pub from: String,
    pub to: String,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// A DAG of stages with probabilistic routing and a single entry stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub name: String,
    pub entry: String,
    pub stages: Vec<Stage>,
    pub edges: Vec<RouteEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PipelineError {
    UnknownStage(String),
    UnknownServiceType(String),
    /// A stage has no instance of its worker or balancer type.
    MissingStage(String),
    CyclicRouting,
    BadProbability { from: String, to: String },
    GroupOverflow { from: String, group: String },
    DuplicateStage(String),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::UnknownStage(s) => write!(f, "unknown stage {s:?}"),
            PipelineError::UnknownServiceType(s) => write!(f, "unknown service type {s:?}"),
            PipelineError::MissingStage(s) => write!(f, "stage {s:?} has no running instance"),
            PipelineError::CyclicRouting => write!(f, "routing graph has a cycle"),
            PipelineError::BadProbability { from, to } => {
                write!(f, "edge {from} -> {to} has probability outside [0, 1]")
            }
            PipelineError::GroupOverflow { from, group } => write!(
                f,
                "alternative branches {group:?} out of {from} have probabilities summing over 1"
            ),
            PipelineError::DuplicateStage(s) => write!(f, "stage {s:?} declared twice"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl PipelineSpec {
    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn outgoing<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a RouteEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == stage)
    }

    /// Structural checks: known endpoints, acyclic routing, probabilities
    /// in range, alternative groups summing to at most 1.
    pub fn validate(&self, universe: &Universe) -> Result<(), PipelineError> {
        let mut seen = std::collections::BTreeSet::new();
        for stage in &self.stages {
            if !seen.insert(stage.name.as_str()) {
                return Err(PipelineError::DuplicateStage(stage.name.clone()));
            }
            for ty in [&stage.service, &stage.balancer] {
                if universe.service(ty).is_none() {
                    return Err(PipelineError::UnknownServiceType(ty.clone()));
                }
            }
        }
        if self.stage(&self.entry).is_none() {
            return Err(PipelineError::UnknownStage(self.entry.clone()));
        }
        let mut groups: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for edge in &self.edges {
            for endpoint in [&edge.from, &edge.to] {
                if self.stage(endpoint).is_none() {
                    return Err(PipelineError::UnknownStage(endpoint.clone()));
                }
            }
            if !(0.0..=1.0).contains(&edge.probability) {
                return Err(PipelineError::BadProbability {
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                });
            }
            if let Some(group) = &edge.group {
                let sum = groups
                    .entry((edge.from.as_str(), group.as_str()))
                    .or_insert(0.0);
                *sum += edge.probability;
                if *sum > 1.0 + 1e-9 {
                    return Err(PipelineError::GroupOverflow {
                        from: edge.from.clone(),
                        group: group.clone(),
                    });
                }
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Stage names in topological order of the routing DAG.
    pub fn topological_order(&self) -> Result<Vec<&str>, PipelineError> {
        let mut indegree: BTreeMap<&str, usize> =
            self.stages.iter().map(|s| (s.name.as_str(), 0)).collect();
        for edge in &self.edges {
            *indegree
                .get_mut(edge.to.as_str())
                .ok_or_else(|| PipelineError::UnknownStage(edge.to.clone()))? += 1;
        }
        let mut ready: Vec<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(name, _)| *name)
            .collect();
        ready.sort_unstable();
        let mut order = Vec::with_capacity(self.stages.len());
        while let Some(stage) = ready.pop() {
            order.push(stage);
            for edge in self.outgoing(stage) {
                let d = indegree.get_mut(edge.to.as_str()).expect("validated");
                *d -= 1;
                if *d == 0 {
                    ready.push(edge.to.as_str());
                }
            }
            ready.sort_unstable();
        }
        if order.len() != self.stages.len() {
            return Err(PipelineError::CyclicRouting);
        }
        Ok(order)
    }

    /// Expected number of times one inbound message visits each stage,
    /// following edge probabilities from the entry.
    pub fn expected_visits(&self) -> Result<BTreeMap<String, f64>, PipelineError> {
        let order = self.topological_order()?;
        let mut visits: BTreeMap<String, f64> =
            self.stages.iter().map(|s| (s.name.clone(), 0.0)).collect();
        *visits
            .get_mut(&self.entry)
            .ok_or_else(|| PipelineError::UnknownStage(self.entry.clone()))? = 1.0;
        for stage in order {
            let from_visits = visits[stage];
            if from_visits == 0.0 {
                continue;
            }
            for edge in self.outgoing(stage) {
                *visits.get_mut(&edge.to).expect("validated") += from_visits * edge.probability;
            }
        }
        Ok(visits)
    }
}

/// Maximum sustained inbound rate (messages/second) a configuration can
/// process: the minimum over stages of worker and balancer capacity
/// divided by the stage's expected visits per inbound message.
pub fn supported_inbound(
    universe: &Universe,
    spec: &PipelineSpec,
    config: &Configuration,
) -> Result<f64, PipelineError> {
    let visits = spec.expected_visits()?;
    let mut supported = f64::INFINITY;
    for stage in &spec.stages {
        let v = visits[&stage.name];
        if v <= 0.0 {
            continue;
        }
        for ty in [&stage.service, &stage.balancer] {
            let svc = universe
                .service(ty)
                .ok_or_else(|| PipelineError::UnknownServiceType(ty.clone()))?;
            let count = config.count_of(ty);
            if count == 0 {
                return Err(PipelineError::MissingStage(stage.name.clone()));
            }
            supported = supported.min(count as f64 * svc.max_load as f64 / v);
        }
    }
    Ok(supported)
}

/// Added nodes and the instances they will host: the shape of a scale
/// plan's configuration diff. Node and instance ids are assigned at
/// application time so deltas compose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationDelta {
    pub nodes: Vec<DeltaNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaNode {
    pub node_type: String,
    pub instances: BTreeMap<String, u64>,
}

impl ConfigurationDelta {
    pub fn added_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for node in &self.nodes {
            for (ty, n) in &node.instances {
                *counts.entry(ty.clone()).or_insert(0) += n;
            }
        }
        counts
    }

    pub fn added_instances(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| n.instances.values().sum::<u64>())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// A named global reconfiguration adding `delta_capacity` messages/second
/// of provisioned throughput.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalePlan {
    pub name: String,
    pub delta_capacity: u64,
    pub delta: ConfigurationDelta,
}

/// Applies a scale plan's delta on top of `config`: fresh node ids, fresh
/// instance ids, and deterministically completed bindings.
pub fn apply_scale_plan(
    universe: &Universe,
    config: &Configuration,
    plan: &ScalePlan,
) -> Result<Configuration, crate::synthesis::SynthesisError> {
    crate::synthesis::apply_delta(universe, config, &plan.delta)
}

/// Greedy scale selection: while the supported rate is below the target,
/// append the plan minimizing the distance between the target and the
/// rate obtained by applying it, breaking ties toward the smaller delta.
/// Capacity is accounted additively from the plans' nominal deltas.
pub fn greedy_select<'a>(
    current_supported: f64,
    target: f64,
    plans: &'a [ScalePlan],
) -> Vec<&'a ScalePlan> {
    let mut selected = Vec::new();
    let mut supported = current_supported;
    if plans.is_empty() {
        return selected;
    }
    while supported < target {
        let pick = plans
            .iter()
            .min_by(|a, b| {
                let da = (target - (supported + a.delta_capacity as f64)).abs();
                let db = (target - (supported + b.delta_capacity as f64)).abs();
                da.partial_cmp(&db)
                    .expect("finite rates")
                    .then(a.delta_capacity.cmp(&b.delta_capacity))
                    .then(a.name.cmp(&b.name))
            })
            .expect("plans non-empty");
        supported += pick.delta_capacity as f64;
        selected.push(pick);
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(name: &str, delta: u64) -> ScalePlan {
        ScalePlan {
            name: name.into(),
            delta_capacity: delta,
            delta: ConfigurationDelta::default(),
        }
    }

    #[test]
    fn greedy_already_supported_selects_nothing() {
        let plans = vec![plan("Scale 1", 20_000)];
        assert!(greedy_select(10_000.0, 10_000.0, &plans).is_empty());
    }

    #[test]
    fn greedy_picks_exact_match() {
        let plans = vec![
            plan("Scale 1", 20_000),
            plan("Scale 2", 50_000),
            plan("Scale 3", 80_000),
        ];
        let picks: Vec<&str> = greedy_select(10_000.0, 60_000.0, &plans)
            .iter()
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(picks, ["Scale 2"]);
    }

    #[test]
    fn greedy_composes_until_target_reached() {
        let plans = vec![
            plan("Scale 1", 20_000),
            plan("Scale 2", 50_000),
            plan("Scale 3", 80_000),
        ];
        let picks: Vec<&str> = greedy_select(10_000.0, 100_000.0, &plans)
            .iter()
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(picks, ["Scale 3", "Scale 1"]);
    }

    #[test]
    fn greedy_breaks_ties_toward_smaller_delta() {
        // From 10k toward 40k: +20k and +40k both land 10k away (30k vs 50k).
        let plans = vec![plan("big", 40_000), plan("small", 20_000)];
        let picks: Vec<&str> = greedy_select(10_000.0, 40_000.0, &plans)
            .iter()
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(picks[0], "small");
    }
}
