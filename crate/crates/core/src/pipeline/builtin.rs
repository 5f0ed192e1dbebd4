//! The built-in email-processing case study.
//!
//! Twelve worker service types, each fronted by its own load balancer,
//! arranged as an entry chain (receiver, parser) that fans out into four
//! sub-pipelines analyzing different parts of a message: headers, links,
//! text, and attachments.
//!
//! Only two per-service rates are fixed by the case study: the header
//! analyser handles 40k msg/s and the base deployment (one instance of
//! everything) supports 10k msg/s, which pins the parser at 10k. The
//! remaining defaults below keep those two numbers consistent:
//!
//! | service                    | max_load | cpu | memory |
//! |----------------------------|----------|-----|--------|
//! | message-receiver           |   40,000 |  2  |  2048  |
//! | message-parser             |   10,000 |  2  |  2048  |
//! | header-analyser            |   40,000 |  2  |  2048  |
//! | other analysis services    |   30,000 |  2  |  2048  |
//! | every load balancer        |   70,000 |  1  |   512  |
//!
//! Routing probabilities: header 1.0, link 0.6, text 1.0, attachment
//! 0.4. Node catalog: small {2 cpu, 4 GiB} at 100, medium {4, 8 GiB} at
//! 195, large {8, 16 GiB} at 380 — sublinear per-core pricing, so
//! co-location pays. All of this is overridable through the emitted
//! scenario files.

use super::{ConfigurationDelta, PipelineSpec, RouteEdge, ScalePlan, Stage};
use crate::model::{
    Configuration, MicroserviceType, NodeType, PortCapacity, ProvidedPort, ReqMode, Requirement,
    ResourceKind, Universe,
};
use crate::synthesis::{
    default_node_budget, solve_delta, solve_request, throughput_floors, SolveStatus,
    SynthesisError, TargetRequest, ThroughputTarget,
};
use std::time::Duration;

pub const PIPELINE_NAME: &str = "email";
pub const CPU: &str = "cpu-cores";
pub const MEMORY: &str = "memory-mb";

/// Inbound rate the base deployment sustains, messages/second.
pub const BASE_SUPPORTED: u64 = 10_000;

const BALANCER_LOAD: u64 = 70_000;
const WORKER_CPU: u64 = 2;
const WORKER_MEMORY: u64 = 2_048;
const BALANCER_CPU: u64 = 1;
const BALANCER_MEMORY: u64 = 512;

/// (name, max_load, downstream stages)
const STAGES: &[(&str, u64, &[&str])] = &[
    ("message-receiver", 40_000, &["message-parser"]),
    (
        "message-parser",
        10_000,
        &[
            "header-analyser",
            "link-extractor",
            "text-analyser",
            "attachment-manager",
        ],
    ),
    ("header-analyser", 40_000, &["header-classifier"]),
    ("header-classifier", 30_000, &[]),
    ("link-extractor", 30_000, &["link-analyser"]),
    ("link-analyser", 30_000, &[]),
    ("text-analyser", 30_000, &["sentiment-analyser"]),
    ("sentiment-analyser", 30_000, &["spam-detector"]),
    ("spam-detector", 30_000, &[]),
    ("attachment-manager", 30_000, &["virus-scanner"]),
    ("virus-scanner", 30_000, &["image-analyser"]),
    ("image-analyser", 30_000, &[]),
];

/// Probability that a message entering the parser continues into each
/// sub-pipeline; edges inside a sub-pipeline fire with probability 1.
fn branch_probability(to: &str) -> f64 {
    match to {
        "link-extractor" => 0.6,
        "attachment-manager" => 0.4,
        _ => 1.0,
    }
}

fn balancer_of(stage: &str) -> String {
    format!("{stage}-lb")
}

fn ingress_port(stage: &str) -> String {
    format!("{stage}-in")
}

fn worker_port(stage: &str) -> String {
    format!("{stage}-exec")
}

/// Three node flavors, sublinear per-core pricing.
pub fn default_node_catalog() -> Vec<NodeType> {
    let node = |name: &str, cost: u64, cpu: u64, mem: u64| NodeType {
        name: name.into(),
        cost,
        capacity: [(CPU.to_string(), cpu), (MEMORY.to_string(), mem)].into(),
    };
    vec![
        node("small", 100, 2, 4_096),
        node("medium", 195, 4, 8_192),
        node("large", 380, 8, 16_384),
    ]
}

/// The case-study universe, pipeline spec, and base configuration with
/// exactly one instance of every type, placed cost-optimally.
///
/// A worker must be wired to the balancers of its downstream stages the
/// moment it is deployed (strong, arity 1 each); balancers discover their
/// backends dynamically (weak, arity 1). Ingress and worker ports are
/// unbounded: one balancer instance can front any number of clients.
pub fn builtin_email_pipeline() -> (Universe, PipelineSpec, Configuration) {
    let mut services = Vec::new();
    for (stage, max_load, downstream) in STAGES {
        let worker_requires: Vec<Requirement> = downstream
            .iter()
            .map(|next| Requirement {
                port: ingress_port(next),
                arity: 1,
                mode: ReqMode::Strong,
            })
            .collect();
        services.push(MicroserviceType {
            name: (*stage).to_string(),
            provides: vec![ProvidedPort {
                port: worker_port(stage),
                capacity: PortCapacity::Unbounded,
            }],
            requires: worker_requires,
            consumption: [
                (CPU.to_string(), WORKER_CPU),
                (MEMORY.to_string(), WORKER_MEMORY),
            ]
            .into(),
            max_load: *max_load,
        });
        services.push(MicroserviceType {
            name: balancer_of(stage),
            provides: vec![ProvidedPort {
                port: ingress_port(stage),
                capacity: PortCapacity::Unbounded,
            }],
            requires: vec![Requirement {
                port: worker_port(stage),
                arity: 1,
                mode: ReqMode::Weak,
            }],
            consumption: [
                (CPU.to_string(), BALANCER_CPU),
                (MEMORY.to_string(), BALANCER_MEMORY),
            ]
            .into(),
            max_load: BALANCER_LOAD,
        });
    }
    let universe = Universe {
        resources: vec![
            ResourceKind {
                name: CPU.into(),
                unit: "cores".into(),
            },
            ResourceKind {
                name: MEMORY.into(),
                unit: "MiB".into(),
            },
        ],
        services,
        nodes: default_node_catalog(),
    };

    let stages: Vec<Stage> = STAGES
        .iter()
        .map(|(name, _, _)| Stage {
            name: (*name).to_string(),
            service: (*name).to_string(),
            balancer: balancer_of(name),
        })
        .collect();
    let mut edges = Vec::new();
    for (from, _, downstream) in STAGES {
        for to in *downstream {
            edges.push(RouteEdge {
                from: (*from).to_string(),
                to: (*to).to_string(),
                probability: branch_probability(to),
                group: None,
            });
        }
    }
    let spec = PipelineSpec {
        name: PIPELINE_NAME.into(),
        entry: "message-receiver".into(),
        stages,
        edges,
    };

    let request = TargetRequest {
        instances: universe
            .services
            .iter()
            .map(|s| (s.name.clone(), 1))
            .collect(),
        throughput: Some(ThroughputTarget {
            pipeline: PIPELINE_NAME.into(),
            rate: BASE_SUPPORTED,
        }),
    };
    let solution = solve_request(
        &universe,
        &request,
        Some(&spec),
        &default_node_budget(&universe),
        Duration::from_secs(30),
    )
    .expect("builtin universe is well-formed");
    assert_eq!(
        solution.status,
        SolveStatus::Optimal,
        "base deployment must synthesize"
    );
    let base = solution.configuration.expect("optimal carries a witness");
    (universe, spec, base)
}

/// The three scale reconfigurations: +20k, +50k, and +80k msg/s over the
/// base. Each delta is synthesized against the base configuration for a
/// required throughput of base + delta, so single applications are
/// cost-optimal by construction.
pub fn builtin_scale_plans(
    universe: &Universe,
    spec: &PipelineSpec,
    base: &Configuration,
) -> Result<Vec<ScalePlan>, SynthesisError> {
    let budget = default_node_budget(universe);
    let mut plans = Vec::new();
    for (name, delta_capacity) in [
        ("Scale 1", 20_000u64),
        ("Scale 2", 50_000u64),
        ("Scale 3", 80_000u64),
    ] {
        let floors = throughput_floors(universe, spec, BASE_SUPPORTED + delta_capacity)?;
        let solved = solve_delta(universe, base, &floors, &budget, Duration::from_secs(30))?;
        let delta: ConfigurationDelta = match (solved.status, solved.delta) {
            (SolveStatus::Optimal | SolveStatus::Feasible, Some(delta)) => delta,
            (status, _) => {
                return Err(SynthesisError::Internal(format!(
                    "scale plan {name} did not synthesize: {status}"
                )))
            }
        };
        plans.push(ScalePlan {
            name: name.into(),
            delta_capacity,
            delta,
        });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_correct, total_cost};
    use crate::pipeline::{apply_scale_plan, supported_inbound};

    #[test]
    fn twelve_workers_each_with_a_balancer() {
        let (universe, spec, base) = builtin_email_pipeline();
        let workers: Vec<_> = universe
            .services
            .iter()
            .filter(|s| !s.name.ends_with("-lb"))
            .collect();
        assert_eq!(workers.len(), 12);
        assert_eq!(universe.services.len(), 24);
        assert_eq!(spec.stages.len(), 12);
        for stage in &spec.stages {
            assert_eq!(stage.balancer, format!("{}-lb", stage.service));
        }
        assert_eq!(base.instances.len(), 24, "one instance per type");
        for svc in &universe.services {
            assert_eq!(base.count_of(&svc.name), 1, "{}", svc.name);
        }
    }

    #[test]
    fn header_analyser_load_and_base_supported_rate() {
        let (universe, spec, base) = builtin_email_pipeline();
        assert_eq!(universe.service("header-analyser").unwrap().max_load, 40_000);
        let supported = supported_inbound(&universe, &spec, &base).unwrap();
        assert_eq!(supported, 10_000.0);
    }

    #[test]
    fn base_configuration_is_correct_and_validates() {
        let (universe, spec, base) = builtin_email_pipeline();
        assert!(crate::model::validate_universe(&universe).ok);
        spec.validate(&universe).unwrap();
        let report = check_correct(&universe, &base).unwrap();
        assert!(report.ok, "{:?}", report.violations);
    }

    #[test]
    fn visit_ratios_follow_branch_probabilities() {
        let (_, spec, _) = builtin_email_pipeline();
        let visits = spec.expected_visits().unwrap();
        assert_eq!(visits["message-parser"], 1.0);
        assert_eq!(visits["spam-detector"], 1.0);
        assert!((visits["link-analyser"] - 0.6).abs() < 1e-12);
        assert!((visits["image-analyser"] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn scale_plans_carry_quoted_deltas_and_reach_their_rates() {
        let (universe, spec, base) = builtin_email_pipeline();
        let plans = builtin_scale_plans(&universe, &spec, &base).unwrap();
        let deltas: Vec<(String, u64)> = plans
            .iter()
            .map(|p| (p.name.clone(), p.delta_capacity))
            .collect();
        assert_eq!(
            deltas,
            vec![
                ("Scale 1".to_string(), 20_000),
                ("Scale 2".to_string(), 50_000),
                ("Scale 3".to_string(), 80_000),
            ]
        );
        for plan in &plans {
            let scaled = apply_scale_plan(&universe, &base, plan).unwrap();
            let report = check_correct(&universe, &scaled).unwrap();
            assert!(report.ok, "{}: {:?}", plan.name, report.violations);
            let supported = supported_inbound(&universe, &spec, &scaled).unwrap();
            assert!(
                supported >= (BASE_SUPPORTED + plan.delta_capacity) as f64,
                "{} reaches only {supported}",
                plan.name
            );
            assert!(
                total_cost(&scaled, &universe).unwrap() > total_cost(&base, &universe).unwrap()
            );
        }
    }

    #[test]
    fn scale_three_adds_more_than_thirty_instances() {
        let (universe, spec, base) = builtin_email_pipeline();
        let plans = builtin_scale_plans(&universe, &spec, &base).unwrap();
        let scale3 = &plans[2];
        assert!(
            scale3.delta.added_instances() >= 30,
            "Scale 3 adds {} instances under the shipped defaults",
            scale3.delta.added_instances()
        );
    }
}
