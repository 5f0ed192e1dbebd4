//! Deterministic fixed-timestep simulation of a pipeline under a
//! time-varying inbound workload.
//!
//! Messages queue in bounded per-balancer FIFOs; a stage serves up to the
//! joint worker/balancer capacity each tick and routes results downstream
//! with seeded probabilistic draws. Two adaptation controllers are
//! available: local per-service replication on sustained saturation, and
//! global reconfiguration driven by greedy scale-plan selection.

mod compare;
mod engine;
mod trace;

pub use compare::{compare, ArmSummary, CompareError, ComparisonReport, Winner};
pub use engine::{effective_service_rate, run};
pub use trace::{read_trace_csv, write_trace_csv, TraceParseError, TRACE_HEADER};

use crate::pipeline::ScalePlan;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Piecewise-linear inbound rate over simulation ticks. The rate holds
/// flat before the first point and after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    pub points: Vec<WorkloadPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadPoint {
    pub tick: u64,
    pub rate: f64,
}

impl WorkloadProfile {
    pub fn constant(rate: f64) -> Self {
        WorkloadProfile {
            points: vec![WorkloadPoint { tick: 0, rate }],
        }
    }

    /// Ramp-then-plateau: flat at `low` until `ramp_start`, linear to
    /// `high` at `ramp_end`, flat afterwards.
    pub fn ramp(low: f64, high: f64, ramp_start: u64, ramp_end: u64) -> Self {
        WorkloadProfile {
            points: vec![
                WorkloadPoint {
                    tick: 0,
                    rate: low,
                },
                WorkloadPoint {
                    tick: ramp_start,
                    rate: low,
                },
                WorkloadPoint {
                    tick: ramp_end,
                    rate: high,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.points.is_empty() {
            return Err(SimError::EmptyWorkload);
        }
        for pair in self.points.windows(2) {
            if pair[1].tick <= pair[0].tick {
                return Err(SimError::NonMonotoneWorkload { tick: pair[1].tick });
            }
        }
        if self.points.iter().any(|p| p.rate < 0.0 || !p.rate.is_finite()) {
            return Err(SimError::NegativeRate);
        }
        Ok(())
    }

    /// Messages per second at a tick, linearly interpolated.
    pub fn rate_at(&self, tick: u64) -> f64 {
        let first = self.points.first().expect("validated");
        if tick <= first.tick {
            return first.rate;
        }
        for pair in self.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if tick <= b.tick {
                let span = (b.tick - a.tick) as f64;
                let into = (tick - a.tick) as f64;
                return a.rate + (b.rate - a.rate) * into / span;
            }
        }
        self.points.last().expect("validated").rate
    }
}

/// Runtime adaptation strategy for a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    /// No adaptation: the initial configuration serves the whole run.
    None,
    /// Replicate any service sustaining utilization above the threshold,
    /// one replica at a time, each on a fresh node.
    Local,
    /// Greedy scale-plan selection against the smoothed inbound rate,
    /// realized as one batched reconfiguration toward a re-synthesized
    /// cost-optimal target.
    Global { plans: Vec<ScalePlan> },
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::None => "none",
            Controller::Local => "local",
            Controller::Global { .. } => "global",
        }
    }
}

/// Simulation parameters. Defaults: 1 ms ticks, queues of 10,000
/// messages, node/instance deployment delays of 5,000/1,000 ticks, local
/// threshold 0.9 sustained for 200 ticks, global smoothing over 100
/// ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub tick_length_ms: f64,
    pub queue_size: u64,
    pub deployment_delay_node: u64,
    pub deployment_delay_instance: u64,
    pub local_utilization_threshold: f64,
    pub local_sustain_window: u64,
    pub global_smoothing_window: u64,
    pub duration: u64,
    pub seed: u64,
    /// Resource kind treated as compute when scaling service rates.
    pub compute_resource: String,
    pub node_budget_per_type: u64,
    pub solver_time_budget_secs: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_length_ms: 1.0,
            queue_size: 10_000,
            deployment_delay_node: 5_000,
            deployment_delay_instance: 1_000,
            local_utilization_threshold: 0.9,
            local_sustain_window: 200,
            global_smoothing_window: 100,
            duration: 120_000,
            seed: 1,
            compute_resource: crate::pipeline::builtin_compute_resource().to_string(),
            node_budget_per_type: 300,
            solver_time_budget_secs: 30,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.tick_length_ms <= 0.0
            || self.queue_size == 0
            || self.local_sustain_window == 0
            || self.global_smoothing_window == 0
            || self.duration == 0
        {
            return Err(SimError::BadConfig);
        }
        Ok(())
    }
}

/// One CSV row of the per-tick series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub tick: u64,
    pub inbound_rate: f64,
    /// Mean end-to-end latency of messages that exited the pipeline this
    /// tick; 0 when none did.
    pub mean_latency_ms: f64,
    pub cum_lost: u64,
    pub cost_rate: u64,
    pub cum_cost: u64,
    pub components: u64,
}

/// A reconfiguration-related event worth keeping alongside the series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub tick: u64,
    pub kind: SimEventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    /// Local controller scheduled one replica of a service.
    LocalReplicate,
    /// A local replica became live.
    LocalLive,
    /// Global controller selected scale plans.
    GlobalSelect,
    /// The global reconfiguration became live.
    GlobalLive,
    /// The global controller could not synthesize a reconfiguration.
    GlobalInfeasible,
}

/// The full outcome of one run: the tick series, reconfiguration events,
/// and conservation counters (`generated = completed + lost + in queue`
/// holds exactly at the end of every run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub rows: Vec<TickRow>,
    pub events: Vec<SimEvent>,
    pub generated: u64,
    pub completed: u64,
    pub lost: u64,
    pub in_queue_at_end: u64,
    /// Messages that left the pipeline at a terminal stage.
    pub exits: u64,
    pub final_components: u64,
    pub final_supported: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    ConfigInvalid(Vec<crate::model::Violation>),
    UnknownType(String),
    Pipeline(crate::pipeline::PipelineError),
    EmptyWorkload,
    NonMonotoneWorkload { tick: u64 },
    NegativeRate,
    BadConfig,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::ConfigInvalid(violations) => write!(
                f,
                "initial configuration is incorrect ({} violations)",
                violations.len()
            ),
            SimError::UnknownType(name) => write!(f, "unknown type {name:?}"),
            SimError::Pipeline(e) => write!(f, "{e}"),
            SimError::EmptyWorkload => write!(f, "workload profile has no points"),
            SimError::NonMonotoneWorkload { tick } => {
                write!(f, "workload ticks not strictly increasing at {tick}")
            }
            SimError::NegativeRate => write!(f, "workload rates must be finite and non-negative"),
            SimError::BadConfig => write!(f, "simulation parameters must be positive"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<crate::pipeline::PipelineError> for SimError {
    fn from(e: crate::pipeline::PipelineError) -> Self {
        SimError::Pipeline(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_interpolates_linearly_and_holds_ends() {
        let w = WorkloadProfile::ramp(8_000.0, 60_000.0, 100, 200);
        assert_eq!(w.rate_at(0), 8_000.0);
        assert_eq!(w.rate_at(100), 8_000.0);
        assert_eq!(w.rate_at(150), 34_000.0);
        assert_eq!(w.rate_at(200), 60_000.0);
        assert_eq!(w.rate_at(10_000), 60_000.0);
    }

    #[test]
    fn workload_validation_rejects_bad_points() {
        let mut w = WorkloadProfile::constant(5.0);
        w.points.push(WorkloadPoint { tick: 0, rate: 1.0 });
        assert!(matches!(
            w.validate(),
            Err(SimError::NonMonotoneWorkload { .. })
        ));
        assert!(WorkloadProfile { points: vec![] }.validate().is_err());
    }
}
