//! Side-by-side evaluation of two adaptation runs over the same workload
//! and seed.

use super::TickRow;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Local,
    Global,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub cumulative_loss: u64,
    /// Mean of per-tick mean latencies over post-ramp ticks that
    /// completed at least one message.
    pub mean_post_ramp_latency_ms: f64,
    pub cumulative_cost: u64,
    pub peak_components: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// First tick at which the inbound rate reaches its maximum.
    pub post_ramp_start: u64,
    pub local: ArmSummary,
    pub global: ArmSummary,
    pub loss_winner: Winner,
    pub latency_winner: Winner,
    pub cost_winner: Winner,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompareError {
    LengthMismatch { local: usize, global: usize },
    /// The two traces were not produced from the same workload.
    WorkloadMismatch { tick: u64 },
    Empty,
}

impl fmt::Display for CompareError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareError::LengthMismatch { local, global } => write!(
                f,
                "trace lengths differ: local {local} rows, global {global} rows"
            ),
            CompareError::WorkloadMismatch { tick } => {
                write!(f, "inbound series diverge at tick {tick}")
            }
            CompareError::Empty => write!(f, "traces are empty"),
        }
    }
}

impl std::error::Error for CompareError {}

fn summarize(rows: &[TickRow], post_ramp_start: u64) -> ArmSummary {
    let last = rows.last().expect("non-empty");
    let mut latency_sum = 0.0;
    let mut latency_ticks = 0u64;
    for row in rows.iter().filter(|r| r.tick >= post_ramp_start) {
        if row.mean_latency_ms > 0.0 {
            latency_sum += row.mean_latency_ms;
            latency_ticks += 1;
        }
    }
    ArmSummary {
        cumulative_loss: last.cum_lost,
        mean_post_ramp_latency_ms: if latency_ticks > 0 {
            latency_sum / latency_ticks as f64
        } else {
            0.0
        },
        cumulative_cost: last.cum_cost,
        peak_components: rows.iter().map(|r| r.components).max().unwrap_or(0),
    }
}

fn pick(local: f64, global: f64) -> Winner {
    if local < global {
        Winner::Local
    } else if global < local {
        Winner::Global
    } else {
        Winner::Tie
    }
}

/// Compares a local-adaptation trace against a global-adaptation trace
/// from the identical workload and seed: cumulative loss, mean post-ramp
/// latency, cumulative cost, and peak component count, with a winner per
/// metric (lower is better for the first three).
pub fn compare(local: &[TickRow], global: &[TickRow]) -> Result<ComparisonReport, CompareError> {
    if local.len() != global.len() {
        return Err(CompareError::LengthMismatch {
            local: local.len(),
            global: global.len(),
        });
    }
    if local.is_empty() {
        return Err(CompareError::Empty);
    }
    for (a, b) in local.iter().zip(global) {
        if a.tick != b.tick || a.inbound_rate != b.inbound_rate {
            return Err(CompareError::WorkloadMismatch { tick: a.tick });
        }
    }
    let peak_rate = local
        .iter()
        .map(|r| r.inbound_rate)
        .fold(f64::NEG_INFINITY, f64::max);
    let post_ramp_start = local
        .iter()
        .find(|r| r.inbound_rate >= peak_rate)
        .map(|r| r.tick)
        .unwrap_or(0);

    let local_summary = summarize(local, post_ramp_start);
    let global_summary = summarize(global, post_ramp_start);
    Ok(ComparisonReport {
        post_ramp_start,
        loss_winner: pick(
            local_summary.cumulative_loss as f64,
            global_summary.cumulative_loss as f64,
        ),
        latency_winner: pick(
            local_summary.mean_post_ramp_latency_ms,
            global_summary.mean_post_ramp_latency_ms,
        ),
        cost_winner: pick(
            local_summary.cumulative_cost as f64,
            global_summary.cumulative_cost as f64,
        ),
        local: local_summary,
        global: global_summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tick: u64, rate: f64, latency: f64, lost: u64, cost: u64, comp: u64) -> TickRow {
        TickRow {
            tick,
            inbound_rate: rate,
            mean_latency_ms: latency,
            cum_lost: lost,
            cost_rate: 0,
            cum_cost: cost,
            components: comp,
        }
    }

    #[test]
    fn identical_traces_tie_everywhere() {
        let rows = vec![row(0, 10.0, 1.0, 0, 5, 2), row(1, 20.0, 2.0, 3, 10, 2)];
        let report = compare(&rows, &rows).unwrap();
        assert_eq!(report.loss_winner, Winner::Tie);
        assert_eq!(report.latency_winner, Winner::Tie);
        assert_eq!(report.cost_winner, Winner::Tie);
    }

    #[test]
    fn lower_metrics_win() {
        let local = vec![row(0, 10.0, 4.0, 10, 100, 3), row(1, 20.0, 4.0, 20, 200, 3)];
        let global = vec![row(0, 10.0, 2.0, 1, 90, 5), row(1, 20.0, 2.0, 2, 180, 5)];
        let report = compare(&local, &global).unwrap();
        assert_eq!(report.loss_winner, Winner::Global);
        assert_eq!(report.latency_winner, Winner::Global);
        assert_eq!(report.cost_winner, Winner::Global);
        assert_eq!(report.post_ramp_start, 1);
        assert!(report.global.peak_components > report.local.peak_components);
    }

    #[test]
    fn mismatched_workloads_are_rejected() {
        let a = vec![row(0, 10.0, 0.0, 0, 0, 1)];
        let b = vec![row(0, 11.0, 0.0, 0, 0, 1)];
        assert!(matches!(
            compare(&a, &b),
            Err(CompareError::WorkloadMismatch { .. })
        ));
        assert!(matches!(
            compare(&a, &[]),
            Err(CompareError::LengthMismatch { .. })
        ));
    }
}
