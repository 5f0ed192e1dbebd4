//! Trace CSV format: one row per tick, `.` decimal separator, header
//! frozen.

use super::TickRow;
use std::fmt;
use std::io::{self, BufRead, Write};

pub const TRACE_HEADER: &str = "tick,inbound_rate,mean_latency_ms,cum_lost,cost_rate,cum_cost,components";

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TickRow]) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.tick,
            row.inbound_rate,
            row.mean_latency_ms,
            row.cum_lost,
            row.cost_rate,
            row.cum_cost,
            row.components
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceParseError {
    Io(String),
    MissingHeader,
    BadHeader { found: String },
    BadRow { line: usize, detail: String },
}

impl fmt::Display for TraceParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceParseError::Io(e) => write!(f, "trace read failed: {e}"),
            TraceParseError::MissingHeader => write!(f, "trace file is empty"),
            TraceParseError::BadHeader { found } => {
                write!(f, "unexpected trace header {found:?}, want {TRACE_HEADER:?}")
            }
            TraceParseError::BadRow { line, detail } => {
                write!(f, "trace line {line}: {detail}")
            }
        }
    }
}

impl std::error::Error for TraceParseError {}

pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<TickRow>, TraceParseError> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(TraceParseError::Io(e.to_string())),
        None => return Err(TraceParseError::MissingHeader),
    };
    if header.trim_end() != TRACE_HEADER {
        return Err(TraceParseError::BadHeader { found: header });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| TraceParseError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(TraceParseError::BadRow {
                line: line_no,
                detail: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str| TraceParseError::BadRow {
            line: line_no,
            detail: format!("cannot parse {what}"),
        };
        rows.push(TickRow {
            tick: fields[0].parse().map_err(|_| bad("tick"))?,
            inbound_rate: fields[1].parse().map_err(|_| bad("inbound_rate"))?,
            mean_latency_ms: fields[2].parse().map_err(|_| bad("mean_latency_ms"))?,
            cum_lost: fields[3].parse().map_err(|_| bad("cum_lost"))?,
            cost_rate: fields[4].parse().map_err(|_| bad("cost_rate"))?,
            cum_cost: fields[5].parse().map_err(|_| bad("cum_cost"))?,
            components: fields[6].parse().map_err(|_| bad("components"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_exactly() {
        let rows = vec![
            TickRow {
                tick: 0,
                inbound_rate: 8000.0,
                mean_latency_ms: 0.0,
                cum_lost: 0,
                cost_rate: 1715,
                cum_cost: 1715,
                components: 24,
            },
            TickRow {
                tick: 1,
                inbound_rate: 8000.5,
                mean_latency_ms: 3.25,
                cum_lost: 7,
                cost_rate: 1715,
                cum_cost: 3430,
                components: 24,
            },
        ];
        let mut buffer = Vec::new();
        write_trace_csv(&mut buffer, &rows).unwrap();
        let parsed = read_trace_csv(buffer.as_slice()).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn header_is_enforced() {
        let err = read_trace_csv("tick,other\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceParseError::BadHeader { .. }));
    }
}
