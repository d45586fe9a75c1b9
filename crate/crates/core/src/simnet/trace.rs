//! Simulation traces, derived metrics and CSV export.

use std::io::{Read, Write};

use serde::Serialize;

use super::SimError;
use crate::digraph::NodeId;
use crate::protocol::Ingest;

/// Absolute slack allowed when checking per-round validity.
pub const VALIDITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    /// Spread fell to epsilon once every fault-free node finished this round.
    Converged {
        round: u64,
    },
    MaxRounds {
        rounds: u64,
    },
    /// No deliverable message was left before the round cap.
    Stalled {
        round: u64,
    },
    /// Read back from CSV; the run outcome is not recorded there.
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub tag: u64,
    pub value: f64,
    pub sent_at: u64,
    pub delivered_at: u64,
    pub outcome: Ingest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Fault-free node ids, ascending.
    pub nodes: Vec<NodeId>,
    /// `values[t][k]` is the round-`t` value of `nodes[k]`; row 0 is the input.
    pub values: Vec<Vec<f64>>,
    pub deliveries: Vec<Delivery>,
    pub outcome: Outcome,
    pub epsilon: f64,
    /// Largest delay of any delivered or still-pending message.
    pub max_delay: u64,
    /// Messages still in flight when the run stopped.
    pub undelivered: usize,
}

impl Trace {
    /// Index of the last recorded round.
    pub fn last_round(&self) -> u64 {
        self.values.len().saturating_sub(1) as u64
    }

    /// `U[t]`.
    pub fn upper(&self, t: usize) -> f64 {
        self.values[t]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `μ[t]`.
    pub fn lower(&self, t: usize) -> f64 {
        self.values[t].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn spread(&self, t: usize) -> f64 {
        self.upper(t) - self.lower(t)
    }

    pub fn spreads(&self) -> Vec<f64> {
        (0..self.values.len()).map(|t| self.spread(t)).collect()
    }

    /// Value history of one fault-free node.
    pub fn node_values(&self, node: NodeId) -> Option<Vec<f64>> {
        let k = self.nodes.iter().position(|&v| v == node)?;
        Some(self.values.iter().map(|row| row[k]).collect())
    }

    /// `round,nodeId,value` rows.
    pub fn write_values_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "nodeId", "value"])?;
        for (t, row) in self.values.iter().enumerate() {
            for (&node, &v) in self.nodes.iter().zip(row) {
                w.write_record([t.to_string(), node.to_string(), format!("{v:?}")])?;
            }
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))?;
        Ok(())
    }

    /// `round,U,mu,spread` rows.
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "U", "mu", "spread"])?;
        for t in 0..self.values.len() {
            w.write_record([
                t.to_string(),
                format!("{:?}", self.upper(t)),
                format!("{:?}", self.lower(t)),
                format!("{:?}", self.spread(t)),
            ])?;
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn values_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_values_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a `round,nodeId,value` file back. Every round must list the same
    /// node set.
    pub fn read_values_csv<R: Read>(input: R) -> Result<Trace, SimError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: Vec<(u64, NodeId, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(SimError::Csv(format!(
                    "expected 3 columns, got {}",
                    rec.len()
                )));
            }
            let parse_err = |what: &str, s: &str| SimError::Csv(format!("bad {what} {s:?}"));
            let t: u64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| parse_err("round", &rec[0]))?;
            let node: NodeId = rec[1]
                .trim()
                .parse()
                .map_err(|_| parse_err("node id", &rec[1]))?;
            let v: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|_| parse_err("value", &rec[2]))?;
            rows.push((t, node, v));
        }
        if rows.is_empty() {
            return Err(SimError::Csv("trace has no rows".into()));
        }
        let mut nodes: Vec<NodeId> = rows.iter().filter(|r| r.0 == 0).map(|r| r.1).collect();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(SimError::MissingRounds("round 0 missing".into()));
        }
        let last = rows.iter().map(|r| r.0).max().unwrap_or(0) as usize;
        let mut values = vec![vec![f64::NAN; nodes.len()]; last + 1];
        let mut filled = vec![vec![false; nodes.len()]; last + 1];
        for (t, node, v) in rows {
            let k = nodes
                .binary_search(&node)
                .map_err(|_| SimError::Csv(format!("node {node} appears after round 0 only")))?;
            if filled[t as usize][k] {
                return Err(SimError::Csv(format!(
                    "duplicate row for round {t}, node {node}"
                )));
            }
            filled[t as usize][k] = true;
            values[t as usize][k] = v;
        }
        if let Some(t) = filled.iter().position(|row| row.iter().any(|&b| !b)) {
            return Err(SimError::MissingRounds(format!("round {t} is incomplete")));
        }
        Ok(Trace {
            nodes,
            values,
            deliveries: Vec::new(),
            outcome: Outcome::Imported,
            epsilon: 0.0,
            max_delay: 0,
            undelivered: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: u64,
    #[serde(rename = "U")]
    pub upper: f64,
    #[serde(rename = "mu")]
    pub lower: f64,
    pub spread: f64,
    /// `μ[t] >= μ[t-1]` and `U[t] <= U[t-1]` within [`VALIDITY_SLACK`].
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceMetrics {
    pub rounds: Vec<RoundMetrics>,
    /// First round whose spread is at most the trace's epsilon.
    pub converged_at: Option<u64>,
    pub all_valid: bool,
}

pub fn trace_metrics(trace: &Trace) -> TraceMetrics {
    let mut rounds = Vec::with_capacity(trace.values.len());
    for t in 0..trace.values.len() {
        let (upper, lower) = (trace.upper(t), trace.lower(t));
        let valid = t == 0 || {
            let prev: &RoundMetrics = &rounds[t - 1];
            lower >= prev.lower - VALIDITY_SLACK && upper <= prev.upper + VALIDITY_SLACK
        };
        rounds.push(RoundMetrics {
            round: t as u64,
            upper,
            lower,
            spread: upper - lower,
            valid,
        });
    }
    let converged_at = rounds
        .iter()
        .find(|r| r.spread <= trace.epsilon)
        .map(|r| r.round);
    let all_valid = rounds.iter().all(|r| r.valid);
    TraceMetrics {
        rounds,
        converged_at,
        all_valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(values: Vec<Vec<f64>>) -> Trace {
        Trace {
            nodes: (0..values[0].len()).collect(),
            values,
            deliveries: Vec::new(),
            outcome: Outcome::Imported,
            epsilon: 1e-9,
            max_delay: 0,
            undelivered: 0,
        }
    }

    #[test]
    fn constant_inputs_converge_immediately() {
        let m = trace_metrics(&trace(vec![vec![2.5; 3], vec![2.5; 3]]));
        assert_eq!(m.converged_at, Some(0));
        assert!(m.rounds.iter().all(|r| r.upper == 2.5 && r.lower == 2.5));
        assert!(m.all_valid);
    }

    #[test]
    fn spreads_and_validity() {
        let m = trace_metrics(&trace(vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![0.5, 0.5]]));
        let spreads: Vec<_> = m.rounds.iter().map(|r| r.spread).collect();
        assert_eq!(spreads, vec![1.0, 0.0, 0.0]);
        assert_eq!(m.converged_at, Some(1));

        let bad = trace_metrics(&trace(vec![vec![0.0, 1.0], vec![-0.1, 0.5]]));
        assert!(!bad.rounds[1].valid);
        assert!(!bad.all_valid);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let t = trace(vec![vec![0.1, 1.0 / 3.0], vec![1e-300, -2.5e17]]);
        let text = t.values_csv_string();
        assert!(text.starts_with("round,nodeId,value\n0,0,0.1\n"));
        let back = Trace::read_values_csv(text.as_bytes()).unwrap();
        assert_eq!(back.values, t.values);
        assert_eq!(back.nodes, t.nodes);
    }

    #[test]
    fn metrics_csv_header() {
        let mut buf = Vec::new();
        trace(vec![vec![0.0, 1.0]])
            .write_metrics_csv(&mut buf)
            .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,U,mu,spread\n0,1.0,0.0,1.0\n"
        );
    }

    #[test]
    fn missing_rows_are_rejected() {
        let text = "round,nodeId,value\n0,0,1.0\n0,1,2.0\n1,0,1.5\n";
        assert!(matches!(
            Trace::read_values_csv(text.as_bytes()),
            Err(SimError::MissingRounds(_))
        ));
        let gap = "round,nodeId,value\n0,0,1.0\n2,0,1.0\n";
        assert!(matches!(
            Trace::read_values_csv(gap.as_bytes()),
            Err(SimError::MissingRounds(_))
        ));
    }
}
