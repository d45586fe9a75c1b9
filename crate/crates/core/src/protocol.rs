//! Per-node state machine for the asynchronous trim-and-average protocol.
//!
//! A node in round `t` broadcasts its value tagged `t - 1`, waits for values
//! tagged `t - 1` from `|N_i^-| - f` distinct in-neighbours, discards the `f`
//! smallest and `f` largest, and replaces its value with the plain average of
//! its own value and the survivors.

use std::collections::BTreeMap;

use num_rational::Ratio;
use thiserror::Error;

use crate::digraph::{Digraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("node {id} is not in a graph of {n} nodes")]
    InvalidNode { id: NodeId, n: usize },
    #[error("node {node} has in-degree {in_degree}; at least {required} needed for f = {f}")]
    DegreeTooSmall {
        node: NodeId,
        in_degree: usize,
        required: usize,
        f: usize,
    },
    #[error("node {receiver} received a message from non-neighbour {sender}")]
    NotInNeighbor { sender: NodeId, receiver: NodeId },
    #[error("node {0} is not ready to update")]
    NotReady(NodeId),
}

/// Value broadcast at the start of a round, tagged with the previous round
/// index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMessage {
    pub sender: NodeId,
    pub tag: u64,
    pub value: f64,
}

/// How many in-neighbour values a node waits for before updating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaitPolicy {
    /// `|N_i^-| - f`, the asynchronous rule.
    #[default]
    AllButF,
    /// Every in-neighbour. Used by the lock-step emulation.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Buffered {
    sender: NodeId,
    value: f64,
    arrival: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    Buffered,
    /// A value from this sender with this tag was already held.
    Duplicate,
    /// Tag belongs to a round this node has already finished.
    Stale,
}

/// What one update consumed and produced.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    /// Round just finished.
    pub round: u64,
    pub previous: f64,
    pub value: f64,
    /// Senders whose values entered the receive vector (`N_i^@`).
    pub received_from: Vec<NodeId>,
    /// Senders whose values survived trimming (`N_i^*`).
    pub used_from: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    id: NodeId,
    value: f64,
    round: u64,
    f: usize,
    in_neighbors: Vec<NodeId>,
    out_neighbors: Vec<NodeId>,
    policy: WaitPolicy,
    buffer: BTreeMap<u64, Vec<Buffered>>,
    arrivals: u64,
}

pub fn init_node(
    id: NodeId,
    input: f64,
    g: &Digraph,
    f: usize,
) -> Result<NodeState, ProtocolError> {
    NodeState::new(id, input, g, f, WaitPolicy::AllButF)
}

impl NodeState {
    pub fn new(
        id: NodeId,
        input: f64,
        g: &Digraph,
        f: usize,
        policy: WaitPolicy,
    ) -> Result<Self, ProtocolError> {
        if id >= g.node_count() {
            return Err(ProtocolError::InvalidNode {
                id,
                n: g.node_count(),
            });
        }
        Ok(Self {
            id,
            value: input,
            round: 1,
            f,
            in_neighbors: g.in_neighbors(id).to_vec(),
            out_neighbors: g.out_neighbors(id).to_vec(),
            policy,
            buffer: BTreeMap::new(),
            arrivals: 0,
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    /// Value at the end of the last finished round.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Round currently in progress (starts at 1).
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn in_neighbors(&self) -> &[NodeId] {
        &self.in_neighbors
    }

    pub fn out_neighbors(&self) -> &[NodeId] {
        &self.out_neighbors
    }

    /// Number of distinct in-neighbour values needed to update.
    pub fn quorum(&self) -> usize {
        match self.policy {
            WaitPolicy::AllButF => self.in_neighbors.len().saturating_sub(self.f),
            WaitPolicy::All => self.in_neighbors.len(),
        }
    }

    /// Averaging weight `1 / (kept + 1)`; equals `1/(|N_i^-| + 1 - 3f)` under
    /// the asynchronous wait rule.
    pub fn weight(&self) -> Ratio<u64> {
        let kept = self.quorum().saturating_sub(2 * self.f);
        Ratio::new(1, kept as u64 + 1)
    }

    /// Messages for the current round: the current value, tagged `round - 1`,
    /// to each out-neighbour.
    pub fn outgoing_messages(&self) -> Vec<(NodeId, RoundMessage)> {
        let msg = RoundMessage {
            sender: self.id,
            tag: self.round - 1,
            value: self.value,
        };
        self.out_neighbors.iter().map(|&dst| (dst, msg)).collect()
    }

    /// Buffers the first value per `(sender, tag)`.
    pub fn ingest_message(&mut self, m: RoundMessage) -> Result<Ingest, ProtocolError> {
        if self.in_neighbors.binary_search(&m.sender).is_err() {
            return Err(ProtocolError::NotInNeighbor {
                sender: m.sender,
                receiver: self.id,
            });
        }
        if m.tag + 1 < self.round {
            return Ok(Ingest::Stale);
        }
        let entries = self.buffer.entry(m.tag).or_default();
        if entries.iter().any(|b| b.sender == m.sender) {
            return Ok(Ingest::Duplicate);
        }
        entries.push(Buffered {
            sender: m.sender,
            value: m.value,
            arrival: self.arrivals,
        });
        self.arrivals += 1;
        Ok(Ingest::Buffered)
    }

    pub fn round_ready(&self) -> bool {
        let have = self.buffer.get(&(self.round - 1)).map_or(0, Vec::len);
        have >= self.quorum()
    }

    fn check_degree(&self) -> Result<(), ProtocolError> {
        let required = 3 * self.f + 1;
        if self.f > 0 && self.in_neighbors.len() < required {
            return Err(ProtocolError::DegreeTooSmall {
                node: self.id,
                in_degree: self.in_neighbors.len(),
                required,
                f: self.f,
            });
        }
        Ok(())
    }

    /// Finishes the current round.
    ///
    /// The earliest-arrived `quorum` values are taken, sorted by
    /// `(value, sender)`, and `f` are dropped from each end. The node's own
    /// value never takes part in trimming.
    pub fn apply_update(&mut self) -> Result<UpdateRecord, ProtocolError> {
        self.check_degree()?;
        if !self.round_ready() {
            return Err(ProtocolError::NotReady(self.id));
        }
        let tag = self.round - 1;
        let mut received = self.buffer.remove(&tag).unwrap_or_default();
        received.sort_by_key(|b| b.arrival);
        received.truncate(self.quorum());
        let received_from: Vec<NodeId> = received.iter().map(|b| b.sender).collect();

        received.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.sender.cmp(&b.sender)));
        let f = self.f;
        let kept = &received[f..received.len() - f];

        let previous = self.value;
        let sum = kept.iter().fold(previous, |acc, b| acc + b.value);
        self.value = sum / (kept.len() + 1) as f64;
        let record = UpdateRecord {
            round: self.round,
            previous,
            value: self.value,
            received_from,
            used_from: kept.iter().map(|b| b.sender).collect(),
        };
        self.round += 1;
        // anything older than the new current tag is stale now
        self.buffer.retain(|&t, _| t + 1 >= self.round);
        Ok(record)
    }
}

/// `α = min_i 1/(|N_i^-| + 1 - 3f)`.
pub fn compute_alpha(g: &Digraph, f: usize) -> Result<Ratio<u64>, ProtocolError> {
    let mut widest = 0u64;
    for v in g.nodes() {
        let d = g.in_degree(v);
        if f > 0 && d < 3 * f + 1 {
            return Err(ProtocolError::DegreeTooSmall {
                node: v,
                in_degree: d,
                required: 3 * f + 1,
                f,
            });
        }
        widest = widest.max((d + 1 - 3 * f) as u64);
    }
    Ok(Ratio::new(1, widest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(sender: NodeId, tag: u64, value: f64) -> RoundMessage {
        RoundMessage { sender, tag, value }
    }

    /// Graph where node 0 has the given in-neighbours 1..=d and out-edges to 1 and 2.
    fn star_in(d: usize) -> Digraph {
        let n = d.max(2) + 1;
        let mut edges: Vec<_> = (1..=d).map(|j| (j, 0)).collect();
        edges.push((0, 1));
        edges.push((0, 2));
        Digraph::new(n, edges).unwrap()
    }

    fn feed(state: &mut NodeState, values: &[f64]) {
        for (k, &v) in values.iter().enumerate() {
            state
                .ingest_message(msg(k + 1, state.round() - 1, v))
                .unwrap();
        }
    }

    #[test]
    fn init_examples() {
        let k6 = Digraph::complete(6).unwrap();
        let s = init_node(0, 0.5, &k6, 1).unwrap();
        assert_eq!(s.value(), 0.5);
        assert_eq!(s.round(), 1);
        assert!(!s.round_ready());
        assert_eq!(init_node(1, -3.2, &k6, 1).unwrap().value(), -3.2);
        assert_eq!(
            init_node(6, 0.0, &k6, 1).unwrap_err(),
            ProtocolError::InvalidNode { id: 6, n: 6 }
        );
    }

    #[test]
    fn outgoing_examples() {
        let g = star_in(2);
        let s = init_node(0, 0.5, &g, 0).unwrap();
        assert_eq!(
            s.outgoing_messages(),
            vec![(1, msg(0, 0, 0.5)), (2, msg(0, 0, 0.5))]
        );
        let sink = init_node(1, 0.5, &Digraph::new(2, [(0, 1)]).unwrap(), 0).unwrap();
        assert!(sink.outgoing_messages().is_empty());
    }

    #[test]
    fn outgoing_tag_tracks_round() {
        // 0 <-> 1, f = 0: each update needs one value
        let g = Digraph::complete(2).unwrap();
        let mut s = init_node(0, 1.25, &g, 0).unwrap();
        for _ in 0..2 {
            s.ingest_message(msg(1, s.round() - 1, 1.25)).unwrap();
            s.apply_update().unwrap();
        }
        assert_eq!(s.round(), 3);
        assert_eq!(s.outgoing_messages(), vec![(1, msg(0, 2, 1.25))]);
    }

    #[test]
    fn ingest_examples() {
        let g = star_in(4);
        let mut s = init_node(0, 0.0, &g, 1).unwrap();
        assert_eq!(s.ingest_message(msg(1, 0, 7.0)).unwrap(), Ingest::Buffered);
        assert_eq!(s.ingest_message(msg(1, 0, 9.0)).unwrap(), Ingest::Duplicate);
        assert_eq!(
            s.ingest_message(msg(0, 0, 1.0)).unwrap_err(),
            ProtocolError::NotInNeighbor {
                sender: 0,
                receiver: 0
            }
        );
        // move to round 3, then a tag-0 message is stale
        feed(&mut s, &[0.0, 0.0, 0.0]);
        s.apply_update().unwrap();
        feed(&mut s, &[0.0, 0.0, 0.0]);
        s.apply_update().unwrap();
        assert_eq!(s.round(), 3);
        assert_eq!(s.ingest_message(msg(4, 0, 1.0)).unwrap(), Ingest::Stale);
    }

    #[test]
    fn first_value_wins() {
        let g = star_in(4);
        let mut s = init_node(0, 0.0, &g, 1).unwrap();
        s.ingest_message(msg(1, 0, 2.0)).unwrap();
        s.ingest_message(msg(1, 0, 100.0)).unwrap();
        s.ingest_message(msg(2, 0, 2.0)).unwrap();
        s.ingest_message(msg(3, 0, 2.0)).unwrap();
        let rec = s.apply_update().unwrap();
        assert_eq!(rec.value, 1.0);
    }

    #[test]
    fn readiness_thresholds() {
        let g = star_in(4);
        let mut s = init_node(0, 0.0, &g, 1).unwrap();
        feed(&mut s, &[1.0, 2.0]);
        assert!(!s.round_ready());
        s.ingest_message(msg(3, 0, 3.0)).unwrap();
        assert!(s.round_ready());

        let mut strict = init_node(0, 0.0, &g, 0).unwrap();
        feed(&mut strict, &[1.0, 2.0, 3.0]);
        assert!(!strict.round_ready());
        strict.ingest_message(msg(4, 0, 4.0)).unwrap();
        assert!(strict.round_ready());
    }

    #[test]
    fn future_tags_do_not_count() {
        let g = star_in(4);
        let mut s = init_node(0, 0.0, &g, 1).unwrap();
        for j in 1..=3 {
            s.ingest_message(msg(j, 1, 1.0)).unwrap();
        }
        assert!(!s.round_ready());
    }

    #[test]
    fn update_examples() {
        let mut s = init_node(0, 0.0, &star_in(4), 1).unwrap();
        feed(&mut s, &[-5.0, 2.0, 10.0]);
        let rec = s.apply_update().unwrap();
        assert_eq!(rec.value, 1.0);
        assert_eq!(rec.used_from, vec![2]);
        assert_eq!(s.round(), 2);
        assert_eq!(s.value(), 1.0);

        let mut s = init_node(0, 3.0, &star_in(2), 0).unwrap();
        feed(&mut s, &[0.0, 6.0]);
        assert_eq!(s.apply_update().unwrap().value, 3.0);

        let mut s = init_node(0, 10.0, &star_in(7), 2).unwrap();
        feed(&mut s, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let rec = s.apply_update().unwrap();
        assert_eq!(rec.value, 6.5);
        assert_eq!(rec.used_from, vec![3]);
    }

    #[test]
    fn update_requires_readiness_and_degree() {
        let mut s = init_node(0, 0.0, &star_in(4), 1).unwrap();
        assert_eq!(s.apply_update().unwrap_err(), ProtocolError::NotReady(0));

        let mut low = init_node(0, 0.0, &star_in(3), 1).unwrap();
        feed(&mut low, &[1.0, 2.0]);
        assert!(matches!(
            low.apply_update().unwrap_err(),
            ProtocolError::DegreeTooSmall { required: 4, .. }
        ));
    }

    #[test]
    fn earliest_arrivals_are_used() {
        // five in-neighbours, f = 1: quorum 4
        let mut s = init_node(0, 0.0, &star_in(5), 1).unwrap();
        // quorum is 4, so the fifth arrival is ignored
        for (j, v) in [(5, 100.0), (1, 1.0), (2, 1.0), (3, 1.0), (4, -100.0)] {
            s.ingest_message(msg(j, 0, v)).unwrap();
        }
        let rec = s.apply_update().unwrap();
        assert_eq!(rec.received_from, vec![5, 1, 2, 3]);
        // sorted: 1(1),1(2),1(3),100(5) -> drop 1(1) and 100 -> keep senders 2,3
        assert_eq!(rec.used_from, vec![2, 3]);
        assert_eq!(rec.value, 2.0 / 3.0);
    }

    #[test]
    fn lock_step_policy_waits_for_everyone() {
        let g = star_in(4);
        let mut s = NodeState::new(0, 0.0, &g, 1, WaitPolicy::All).unwrap();
        feed(&mut s, &[1.0, 2.0, 3.0]);
        assert!(!s.round_ready());
        s.ingest_message(msg(4, 0, 4.0)).unwrap();
        let rec = s.apply_update().unwrap();
        // keep {2, 3}, weight 1/3
        assert_eq!(rec.value, 5.0 / 3.0);
        assert_eq!(s.weight(), Ratio::new(1, 3));
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(
            compute_alpha(&Digraph::complete(6).unwrap(), 1).unwrap(),
            Ratio::new(1, 3)
        );
        // node 0 in-degree 4, the rest in-degree 5
        let edges = Digraph::complete(6)
            .unwrap()
            .edges()
            .filter(|&e| e != (5, 0))
            .collect::<Vec<_>>();
        let g = Digraph::new(6, edges).unwrap();
        assert_eq!(compute_alpha(&g, 1).unwrap(), Ratio::new(1, 3));
        assert_eq!(compute_alpha(&star_in(4), 0).unwrap(), Ratio::new(1, 5));
        assert_eq!(
            compute_alpha(&Digraph::complete(5).unwrap(), 1).unwrap(),
            Ratio::new(1, 2)
        );
        assert!(matches!(
            compute_alpha(&Digraph::complete(4).unwrap(), 1),
            Err(ProtocolError::DegreeTooSmall { .. })
        ));
    }

    #[test]
    fn weight_matches_formula() {
        let k6 = Digraph::complete(6).unwrap();
        assert_eq!(
            init_node(0, 0.0, &k6, 1).unwrap().weight(),
            Ratio::new(1, 3)
        );
    }
}
