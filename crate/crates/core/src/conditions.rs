//! Necessary-and-sufficient graph conditions for iterative approximate
//! Byzantine consensus.
//!
//! A relation `A => B` at threshold `r` holds when some node of `B` has at
//! least `r` in-neighbours in `A`. The synchronous condition uses
//! `r = f + 1`, the asynchronous one `r = 2f + 1`. A graph satisfies the
//! condition when no partition `F, L, C, R` (with `|F| <= f` and `L`, `R`
//! non-empty) has both `C ∪ R => L` and `L ∪ C => R` false.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digraph::{
    mask_of, reduced_graph_count, reduced_graphs, set_of_mask, Digraph, GraphError, MaskIter,
    NodeId, NodeSet, ReducedGraph,
};

/// Default cap on the number of reduced graphs examined by the oracle.
pub const DEFAULT_REDUCED_GRAPH_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("node sets must be non-empty")]
    EmptySet,
    #[error("node sets overlap")]
    Overlap,
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

impl Mode {
    /// Reach threshold for fault bound `f`.
    pub fn threshold(self, f: usize) -> usize {
        match self {
            Mode::Sync => f + 1,
            Mode::Async => 2 * f + 1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sync => "sync",
            Mode::Async => "async",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(Mode::Sync),
            "async" => Ok(Mode::Async),
            other => Err(format!("unknown mode {other:?}; expected sync or async")),
        }
    }
}

/// Four disjoint node sets covering the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    #[serde(rename = "F")]
    pub faulty: NodeSet,
    #[serde(rename = "L")]
    pub left: NodeSet,
    #[serde(rename = "C")]
    pub center: NodeSet,
    #[serde(rename = "R")]
    pub right: NodeSet,
}

impl Partition {
    /// True when the sets are disjoint, cover `0..n`, and `L`, `R` are non-empty.
    pub fn is_well_formed(&self, n: usize) -> bool {
        let total = self.faulty.len() + self.left.len() + self.center.len() + self.right.len();
        let union: NodeSet = self
            .faulty
            .iter()
            .chain(&self.left)
            .chain(&self.center)
            .chain(&self.right)
            .copied()
            .collect();
        total == n
            && union.len() == n
            && union.iter().all(|&v| v < n)
            && !self.left.is_empty()
            && !self.right.is_empty()
    }

    /// True when neither `C ∪ R => L` nor `L ∪ C => R` holds at threshold `r`.
    pub fn violates(&self, g: &Digraph, r: usize) -> bool {
        let cr: NodeSet = self.center.union(&self.right).copied().collect();
        let lc: NodeSet = self.left.union(&self.center).copied().collect();
        let into_left = self
            .left
            .iter()
            .any(|&v| g.in_neighbors(v).iter().filter(|u| cr.contains(u)).count() >= r);
        let into_right = self
            .right
            .iter()
            .any(|&v| g.in_neighbors(v).iter().filter(|u| lc.contains(u)).count() >= r);
        !into_left && !into_right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    BudgetExceeded,
}

/// Offending reduced graph found by the reduced-graph oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedWitness {
    #[serde(rename = "F")]
    pub removed: NodeSet,
    #[serde(rename = "keptEdges")]
    pub kept_edges: Vec<[NodeId; 2]>,
    #[serde(rename = "sourceComponents")]
    pub source_components: Vec<NodeSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DegreeViolation {
    TooFewNodes {
        n: usize,
        f: usize,
    },
    LowInDegree {
        node: NodeId,
        in_degree: usize,
        required: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub verdict: Verdict,
    pub mode: Mode,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Partition>,
    #[serde(
        default,
        rename = "reducedGraph",
        skip_serializing_if = "Option::is_none"
    )]
    pub reduced_graph: Option<ReducedWitness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<DegreeViolation>,
}

impl ConditionReport {
    fn pass(mode: Mode, r: usize) -> Self {
        Self {
            verdict: Verdict::Pass,
            mode,
            r,
            witness: None,
            reduced_graph: None,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn checked_masks(g: &Digraph, a: &NodeSet, b: &NodeSet) -> Result<(u64, u64), ConditionError> {
    g.require_mask_size()?;
    if a.is_empty() || b.is_empty() {
        return Err(ConditionError::EmptySet);
    }
    if let Some(&v) = a.iter().chain(b).find(|&&v| v >= g.node_count()) {
        return Err(ConditionError::UnknownNode(v));
    }
    if !a.is_disjoint(b) {
        return Err(ConditionError::Overlap);
    }
    Ok((mask_of(a.iter().copied()), mask_of(b.iter().copied())))
}

#[inline]
fn in_mask_of(g: &Digraph, a: u64, b: u64, r: usize) -> u64 {
    MaskIter(b)
        .filter(|&v| (g.in_mask(v) & a).count_ones() as usize >= r)
        .fold(0, |m, v| m | (1 << v))
}

#[inline]
fn reaches_mask(g: &Digraph, a: u64, b: u64, r: usize) -> bool {
    MaskIter(b).any(|v| (g.in_mask(v) & a).count_ones() as usize >= r)
}

/// `A => B` at threshold `r`.
pub fn reaches(g: &Digraph, a: &NodeSet, b: &NodeSet, r: usize) -> Result<bool, ConditionError> {
    if r == 0 {
        return Err(ConditionError::ZeroThreshold);
    }
    let (a, b) = checked_masks(g, a, b)?;
    Ok(reaches_mask(g, a, b, r))
}

/// `in(A => B)`: the nodes of `B` with at least `r` in-neighbours in `A`.
pub fn in_set(g: &Digraph, a: &NodeSet, b: &NodeSet, r: usize) -> Result<NodeSet, ConditionError> {
    if r == 0 {
        return Err(ConditionError::ZeroThreshold);
    }
    let (a, b) = checked_masks(g, a, b)?;
    Ok(set_of_mask(in_mask_of(g, a, b, r)))
}

/// The sets `A_0..A_l` and `B_0..B_l` of a successful propagation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationTrace {
    pub a_sequence: Vec<NodeSet>,
    pub b_sequence: Vec<NodeSet>,
}

impl PropagationTrace {
    /// Number of rounds `l`.
    pub fn rounds(&self) -> usize {
        self.a_sequence.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Propagation {
    Propagates(PropagationTrace),
    /// `in(A_τ => B_τ)` was empty while `B_τ` was not.
    Stalled {
        round: usize,
        a: NodeSet,
        b: NodeSet,
    },
}

impl Propagation {
    pub fn succeeded(&self) -> bool {
        matches!(self, Propagation::Propagates(_))
    }

    pub fn trace(&self) -> Option<&PropagationTrace> {
        match self {
            Propagation::Propagates(t) => Some(t),
            Propagation::Stalled { .. } => None,
        }
    }
}

/// Repeatedly moves `in(A => B)` from `B` into `A` until `B` is empty or
/// nothing more moves.
pub fn propagates(
    g: &Digraph,
    a: &NodeSet,
    b: &NodeSet,
    r: usize,
) -> Result<Propagation, ConditionError> {
    if r == 0 {
        return Err(ConditionError::ZeroThreshold);
    }
    let (mut a_mask, mut b_mask) = checked_masks(g, a, b)?;
    let mut a_seq = vec![a.clone()];
    let mut b_seq = vec![b.clone()];
    while b_mask != 0 {
        let moved = in_mask_of(g, a_mask, b_mask, r);
        if moved == 0 {
            return Ok(Propagation::Stalled {
                round: a_seq.len() - 1,
                a: set_of_mask(a_mask),
                b: set_of_mask(b_mask),
            });
        }
        a_mask |= moved;
        b_mask &= !moved;
        a_seq.push(set_of_mask(a_mask));
        b_seq.push(set_of_mask(b_mask));
    }
    Ok(Propagation::Propagates(PropagationTrace {
        a_sequence: a_seq,
        b_sequence: b_seq,
    }))
}

/// All subsets of `0..n` of size at most `f`, by size then lexicographic.
pub(crate) fn fault_sets(n: usize, f: usize) -> Vec<u64> {
    let mut out = Vec::new();
    for k in 0..=f.min(n) {
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            out.push(mask_of(comb.iter().copied()));
            let mut i = k;
            while i > 0 && comb[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            comb[i - 1] += 1;
            for j in i..k {
                comb[j] = comb[j - 1] + 1;
            }
        }
    }
    out
}

/// First violating `(L, C, R)` assignment of the nodes outside `faulty`, in
/// lexicographic order of labels with `L < C < R` and node 0 most significant.
fn first_violation(g: &Digraph, n: usize, faulty: u64, r: usize) -> Option<Partition> {
    let rest: Vec<NodeId> = (0..n).filter(|v| faulty & (1 << v) == 0).collect();
    if rest.len() < 2 {
        return None;
    }
    // 0 = L, 1 = C, 2 = R
    let mut labels = vec![0u8; rest.len()];
    loop {
        let (mut l, mut c, mut rr) = (0u64, 0u64, 0u64);
        for (&v, &lab) in rest.iter().zip(&labels) {
            match lab {
                0 => l |= 1 << v,
                1 => c |= 1 << v,
                _ => rr |= 1 << v,
            }
        }
        if l != 0 && rr != 0 && !reaches_mask(g, c | rr, l, r) && !reaches_mask(g, l | c, rr, r) {
            return Some(Partition {
                faulty: set_of_mask(faulty),
                left: set_of_mask(l),
                center: set_of_mask(c),
                right: set_of_mask(rr),
            });
        }
        let mut i = labels.len();
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            labels[i] += 1;
            if labels[i] < 3 {
                break;
            }
            labels[i] = 0;
        }
    }
}

/// Exhaustive partition check. Exponential; meant for `n` up to about 12.
pub fn check_partition_condition(
    g: &Digraph,
    f: usize,
    mode: Mode,
) -> Result<ConditionReport, ConditionError> {
    g.require_mask_size()?;
    let n = g.node_count();
    let r = mode.threshold(f);
    let violations = match mode {
        Mode::Async => quick_degree_checks(g, f),
        Mode::Sync => Vec::new(),
    };
    let witness = fault_sets(n, f)
        .into_par_iter()
        .find_map_first(|faulty| first_violation(g, n, faulty, r));
    let mut report = ConditionReport::pass(mode, r);
    report.violations = violations;
    if let Some(w) = witness {
        report.verdict = Verdict::Fail;
        report.witness = Some(w);
    }
    Ok(report)
}

/// Outcome of scanning reduced graphs with a per-graph predicate.
enum Scan {
    Clean,
    Offending(ReducedGraph, Vec<NodeSet>),
    OutOfBudget,
}

fn scan_reduced_graphs<P>(
    g: &Digraph,
    f: usize,
    budget: u64,
    mut bad: P,
) -> Result<Scan, ConditionError>
where
    P: FnMut(&[NodeSet]) -> bool,
{
    g.require_mask_size()?;
    let n = g.node_count();
    let sets: Vec<NodeSet> = fault_sets(n, f)
        .into_iter()
        .filter(|m| (m.count_ones() as usize) < n)
        .map(set_of_mask)
        .collect();
    let total = sets
        .iter()
        .map(|s| reduced_graph_count(g, s, f))
        .fold(0u128, u128::saturating_add);
    if total > budget as u128 {
        return Ok(Scan::OutOfBudget);
    }
    for removed in &sets {
        for reduced in reduced_graphs(g, removed, f)? {
            let cond = reduced.condensation(n);
            let sources: Vec<NodeSet> = cond
                .source_components()
                .into_iter()
                .map(|c| cond.components[c].clone())
                .collect();
            if bad(&sources) {
                return Ok(Scan::Offending(reduced, sources));
            }
        }
    }
    Ok(Scan::Clean)
}

fn reduced_report(g: &Digraph, f: usize, scan: Scan) -> ConditionReport {
    let r = Mode::Sync.threshold(f);
    let mut report = ConditionReport::pass(Mode::Sync, r);
    match scan {
        Scan::Clean => {}
        Scan::OutOfBudget => report.verdict = Verdict::BudgetExceeded,
        Scan::Offending(reduced, sources) => {
            report.verdict = Verdict::Fail;
            if sources.len() >= 2 {
                let left = sources[0].clone();
                let right = sources[1].clone();
                let center = g
                    .nodes()
                    .filter(|v| {
                        !reduced.removed.contains(v) && !left.contains(v) && !right.contains(v)
                    })
                    .collect();
                report.witness = Some(Partition {
                    faulty: reduced.removed.clone(),
                    left,
                    center,
                    right,
                });
            }
            report.reduced_graph = Some(ReducedWitness {
                removed: reduced.removed,
                kept_edges: reduced.kept_edges.iter().map(|&(a, b)| [a, b]).collect(),
                source_components: sources,
            });
        }
    }
    report
}

/// Every reduced graph must have exactly one source component.
pub fn check_reduced_graph_condition(
    g: &Digraph,
    f: usize,
) -> Result<ConditionReport, ConditionError> {
    check_reduced_graph_condition_with_budget(g, f, DEFAULT_REDUCED_GRAPH_BUDGET)
}

pub fn check_reduced_graph_condition_with_budget(
    g: &Digraph,
    f: usize,
    budget: u64,
) -> Result<ConditionReport, ConditionError> {
    let scan = scan_reduced_graphs(g, f, budget, |sources| sources.len() != 1)?;
    Ok(reduced_report(g, f, scan))
}

/// Every reduced graph must have a unique source component of at least
/// `f + 1` nodes.
pub fn check_source_component_size(
    g: &Digraph,
    f: usize,
) -> Result<ConditionReport, ConditionError> {
    check_source_component_size_with_budget(g, f, DEFAULT_REDUCED_GRAPH_BUDGET)
}

pub fn check_source_component_size_with_budget(
    g: &Digraph,
    f: usize,
    budget: u64,
) -> Result<ConditionReport, ConditionError> {
    let scan = scan_reduced_graphs(g, f, budget, |sources| {
        sources.len() != 1 || sources[0].len() < f + 1
    })?;
    Ok(reduced_report(g, f, scan))
}

/// Cheap necessary conditions for the asynchronous case: `n > 5f` and every
/// in-degree at least `3f + 1`. An empty result only means "not disproven".
pub fn quick_degree_checks(g: &Digraph, f: usize) -> Vec<DegreeViolation> {
    let mut out = Vec::new();
    let n = g.node_count();
    if n <= 5 * f {
        out.push(DegreeViolation::TooFewNodes { n, f });
    }
    if f > 0 {
        let required = 3 * f + 1;
        for v in g.nodes() {
            let d = g.in_degree(v);
            if d < required {
                out.push(DegreeViolation::LowInDegree {
                    node: v,
                    in_degree: d,
                    required,
                });
            }
        }
    }
    out
}
