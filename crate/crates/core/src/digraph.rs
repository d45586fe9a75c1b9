//! Simple directed graphs, strongly connected component condensation and
//! reduced-graph enumeration.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier. Always in `0..n`.
pub type NodeId = usize;

/// Sorted set of node identifiers.
pub type NodeSet = BTreeSet<NodeId>;

/// Largest graph the bitmask based routines accept.
pub const MAX_MASK_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge ({from}, {to}) references a node outside 0..{n}")]
    NodeOutOfRange { from: NodeId, to: NodeId, n: usize },
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error("removed set has {removed} nodes but the fault bound is {f}")]
    TooManyRemoved { removed: usize, f: usize },
    #[error("removed set covers every node")]
    RemovesEverything,
    #[error("graph has {0} nodes; at most {MAX_MASK_NODES} supported here")]
    TooLarge(usize),
}

/// On-disk form of a graph: `{"n": 3, "edges": [[0,1],[1,2]], "f": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub edges: Vec<[NodeId; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
}

/// A simple directed graph on nodes `0..n`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDocument", into = "GraphDocument")]
pub struct Digraph {
    n: usize,
    in_nbrs: Vec<Vec<NodeId>>,
    out_nbrs: Vec<Vec<NodeId>>,
    in_masks: Vec<u64>,
}

impl Digraph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range ids.
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        for (from, to) in edges {
            if from >= n || to >= n {
                return Err(GraphError::NodeOutOfRange { from, to, n });
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge(from, to));
            }
        }
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(from, to) in &seen {
            out_nbrs[from].push(to);
            in_nbrs[to].push(from);
        }
        for list in &mut in_nbrs {
            list.sort_unstable();
        }
        let in_masks = if n <= MAX_MASK_NODES {
            in_nbrs.iter().map(|l| mask_of(l.iter().copied())).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            n,
            in_nbrs,
            out_nbrs,
            in_masks,
        })
    }

    /// Complete digraph: every ordered pair of distinct nodes.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Self::new(
            n,
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
        )
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out_nbrs.iter().map(Vec::len).sum()
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_nbrs
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        from < self.n && self.out_nbrs[from].binary_search(&to).is_ok()
    }

    /// `N_v^-`, sorted.
    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.in_nbrs[v]
    }

    /// `N_v^+`, sorted.
    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.out_nbrs[v]
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_nbrs[v].len()
    }

    pub fn min_in_degree(&self) -> usize {
        self.in_nbrs.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// In-neighbour bitmask of `v`. Only available when `n <= 64`.
    pub(crate) fn in_mask(&self, v: NodeId) -> u64 {
        self.in_masks[v]
    }

    pub(crate) fn require_mask_size(&self) -> Result<(), GraphError> {
        if self.n > MAX_MASK_NODES {
            Err(GraphError::TooLarge(self.n))
        } else {
            Ok(())
        }
    }

    pub fn to_document(&self, f: Option<usize>) -> GraphDocument {
        GraphDocument {
            n: self.n,
            edges: self.edges().map(|(i, j)| [i, j]).collect(),
            f,
        }
    }
}

impl fmt::Debug for Digraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Digraph")
            .field("n", &self.n)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}

impl TryFrom<GraphDocument> for Digraph {
    type Error = GraphError;

    fn try_from(doc: GraphDocument) -> Result<Self, Self::Error> {
        Digraph::new(doc.n, doc.edges.into_iter().map(|[a, b]| (a, b)))
    }
}

impl From<Digraph> for GraphDocument {
    fn from(g: Digraph) -> Self {
        g.to_document(None)
    }
}

/// Parses a graph document. Returns the graph together with the optional
/// `f` metadata field.
pub fn parse_graph(document: &str) -> Result<(Digraph, Option<usize>), GraphError> {
    let doc: GraphDocument =
        serde_json::from_str(document).map_err(|e| GraphError::Malformed(e.to_string()))?;
    let f = doc.f;
    Ok((Digraph::try_from(doc)?, f))
}

pub(crate) fn mask_of(nodes: impl IntoIterator<Item = NodeId>) -> u64 {
    nodes.into_iter().fold(0u64, |m, v| m | (1u64 << v))
}

pub(crate) fn set_of_mask(mask: u64) -> NodeSet {
    MaskIter(mask).collect()
}

pub(crate) struct MaskIter(pub u64);

impl Iterator for MaskIter {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as NodeId;
        self.0 &= self.0 - 1;
        Some(v)
    }
}

/// Strongly connected components and the DAG between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condensation {
    /// Components ordered by their smallest member.
    pub components: Vec<NodeSet>,
    /// Deduplicated component-index edges, sorted.
    pub dag_edges: Vec<(usize, usize)>,
}

impl Condensation {
    /// Component index of every node; `None` for nodes not in the graph
    /// (removed nodes of a reduced graph).
    pub fn component_of(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (idx, comp) in self.components.iter().enumerate() {
            for &v in comp {
                out[v] = Some(idx);
            }
        }
        out
    }

    /// Components with no incoming DAG edge.
    pub fn source_components(&self) -> Vec<usize> {
        let mut has_in = vec![false; self.components.len()];
        for &(_, to) in &self.dag_edges {
            has_in[to] = true;
        }
        (0..self.components.len()).filter(|&c| !has_in[c]).collect()
    }
}

pub fn condensation(g: &Digraph) -> Condensation {
    let active = vec![true; g.n];
    condense(&active, &g.out_nbrs)
}

pub fn source_components(c: &Condensation) -> Vec<usize> {
    c.source_components()
}

/// Iterative Tarjan over the active nodes of an adjacency list.
fn condense(active: &[bool], out: &[Vec<NodeId>]) -> Condensation {
    const UNSEEN: usize = usize::MAX;
    let n = active.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp_of = vec![UNSEEN; n];
    let mut raw_components: Vec<Vec<NodeId>> = Vec::new();
    let mut next_index = 0;

    for root in 0..n {
        if !active[root] || index[root] != UNSEEN {
            continue;
        }
        // (node, next edge position)
        let mut call: Vec<(NodeId, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < out[v].len() {
                let w = out[v][*pos];
                *pos += 1;
                if !active[w] {
                    continue;
                }
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp_of[w] = raw_components.len();
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    raw_components.push(comp);
                }
            }
        }
    }

    // Renumber components by smallest member.
    let mut order: Vec<usize> = (0..raw_components.len()).collect();
    order.sort_by_key(|&c| raw_components[c].iter().min().copied());
    let mut renumber = vec![0; raw_components.len()];
    for (new, &old) in order.iter().enumerate() {
        renumber[old] = new;
    }
    let components: Vec<NodeSet> = order
        .iter()
        .map(|&c| raw_components[c].iter().copied().collect())
        .collect();

    let mut dag = BTreeSet::new();
    for v in 0..n {
        if !active[v] {
            continue;
        }
        for &w in &out[v] {
            if active[w] && comp_of[v] != comp_of[w] {
                dag.insert((renumber[comp_of[v]], renumber[comp_of[w]]));
            }
        }
    }
    Condensation {
        components,
        dag_edges: dag.into_iter().collect(),
    }
}

/// A reduced graph: the removed set `F` and the surviving edges over `V - F`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedGraph {
    pub removed: NodeSet,
    pub kept_edges: Vec<(NodeId, NodeId)>,
}

impl ReducedGraph {
    pub fn condensation(&self, n: usize) -> Condensation {
        let mut active = vec![true; n];
        for &v in &self.removed {
            active[v] = false;
        }
        let mut out = vec![Vec::new(); n];
        for &(a, b) in &self.kept_edges {
            out[a].push(b);
        }
        condense(&active, &out)
    }

    /// Checks the structural invariants against the graph it was derived from.
    pub fn is_valid_for(&self, base: &Digraph, f: usize) -> bool {
        if self.kept_edges.iter().any(|(a, b)| {
            self.removed.contains(a) || self.removed.contains(b) || !base.has_edge(*a, *b)
        }) {
            return false;
        }
        base.nodes().filter(|v| !self.removed.contains(v)).all(|v| {
            let available = base
                .in_neighbors(v)
                .iter()
                .filter(|u| !self.removed.contains(u))
                .count();
            let kept = self.kept_edges.iter().filter(|&&(_, b)| b == v).count();
            kept <= available && available - kept <= f
        })
    }
}

/// Lazy enumeration of every reduced graph of `g` for removed set `removed`.
///
/// Each surviving node independently drops a subset of at most `f` of its
/// remaining in-edges. Subsets are ordered by size, then lexicographically;
/// the first node in id order is the most significant position, so the first
/// item is the graph with nothing extra removed.
pub fn reduced_graphs<'g>(
    g: &'g Digraph,
    removed: &NodeSet,
    f: usize,
) -> Result<ReducedGraphs<'g>, GraphError> {
    if removed.len() > f {
        return Err(GraphError::TooManyRemoved {
            removed: removed.len(),
            f,
        });
    }
    if let Some(&v) = removed.iter().find(|&&v| v >= g.n) {
        return Err(GraphError::NodeOutOfRange {
            from: v,
            to: v,
            n: g.n,
        });
    }
    if removed.len() >= g.n {
        return Err(GraphError::RemovesEverything);
    }
    let mut targets = Vec::new();
    for v in g.nodes().filter(|v| !removed.contains(v)) {
        let sources: Vec<NodeId> = g
            .in_neighbors(v)
            .iter()
            .copied()
            .filter(|u| !removed.contains(u))
            .collect();
        let choices = drop_choices(sources.len(), f);
        targets.push(Target {
            node: v,
            sources,
            choices,
        });
    }
    let positions = vec![0; targets.len()];
    Ok(ReducedGraphs {
        _graph: g,
        removed: removed.clone(),
        targets,
        positions,
        done: false,
    })
}

/// Number of reduced graphs `reduced_graphs` will yield, saturating.
pub fn reduced_graph_count(g: &Digraph, removed: &NodeSet, f: usize) -> u128 {
    g.nodes()
        .filter(|v| !removed.contains(v))
        .map(|v| {
            let d = g
                .in_neighbors(v)
                .iter()
                .filter(|u| !removed.contains(u))
                .count();
            (0..=f.min(d)).map(|k| binomial(d, k)).sum::<u128>()
        })
        .fold(1u128, |acc, c| acc.saturating_mul(c))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

struct Target {
    node: NodeId,
    sources: Vec<NodeId>,
    /// Each entry lists positions into `sources` that are dropped.
    choices: Vec<Vec<usize>>,
}

/// All subsets of `0..d` with at most `f` elements, by size then lexicographic.
fn drop_choices(d: usize, f: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for k in 0..=f.min(d) {
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            out.push(comb.clone());
            // advance to the next k-combination
            let mut i = k;
            while i > 0 && comb[i - 1] == d - k + i - 1 {
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

pub struct ReducedGraphs<'g> {
    _graph: &'g Digraph,
    removed: NodeSet,
    targets: Vec<Target>,
    positions: Vec<usize>,
    done: bool,
}

impl Iterator for ReducedGraphs<'_> {
    type Item = ReducedGraph;

    fn next(&mut self) -> Option<ReducedGraph> {
        if self.done {
            return None;
        }
        let mut kept_edges = Vec::new();
        for (t, &pos) in self.targets.iter().zip(&self.positions) {
            let dropped = &t.choices[pos];
            for (k, &u) in t.sources.iter().enumerate() {
                if !dropped.contains(&k) {
                    kept_edges.push((u, t.node));
                }
            }
        }
        kept_edges.sort_unstable();
        let item = ReducedGraph {
            removed: self.removed.clone(),
            kept_edges,
        };

        // odometer, last target fastest
        let mut i = self.targets.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.positions[i] += 1;
            if self.positions[i] < self.targets[i].choices.len() {
                break;
            }
            self.positions[i] = 0;
        }
        Some(item)
    }
}
