use std::collections::VecDeque;

use iabc_core::conditions::{
    check_partition_condition, check_reduced_graph_condition, in_set, propagates,
    quick_degree_checks, reaches, Mode,
};
use iabc_core::digraph::{
    condensation, reduced_graph_count, reduced_graphs, Digraph, NodeId, NodeSet,
};
use proptest::prelude::*;

fn graph_from_bits(n: usize, bits: u64) -> Digraph {
    let mut edges = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if bits >> k & 1 == 1 {
                    edges.push((i, j));
                }
                k += 1;
            }
        }
    }
    Digraph::new(n, edges).unwrap()
}

fn arb_graph(max_n: usize) -> impl Strategy<Value = Digraph> {
    (1..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1);
        let max = if pairs == 0 { 0 } else { (1u64 << pairs) - 1 };
        (Just(n), 0..=max).prop_map(|(n, bits)| graph_from_bits(n, bits))
    })
}

fn reachable(g: &Digraph, from: NodeId) -> Vec<bool> {
    let mut seen = vec![false; g.node_count()];
    let mut q = VecDeque::from([from]);
    seen[from] = true;
    while let Some(v) = q.pop_front() {
        for &w in g.out_neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                q.push_back(w);
            }
        }
    }
    seen
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Product over surviving nodes of sum_{k <= min(f, d_v)} C(d_v, k).
fn expected_count(g: &Digraph, removed: &NodeSet, f: usize) -> u128 {
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
        .product()
}

#[test]
fn reduced_graph_counts_on_complete_graphs() {
    for n in 3..=4 {
        let g = Digraph::complete(n).unwrap();
        for f in 0..=1 {
            for removed in [NodeSet::new(), NodeSet::from([0])] {
                if removed.len() > f {
                    continue;
                }
                let items: Vec<_> = reduced_graphs(&g, &removed, f).unwrap().collect();
                assert_eq!(items.len() as u128, expected_count(&g, &removed, f));
                assert_eq!(
                    reduced_graph_count(&g, &removed, f),
                    expected_count(&g, &removed, f)
                );
                for r in &items {
                    assert!(r.is_valid_for(&g, f));
                }
                let mut dedup = items.clone();
                dedup.sort_by(|a, b| a.kept_edges.cmp(&b.kept_edges));
                dedup.dedup();
                assert_eq!(dedup.len(), items.len(), "duplicates for K{n}, f={f}");
            }
        }
    }
    // K4, F = {}, f = 1: each node keeps all or drops one of three edges
    assert_eq!(
        expected_count(&Digraph::complete(4).unwrap(), &NodeSet::new(), 1),
        256
    );
}

#[test]
fn directed_three_cycle_has_eight_reduced_graphs_for_empty_f() {
    let g = Digraph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
    let all: Vec<_> = reduced_graphs(&g, &NodeSet::new(), 1).unwrap().collect();
    assert_eq!(all.len(), 8);
    let last = all.last().unwrap();
    assert!(last.kept_edges.is_empty());
    assert_eq!(last.condensation(3).source_components().len(), 3);
}

#[test]
fn exhaustive_equivalence_up_to_three_nodes() {
    for n in 1..=3 {
        let pairs = n * (n - 1);
        for bits in 0..(1u64 << pairs) {
            let g = graph_from_bits(n, bits);
            for f in 0..=1 {
                let a = check_partition_condition(&g, f, Mode::Sync)
                    .unwrap()
                    .verdict;
                let b = check_reduced_graph_condition(&g, f).unwrap().verdict;
                assert_eq!(a, b, "{g:?} f={f}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn condensation_matches_reachability(g in arb_graph(7)) {
        let c = condensation(&g);
        let comp = c.component_of(g.node_count());
        let reach: Vec<_> = g.nodes().map(|v| reachable(&g, v)).collect();
        for u in g.nodes() {
            for v in g.nodes() {
                let mutual = reach[u][v] && reach[v][u];
                prop_assert_eq!(mutual, comp[u] == comp[v]);
            }
        }
        // dag edges go forward in some topological order: check acyclicity by peeling sources
        let k = c.components.len();
        let mut indeg = vec![0; k];
        for &(_, b) in &c.dag_edges { indeg[b] += 1; }
        let mut q: VecDeque<_> = (0..k).filter(|&x| indeg[x] == 0).collect();
        let mut seen = 0;
        while let Some(x) = q.pop_front() {
            seen += 1;
            for &(a, b) in &c.dag_edges {
                if a == x { indeg[b] -= 1; if indeg[b] == 0 { q.push_back(b); } }
            }
        }
        prop_assert_eq!(seen, k);
        prop_assert!(!c.source_components().is_empty());
        let mins: Vec<_> = c.components.iter().map(|s| *s.iter().next().unwrap()).collect();
        prop_assert!(mins.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn acyclic_singletons_condense_to_themselves(n in 1usize..7, bits in any::<u64>()) {
        // forward edges only: a DAG
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .enumerate()
            .filter(|(k, _)| bits >> (k % 64) & 1 == 1)
            .map(|(_, e)| e)
            .collect();
        let g = Digraph::new(n, edges.clone()).unwrap();
        let c = condensation(&g);
        prop_assert_eq!(c.components.len(), n);
        prop_assert_eq!(c.dag_edges, edges);
    }

    #[test]
    fn reduced_graph_items_are_valid(g in arb_graph(4), f in 0usize..=2, pick in any::<u8>()) {
        let n = g.node_count();
        let removed: NodeSet = if f > 0 && n > 1 { [pick as usize % n].into() } else { NodeSet::new() };
        let items: Vec<_> = reduced_graphs(&g, &removed, f).unwrap().collect();
        prop_assert_eq!(items.len() as u128, expected_count(&g, &removed, f));
        prop_assert_eq!(&items[0].kept_edges, &g.edges()
            .filter(|(a, b)| !removed.contains(a) && !removed.contains(b))
            .collect::<Vec<_>>());
        for r in &items {
            prop_assert!(r.is_valid_for(&g, f));
        }
    }

    #[test]
    fn sync_partition_check_matches_reduced_graph_oracle(g in arb_graph(5), f in 0usize..=1) {
        let a = check_partition_condition(&g, f, Mode::Sync).unwrap();
        let b = check_reduced_graph_condition(&g, f).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        if let Some(w) = b.witness {
            prop_assert!(w.violates(&g, f + 1));
        }
        if let Some(w) = a.witness {
            prop_assert!(w.is_well_formed(g.node_count()));
            prop_assert!(w.faulty.len() <= f);
            prop_assert!(w.violates(&g, f + 1));
        }
    }

    #[test]
    fn reach_is_monotone(g in arb_graph(7), labels in prop::collection::vec(0u8..3, 7), r in 1usize..4) {
        let n = g.node_count();
        // 0 -> A, 1 -> extra members of A', 2 -> B
        let a: NodeSet = (0..n).filter(|&v| labels[v] == 0).collect();
        let extra: NodeSet = (0..n).filter(|&v| labels[v] == 1).collect();
        let b: NodeSet = (0..n).filter(|&v| labels[v] == 2).collect();
        prop_assume!(!a.is_empty() && !b.is_empty());
        let bigger: NodeSet = a.union(&extra).copied().collect();
        if reaches(&g, &a, &b, r).unwrap() {
            prop_assert!(reaches(&g, &bigger, &b, r).unwrap());
        }
        let moved = in_set(&g, &a, &b, r).unwrap();
        prop_assert_eq!(moved.is_empty(), !reaches(&g, &a, &b, r).unwrap());
        prop_assert!(moved.is_subset(&b));
    }

    #[test]
    fn propagation_traces_are_well_formed(g in arb_graph(7), labels in prop::collection::vec(0u8..2, 7), r in 1usize..4) {
        let n = g.node_count();
        let a: NodeSet = (0..n).filter(|&v| labels[v] == 0).collect();
        let b: NodeSet = (0..n).filter(|&v| labels[v] == 1).collect();
        prop_assume!(!a.is_empty() && !b.is_empty());
        if let Some(t) = propagates(&g, &a, &b, r).unwrap().trace() {
            let l = t.rounds();
            prop_assert!(l >= 1);
            prop_assert!(t.b_sequence[l].is_empty());
            for tau in 0..l {
                prop_assert!(!t.b_sequence[tau].is_empty());
                let moved = in_set(&g, &t.a_sequence[tau], &t.b_sequence[tau], r).unwrap();
                prop_assert!(!moved.is_empty());
                let next_a: NodeSet = t.a_sequence[tau].union(&moved).copied().collect();
                let next_b: NodeSet = t.b_sequence[tau].difference(&moved).copied().collect();
                prop_assert_eq!(&t.a_sequence[tau + 1], &next_a);
                prop_assert_eq!(&t.b_sequence[tau + 1], &next_b);
            }
        }
    }
}

/// On graphs satisfying the asynchronous condition, a failed reach from `B`
/// into `A` means `A` propagates to `B`, and every propagation is short.
#[test]
fn propagation_from_non_reach_on_passing_graphs() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let g = iabc_core::harness::random_uniform(7, 0.92, seed).unwrap();
        if !check_partition_condition(&g, 1, Mode::Async)
            .unwrap()
            .passed()
        {
            continue;
        }
        assert!(quick_degree_checks(&g, 1).is_empty());
        let n = g.node_count();
        // every split of V - {x} into A, B with both non-empty, F = {x}
        for x in 0..n {
            let rest: Vec<_> = (0..n).filter(|&v| v != x).collect();
            for mask in 1..(1u32 << rest.len()) - 1 {
                let a: NodeSet = rest
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect();
                let b: NodeSet = rest.iter().filter(|v| !a.contains(v)).copied().collect();
                if !reaches(&g, &b, &a, 3).unwrap() {
                    let p = propagates(&g, &a, &b, 3).unwrap();
                    let t = p.trace().expect("A must propagate to B");
                    assert!(t.rounds() <= n - 3);
                }
            }
        }
        checked += 1;
    }
    assert!(checked > 5, "too few passing graphs sampled: {checked}");
}
