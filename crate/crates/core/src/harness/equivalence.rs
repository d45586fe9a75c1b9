use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::HarnessError;
use crate::conditions::{check_partition_condition, check_reduced_graph_condition, Mode, Verdict};
use crate::digraph::{Digraph, GraphDocument};

/// Largest `n` accepted for exhaustive sweeps (`2^(n(n-1))` graphs).
pub const MAX_EXHAUSTIVE_NODES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Every digraph on `n` labelled nodes.
    Exhaustive,
    /// Uniformly random digraphs (each ordered pair with probability 1/2).
    Random { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Mismatch {
    pub graph: GraphDocument,
    pub partition: Verdict,
    pub reduced_graph: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EquivalenceReport {
    pub n: usize,
    pub f: usize,
    pub instances: u64,
    pub passing: u64,
    /// Instances where the reduced-graph scan ran out of budget.
    pub budget_exceeded: u64,
    pub mismatches: Vec<Mismatch>,
    pub equivalent: bool,
}

/// The digraph whose edge set is given by `bits` over ordered pairs `(i, j)`,
/// `i != j`, in lexicographic order.
pub fn graph_from_edge_bits(n: usize, bits: u64) -> Digraph {
    let pairs = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
    let edges: Vec<_> = pairs
        .enumerate()
        .filter(|(k, _)| bits >> k & 1 == 1)
        .map(|(_, e)| e)
        .collect();
    Digraph::new(n, edges).expect("edge bits describe a simple digraph")
}

/// Compares the synchronous partition check with the reduced-graph oracle.
pub fn equivalence_sweep(
    n: usize,
    f: usize,
    sampling: Sampling,
) -> Result<EquivalenceReport, HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidParams("n must be positive".into()));
    }
    let pairs = n * (n - 1);
    let graphs: Vec<u64> = match sampling {
        Sampling::Exhaustive => {
            if n > MAX_EXHAUSTIVE_NODES {
                return Err(HarnessError::InvalidParams(format!(
                    "exhaustive sweep supports n <= {MAX_EXHAUSTIVE_NODES}"
                )));
            }
            (0..1u64 << pairs).collect()
        }
        Sampling::Random { samples, seed } => {
            if pairs > 64 {
                return Err(HarnessError::InvalidParams(
                    "random sweep supports n <= 8".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mask = if pairs == 64 {
                u64::MAX
            } else {
                (1u64 << pairs) - 1
            };
            (0..samples).map(|_| rng.gen::<u64>() & mask).collect()
        }
    };
    let outcomes: Vec<(Verdict, Verdict, u64)> = graphs
        .par_iter()
        .map(|&bits| {
            let g = graph_from_edge_bits(n, bits);
            let a = check_partition_condition(&g, f, Mode::Sync)?.verdict;
            let b = check_reduced_graph_condition(&g, f)?.verdict;
            Ok((a, b, bits))
        })
        .collect::<Result<_, HarnessError>>()?;
    let mismatches: Vec<Mismatch> = outcomes
        .iter()
        .filter(|(a, b, _)| a != b && *b != Verdict::BudgetExceeded)
        .map(|&(a, b, bits)| Mismatch {
            graph: graph_from_edge_bits(n, bits).to_document(Some(f)),
            partition: a,
            reduced_graph: b,
        })
        .collect();
    let budget_exceeded = outcomes
        .iter()
        .filter(|o| o.1 == Verdict::BudgetExceeded)
        .count() as u64;
    Ok(EquivalenceReport {
        n,
        f,
        instances: outcomes.len() as u64,
        passing: outcomes.iter().filter(|o| o.0 == Verdict::Pass).count() as u64,
        budget_exceeded,
        equivalent: mismatches.is_empty() && budget_exceeded == 0,
        mismatches,
    })
}
