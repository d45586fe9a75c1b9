//! Executable form of the necessity argument: on a graph with a violating
//! partition, an adversary that equivocates along the partition and delays
//! a few links keeps `L` pinned at `m` and `R` pinned at `M` forever.

use super::{ByzantineBehavior, SchedulerStrategy, SimConfig, SimError};
use crate::conditions::{Mode, Partition};
use crate::digraph::{Digraph, NodeId, NodeSet};

pub const DEFAULT_ATTACK_ROUNDS: u64 = 1_000;

/// Builds the attack execution for a partition violating the asynchronous
/// condition.
///
/// Inputs are `m` on `L`, `M` on `R` and the midpoint elsewhere. Nodes in `F`
/// send `m - 1` into `L`, `M + 1` into `R` and the midpoint into `C`. For each
/// node `i` of `L` the links from the `min(f, |N_i'|)` lowest-numbered
/// members of `N_i' = N_i^- ∩ (C ∪ R)` are withheld each round until `i` has
/// finished it, and symmetrically for `R`.
pub fn build_attack_config(
    g: &Digraph,
    f: usize,
    partition: &Partition,
    m: f64,
    big_m: f64,
) -> Result<SimConfig, SimError> {
    if m.is_nan() || big_m.is_nan() || m >= big_m {
        return Err(SimError::Config(format!(
            "need m < M, got m = {m}, M = {big_m}"
        )));
    }
    let n = g.node_count();
    if !partition.is_well_formed(n) || partition.faulty.len() > f {
        return Err(SimError::Config(
            "attack partition is not a valid F, L, C, R split".into(),
        ));
    }
    if !partition.violates(g, Mode::Async.threshold(f)) {
        return Err(SimError::NotViolating);
    }

    let mid = (m + big_m) / 2.0;
    let inputs: Vec<f64> = g
        .nodes()
        .map(|v| {
            if partition.left.contains(&v) {
                m
            } else if partition.right.contains(&v) {
                big_m
            } else {
                mid
            }
        })
        .collect();

    let cr: NodeSet = partition.center.union(&partition.right).copied().collect();
    let lc: NodeSet = partition.left.union(&partition.center).copied().collect();
    let mut withheld = Vec::new();
    for (side, others) in [(&partition.left, &cr), (&partition.right, &lc)] {
        for &i in side {
            let candidates: Vec<NodeId> = g
                .in_neighbors(i)
                .iter()
                .copied()
                .filter(|u| others.contains(u))
                .collect();
            let w = f.min(candidates.len());
            withheld.extend(candidates[..w].iter().map(|&j| [j, i]));
        }
    }
    withheld.sort_unstable();

    Ok(SimConfig {
        graph: g.clone(),
        f,
        fault_set: partition.faulty.clone(),
        inputs,
        byzantine: ByzantineBehavior::Split {
            low_targets: partition.left.clone(),
            high_targets: partition.right.clone(),
            low: m - 1.0,
            high: big_m + 1.0,
            mid,
        },
        scheduler: SchedulerStrategy::AdaptiveDelay { withheld },
        seed: 0,
        max_rounds: DEFAULT_ATTACK_ROUNDS,
        epsilon: 0.0,
    })
}
