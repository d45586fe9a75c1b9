//! Graph generators, contraction-bound verification and batch experiments.

mod contraction;
mod equivalence;
mod generators;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contraction::{
    rounds_for_reduction, verify_contraction, verify_trace, window_factor, ContractionReport,
    BOUND_SLACK,
};
pub use equivalence::{
    equivalence_sweep, graph_from_edge_bits, EquivalenceReport, Mismatch, Sampling,
    MAX_EXHAUSTIVE_NODES,
};
pub use generators::{generate_graph, random_uniform, GraphKind, GraphParams};

use crate::conditions::ConditionError;
use crate::digraph::GraphError;
use crate::protocol::ProtocolError;
use crate::simnet::{run_simulation, ByzantineBehavior, SimConfig, SimError, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("trace is missing rounds: {0}")]
    MissingRounds(String),
    #[error("seed {0} repeats within the experiment")]
    DuplicateSeed(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A batch of runs of one base configuration, one per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SimConfig,
    pub seeds: Vec<u64>,
    /// Redraw every input uniformly from this range for each seed.
    #[serde(default)]
    pub input_range: Option<(f64, f64)>,
    /// With a `split` behaviour, aim `low` at fault-free nodes whose input is
    /// below the median and `high` at the rest.
    #[serde(default)]
    pub split_by_input: bool,
}

impl ExperimentSpec {
    pub fn new(
        name: impl Into<String>,
        base: SimConfig,
        repetitions: u64,
        first_seed: u64,
    ) -> Self {
        Self {
            name: name.into(),
            base,
            seeds: (first_seed..first_seed + repetitions).collect(),
            input_range: None,
            split_by_input: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen = BTreeSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return Err(HarnessError::DuplicateSeed(s));
            }
        }
        if let Some((lo, hi)) = self.input_range {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(HarnessError::InvalidParams(format!(
                    "empty input range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// The concrete configuration for one seed.
    pub fn config_for(&self, seed: u64) -> SimConfig {
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        if let Some((lo, hi)) = self.input_range {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            for x in &mut cfg.inputs {
                *x = rng.gen_range(lo..=hi);
            }
        }
        if self.split_by_input {
            if let ByzantineBehavior::Split {
                low_targets,
                high_targets,
                ..
            } = &mut cfg.byzantine
            {
                let mut honest: Vec<_> = cfg
                    .graph
                    .nodes()
                    .filter(|v| !cfg.fault_set.contains(v))
                    .collect();
                honest.sort_by(|&a, &b| cfg.inputs[a].total_cmp(&cfg.inputs[b]).then(a.cmp(&b)));
                let half = honest.len() / 2;
                *low_targets = honest[..half].iter().copied().collect();
                *high_targets = honest[half..].iter().copied().collect();
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub config: SimConfig,
    pub trace: Trace,
}

/// Runs every seed in parallel; results come back in seed-list order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunResult>, HarnessError> {
    spec.validate()?;
    spec.seeds
        .par_iter()
        .map(|&seed| {
            let config = spec.config_for(seed);
            let trace = run_simulation(&config)?;
            Ok(RunResult {
                seed,
                config,
                trace,
            })
        })
        .collect()
}
