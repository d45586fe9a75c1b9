//! Graph conditions and deterministic simulation for iterative approximate
//! Byzantine consensus on directed graphs.
//!
//! - [`digraph`]: graph model, condensation, reduced graphs.
//! - [`conditions`]: partition and reduced-graph checks, propagation.
//! - [`protocol`]: the per-node trim-and-average state machine.
//! - [`simnet`]: asynchronous event-driven simulator and the attack builder.
//! - [`harness`]: generators, contraction-bound checks, batch runs.

pub mod conditions;
pub mod digraph;
pub mod harness;
pub mod protocol;
pub mod simnet;

pub use conditions::{
    check_partition_condition, check_reduced_graph_condition, check_source_component_size, in_set,
    propagates, quick_degree_checks, reaches, ConditionError, ConditionReport, Mode, Partition,
    Propagation, PropagationTrace, Verdict,
};
pub use digraph::{
    condensation, parse_graph, reduced_graphs, source_components, Condensation, Digraph,
    GraphDocument, GraphError, NodeId, NodeSet, ReducedGraph,
};
pub use harness::{
    equivalence_sweep, generate_graph, run_experiment, verify_contraction, verify_trace,
    ContractionReport, EquivalenceReport, ExperimentSpec, GraphKind, GraphParams, HarnessError,
    Sampling,
};
pub use num_rational::Ratio;
pub use protocol::{compute_alpha, init_node, NodeState, ProtocolError, RoundMessage};
pub use simnet::{
    build_attack_config, run_simulation, trace_metrics, ByzantineBehavior, Outcome,
    SchedulerStrategy, SimConfig, SimError, Trace,
};
