//! Deterministic discrete-event simulator for the asynchronous protocol.
//!
//! One logical event loop delivers one message per step, chosen by the
//! configured scheduler. Fault-free nodes run [`NodeState`]; faulty nodes emit
//! values from their [`ByzantineBehavior`] for round tag `t` as soon as any
//! fault-free node emits its own tag-`t` messages. Messages addressed to
//! faulty nodes are dropped at emission, since their behaviour ignores them.

mod attack;
mod byzantine;
mod scheduler;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attack::{build_attack_config, DEFAULT_ATTACK_ROUNDS};
pub use byzantine::{byzantine_values, ByzantineBehavior, ByzantineContext};
pub use scheduler::{PendingMessage, SchedulerStrategy, DEFAULT_MAX_DELAY};
pub use trace::{
    trace_metrics, Delivery, Outcome, RoundMetrics, Trace, TraceMetrics, VALIDITY_SLACK,
};

use crate::conditions::ConditionError;
use crate::digraph::{Digraph, GraphError, NodeId, NodeSet};
use crate::protocol::{NodeState, ProtocolError, RoundMessage};
use scheduler::Scheduler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fault set has {size} nodes but f = {f}")]
    TooManyFaulty { size: usize, f: usize },
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("unknown byzantine behaviour {0:?}")]
    UnknownBehavior(String),
    #[error("partition does not violate the asynchronous condition")]
    NotViolating,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("trace is missing rounds: {0}")]
    MissingRounds(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Csv(e.to_string())
    }
}

/// Full description of one simulated execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub graph: Digraph,
    pub f: usize,
    #[serde(default)]
    pub fault_set: NodeSet,
    /// One input per node; entries of faulty nodes are unused.
    pub inputs: Vec<f64>,
    #[serde(default)]
    pub byzantine: ByzantineBehavior,
    #[serde(default)]
    pub scheduler: SchedulerStrategy,
    #[serde(default)]
    pub seed: u64,
    pub max_rounds: u64,
    pub epsilon: f64,
}

impl SimConfig {
    /// Fault-free run on `graph` with the default random scheduler.
    pub fn new(graph: Digraph, f: usize, inputs: Vec<f64>) -> Self {
        Self {
            graph,
            f,
            fault_set: NodeSet::new(),
            inputs,
            byzantine: ByzantineBehavior::Silent,
            scheduler: SchedulerStrategy::default(),
            seed: 0,
            max_rounds: 10_000,
            epsilon: 1e-9,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.graph.node_count();
        if self.fault_set.len() > self.f {
            return Err(SimError::TooManyFaulty {
                size: self.fault_set.len(),
                f: self.f,
            });
        }
        if let Some(&v) = self.fault_set.iter().find(|&&v| v >= n) {
            return Err(SimError::Config(format!(
                "faulty node {v} is not in the graph"
            )));
        }
        if self.fault_set.len() >= n {
            return Err(SimError::Config("every node is faulty".into()));
        }
        if self.inputs.len() != n {
            return Err(SimError::InputCount {
                expected: n,
                got: self.inputs.len(),
            });
        }
        if let Some(v) = self.inputs.iter().find(|v| !v.is_finite()) {
            return Err(SimError::Config(format!("input {v} is not finite")));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(SimError::Config("epsilon must be non-negative".into()));
        }
        if let SchedulerStrategy::AdaptiveDelay { withheld } = &self.scheduler {
            if let Some(&[a, b]) = withheld.iter().find(|&&[a, b]| !self.graph.has_edge(a, b)) {
                return Err(SimError::Config(format!(
                    "withheld link ({a}, {b}) is not an edge"
                )));
            }
        }
        self.byzantine.validate()
    }
}

struct Engine<'c> {
    config: &'c SimConfig,
    faulty: Vec<bool>,
    scheduler: Box<dyn Scheduler>,
    byz_rng: ChaCha8Rng,
    next_seq: u64,
    now: u64,
    /// Next round tag the faulty nodes have not yet emitted.
    faulty_tag: u64,
}

impl Engine<'_> {
    fn send(&mut self, dest: NodeId, message: RoundMessage) {
        if self.faulty[dest] {
            return;
        }
        self.scheduler.push(PendingMessage {
            message,
            destination: dest,
            sequence: self.next_seq,
            available_at: self.now,
        });
        self.next_seq += 1;
    }

    fn emit_faulty_through(&mut self, tag: u64) {
        while self.faulty_tag <= tag {
            let t = self.faulty_tag;
            for &k in &self.config.fault_set {
                let mut ctx = ByzantineContext {
                    out_neighbors: self.config.graph.out_neighbors(k),
                    rng: &mut self.byz_rng,
                };
                let values = byzantine_values(&self.config.byzantine, k, t, &mut ctx);
                for (dest, value) in values {
                    self.send(
                        dest,
                        RoundMessage {
                            sender: k,
                            tag: t,
                            value,
                        },
                    );
                }
            }
            self.faulty_tag += 1;
        }
    }

    fn broadcast(&mut self, state: &NodeState) {
        let msgs = state.outgoing_messages();
        if let Some((_, m)) = msgs.first() {
            self.emit_faulty_through(m.tag);
        }
        for (dest, m) in msgs {
            self.send(dest, m);
        }
    }
}

/// Runs one execution to convergence, the round cap, or a stall.
pub fn run_simulation(config: &SimConfig) -> Result<Trace, SimError> {
    config.validate()?;
    let g = &config.graph;
    let n = g.node_count();
    let mut faulty = vec![false; n];
    for &v in &config.fault_set {
        faulty[v] = true;
    }
    let nodes: Vec<NodeId> = g.nodes().filter(|&v| !faulty[v]).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &v) in nodes.iter().enumerate() {
        slot[v] = k;
    }

    let policy = config.scheduler.wait_policy();
    let mut states = Vec::with_capacity(nodes.len());
    for &v in &nodes {
        if config.f > 0 && g.in_degree(v) < 3 * config.f + 1 {
            return Err(ProtocolError::DegreeTooSmall {
                node: v,
                in_degree: g.in_degree(v),
                required: 3 * config.f + 1,
                f: config.f,
            }
            .into());
        }
        states.push(NodeState::new(v, config.inputs[v], g, config.f, policy)?);
    }
    let mut history: Vec<Vec<f64>> = vec![nodes.iter().map(|&v| config.inputs[v]).collect()];
    let mut rounds = vec![0u64; n];

    let mut byz_rng = ChaCha8Rng::seed_from_u64(config.seed);
    byz_rng.set_stream(1);
    let mut engine = Engine {
        config,
        faulty,
        scheduler: config.scheduler.build(config.seed),
        byz_rng,
        next_seq: 0,
        now: 0,
        faulty_tag: 0,
    };

    engine.emit_faulty_through(0);
    for state in &states {
        rounds[state.id()] = state.round();
        engine.broadcast(state);
    }

    let spread = |row: &[f64]| {
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };

    let mut deliveries = Vec::new();
    let mut max_delay = 0u64;
    let mut completed = 0u64;
    let outcome = 'run: loop {
        // rounds every fault-free node has finished
        let done = states.iter().map(|s| s.round() - 1).min().unwrap_or(0);
        while (completed as usize) < history.len() && completed <= done {
            if spread(&history[completed as usize]) <= config.epsilon {
                break 'run Outcome::Converged { round: completed };
            }
            if completed >= config.max_rounds {
                break 'run Outcome::MaxRounds {
                    rounds: config.max_rounds,
                };
            }
            completed += 1;
        }

        let Some(pm) = engine.scheduler.next(engine.now, &rounds) else {
            break Outcome::Stalled { round: done };
        };
        engine.now += 1;
        max_delay = max_delay.max(engine.now - pm.available_at);
        let k = slot[pm.destination];
        let result = states[k].ingest_message(pm.message)?;
        deliveries.push(Delivery {
            sender: pm.message.sender,
            receiver: pm.destination,
            tag: pm.message.tag,
            value: pm.message.value,
            sent_at: pm.available_at,
            delivered_at: engine.now,
            outcome: result,
        });

        while states[k].round() <= config.max_rounds && states[k].round_ready() {
            let rec = states[k].apply_update()?;
            let r = rec.round as usize;
            if history.len() <= r {
                history.push(vec![f64::NAN; nodes.len()]);
            }
            history[r][k] = rec.value;
            if states[k].round() <= config.max_rounds {
                engine.broadcast(&states[k]);
            }
        }
        rounds[pm.destination] = states[k].round();
    };

    let last = match outcome {
        Outcome::Converged { round } => round,
        Outcome::MaxRounds { rounds } => rounds,
        Outcome::Stalled { round } => round,
        Outcome::Imported => unreachable!("simulation outcomes are never imported"),
    };
    history.truncate(last as usize + 1);
    let pending = engine.scheduler.pending();
    for m in &pending {
        max_delay = max_delay.max(engine.now - m.available_at);
    }
    Ok(Trace {
        nodes,
        values: history,
        deliveries,
        outcome,
        epsilon: config.epsilon,
        max_delay,
        undelivered: pending.len(),
    })
}
