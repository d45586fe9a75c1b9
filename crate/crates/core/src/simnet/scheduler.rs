//! Delivery-order strategies.
//!
//! Virtual time is the number of deliveries made so far. A message's delay is
//! the number of deliveries between its emission and its own delivery.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digraph::NodeId;
use crate::protocol::{RoundMessage, WaitPolicy};

/// Default bound on how many deliveries a message may be overtaken by under
/// the random scheduler.
pub const DEFAULT_MAX_DELAY: u64 = 10_000;

fn default_max_delay() -> u64 {
    DEFAULT_MAX_DELAY
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchedulerStrategy {
    /// Uniform choice among pending messages. A message pending for
    /// `maxDelay` deliveries is delivered next.
    #[serde(rename_all = "camelCase")]
    Random {
        #[serde(default)]
        per_link_fifo: bool,
        #[serde(default = "default_max_delay")]
        max_delay: u64,
    },
    /// Global emission order.
    InOrder,
    /// Lock-step rounds: every tag-`t` message before any tag-`t+1` one, and
    /// nodes wait for all in-neighbours.
    Synchronous,
    /// Emission order, except messages on `withheld` links are held back
    /// until the receiver has finished the round they were meant for.
    AdaptiveDelay { withheld: Vec<[NodeId; 2]> },
}

impl Default for SchedulerStrategy {
    fn default() -> Self {
        SchedulerStrategy::Random {
            per_link_fifo: false,
            max_delay: DEFAULT_MAX_DELAY,
        }
    }
}

impl SchedulerStrategy {
    pub fn wait_policy(&self) -> WaitPolicy {
        match self {
            SchedulerStrategy::Synchronous => WaitPolicy::All,
            _ => WaitPolicy::AllButF,
        }
    }

    pub(crate) fn build(&self, seed: u64) -> Box<dyn Scheduler> {
        match self {
            SchedulerStrategy::Random {
                per_link_fifo,
                max_delay,
            } => Box::new(RandomScheduler::new(
                seed,
                *per_link_fifo,
                (*max_delay).max(1),
            )),
            SchedulerStrategy::InOrder => Box::new(OrderedScheduler::new(false)),
            SchedulerStrategy::Synchronous => Box::new(OrderedScheduler::new(true)),
            SchedulerStrategy::AdaptiveDelay { withheld } => Box::new(AdaptiveDelayScheduler {
                queue: BTreeMap::new(),
                withheld: withheld.iter().map(|&[a, b]| (a, b)).collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingMessage {
    pub message: RoundMessage,
    pub destination: NodeId,
    pub sequence: u64,
    /// Virtual time of emission.
    pub available_at: u64,
}

impl PendingMessage {
    fn link(&self) -> (NodeId, NodeId) {
        (self.message.sender, self.destination)
    }
}

pub(crate) trait Scheduler {
    fn push(&mut self, m: PendingMessage);

    /// Next message to deliver. `rounds[v]` is the round node `v` is in.
    fn next(&mut self, now: u64, rounds: &[u64]) -> Option<PendingMessage>;

    fn pending(&self) -> Vec<PendingMessage>;
}

struct OrderedScheduler {
    by_tag: bool,
    queue: BTreeMap<(u64, u64), PendingMessage>,
}

impl OrderedScheduler {
    fn new(by_tag: bool) -> Self {
        Self {
            by_tag,
            queue: BTreeMap::new(),
        }
    }
}

impl Scheduler for OrderedScheduler {
    fn push(&mut self, m: PendingMessage) {
        let major = if self.by_tag { m.message.tag } else { 0 };
        self.queue.insert((major, m.sequence), m);
    }

    fn next(&mut self, _now: u64, _rounds: &[u64]) -> Option<PendingMessage> {
        self.queue.pop_first().map(|(_, m)| m)
    }

    fn pending(&self) -> Vec<PendingMessage> {
        self.queue.values().copied().collect()
    }
}

struct RandomScheduler {
    rng: ChaCha8Rng,
    per_link_fifo: bool,
    max_delay: u64,
    pool: IndexMap<u64, PendingMessage>,
    /// Sequence numbers in emission order; may contain delivered entries.
    order: VecDeque<u64>,
    links: HashMap<(NodeId, NodeId), VecDeque<u64>>,
}

impl RandomScheduler {
    fn new(seed: u64, per_link_fifo: bool, max_delay: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            per_link_fifo,
            max_delay,
            pool: IndexMap::new(),
            order: VecDeque::new(),
            links: HashMap::new(),
        }
    }

    fn take(&mut self, seq: u64) -> PendingMessage {
        let m = self
            .pool
            .swap_remove(&seq)
            .expect("scheduled sequence is pending");
        if self.per_link_fifo {
            let q = self.links.get_mut(&m.link()).expect("link queue exists");
            debug_assert_eq!(q.front(), Some(&seq));
            q.pop_front();
        }
        m
    }
}

impl Scheduler for RandomScheduler {
    fn push(&mut self, m: PendingMessage) {
        self.order.push_back(m.sequence);
        if self.per_link_fifo {
            self.links
                .entry(m.link())
                .or_default()
                .push_back(m.sequence);
        }
        self.pool.insert(m.sequence, m);
    }

    fn next(&mut self, now: u64, _rounds: &[u64]) -> Option<PendingMessage> {
        while let Some(seq) = self.order.front() {
            if self.pool.contains_key(seq) {
                break;
            }
            self.order.pop_front();
        }
        let &oldest = self.order.front()?;
        if now - self.pool[&oldest].available_at >= self.max_delay {
            return Some(self.take(oldest));
        }
        let idx = self.rng.gen_range(0..self.pool.len());
        let (&picked, m) = self.pool.get_index(idx).expect("index in range");
        let seq = if self.per_link_fifo {
            *self.links[&m.link()].front().expect("non-empty link queue")
        } else {
            picked
        };
        Some(self.take(seq))
    }

    fn pending(&self) -> Vec<PendingMessage> {
        let mut all: Vec<_> = self.pool.values().copied().collect();
        all.sort_by_key(|m| m.sequence);
        all
    }
}

struct AdaptiveDelayScheduler {
    queue: BTreeMap<u64, PendingMessage>,
    withheld: BTreeSet<(NodeId, NodeId)>,
}

impl Scheduler for AdaptiveDelayScheduler {
    fn push(&mut self, m: PendingMessage) {
        self.queue.insert(m.sequence, m);
    }

    fn next(&mut self, _now: u64, rounds: &[u64]) -> Option<PendingMessage> {
        let ready = self
            .queue
            .values()
            .find(|m| {
                // held until the receiver is past round tag + 1
                !(self.withheld.contains(&m.link()) && rounds[m.destination] <= m.message.tag + 1)
            })
            .map(|m| m.sequence);
        match ready {
            Some(seq) => self.queue.remove(&seq),
            // everything left is held back; release the oldest so delays stay finite
            None => self.queue.pop_first().map(|(_, m)| m),
        }
    }

    fn pending(&self) -> Vec<PendingMessage> {
        self.queue.values().copied().collect()
    }
}
