//! Value generation for faulty nodes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::digraph::{NodeId, NodeSet};

/// What a faulty node sends each round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ByzantineBehavior {
    /// Equivocation along a partition: `low` to `lowTargets`, `high` to
    /// `highTargets`, `mid` to everyone else.
    #[serde(rename_all = "camelCase")]
    Split {
        #[serde(default)]
        low_targets: NodeSet,
        #[serde(default)]
        high_targets: NodeSet,
        low: f64,
        high: f64,
        mid: f64,
    },
    /// The same value on every out-edge.
    IdenticalWrong { value: f64 },
    /// Independent uniform draws from `[min, max]` per out-edge.
    Random { min: f64, max: f64 },
    /// Sends nothing.
    #[default]
    Silent,
}

impl ByzantineBehavior {
    /// Builds a behaviour from its identifier and a JSON object of parameters.
    pub fn from_id(id: &str, params: &serde_json::Value) -> Result<Self, SimError> {
        const KNOWN: [&str; 4] = ["split", "identical-wrong", "random", "silent"];
        if !KNOWN.contains(&id) {
            return Err(SimError::UnknownBehavior(id.to_string()));
        }
        let mut obj = match params {
            serde_json::Value::Object(map) => map.clone(),
            serde_json::Value::Null => serde_json::Map::new(),
            other => {
                return Err(SimError::Config(format!(
                    "behaviour parameters must be an object, got {other}"
                )))
            }
        };
        obj.insert("kind".into(), serde_json::Value::String(id.into()));
        serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| SimError::Config(format!("behaviour {id}: {e}")))
    }

    pub fn id(&self) -> &'static str {
        match self {
            ByzantineBehavior::Split { .. } => "split",
            ByzantineBehavior::IdenticalWrong { .. } => "identical-wrong",
            ByzantineBehavior::Random { .. } => "random",
            ByzantineBehavior::Silent => "silent",
        }
    }

    pub(crate) fn validate(&self) -> Result<(), SimError> {
        match *self {
            ByzantineBehavior::Random { min, max }
                if !min.is_finite() || !max.is_finite() || min > max =>
            {
                Err(SimError::Config(format!(
                    "random behaviour needs finite min <= max, got [{min}, {max}]"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// What a faulty node knows when choosing values.
pub struct ByzantineContext<'a> {
    pub out_neighbors: &'a [NodeId],
    pub rng: &'a mut ChaCha8Rng,
}

/// Values `node` sends for round tag `tag`, one per out-neighbour (none when
/// silent).
pub fn byzantine_values(
    behavior: &ByzantineBehavior,
    _node: NodeId,
    _tag: u64,
    ctx: &mut ByzantineContext<'_>,
) -> Vec<(NodeId, f64)> {
    match behavior {
        ByzantineBehavior::Split {
            low_targets,
            high_targets,
            low,
            high,
            mid,
        } => ctx
            .out_neighbors
            .iter()
            .map(|&d| {
                let v = if low_targets.contains(&d) {
                    *low
                } else if high_targets.contains(&d) {
                    *high
                } else {
                    *mid
                };
                (d, v)
            })
            .collect(),
        ByzantineBehavior::IdenticalWrong { value } => {
            ctx.out_neighbors.iter().map(|&d| (d, *value)).collect()
        }
        ByzantineBehavior::Random { min, max } => ctx
            .out_neighbors
            .iter()
            .map(|&d| (d, ctx.rng.gen_range(*min..=*max)))
            .collect(),
        ByzantineBehavior::Silent => Vec::new(),
    }
}
