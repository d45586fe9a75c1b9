use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::digraph::Digraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Complete,
    Cycle,
    RandomUniform,
    /// `K5`, the smallest complete graph failing the asynchronous condition
    /// for `f = 1`.
    CounterexampleK5,
}

impl FromStr for GraphKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complete" => Ok(GraphKind::Complete),
            "cycle" => Ok(GraphKind::Cycle),
            "random-uniform" => Ok(GraphKind::RandomUniform),
            "counterexample-k5" => Ok(GraphKind::CounterexampleK5),
            other => Err(HarnessError::InvalidParams(format!(
                "unknown graph kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GraphParams {
    pub n: Option<usize>,
    pub p: Option<f64>,
}

impl GraphParams {
    pub fn nodes(n: usize) -> Self {
        Self {
            n: Some(n),
            p: None,
        }
    }

    pub fn random(n: usize, p: f64) -> Self {
        Self {
            n: Some(n),
            p: Some(p),
        }
    }
}

pub fn generate_graph(
    kind: GraphKind,
    params: GraphParams,
    seed: u64,
) -> Result<Digraph, HarnessError> {
    let need_n = || {
        params
            .n
            .ok_or_else(|| HarnessError::InvalidParams("this graph kind needs n".into()))
    };
    let g = match kind {
        GraphKind::Complete => {
            let n = need_n()?;
            if n < 1 {
                return Err(HarnessError::InvalidParams(
                    "complete graph needs n >= 1".into(),
                ));
            }
            Digraph::complete(n)?
        }
        GraphKind::Cycle => {
            let n = need_n()?;
            if n < 2 {
                return Err(HarnessError::InvalidParams("cycle needs n >= 2".into()));
            }
            Digraph::new(n, (0..n).map(|i| (i, (i + 1) % n)))?
        }
        GraphKind::RandomUniform => {
            let n = need_n()?;
            let p = params
                .p
                .ok_or_else(|| HarnessError::InvalidParams("random-uniform needs p".into()))?;
            random_uniform(n, p, seed)?
        }
        GraphKind::CounterexampleK5 => Digraph::complete(5)?,
    };
    Ok(g)
}

/// Each ordered pair `(i, j)`, `i != j`, independently with probability `p`.
pub fn random_uniform(n: usize, p: f64, seed: u64) -> Result<Digraph, HarnessError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(HarnessError::InvalidParams(format!(
            "p = {p} is outside [0, 1]"
        )));
    }
    if n < 1 {
        return Err(HarnessError::InvalidParams(
            "random graph needs n >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Ok(Digraph::new(n, edges)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_edge_count() {
        let g = generate_graph(GraphKind::Complete, GraphParams::nodes(6), 0).unwrap();
        assert_eq!(g.edge_count(), 30);
    }

    #[test]
    fn cycle_edges() {
        let g = generate_graph(GraphKind::Cycle, GraphParams::nodes(3), 0).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 0)]);
        assert!(generate_graph(GraphKind::Cycle, GraphParams::nodes(1), 0).is_err());
    }

    #[test]
    fn random_is_deterministic() {
        let a = generate_graph(GraphKind::RandomUniform, GraphParams::random(8, 0.7), 7).unwrap();
        let b = generate_graph(GraphKind::RandomUniform, GraphParams::random(8, 0.7), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_graph(GraphKind::RandomUniform, GraphParams::random(8, 0.7), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_probability_extremes() {
        assert_eq!(random_uniform(5, 0.0, 1).unwrap().edge_count(), 0);
        assert_eq!(random_uniform(5, 1.0, 1).unwrap().edge_count(), 20);
        assert!(random_uniform(5, 1.5, 1).is_err());
        assert!(random_uniform(5, -0.1, 1).is_err());
    }

    #[test]
    fn counterexample_is_k5() {
        let g = generate_graph(GraphKind::CounterexampleK5, GraphParams::default(), 0).unwrap();
        assert_eq!(g, Digraph::complete(5).unwrap());
    }

    #[test]
    fn kind_names() {
        assert_eq!(
            "random-uniform".parse::<GraphKind>().unwrap(),
            GraphKind::RandomUniform
        );
        assert!("grid".parse::<GraphKind>().is_err());
    }
}
