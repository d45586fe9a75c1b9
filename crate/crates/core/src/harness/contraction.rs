use num_rational::Ratio;
use serde::Serialize;

use super::HarnessError;
use crate::conditions::{check_partition_condition, Mode};
use crate::digraph::Digraph;
use crate::protocol::compute_alpha;
use crate::simnet::{trace_metrics, Trace};

/// Absolute slack on spreads when checking the bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ContractionReport {
    pub alpha: String,
    /// Window length `n - f - 1`.
    pub window: u64,
    /// `1 - α^window / 2`.
    pub theoretical_factor: f64,
    /// Largest `spread[s + window] / spread[s]` over the trace, where defined.
    pub observed_worst_factor: Option<f64>,
    pub rounds_checked: u64,
    /// Rounds where the spread exceeded the bound.
    pub bound_violations: Vec<u64>,
    /// Rounds where the fault-free range grew.
    pub validity_violations: Vec<u64>,
    pub holds: bool,
}

/// `1 - α^window / 2` in floating point.
pub fn window_factor(alpha: Ratio<u64>, window: u64) -> f64 {
    let a = *alpha.numer() as f64 / *alpha.denom() as f64;
    1.0 - a.powi(window as i32) / 2.0
}

/// Round count after which the bound guarantees the spread has shrunk by
/// `reduction`: `ceil(window * ln(reduction) / ln(factor))`.
pub fn rounds_for_reduction(alpha: Ratio<u64>, window: u64, reduction: f64) -> u64 {
    let factor = window_factor(alpha, window);
    (window as f64 * reduction.ln() / factor.ln()).ceil() as u64
}

/// Checks `spread[t] <= factor^floor(t / window) * spread[0] + 1e-9` for every
/// recorded round, with `window = n - f - 1`.
pub fn verify_contraction(
    trace: &Trace,
    alpha: Ratio<u64>,
    n: usize,
    f: usize,
) -> Result<ContractionReport, HarnessError> {
    if trace.values.is_empty() {
        return Err(HarnessError::MissingRounds("trace has no rounds".into()));
    }
    if let Some(t) = trace
        .values
        .iter()
        .position(|row| row.len() != trace.nodes.len() || row.iter().any(|v| v.is_nan()))
    {
        return Err(HarnessError::MissingRounds(format!(
            "round {t} is incomplete"
        )));
    }
    if n < f + 2 {
        return Err(HarnessError::InvalidParams(format!(
            "window n - f - 1 is empty for n = {n}, f = {f}"
        )));
    }
    let window = (n - f - 1) as u64;
    let factor = window_factor(alpha, window);
    let spreads = trace.spreads();
    let initial = spreads[0];

    let mut bound_violations = Vec::new();
    for (t, &s) in spreads.iter().enumerate() {
        let bound = factor.powi((t as u64 / window) as i32) * initial + BOUND_SLACK;
        if s > bound {
            bound_violations.push(t as u64);
        }
    }
    let w = window as usize;
    let observed_worst_factor = spreads
        .iter()
        .zip(spreads.iter().skip(w))
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| b / a)
        .reduce(f64::max);
    let validity_violations: Vec<u64> = trace_metrics(trace)
        .rounds
        .iter()
        .filter(|r| !r.valid)
        .map(|r| r.round)
        .collect();
    let holds = bound_violations.is_empty() && validity_violations.is_empty();
    Ok(ContractionReport {
        alpha: format!("{}/{}", alpha.numer(), alpha.denom()),
        window,
        theoretical_factor: factor,
        observed_worst_factor,
        rounds_checked: spreads.len() as u64,
        bound_violations,
        validity_violations,
        holds,
    })
}

/// [`verify_contraction`] after confirming the graph satisfies the
/// asynchronous condition, with α computed from the graph.
pub fn verify_trace(
    g: &Digraph,
    f: usize,
    trace: &Trace,
) -> Result<ContractionReport, HarnessError> {
    let report = check_partition_condition(g, f, Mode::Async)?;
    if !report.passed() {
        return Err(HarnessError::Precondition(
            "graph fails the asynchronous condition; no contraction bound applies".into(),
        ));
    }
    let alpha = compute_alpha(g, f)?;
    verify_contraction(trace, alpha, g.node_count(), f)
}
