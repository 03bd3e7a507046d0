//! Answer-confidence gating in log space.
//!
//! Confidence is the mean token log-probability of the generated answer.
//! The acceptance threshold falls with answer length,
//!
//! ```text
//! gamma(L) = gamma0 - beta * ln(L)
//! ```
//!
//! so longer answers are held to a looser bar when `beta > 0`. With
//! `beta = 0` and `gamma0 = ln(tau)` the rule is exactly "mean token
//! probability below tau triggers refinement", but no exp/ln round trip
//! ever happens: both sides stay in log space.

use crate::error::{Error, Result};
use crate::types::{GenerationResult, PipelineConfig};

/// Outcome of gating one generation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GateDecision {
    /// Mean token log-probability.
    pub confidence: f64,
    /// Length-adjusted acceptance threshold.
    pub threshold: f64,
    /// `true` when the answer is too uncertain to accept as-is.
    pub triggered: bool,
}

/// Mean token log-probability of a generation.
///
/// Rejects empty token lists and any log-probability that is positive or
/// non-finite, naming the offending index.
pub fn normalized_confidence(result: &GenerationResult) -> Result<f64> {
    if result.token_logprobs.is_empty() {
        return Err(Error::EmptyGeneration);
    }
    for (index, &value) in result.token_logprobs.iter().enumerate() {
        if !value.is_finite() || value > 0.0 {
            return Err(Error::InvalidLogProb { index, value });
        }
    }
    // Tree summation: the mean of identical values is bit-exact whenever
    // the count is a power of two, so a uniform script sitting exactly on
    // the threshold compares as equal rather than one ulp below it.
    let sum = pairwise_sum(&result.token_logprobs);
    Ok(sum / result.token_logprobs.len() as f64)
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Acceptance threshold for an answer of `token_count` tokens.
pub fn threshold_at_length(token_count: usize, config: &PipelineConfig) -> Result<f64> {
    if token_count == 0 {
        return Err(Error::EmptyGeneration);
    }
    Ok(config.gamma0 - config.beta * (token_count as f64).ln())
}

/// Gates a generation: refinement triggers iff confidence is strictly
/// below the length-adjusted threshold.
pub fn should_refine(result: &GenerationResult, config: &PipelineConfig) -> Result<GateDecision> {
    let confidence = normalized_confidence(result)?;
    let threshold = threshold_at_length(result.token_count(), config)?;
    Ok(GateDecision {
        confidence,
        threshold,
        triggered: confidence < threshold,
    })
}
