//! Likelihood and unlikelihood objectives over explicit token probabilities.
//!
//! Logs are natural logs. A "unit" is one revised step (or one explanation);
//! each holds the model's probability for each of its tokens.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ObjectiveError {
    #[error("probability {value} at unit {unit}, token {token} is out of range")]
    ProbabilityOutOfRange { unit: usize, token: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenProbSequence {
    pub units: Vec<Vec<f64>>,
}

impl TokenProbSequence {
    pub fn new(units: Vec<Vec<f64>>) -> Self {
        TokenProbSequence { units }
    }

    /// Every unit filled with the same probability, sized by `token_counts`.
    pub fn uniform(token_counts: &[usize], p: f64) -> Self {
        TokenProbSequence { units: token_counts.iter().map(|&n| vec![p; n]).collect() }
    }

    pub fn token_count(&self) -> usize {
        self.units.iter().map(Vec::len).sum()
    }

    pub fn concat(&self, other: &TokenProbSequence) -> TokenProbSequence {
        TokenProbSequence { units: self.units.iter().chain(&other.units).cloned().collect() }
    }
}

fn checked_sum(
    seq: &TokenProbSequence,
    valid: impl Fn(f64) -> bool,
    term: impl Fn(f64) -> f64,
) -> Result<f64, ObjectiveError> {
    let mut total = 0.0;
    for (unit, probs) in seq.units.iter().enumerate() {
        for (token, &value) in probs.iter().enumerate() {
            if !valid(value) {
                return Err(ObjectiveError::ProbabilityOutOfRange { unit, token, value });
            }
            total += term(value);
        }
    }
    Ok(total)
}

fn likelihood_domain(p: f64) -> bool {
    p > 0.0 && p <= 1.0
}

fn unlikelihood_domain(p: f64) -> bool {
    (0.0..1.0).contains(&p)
}

/// `-Σ_i Σ_j ln p(e*_ij)`; needs `0 < p ≤ 1`.
pub fn explanation_loss(seq: &TokenProbSequence) -> Result<f64, ObjectiveError> {
    checked_sum(seq, likelihood_domain, |p| -p.ln())
}

/// `-Σ_i ln p(a*_i | a*_<i, E*)`; needs `0 < p ≤ 1`.
pub fn answer_loss(answer_probs: &[f64]) -> Result<f64, ObjectiveError> {
    checked_sum(&TokenProbSequence::new(vec![answer_probs.to_vec()]), likelihood_domain, |p| -p.ln())
}

/// `-Σ_i Σ_j ln(1 - p(e_ij))`; needs `0 ≤ p < 1`.
pub fn unlikelihood_loss(seq: &TokenProbSequence) -> Result<f64, ObjectiveError> {
    checked_sum(seq, unlikelihood_domain, |p| -(-p).ln_1p())
}

/// `∂/∂p (-ln p)`.
pub fn likelihood_gradient(p: f64) -> f64 {
    -1.0 / p
}

/// `∂/∂p (-ln(1 - p))`.
pub fn unlikelihood_gradient(p: f64) -> f64 {
    1.0 / (1.0 - p)
}
