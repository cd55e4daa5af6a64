//! Shaped rewards over outcome records and numerical verification of the
//! policy identities on enumerable toy policies.
//!
//! The discrete shaping assigns `j/|K|` where `j` counts the nested
//! thresholds the submission clears, which makes it exactly the average
//! of the binary threshold rewards. The continuous variant interpolates
//! linearly in log10 of the smallest failing input length.

use crate::verifier::{threshold_reward, Outcome, OutcomeRecord, Threshold};

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("threshold set must be strictly increasing with infinity last: {0}")]
    BadThresholdSet(String),
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("policy table invalid: {0}")]
    BadPolicy(String),
    #[error("reward vector length {got} does not match {want} outcomes")]
    RewardLengthMismatch { got: usize, want: usize },
    #[error("empty policy list")]
    EmptyPolicyList,
    #[error("policies have no common support")]
    DisjointSupports,
}

/// The ordered verifier-strictness thresholds used for shaping; the
/// default set is {2, 3, 4, 5, 6, infinity}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdSet {
    ks: Vec<Threshold>,
}

impl ThresholdSet {
    pub fn new(ks: Vec<Threshold>) -> Result<Self, RewardError> {
        if ks.is_empty() {
            return Err(RewardError::BadThresholdSet("empty".into()));
        }
        for pair in ks.windows(2) {
            if pair[0] >= pair[1] {
                return Err(RewardError::BadThresholdSet(format!(
                    "{} !< {}",
                    pair[0].label(),
                    pair[1].label()
                )));
            }
        }
        if *ks.last().unwrap() != Threshold::Infinity {
            return Err(RewardError::BadThresholdSet(
                "last threshold must be infinity".into(),
            ));
        }
        Ok(ThresholdSet { ks })
    }

    /// Finite exponents followed by infinity.
    pub fn from_exponents(exponents: &[u32]) -> Result<Self, RewardError> {
        let mut ks: Vec<Threshold> = exponents.iter().map(|&k| Threshold::Pow10(k)).collect();
        ks.push(Threshold::Infinity);
        ThresholdSet::new(ks)
    }

    pub fn thresholds(&self) -> &[Threshold] {
        &self.ks
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet::from_exponents(&[2, 3, 4, 5, 6]).unwrap()
    }
}

/// An exact rational reward `numer/denom` with `denom = |K|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteReward {
    pub numer: u32,
    pub denom: u32,
}

impl DiscreteReward {
    pub fn value(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

/// Count of cleared thresholds over the set size; equal by construction
/// to the average of the binary rewards.
pub fn shaped_reward_discrete(record: &OutcomeRecord, set: &ThresholdSet) -> DiscreteReward {
    let cleared = set
        .thresholds()
        .iter()
        .map(|&k| threshold_reward(record, k) as u32)
        .sum();
    DiscreteReward {
        numer: cleared,
        denom: set.len() as u32,
    }
}

/// Log-linear shaping on the smallest failing input length: 1 when
/// correct, 0 below 10^2, `(log10 s - 2)/4` on [10^2, 10^6), capped at 1.
pub fn shaped_reward_continuous(record: &OutcomeRecord) -> f64 {
    match record.outcome {
        Outcome::Correct => 1.0,
        Outcome::FormatError => 0.0,
        Outcome::OptimizationFailure | Outcome::CorrectnessFailure => {
            let s = record.s.unwrap_or(0);
            if s < 100 {
                0.0
            } else {
                (((s as f64).log10() - 2.0) / 4.0).min(1.0)
            }
        }
    }
}

fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let y = v - compensation;
        let t = sum + y;
        compensation = (t - sum) - y;
        sum = t;
    }
    sum
}

/// A finite discrete distribution over an enumerable outcome space.
/// Probabilities live in linear space with compensated summation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub outcomes: Vec<String>,
    pub probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(outcomes: Vec<String>, probs: Vec<f64>) -> Result<Self, RewardError> {
        if outcomes.len() != probs.len() {
            return Err(RewardError::BadPolicy(format!(
                "{} outcomes vs {} probabilities",
                outcomes.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(RewardError::BadPolicy(
                "negative or non-finite probability".into(),
            ));
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(RewardError::BadPolicy(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(PolicyTable { outcomes, probs })
    }

    /// Normalize nonnegative weights into a policy.
    pub fn normalized(outcomes: Vec<String>, weights: Vec<f64>) -> Result<Self, RewardError> {
        if outcomes.len() != weights.len() {
            return Err(RewardError::BadPolicy(format!(
                "{} outcomes vs {} weights",
                outcomes.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(RewardError::BadPolicy(
                "negative or non-finite weight".into(),
            ));
        }
        let total = kahan_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(RewardError::BadPolicy("all weights are zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(PolicyTable { outcomes, probs })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// KL-regularized optimum for reward `R` and reference `pi0`:
/// normalized `pi0(y) * exp(R(y)/beta)`. The max reward is subtracted
/// before exponentiation, which leaves the normalized result unchanged.
pub fn kl_optimal_policy(
    pi0: &PolicyTable,
    rewards: &[f64],
    beta: f64,
) -> Result<PolicyTable, RewardError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(RewardError::BadBeta(beta));
    }
    if rewards.len() != pi0.len() {
        return Err(RewardError::RewardLengthMismatch {
            got: rewards.len(),
            want: pi0.len(),
        });
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RewardError::BadPolicy("non-finite reward".into()));
    }
    let max_reward = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = pi0
        .probs
        .iter()
        .zip(rewards.iter())
        .map(|(&p, &r)| p * ((r - max_reward) / beta).exp())
        .collect();
    PolicyTable::normalized(pi0.outcomes.clone(), weights)
}

/// Normalized geometric mean of policies sharing an outcome space.
/// Outcomes with zero probability in any table are dropped from support.
pub fn geometric_mean_policy(tables: &[PolicyTable]) -> Result<PolicyTable, RewardError> {
    let first = tables.first().ok_or(RewardError::EmptyPolicyList)?;
    for t in tables {
        if t.outcomes != first.outcomes {
            return Err(RewardError::BadPolicy(
                "policy tables disagree on outcome labels".into(),
            ));
        }
    }
    let m = tables.len() as f64;
    let mut outcomes = Vec::new();
    let mut weights = Vec::new();
    for (i, outcome) in first.outcomes.iter().enumerate() {
        if tables.iter().any(|t| t.probs[i] == 0.0) {
            continue;
        }
        let log_mean = kahan_sum(tables.iter().map(|t| t.probs[i].ln())) / m;
        outcomes.push(outcome.clone());
        weights.push(log_mean.exp());
    }
    if outcomes.is_empty() {
        return Err(RewardError::DisjointSupports);
    }
    PolicyTable::normalized(outcomes, weights)
}
