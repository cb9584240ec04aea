//! Subjective-logic reputation: local, recommended, and composite opinions.
//!
//! A principal's local opinion of a worker is derived from weighted counts of
//! positive and negative interaction events. Opinions recorded by other
//! principals are blended into a recommended opinion, weighted by the social
//! tie to each recommender and the recommender's familiarity with the worker,
//! and the two are fused into a composite opinion. Scalar reputation values
//! score an opinion as `belief + gamma * uncertainty`.
//!
//! All operations are pure functions over value types and are safe to call
//! concurrently.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for opinion normalization checks.
pub const OPINION_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReputationError {
    #[error("opinion components must be nonnegative and sum to 1, got ({0}, {1}, {2})")]
    InvalidOpinion(f64, f64, f64),
    #[error("every recommender weight numerator is zero")]
    AllWeightsZero,
    #[error("cannot fuse two dogmatic opinions (both uncertainties are zero)")]
    DegenerateFusion,
    #[error("invalid reputation parameters: {0}")]
    InvalidParams(String),
}

/// A subjective-logic opinion: belief, disbelief, and uncertainty.
///
/// The three components are each in `[0, 1]` and sum to 1 (within
/// [`OPINION_EPS`]); the constructor enforces this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    belief: f64,
    disbelief: f64,
    uncertainty: f64,
}

impl Opinion {
    pub fn new(belief: f64, disbelief: f64, uncertainty: f64) -> Result<Self, ReputationError> {
        let valid = belief >= -OPINION_EPS
            && disbelief >= -OPINION_EPS
            && uncertainty >= -OPINION_EPS
            && (belief + disbelief + uncertainty - 1.0).abs() <= OPINION_EPS;
        if !valid {
            return Err(ReputationError::InvalidOpinion(belief, disbelief, uncertainty));
        }
        Ok(Self {
            belief: belief.max(0.0),
            disbelief: disbelief.max(0.0),
            uncertainty: uncertainty.max(0.0),
        })
    }

    /// The no-evidence opinion `(0, 0, 1)`.
    pub fn vacuous() -> Self {
        Self { belief: 0.0, disbelief: 0.0, uncertainty: 1.0 }
    }

    pub fn belief(&self) -> f64 {
        self.belief
    }

    pub fn disbelief(&self) -> f64 {
        self.disbelief
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    /// Evidence mass `belief + disbelief`; how familiar the holder is with
    /// the subject.
    pub fn familiarity(&self) -> f64 {
        self.belief + self.disbelief
    }
}

/// Positive/negative interaction event tallies for one (principal, worker)
/// pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionCounts {
    pub positive: u64,
    pub negative: u64,
}

/// Outcome of a single resource interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskOutcome {
    Positive,
    Negative,
}

impl InteractionCounts {
    pub fn new(positive: u64, negative: u64) -> Self {
        Self { positive, negative }
    }

    /// Returns a copy with the counter matching `outcome` incremented by one.
    pub fn record(self, outcome: TaskOutcome) -> Self {
        match outcome {
            TaskOutcome::Positive => Self { positive: self.positive + 1, ..self },
            TaskOutcome::Negative => Self { negative: self.negative + 1, ..self },
        }
    }
}

/// Weights and bounds for reputation scoring.
///
/// `sigma1`/`sigma2` weight positive/negative events (positive events must
/// weigh more: `0 < sigma2 < sigma1 < 1`); `gamma` is the effective
/// coefficient of uncertainty in the scalar value; the three `rep_*` fields
/// bound and threshold composite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub gamma: f64,
    pub rep_threshold: f64,
    pub rep_max: f64,
    pub rep_min: f64,
}

impl Default for ReputationParams {
    fn default() -> Self {
        Self {
            sigma1: 0.6,
            sigma2: 0.4,
            gamma: 0.5,
            rep_threshold: 0.6,
            rep_max: 1.0,
            rep_min: 0.0,
        }
    }
}

impl ReputationParams {
    pub fn validate(&self) -> Result<(), ReputationError> {
        if !(0.0 < self.sigma2 && self.sigma2 < self.sigma1 && self.sigma1 < 1.0) {
            return Err(ReputationError::InvalidParams(format!(
                "need 0 < sigma2 < sigma1 < 1, got sigma1={}, sigma2={}",
                self.sigma1, self.sigma2
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ReputationError::InvalidParams(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.rep_min <= self.rep_threshold && self.rep_threshold <= self.rep_max) {
            return Err(ReputationError::InvalidParams(format!(
                "need rep_min <= rep_threshold <= rep_max, got {} / {} / {}",
                self.rep_min, self.rep_threshold, self.rep_max
            )));
        }
        Ok(())
    }
}

/// The set of workers that have provided computing services to a principal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceHistory {
    pub principal_id: u64,
    pub served_workers: BTreeSet<u64>,
}

impl ServiceHistory {
    pub fn new(principal_id: u64, served_workers: impl IntoIterator<Item = u64>) -> Self {
        Self { principal_id, served_workers: served_workers.into_iter().collect() }
    }
}

/// One recommender's contribution: the social tie to the recommender and the
/// recommender's local opinion of the worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub tie: f64,
    pub opinion: Opinion,
}

/// Local opinion from interaction counts.
///
/// `belief = s1*p / (s1*p + s2*q + 2)`, disbelief analogously with `s2*q`,
/// and `uncertainty = 2 / (s1*p + s2*q + 2)`. The denominator is at least 2,
/// so the result is always well defined and the uncertainty is strictly
/// positive.
pub fn local_opinion(counts: InteractionCounts, params: &ReputationParams) -> Opinion {
    let weighted_pos = params.sigma1 * counts.positive as f64;
    let weighted_neg = params.sigma2 * counts.negative as f64;
    let denom = weighted_pos + weighted_neg + 2.0;
    Opinion {
        belief: weighted_pos / denom,
        disbelief: weighted_neg / denom,
        uncertainty: 2.0 / denom,
    }
}

/// Scalar reputation value of an opinion: `belief + gamma * uncertainty`.
pub fn reputation_value(op: Opinion, gamma: f64) -> f64 {
    op.belief + gamma * op.uncertainty
}

/// Strength of the social tie between two principals: the Jaccard ratio of
/// their served-worker sets. Two empty histories have no evidence of a tie
/// and yield 0.
pub fn social_tie(a: &ServiceHistory, b: &ServiceHistory) -> f64 {
    let union = a.served_workers.union(&b.served_workers).count();
    if union == 0 {
        return 0.0;
    }
    let inter = a.served_workers.intersection(&b.served_workers).count();
    inter as f64 / union as f64
}

/// Normalized recommender weights. Each weight is proportional to
/// `tie * familiarity` where familiarity is the recommender's evidence mass
/// `belief + disbelief` on the worker.
///
/// Errors with [`ReputationError::AllWeightsZero`] when every numerator is
/// zero; the caller must then skip recommendation fusion.
pub fn recommender_weights(ties: &[f64], opinions: &[Opinion]) -> Result<Vec<f64>, ReputationError> {
    if ties.is_empty() || ties.len() != opinions.len() {
        return Err(ReputationError::InvalidParams(format!(
            "need equal-length nonempty tie/opinion lists, got {} and {}",
            ties.len(),
            opinions.len()
        )));
    }
    let raw: Vec<f64> = ties
        .iter()
        .zip(opinions)
        .map(|(tie, op)| tie * op.familiarity())
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(ReputationError::AllWeightsZero);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Component-wise weighted combination of recommender opinions.
///
/// Requires `weights` summing to 1 over the same indices as `opinions`.
pub fn recommended_opinion(weights: &[f64], opinions: &[Opinion]) -> Opinion {
    debug_assert_eq!(weights.len(), opinions.len());
    debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    let mut belief = 0.0;
    let mut disbelief = 0.0;
    let mut uncertainty = 0.0;
    for (w, op) in weights.iter().zip(opinions) {
        belief += w * op.belief;
        disbelief += w * op.disbelief;
        uncertainty += w * op.uncertainty;
    }
    Opinion::new(belief, disbelief, uncertainty)
        .expect("convex combination of valid opinions is valid")
}

/// Uncertainty-weighted fusion of a local and a recommended opinion.
///
/// With `D = u_l + u_r - u_l*u_r`, the fused belief is
/// `(b_l*u_r + b_r*u_l) / D`, disbelief analogously, and the fused
/// uncertainty is `u_l*u_r / D`. Fusing with the vacuous opinion is the
/// identity. Errors when both inputs are dogmatic (`u_l = u_r = 0`), the one
/// case where `D = 0`; count-derived opinions never reach it because their
/// uncertainty is strictly positive.
pub fn fuse_opinions(local: Opinion, rec: Opinion) -> Result<Opinion, ReputationError> {
    let denom = local.uncertainty + rec.uncertainty - rec.uncertainty * local.uncertainty;
    if denom <= 0.0 {
        return Err(ReputationError::DegenerateFusion);
    }
    let belief = (local.belief * rec.uncertainty + rec.belief * local.uncertainty) / denom;
    let disbelief = (local.disbelief * rec.uncertainty + rec.disbelief * local.uncertainty) / denom;
    let uncertainty = rec.uncertainty * local.uncertainty / denom;
    Opinion::new(belief, disbelief, uncertainty)
        .map_err(|_| ReputationError::InvalidOpinion(belief, disbelief, uncertainty))
}

/// Composite opinion of a worker: the local opinion fused with the weighted
/// recommendation. With no recommenders, or when every recommender weight is
/// zero, this is just the local opinion (fusion with the vacuous opinion is
/// the identity, so this choice preserves the fusion identity).
pub fn composite_opinion(
    local: Opinion,
    recommendations: &[Recommendation],
) -> Result<Opinion, ReputationError> {
    if recommendations.is_empty() {
        return Ok(local);
    }
    let ties: Vec<f64> = recommendations.iter().map(|r| r.tie).collect();
    let opinions: Vec<Opinion> = recommendations.iter().map(|r| r.opinion).collect();
    match recommender_weights(&ties, &opinions) {
        Ok(weights) => fuse_opinions(local, recommended_opinion(&weights, &opinions)),
        Err(ReputationError::AllWeightsZero) => Ok(local),
        Err(e) => Err(e),
    }
}

/// Composite reputation value from raw counts and recommender data: local
/// opinion, recommender weighting, fusion, then the scalar value.
pub fn composite_reputation(
    counts: InteractionCounts,
    recommendations: &[Recommendation],
    params: &ReputationParams,
) -> Result<f64, ReputationError> {
    let local = local_opinion(counts, params);
    let fused = composite_opinion(local, recommendations)?;
    Ok(reputation_value(fused, params.gamma))
}
