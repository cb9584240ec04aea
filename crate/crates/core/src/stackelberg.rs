//! One-leader, multi-follower incentive game between a task publisher and
//! its workers.
//!
//! Followers pick a computation speed trading off the chance of finishing
//! within the k-th order-statistic deadline (and so earning the competition
//! reward and a positive reputation event) against computation cost. The
//! closed-form best response is `clamp(E * ln(F * r + G_w))`. The leader
//! picks the competition reward maximizing its own utility; the optimum is
//! located by bisection on the marginal utility, with a scan/golden-section
//! fallback for the regions where follower clamping breaks concavity.
//!
//! Everything here is pure and deterministic; independent solves can run
//! concurrently with no shared state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reputation::{InteractionCounts, ReputationParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("order statistic index {k} out of range 1..={n}")]
    InvalidOrder { k: usize, n: usize },
    #[error("infeasible deadline configuration (exponent rate {0} <= 0); raise t_max or k, or lower n or the task share")]
    NonPositiveA(f64),
    #[error("reputation value {value} outside [{min}, {max}]")]
    OutOfDomain { value: f64, min: f64, max: f64 },
    #[error("leader utility failed the concavity check on the reward interval")]
    NonConcave,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Shared wireless link model for all workers of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommModel {
    /// Achievable data rate, bits/s/Hz.
    pub data_rate: f64,
    /// Link erasure probability in [0, 1).
    pub erasure_prob: f64,
    /// Total bandwidth in Hz, split evenly over the task's workers.
    pub bandwidth: f64,
    /// Size of one result packet in bits.
    pub packet_size_bits: f64,
}

impl Default for CommModel {
    fn default() -> Self {
        Self { data_rate: 1300.0, erasure_prob: 0.1, bandwidth: 1e5, packet_size_bits: 3200.0 }
    }
}

/// Per-worker computation model: shifted-exponential completion times with
/// start-up cost `startup` per unit work and `task_share` units of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompModel {
    pub startup: f64,
    pub task_share: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for CompModel {
    fn default() -> Self {
        Self { startup: 5e-4, task_share: 1000.0, mu_min: 1.0, mu_max: 1e3 }
    }
}

/// Reward and cost parameters of the incentive game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncentiveParams {
    /// Participation reward paid to every worker.
    pub r_base: f64,
    pub r_com_min: f64,
    pub r_com_max: f64,
    /// Worker computation cost per work unit (epsilon).
    pub comp_cost: f64,
    /// Worker communication cost per unit time (zeta).
    pub comm_cost: f64,
    /// Scale of the profit term in worker utility (xi).
    pub xi: f64,
    /// Scale of the reputation term in worker utility (beta).
    pub beta: f64,
    /// Scale of the leader's contribution term (nu).
    pub nu: f64,
    /// Default value of the reputation weight function at the threshold.
    pub alpha: f64,
    /// Maximum task execution time. `None` derives an upper envelope of the
    /// latency model: `t_max_factor * (a*l + l/mu_min + uplink)`.
    pub t_max: Option<f64>,
    pub t_max_factor: f64,
}

impl Default for IncentiveParams {
    fn default() -> Self {
        Self {
            r_base: 10.0,
            r_com_min: 0.0,
            r_com_max: 1e3,
            comp_cost: 0.1,
            comm_cost: 10.0,
            xi: 10.0,
            beta: 30.0,
            nu: 10.0,
            alpha: 0.5,
            t_max: None,
            t_max_factor: 1.2,
        }
    }
}

impl IncentiveParams {
    /// The deadline used by the reward-probability exponent.
    pub fn resolved_t_max(&self, comm: &CommModel, comp: &CompModel, n_workers: usize) -> f64 {
        self.t_max.unwrap_or_else(|| {
            self.t_max_factor
                * (comp.startup * comp.task_share
                    + comp.task_share / comp.mu_min
                    + expected_uplink_delay(comm, n_workers))
        })
    }
}

/// Coefficients of the follower's closed-form best response
/// `mu* = speed_scale * ln(reward_slope * r + reputation_offset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponseTerms {
    /// Rate at which the reward probability `1 - exp(-mu * A)` saturates.
    pub deadline_rate: f64,
    /// `E = 1 / (a + A)`.
    pub speed_scale: f64,
    /// `F = A / (eps * l * a)`.
    pub reward_slope: f64,
    /// `G_w = beta * A * (B_w - C_w) / (xi * eps * l * a)`.
    pub reputation_offset: f64,
    /// Local reputation value after one more positive event (B_w).
    pub rep_after_success: f64,
    /// Local reputation value after one more negative event (C_w).
    pub rep_after_failure: f64,
}

/// Mean uplink delay of one worker: `s_u * N / ((1 - p) * eta * B)`, with
/// the bandwidth `B/N` share and geometric retransmissions folded in.
pub fn expected_uplink_delay(comm: &CommModel, n_workers: usize) -> f64 {
    comm.packet_size_bits * n_workers as f64
        / ((1.0 - comm.erasure_prob) * comm.data_rate * comm.bandwidth)
}

/// Mean completion time of the shifted-exponential model as integrated from
/// zero: `l * exp(a * mu) / mu`.
pub fn expected_comp_time(comp: &CompModel, mu: f64) -> f64 {
    comp.task_share * (comp.startup * mu).exp() / mu
}

/// Mean of the k-th smallest of n iid uniform(0,1) draws: `k / (n + 1)`.
pub fn expected_kth_order_stat(k: usize, n: usize) -> Result<f64, GameError> {
    if k == 0 || k > n {
        return Err(GameError::InvalidOrder { k, n });
    }
    Ok(k as f64 / (n + 1) as f64)
}

/// Probability that a worker running at `mu` finishes inside the deadline:
/// `1 - exp(-mu * A)`.
pub fn reward_probability(mu: f64, terms: &BestResponseTerms) -> f64 {
    1.0 - (-mu * terms.deadline_rate).exp()
}

/// Expected local reputation value after the task: `p_w * B_w + (1 - p_w) * C_w`
/// where B_w/C_w are the values after one more positive/negative event.
pub fn expected_new_local_reputation(
    counts: InteractionCounts,
    rep: &ReputationParams,
    p_w: f64,
) -> f64 {
    let (b_w, c_w) = reputation_update_bounds(counts, rep);
    p_w * b_w + (1.0 - p_w) * c_w
}

/// `(B_w, C_w)`: the local reputation values after one more positive or one
/// more negative interaction event.
pub fn reputation_update_bounds(counts: InteractionCounts, rep: &ReputationParams) -> (f64, f64) {
    let p = counts.positive as f64;
    let q = counts.negative as f64;
    let b_w = (rep.sigma1 * (p + 1.0) + 2.0 * rep.gamma)
        / (rep.sigma1 * (p + 1.0) + rep.sigma2 * q + 2.0);
    let c_w = (rep.sigma1 * p + 2.0 * rep.gamma)
        / (rep.sigma1 * p + rep.sigma2 * (q + 1.0) + 2.0);
    (b_w, c_w)
}

/// The closed-form follower best response, clamped to `[mu_min, mu_max]`.
pub fn worker_best_response(r_com: f64, terms: &BestResponseTerms, comp: &CompModel) -> f64 {
    let arg = terms.reward_slope * r_com + terms.reputation_offset;
    if arg <= 1.0 {
        // ln(arg) <= 0: the unconstrained optimum sits at or below zero speed.
        return comp.mu_min;
    }
    (terms.speed_scale * arg.ln()).clamp(comp.mu_min, comp.mu_max)
}

/// Reputation weight `h` of the leader's contribution term. Above the
/// threshold it grows logarithmically from `alpha` to exactly 1 at
/// `rep_max`; below the threshold it decays exponentially.
pub fn reputation_weight(
    t_com: f64,
    rep: &ReputationParams,
    inc: &IncentiveParams,
) -> Result<f64, GameError> {
    if t_com < rep.rep_min || t_com > rep.rep_max {
        return Err(GameError::OutOfDomain { value: t_com, min: rep.rep_min, max: rep.rep_max });
    }
    let alpha = inc.alpha;
    if t_com >= rep.rep_threshold {
        let span = rep.rep_max - rep.rep_threshold;
        let sigma = if span > 0.0 {
            (std::f64::consts::E - 1.0) * (t_com - rep.rep_threshold) / span
        } else {
            0.0
        };
        Ok(alpha + (1.0 - alpha) * (1.0 + sigma).ln())
    } else {
        Ok(alpha * (t_com - rep.rep_threshold).exp())
    }
}

/// Per-worker inputs to the leader's problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerGameData {
    pub counts: InteractionCounts,
    pub composite_reputation: f64,
}

/// The equilibrium reward and speed profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    pub r_com_star: f64,
    pub mu_star: Vec<f64>,
    pub leader_utility: f64,
    pub follower_utilities: Vec<f64>,
    /// Per worker: true when the best response is strictly inside
    /// `(mu_min, mu_max)` at the equilibrium reward.
    pub interior_flags: Vec<bool>,
    /// False when the sampled concavity check failed and the scan/golden
    /// fallback decided the reward.
    pub concave: bool,
}

/// Bisection tolerance on the reward axis.
const REWARD_TOL: f64 = 1e-8;
/// Points of the derivative/utility scan that brackets the optimum.
const SCAN_POINTS: usize = 129;

/// All leader/follower operations for a fixed set of models and a fixed
/// `(k, n)` coding choice.
#[derive(Debug, Clone, Copy)]
pub struct Game<'a> {
    pub comm: &'a CommModel,
    pub comp: &'a CompModel,
    pub inc: &'a IncentiveParams,
    pub rep: &'a ReputationParams,
    pub k: usize,
    pub n: usize,
}

impl<'a> Game<'a> {
    pub fn new(
        comm: &'a CommModel,
        comp: &'a CompModel,
        inc: &'a IncentiveParams,
        rep: &'a ReputationParams,
        k: usize,
        n: usize,
    ) -> Self {
        Self { comm, comp, inc, rep, k, n }
    }

    /// Best-response coefficients for a worker with the given interaction
    /// history. Fails with [`GameError::NonPositiveA`] when the deadline
    /// configuration leaves no feasible exponent rate.
    pub fn derive_terms(&self, counts: InteractionCounts) -> Result<BestResponseTerms, GameError> {
        let l = self.comp.task_share;
        let a = self.comp.startup;
        let t_max = self.inc.resolved_t_max(self.comm, self.comp, self.n);
        let uplink = expected_uplink_delay(self.comm, self.n);
        let deadline_rate = (expected_kth_order_stat(self.k, self.n)? * t_max - uplink) / l - a;
        if deadline_rate <= 0.0 {
            return Err(GameError::NonPositiveA(deadline_rate));
        }
        let (rep_after_success, rep_after_failure) = reputation_update_bounds(counts, self.rep);
        let cost_scale = self.inc.comp_cost * l * a;
        Ok(BestResponseTerms {
            deadline_rate,
            speed_scale: 1.0 / (a + deadline_rate),
            reward_slope: deadline_rate / cost_scale,
            reputation_offset: self.inc.beta * deadline_rate
                * (rep_after_success - rep_after_failure)
                / (self.inc.xi * cost_scale),
            rep_after_success,
            rep_after_failure,
        })
    }

    /// Worker profit: base reward, expected competition reward, computation
    /// cost `eps * mu * E[T_cmp]`, and communication cost `zeta * E[T_up]`.
    pub fn worker_profit(&self, mu: f64, r_com: f64, terms: &BestResponseTerms) -> f64 {
        self.inc.r_base + reward_probability(mu, terms) * r_com
            - self.inc.comp_cost * mu * expected_comp_time(self.comp, mu)
            - self.inc.comm_cost * expected_uplink_delay(self.comm, self.n)
    }

    /// Worker utility: scaled profit plus scaled expected post-task
    /// reputation.
    pub fn worker_utility(
        &self,
        mu: f64,
        r_com: f64,
        counts: InteractionCounts,
        terms: &BestResponseTerms,
    ) -> f64 {
        let p_w = reward_probability(mu, terms);
        self.inc.xi * self.worker_profit(mu, r_com, terms)
            + self.inc.beta * expected_new_local_reputation(counts, self.rep, p_w)
    }

    /// Analytic first derivative of the worker utility in `mu`.
    pub fn worker_utility_gradient(&self, mu: f64, r_com: f64, terms: &BestResponseTerms) -> f64 {
        let a = self.comp.startup;
        let l = self.comp.task_share;
        let rate = terms.deadline_rate;
        let decay = (-mu * rate).exp();
        self.inc.xi * (r_com * rate * decay - self.inc.comp_cost * l * a * (a * mu).exp())
            + self.inc.beta * rate * decay * (terms.rep_after_success - terms.rep_after_failure)
    }

    /// Analytic second derivative of the worker utility in `mu`; strictly
    /// negative for any positive exponent rate, so the follower problem is
    /// strictly concave.
    pub fn worker_utility_curvature(&self, mu: f64, r_com: f64, terms: &BestResponseTerms) -> f64 {
        let a = self.comp.startup;
        let l = self.comp.task_share;
        let rate = terms.deadline_rate;
        let decay = (-mu * rate).exp();
        -self.inc.xi * (rate * rate * decay * r_com + self.inc.comp_cost * l * a * a * (a * mu).exp())
            - self.inc.beta * rate * rate * decay * (terms.rep_after_success - terms.rep_after_failure)
    }

    fn worker_states(
        &self,
        workers: &[WorkerGameData],
    ) -> Result<Vec<(BestResponseTerms, f64)>, GameError> {
        if workers.len() != self.n {
            return Err(GameError::InvalidModel(format!(
                "game is sized for {} workers, got {}",
                self.n,
                workers.len()
            )));
        }
        workers
            .iter()
            .map(|w| {
                let terms = self.derive_terms(w.counts)?;
                let h = reputation_weight(w.composite_reputation, self.rep, self.inc)?;
                Ok((terms, h))
            })
            .collect()
    }

    /// Leader utility at reward `r_com`, with every follower playing its
    /// best response.
    pub fn msp_utility(&self, r_com: f64, workers: &[WorkerGameData]) -> Result<f64, GameError> {
        let states = self.worker_states(workers)?;
        Ok(self.utility_at(r_com, &states))
    }

    fn utility_at(&self, r_com: f64, states: &[(BestResponseTerms, f64)]) -> f64 {
        let mut contribution = 0.0;
        let mut payout = 0.0;
        for (terms, h) in states {
            let mu = worker_best_response(r_com, terms, self.comp);
            contribution += (1.0 + mu).ln() * h;
            payout += reward_probability(mu, terms) * r_com;
        }
        self.inc.nu * contribution - states.len() as f64 * self.inc.r_base - payout
    }

    /// Analytic leader marginal utility, with the chain rule through each
    /// interior follower's best response. Clamped followers contribute
    /// `d mu*/d r = 0` but still pay their reward-probability term.
    pub fn msp_utility_gradient(
        &self,
        r_com: f64,
        workers: &[WorkerGameData],
    ) -> Result<f64, GameError> {
        let states = self.worker_states(workers)?;
        Ok(self.gradient_at(r_com, &states))
    }

    fn gradient_at(&self, r_com: f64, states: &[(BestResponseTerms, f64)]) -> f64 {
        let mut grad = 0.0;
        for (terms, h) in states {
            let arg = terms.reward_slope * r_com + terms.reputation_offset;
            let raw = if arg > 1.0 { terms.speed_scale * arg.ln() } else { 0.0 };
            let interior = raw > self.comp.mu_min && raw < self.comp.mu_max;
            let mu = worker_best_response(r_com, terms, self.comp);
            let p = reward_probability(mu, terms);
            let dmu = if interior { terms.speed_scale * terms.reward_slope / arg } else { 0.0 };
            let dp = terms.deadline_rate * (-mu * terms.deadline_rate).exp() * dmu;
            grad += self.inc.nu * h * dmu / (1.0 + mu) - (p + r_com * dp);
        }
        grad
    }

    /// Solves the leader problem and recomputes the follower profile at the
    /// optimum.
    ///
    /// The marginal utility is scanned over `[r_com_min, r_com_max]`; every
    /// sign change from positive to negative is refined by bisection to
    /// 1e-8, and the best of those roots and the interval endpoints wins.
    /// Sampled second differences verify concavity wherever every follower
    /// is interior; on a violation the solver additionally refines the best
    /// scanned point by golden-section search and keeps whichever candidate
    /// has the higher utility.
    pub fn solve_equilibrium(
        &self,
        workers: &[WorkerGameData],
    ) -> Result<EquilibriumSolution, GameError> {
        let states = self.worker_states(workers)?;
        let lo = self.inc.r_com_min;
        let hi = self.inc.r_com_max;
        if lo >= hi {
            return Err(GameError::InvalidModel(format!(
                "reward bounds must satisfy r_com_min < r_com_max, got {lo} >= {hi}"
            )));
        }

        let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + i as f64 * step).collect();
        let grads: Vec<f64> = xs.iter().map(|&x| self.gradient_at(x, &states)).collect();

        let mut candidates = vec![lo, hi];
        for i in 0..SCAN_POINTS - 1 {
            if grads[i] > 0.0 && grads[i + 1] <= 0.0 {
                candidates.push(self.bisect_gradient(xs[i], xs[i + 1], &states));
            }
        }

        // Direct search over the utility around the best scan point. Where
        // the utility is concave this lands on the same point as the
        // derivative bisection; where follower clamping dents concavity (or
        // squeezes the optimum inside one scan interval) it is the route
        // that still finds the maximum.
        let concave = self.concavity_holds(lo, hi, &states);
        let best_idx = (0..SCAN_POINTS)
            .max_by(|&i, &j| {
                self.utility_at(xs[i], &states)
                    .total_cmp(&self.utility_at(xs[j], &states))
            })
            .unwrap();
        let glo = if best_idx == 0 { lo } else { xs[best_idx - 1] };
        let ghi = if best_idx == SCAN_POINTS - 1 { hi } else { xs[best_idx + 1] };
        candidates.push(refine_max_by_scan(|x| self.utility_at(x, &states), glo, ghi));

        let r_star = candidates
            .into_iter()
            .map(|r| (r, self.utility_at(r, &states)))
            .max_by(|(ra, ua), (rb, ub)| ua.total_cmp(ub).then(rb.total_cmp(ra)))
            .map(|(r, _)| r)
            .unwrap();

        let mut mu_star = Vec::with_capacity(states.len());
        let mut follower_utilities = Vec::with_capacity(states.len());
        let mut interior_flags = Vec::with_capacity(states.len());
        for ((terms, _), w) in states.iter().zip(workers) {
            let mu = worker_best_response(r_star, terms, self.comp);
            interior_flags.push(mu > self.comp.mu_min && mu < self.comp.mu_max);
            follower_utilities.push(self.worker_utility(mu, r_star, w.counts, terms));
            mu_star.push(mu);
        }
        Ok(EquilibriumSolution {
            r_com_star: r_star,
            leader_utility: self.utility_at(r_star, &states),
            mu_star,
            follower_utilities,
            interior_flags,
            concave,
        })
    }

    fn bisect_gradient(&self, mut lo: f64, mut hi: f64, states: &[(BestResponseTerms, f64)]) -> f64 {
        while hi - lo > REWARD_TOL {
            let mid = 0.5 * (lo + hi);
            if self.gradient_at(mid, states) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Sampled second differences of the leader utility, restricted to
    /// stencils where every follower is strictly interior (outside those
    /// the clamping kinks are expected and say nothing about the interior
    /// concavity condition).
    fn concavity_holds(&self, lo: f64, hi: f64, states: &[(BestResponseTerms, f64)]) -> bool {
        let samples = 65;
        let h = (hi - lo) / 128.0;
        let all_interior = |r: f64| {
            states.iter().all(|(terms, _)| {
                let arg = terms.reward_slope * r + terms.reputation_offset;
                if arg <= 1.0 {
                    return false;
                }
                let raw = terms.speed_scale * arg.ln();
                raw > self.comp.mu_min && raw < self.comp.mu_max
            })
        };
        for i in 1..samples {
            let x = lo + (hi - lo) * i as f64 / samples as f64;
            if x - h < lo || x + h > hi {
                continue;
            }
            if !(all_interior(x - h) && all_interior(x) && all_interior(x + h)) {
                continue;
            }
            let second = self.utility_at(x - h, states) - 2.0 * self.utility_at(x, states)
                + self.utility_at(x + h, states);
            let scale = self.utility_at(x, states).abs().max(1.0);
            if second > 1e-9 * scale {
                return false;
            }
        }
        true
    }

    /// `(reward, utility, marginal utility)` triples over an even grid, for
    /// CSV diagnostics.
    pub fn reward_diagnostics(
        &self,
        workers: &[WorkerGameData],
        points: usize,
    ) -> Result<Vec<(f64, f64, f64)>, GameError> {
        let states = self.worker_states(workers)?;
        let lo = self.inc.r_com_min;
        let hi = self.inc.r_com_max;
        let step = (hi - lo) / (points.max(2) - 1) as f64;
        Ok((0..points.max(2))
            .map(|i| {
                let r = lo + i as f64 * step;
                (r, self.utility_at(r, &states), self.gradient_at(r, &states))
            })
            .collect())
    }
}

/// Iterative scan-and-shrink maximization: samples the bracket evenly,
/// re-brackets around the best sample, and repeats until the bracket is
/// below the reward tolerance.
fn refine_max_by_scan(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const PTS: usize = 33;
    while hi - lo > REWARD_TOL {
        let step = (hi - lo) / (PTS - 1) as f64;
        let values: Vec<f64> = (0..PTS).map(|i| f(lo + i as f64 * step)).collect();
        let best = (0..PTS).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
        let new_lo = if best == 0 { lo } else { lo + (best - 1) as f64 * step };
        let new_hi = if best == PTS - 1 { hi } else { lo + (best + 1) as f64 * step };
        lo = new_lo;
        hi = new_hi;
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn default_models() -> (CommModel, CompModel, IncentiveParams, ReputationParams) {
        (
            CommModel::default(),
            CompModel::default(),
            IncentiveParams { t_max: Some(50.0), ..IncentiveParams::default() },
            ReputationParams::default(),
        )
    }

    #[test]
    fn uplink_delay_frozen_value() {
        let comm = CommModel::default();
        assert_abs_diff_eq!(expected_uplink_delay(&comm, 10), 2.73504273504e-4, epsilon = 1e-12);

        let lossless = CommModel { erasure_prob: 0.0, ..comm };
        assert_abs_diff_eq!(
            expected_uplink_delay(&lossless, 10),
            3200.0 * 10.0 / (1300.0 * 1e5),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            expected_uplink_delay(&comm, 20),
            2.0 * expected_uplink_delay(&comm, 10),
            epsilon = 1e-12
        );
    }

    #[test]
    fn comp_time_frozen_value_and_limits() {
        let comp = CompModel { task_share: 1000.0, ..CompModel::default() };
        assert_abs_diff_eq!(expected_comp_time(&comp, 100.0), 10.5127109638, epsilon = 1e-9);

        let no_startup = CompModel { startup: 1e-12, ..comp };
        assert_abs_diff_eq!(expected_comp_time(&no_startup, 50.0), 1000.0 / 50.0, epsilon = 1e-6);

        // With a*mu << 1, doubling the speed roughly halves the time.
        let t1 = expected_comp_time(&comp, 10.0);
        let t2 = expected_comp_time(&comp, 20.0);
        assert_abs_diff_eq!(t1 / t2, 2.0, epsilon = 0.01);
    }

    #[test]
    fn order_stat_mean() {
        assert_abs_diff_eq!(expected_kth_order_stat(5, 9).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_kth_order_stat(1, 1).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(
            expected_kth_order_stat(4, 3),
            Err(GameError::InvalidOrder { k: 4, n: 3 })
        ));
        assert!(expected_kth_order_stat(0, 3).is_err());
    }

    #[test]
    fn derive_terms_identities() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let terms = game.derive_terms(InteractionCounts::new(12, 1)).unwrap();
        assert_abs_diff_eq!(terms.speed_scale * (comp.startup + terms.deadline_rate), 1.0, epsilon = 1e-12);
        assert!(terms.deadline_rate > 0.0);
        assert!(terms.rep_after_success > terms.rep_after_failure);
    }

    #[test]
    fn rep_update_bounds_gap_positive_on_random_counts() {
        let rep = ReputationParams::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let counts =
                InteractionCounts::new(rng.random_range(0..500), rng.random_range(0..500));
            let (b, c) = reputation_update_bounds(counts, &rep);
            assert!(b > c, "B must exceed C for counts {counts:?}");
        }
    }

    #[test]
    fn infeasible_deadline_is_rejected() {
        let (comm, comp, _, rep) = default_models();
        // E(T_kn) * t_max far below a*l.
        let inc = IncentiveParams { t_max: Some(1e-6), ..IncentiveParams::default() };
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        assert!(matches!(
            game.derive_terms(InteractionCounts::new(5, 1)),
            Err(GameError::NonPositiveA(_))
        ));
    }

    #[test]
    fn reward_probability_shape() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let terms = game.derive_terms(InteractionCounts::new(12, 1)).unwrap();
        assert!(reward_probability(1e-12, &terms) < 1e-9);
        let half_life = std::f64::consts::LN_2 / terms.deadline_rate;
        assert_abs_diff_eq!(reward_probability(half_life, &terms), 0.5, epsilon = 1e-12);
        let mut last = -1.0;
        for i in 1..=100 {
            let p = reward_probability(i as f64 * 5.0, &terms);
            assert!((0.0..1.0).contains(&p));
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn worker_profit_limits_and_signs() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let terms = game.derive_terms(InteractionCounts::new(12, 1)).unwrap();

        // mu -> 0 with no competition reward: base minus eps*l minus zeta*uplink.
        let limit = inc.r_base
            - inc.comp_cost * comp.task_share
            - inc.comm_cost * expected_uplink_delay(&comm, 10);
        assert_abs_diff_eq!(game.worker_profit(1e-9, 0.0, &terms), limit, epsilon = 1e-6);

        // Independent term-by-term recomputation, using eps*l*exp(a*mu) for
        // the computation cost.
        let mu = 37.0;
        let r = 12.5;
        let direct = inc.r_base + (1.0 - (-mu * terms.deadline_rate).exp()) * r
            - inc.comp_cost * comp.task_share * (comp.startup * mu).exp()
            - inc.comm_cost * expected_uplink_delay(&comm, 10);
        assert_abs_diff_eq!(game.worker_profit(mu, r, &terms), direct, epsilon = 1e-9);

        // Profit decreases in the communication cost.
        let pricier = IncentiveParams { comm_cost: inc.comm_cost * 2.0, ..inc };
        let game2 = Game::new(&comm, &comp, &pricier, &rep, 2, 10);
        assert!(game2.worker_profit(mu, r, &terms) < game.worker_profit(mu, r, &terms));
    }

    #[test]
    fn expected_new_reputation_examples() {
        let rep = ReputationParams::default();
        let counts = InteractionCounts::new(10, 2);
        let (b, c) = reputation_update_bounds(counts, &rep);
        assert_abs_diff_eq!(expected_new_local_reputation(counts, &rep, 1.0), b, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_new_local_reputation(counts, &rep, 0.0), c, epsilon = 1e-15);
        // 0.5 * (7.6/9.4) + 0.5 * (7.0/9.2)
        assert_abs_diff_eq!(
            expected_new_local_reputation(counts, &rep, 0.5),
            0.784690101758,
            epsilon = 1e-9
        );
    }

    #[test]
    fn worker_utility_decomposes() {
        let (comm, comp, inc, rep) = default_models();
        let counts = InteractionCounts::new(9, 3);
        let mu = 21.0;
        let r = 8.0;

        let profit_only = IncentiveParams { beta: 0.0, ..inc };
        let game = Game::new(&comm, &comp, &profit_only, &rep, 2, 10);
        let terms = game.derive_terms(counts).unwrap();
        assert_abs_diff_eq!(
            game.worker_utility(mu, r, counts, &terms),
            profit_only.xi * game.worker_profit(mu, r, &terms),
            epsilon = 1e-9
        );

        let rep_only = IncentiveParams { xi: 0.0, ..inc };
        let game = Game::new(&comm, &comp, &rep_only, &rep, 2, 10);
        assert_abs_diff_eq!(
            game.worker_utility(mu, r, counts, &terms),
            rep_only.beta
                * expected_new_local_reputation(counts, &rep, reward_probability(mu, &terms)),
            epsilon = 1e-9
        );

        // Composition against the two sub-operations with the full params.
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let expected = inc.xi * game.worker_profit(mu, r, &terms)
            + inc.beta
                * expected_new_local_reputation(counts, &rep, reward_probability(mu, &terms));
        assert_abs_diff_eq!(game.worker_utility(mu, r, counts, &terms), expected, epsilon = 1e-9);
    }

    #[test]
    fn best_response_zeroes_gradient_and_clamps() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let terms = game.derive_terms(InteractionCounts::new(12, 1)).unwrap();

        let mu = worker_best_response(40.0, &terms, &comp);
        assert!(mu > comp.mu_min && mu < comp.mu_max);
        assert_abs_diff_eq!(game.worker_utility_gradient(mu, 40.0, &terms), 0.0, epsilon = 1e-9);

        // Tight speed floor forces the clamp.
        let narrow = CompModel { mu_min: 500.0, mu_max: 1000.0, ..comp };
        assert_abs_diff_eq!(worker_best_response(0.0, &terms, &narrow), 500.0, epsilon = 1e-12);
    }

    #[test]
    fn best_response_monotone_in_reward() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let terms = game.derive_terms(InteractionCounts::new(12, 1)).unwrap();
        let mut last = 0.0;
        for i in 0..200 {
            let mu = worker_best_response(i as f64 * 2.0, &terms, &comp);
            assert!(mu >= last);
            last = mu;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let counts = InteractionCounts::new(12, 1);
        let terms = game.derive_terms(counts).unwrap();
        let r = 25.0;
        for mu in [5.0, 17.0, 60.0, 150.0] {
            let h = 1e-5 * mu;
            let fd = (game.worker_utility(mu + h, r, counts, &terms)
                - game.worker_utility(mu - h, r, counts, &terms))
                / (2.0 * h);
            let analytic = game.worker_utility_gradient(mu, r, &terms);
            assert_abs_diff_eq!(fd, analytic, epsilon = 1e-6 * analytic.abs().max(1.0));
        }
    }

    #[test]
    fn curvature_is_negative_and_matches_differences() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let counts = InteractionCounts::new(12, 1);
        let terms = game.derive_terms(counts).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mu = rng.random_range(1.0..500.0);
            let r = rng.random_range(0.0..200.0);
            let curv = game.worker_utility_curvature(mu, r, &terms);
            assert!(curv < 0.0);
        }
        let (mu, r) = (40.0, 25.0);
        let h = 1e-3;
        let second = (game.worker_utility(mu + h, r, counts, &terms)
            - 2.0 * game.worker_utility(mu, r, counts, &terms)
            + game.worker_utility(mu - h, r, counts, &terms))
            / (h * h);
        let analytic = game.worker_utility_curvature(mu, r, &terms);
        assert_abs_diff_eq!(second, analytic, epsilon = 1e-4 * analytic.abs());
    }

    #[test]
    fn reputation_weight_branches() {
        let rep = ReputationParams::default();
        let inc = IncentiveParams::default();
        // Continuity at the threshold.
        assert_abs_diff_eq!(reputation_weight(0.6, &rep, &inc).unwrap(), inc.alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(
            reputation_weight(0.6 - 1e-12, &rep, &inc).unwrap(),
            inc.alpha,
            epsilon = 1e-9
        );
        // Exactly 1 at the maximum.
        assert_abs_diff_eq!(reputation_weight(1.0, &rep, &inc).unwrap(), 1.0, epsilon = 1e-12);
        // Below threshold: alpha * exp(T - T_th).
        assert_abs_diff_eq!(
            reputation_weight(0.5, &rep, &inc).unwrap(),
            0.452418709018,
            epsilon = 1e-11
        );
        assert!(matches!(
            reputation_weight(1.2, &rep, &inc),
            Err(GameError::OutOfDomain { .. })
        ));
        assert!(reputation_weight(-0.1, &rep, &inc).is_err());
    }

    fn uniform_workers(n: usize, counts: InteractionCounts, t_com: f64) -> Vec<WorkerGameData> {
        vec![WorkerGameData { counts, composite_reputation: t_com }; n]
    }

    #[test]
    fn msp_utility_boundary_composition() {
        let (comm, comp, rep) = (CommModel::default(), CompModel::default(), ReputationParams::default());
        // beta = 0 makes the reputation offset vanish, so r = 0 clamps all
        // followers at the speed floor.
        let inc = IncentiveParams { t_max: Some(50.0), beta: 0.0, ..IncentiveParams::default() };
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let counts = InteractionCounts::new(12, 1);
        let workers = uniform_workers(10, counts, 0.8);
        let terms = game.derive_terms(counts).unwrap();
        assert!(terms.reputation_offset <= 1.0);

        let h = reputation_weight(0.8, &rep, &inc).unwrap();
        let expected = inc.nu * 10.0 * (1.0 + comp.mu_min).ln() * h - 10.0 * inc.r_base;
        assert_abs_diff_eq!(game.msp_utility(0.0, &workers).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn msp_utility_matches_recomposition() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 3, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let workers: Vec<WorkerGameData> = (0..8)
            .map(|_| WorkerGameData {
                counts: InteractionCounts::new(rng.random_range(5..60), rng.random_range(0..6)),
                composite_reputation: rng.random_range(0.3..1.0),
            })
            .collect();
        let r = 14.0;
        let mut expected = 0.0;
        for w in &workers {
            let terms = game.derive_terms(w.counts).unwrap();
            let mu = worker_best_response(r, &terms, &comp);
            expected += inc.nu
                * (1.0 + mu).ln()
                * reputation_weight(w.composite_reputation, &rep, &inc).unwrap()
                - inc.r_base
                - reward_probability(mu, &terms) * r;
        }
        assert_abs_diff_eq!(game.msp_utility(r, &workers).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn msp_utility_monotone_in_reputation_above_threshold() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let counts = InteractionCounts::new(12, 1);
        let low = game.msp_utility(10.0, &uniform_workers(10, counts, 0.7)).unwrap();
        let high = game.msp_utility(10.0, &uniform_workers(10, counts, 0.9)).unwrap();
        assert!(high >= low);
    }

    #[test]
    fn leader_gradient_matches_finite_differences() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let workers = uniform_workers(10, InteractionCounts::new(12, 1), 0.8);
        for r in [2.0f64, 10.0, 50.0, 200.0] {
            let h = 1e-4 * r.max(1.0);
            let fd = (game.msp_utility(r + h, &workers).unwrap()
                - game.msp_utility(r - h, &workers).unwrap())
                / (2.0 * h);
            let analytic = game.msp_utility_gradient(r, &workers).unwrap();
            assert_abs_diff_eq!(fd, analytic, epsilon = 1e-6 * analytic.abs().max(1.0));
        }
    }

    #[test]
    fn equilibrium_matches_grid_search() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let workers = uniform_workers(10, InteractionCounts::new(12, 1), 0.8);
        let sol = game.solve_equilibrium(&workers).unwrap();

        let grid = 200_000;
        let step = (inc.r_com_max - inc.r_com_min) / grid as f64;
        let best = (0..=grid)
            .map(|i| inc.r_com_min + i as f64 * step)
            .max_by(|&a, &b| {
                game.msp_utility(a, &workers)
                    .unwrap()
                    .total_cmp(&game.msp_utility(b, &workers).unwrap())
            })
            .unwrap();
        assert!(
            (sol.r_com_star - best).abs() <= step,
            "bisection {} vs grid {}",
            sol.r_com_star,
            best
        );
        assert!(sol.leader_utility >= game.msp_utility(best, &workers).unwrap() - 1e-9);
    }

    #[test]
    fn equilibrium_symmetric_workers_get_equal_speeds() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 6);
        let workers = uniform_workers(6, InteractionCounts::new(20, 2), 0.85);
        let sol = game.solve_equilibrium(&workers).unwrap();
        for mu in &sol.mu_star {
            assert_abs_diff_eq!(*mu, sol.mu_star[0], epsilon = 1e-12);
        }
        assert!(sol.r_com_star >= inc.r_com_min && sol.r_com_star <= inc.r_com_max);
        for mu in &sol.mu_star {
            assert!((comp.mu_min..=comp.mu_max).contains(mu));
        }
    }

    #[test]
    fn no_worker_gains_by_deviating() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let workers: Vec<WorkerGameData> = (0..5)
            .map(|_| WorkerGameData {
                counts: InteractionCounts::new(rng.random_range(5..50), rng.random_range(0..5)),
                composite_reputation: rng.random_range(0.6..1.0),
            })
            .collect();
        let sol = game.solve_equilibrium(&workers).unwrap();
        for (i, w) in workers.iter().enumerate() {
            let terms = game.derive_terms(w.counts).unwrap();
            let at_star = game.worker_utility(sol.mu_star[i], sol.r_com_star, w.counts, &terms);
            for j in 0..=1000 {
                let mu = comp.mu_min + (comp.mu_max - comp.mu_min) * j as f64 / 1000.0;
                let u = game.worker_utility(mu, sol.r_com_star, w.counts, &terms);
                assert!(u <= at_star + 1e-6, "worker {i} gains at mu={mu}");
            }
        }
    }

    #[test]
    fn diagnostics_grid_is_consistent() {
        let (comm, comp, inc, rep) = default_models();
        let game = Game::new(&comm, &comp, &inc, &rep, 2, 10);
        let workers = uniform_workers(10, InteractionCounts::new(12, 1), 0.8);
        let rows = game.reward_diagnostics(&workers, 33).unwrap();
        assert_eq!(rows.len(), 33);
        for (r, u, g) in &rows {
            assert_abs_diff_eq!(*u, game.msp_utility(*r, &workers).unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(*g, game.msp_utility_gradient(*r, &workers).unwrap(), epsilon = 1e-12);
        }
    }
}
