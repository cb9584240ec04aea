//! The unreliable-worker scenario: one worker builds up its reputation,
//! holds it, then misbehaves against every provider outside its favored
//! set, while three reputation schemes watch the same event stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::ledger::{ChainId, ChainedLedger, Transaction, TxKind};
use crate::reputation::{
    composite_opinion, local_opinion, reputation_value, social_tie, InteractionCounts, Opinion,
    Recommendation, ServiceHistory, TaskOutcome,
};

use super::config::ScenarioConfig;
use super::stats::csv_table;
use super::ScenarioError;

pub const PHASE_BUILD: &str = "build";
pub const PHASE_HOLD: &str = "hold";
pub const PHASE_ATTACK: &str = "attack";

/// One recorded round: the unreliable worker's reputation as seen by each
/// scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub round: usize,
    pub phase: &'static str,
    /// Mean composite value across all msps, ledger-backed opinions.
    pub proposed: f64,
    /// Same aggregation over the centrally manipulated event stream.
    pub no_blockchain: f64,
    /// The favored msp's local value only.
    pub no_blockchain_no_rec: f64,
}

#[derive(Debug)]
pub struct AttackOutcome {
    pub rows: Vec<AttackRow>,
    /// Index of the first attack-phase row.
    pub onset_round: usize,
    pub rep_chain: ChainedLedger,
    /// Truthful per-msp interaction tallies at the end of the run.
    pub final_counts: Vec<InteractionCounts>,
}

const ATTACK_WORKER_ID: u64 = 1_000;

/// Composite value of the worker from `observer`'s perspective given
/// per-msp counts, with ties derived from the shared service histories.
fn composite_from_counts(
    observer: usize,
    counts: &[InteractionCounts],
    histories: &[ServiceHistory],
    cfg: &ScenarioConfig,
) -> Result<f64, ScenarioError> {
    let params = cfg.reputation_params();
    let local = local_opinion(counts[observer], &params);
    let recs: Vec<Recommendation> = (0..counts.len())
        .filter(|&m| m != observer)
        .map(|m| Recommendation {
            tie: social_tie(&histories[observer], &histories[m]),
            opinion: local_opinion(counts[m], &params),
        })
        .collect();
    let fused = composite_opinion(local, &recs)?;
    Ok(reputation_value(fused, cfg.gamma))
}

fn mean_composite_over_msps(
    counts: &[InteractionCounts],
    histories: &[ServiceHistory],
    cfg: &ScenarioConfig,
) -> Result<f64, ScenarioError> {
    let mut total = 0.0;
    for observer in 0..counts.len() {
        total += composite_from_counts(observer, counts, histories, cfg)?;
    }
    Ok(total / counts.len() as f64)
}

/// Runs the scripted attack and reports all three schemes' views per round.
///
/// Build and attack rounds are full sweeps: the worker interacts once with
/// every msp. Hold rounds are idle. The truthful event stream drives the
/// proposed and local-only schemes; the no-blockchain scheme sees the same
/// stream with negative events flipped to positive at the platform's
/// manipulation probability. Proposed-scheme opinions are recorded on a
/// reputation chain round by round, so the final state replays from it.
pub fn run_reputation_attack(cfg: &ScenarioConfig) -> Result<AttackOutcome, ScenarioError> {
    let msps = cfg.msps;
    let params = cfg.reputation_params();
    let mut rng = ChaCha12Rng::seed_from_u64(super::derive_seed(cfg.seed, 0xa77ac4));

    // All msps share the same background service history, so ties are 1.
    let histories: Vec<ServiceHistory> = (0..msps)
        .map(|m| {
            ServiceHistory::new(
                m as u64,
                (0..cfg.background_workers as u64).chain([ATTACK_WORKER_ID]),
            )
        })
        .collect();

    let mut truthful = vec![InteractionCounts::default(); msps];
    let mut manipulated = vec![InteractionCounts::default(); msps];
    let mut rep_chain = ChainedLedger::new(ChainId::Reputation);
    rep_chain.block_size = cfg.block_size;

    let mut rows = Vec::with_capacity(cfg.rounds);
    let mut onset_round = None;
    let mut held = 0usize;
    let max_build = cfg.rounds / 2;

    for round in 0..cfg.rounds {
        let phase = if onset_round.is_none() {
            let reached = rows
                .last()
                .map(|r: &AttackRow| r.proposed >= cfg.attack_target)
                .unwrap_or(false);
            if (reached || round >= max_build) && held < cfg.attack_hold_rounds {
                held += 1;
                PHASE_HOLD
            } else if reached || round >= max_build {
                onset_round = Some(round);
                PHASE_ATTACK
            } else {
                PHASE_BUILD
            }
        } else {
            PHASE_ATTACK
        };

        if phase != PHASE_HOLD {
            for msp in 0..msps {
                let outcome = match phase {
                    PHASE_ATTACK if msp >= cfg.favored_msps => {
                        if rng.random_bool(cfg.misbehave_prob) {
                            TaskOutcome::Negative
                        } else {
                            TaskOutcome::Positive
                        }
                    }
                    _ => TaskOutcome::Positive,
                };
                // The flip draw is consumed either way so the truthful
                // stream does not depend on the manipulation probability.
                let flip = rng.random_bool(cfg.manipulation_prob);
                truthful[msp] = truthful[msp].record(outcome);
                let seen = match outcome {
                    TaskOutcome::Negative if flip => TaskOutcome::Positive,
                    other => other,
                };
                manipulated[msp] = manipulated[msp].record(seen);

                let now = round as u64;
                rep_chain.append_tx(
                    Transaction::new(
                        TxKind::ReputationUpdate {
                            msp: msp as u64,
                            worker: ATTACK_WORKER_ID,
                            opinion: local_opinion(truthful[msp], &params),
                        },
                        now,
                    ),
                    now,
                )?;
            }
            rep_chain.seal_all(round as u64);
        }

        rows.push(AttackRow {
            round,
            phase,
            proposed: mean_composite_over_msps(&truthful, &histories, cfg)?,
            no_blockchain: mean_composite_over_msps(&manipulated, &histories, cfg)?,
            no_blockchain_no_rec: reputation_value(local_opinion(truthful[0], &params), cfg.gamma),
        });
    }

    let onset_round = onset_round.ok_or_else(|| {
        ScenarioError::Config("rounds too small: the attack phase never started".into())
    })?;
    Ok(AttackOutcome { rows, onset_round, rep_chain, final_counts: truthful })
}

pub fn attack_csv(rows: &[AttackRow]) -> String {
    csv_table(
        &["round", "phase", "proposed", "no_blockchain", "no_blockchain_no_rec"],
        rows.iter().map(|r| {
            vec![
                r.round.to_string(),
                r.phase.to_string(),
                r.proposed.to_string(),
                r.no_blockchain.to_string(),
                r.no_blockchain_no_rec.to_string(),
            ]
        }),
    )
}

/// Replays the attack run's reputation chain and checks it reproduces the
/// final truthful opinions exactly.
pub fn replay_matches_final_state(outcome: &AttackOutcome, cfg: &ScenarioConfig) -> bool {
    let params = cfg.reputation_params();
    let state = outcome.rep_chain.reputation_state();
    outcome.final_counts.iter().enumerate().all(|(msp, counts)| {
        let expected: Opinion = local_opinion(*counts, &params);
        state.latest.get(&(msp as u64, ATTACK_WORKER_ID)) == Some(&expected)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_phases_progress_and_chain_verifies() {
        let cfg = ScenarioConfig::default();
        let out = run_reputation_attack(&cfg).unwrap();
        assert_eq!(out.rows.len(), cfg.rounds);
        assert!(out.rep_chain.verify_chain());
        assert!(replay_matches_final_state(&out, &cfg));

        let phases: Vec<&str> = out.rows.iter().map(|r| r.phase).collect();
        assert!(phases.contains(&PHASE_BUILD));
        assert_eq!(phases.iter().filter(|p| **p == PHASE_HOLD).count(), cfg.attack_hold_rounds);
        assert!(phases.contains(&PHASE_ATTACK));
        assert_eq!(out.rows[out.onset_round].phase, PHASE_ATTACK);

        // Build/hold rounds only record positive events: the local-only view
        // never decreases there.
        for pair in out.rows[..out.onset_round].windows(2) {
            assert!(pair[1].no_blockchain_no_rec >= pair[0].no_blockchain_no_rec - 1e-12);
        }
    }

    #[test]
    fn attack_reaches_target_before_turning() {
        let cfg = ScenarioConfig::default();
        let out = run_reputation_attack(&cfg).unwrap();
        let last_hold = out
            .rows
            .iter()
            .rev()
            .find(|r| r.phase == PHASE_HOLD)
            .expect("hold phase exists");
        assert!(last_hold.proposed >= cfg.attack_target);
    }
}
