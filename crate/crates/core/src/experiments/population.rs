//! Worker population bootstrap: honest/unreliable profiles with seeded
//! interaction histories against every service provider.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::reputation::InteractionCounts;

use super::config::ScenarioConfig;

/// One worker's ground truth: its honesty flag, per-msp interaction
/// history, and per-msp misbehavior probability.
#[derive(Debug, Clone)]
pub struct WorkerProfile {
    pub worker_id: u64,
    pub honest: bool,
    /// Interaction tallies indexed by msp.
    pub counts: Vec<InteractionCounts>,
    /// Misbehavior probability per msp.
    pub misbehave_prob: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub workers: Vec<WorkerProfile>,
    pub msps: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}

/// Builds a population of `cfg.workers` workers, a `cfg.misbehavior_ratio`
/// fraction of them unreliable, and simulates `cfg.history_rounds`
/// interactions per (msp, worker) pair. Honest workers succeed with
/// `honest_positive_rate`; unreliable ones with `1 - misbehave_prob`.
pub fn bootstrap_population(cfg: &ScenarioConfig, rng: &mut ChaCha12Rng) -> Population {
    let w = cfg.workers;
    let malicious = ((cfg.misbehavior_ratio * w as f64).round() as usize).min(w);
    let mut order: Vec<usize> = (0..w).collect();
    order.shuffle(rng);
    let mut honest = vec![true; w];
    for &i in order.iter().take(malicious) {
        honest[i] = false;
    }

    let workers = (0..w)
        .map(|i| {
            let positive_rate = if honest[i] {
                cfg.honest_positive_rate
            } else {
                1.0 - cfg.misbehave_prob
            };
            let counts = (0..cfg.msps)
                .map(|_| {
                    let mut c = InteractionCounts::default();
                    for _ in 0..cfg.history_rounds {
                        if rng.random_bool(positive_rate) {
                            c.positive += 1;
                        } else {
                            c.negative += 1;
                        }
                    }
                    c
                })
                .collect();
            WorkerProfile {
                worker_id: i as u64,
                honest: honest[i],
                counts,
                misbehave_prob: vec![if honest[i] { 0.0 } else { cfg.misbehave_prob }; cfg.msps],
            }
        })
        .collect();
    Population { workers, msps: cfg.msps }
}
