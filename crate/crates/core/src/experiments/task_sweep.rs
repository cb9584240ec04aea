//! Task-amount sweep: the equilibrium reward, utilities, and speeds as the
//! total rendering workload grows, per (n, k) coding variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::reputation::{local_opinion, reputation_value, InteractionCounts};
use crate::stackelberg::{Game, GameError, WorkerGameData};

use super::config::ScenarioConfig;
use super::stats::{csv_table, mean};
use super::{derive_seed, ScenarioError};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSweepRow {
    pub task_amount: f64,
    pub n: usize,
    pub k: usize,
    /// `ok`, or the error name for cells that cannot be solved.
    pub status: String,
    pub r_com_star: f64,
    pub msp_utility: f64,
    pub mean_mu_star: f64,
    pub mean_worker_utility: f64,
}

/// Draws one worker pool per (n, k) variant (so the amount axis is smooth)
/// and solves the equilibrium at every task amount with the per-worker
/// share `amount / k`. Failed cells are reported with their error, never
/// dropped.
pub fn run_task_amount_sweep(
    cfg: &ScenarioConfig,
) -> Result<(Vec<TaskSweepRow>, Vec<String>), ScenarioError> {
    let rep = cfg.reputation_params();
    let comm = cfg.comm_model();
    let inc = cfg.incentive_params();
    let mut rows = Vec::new();
    let mut errors = Vec::new();

    for (pair_idx, &(n, k)) in cfg.nk_pairs.iter().enumerate() {
        if !(1 <= k && k < n) {
            return Err(ScenarioError::Config(format!("nk_pairs entry needs 1 <= k < n, got {n}:{k}")));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 0x5eed + pair_idx as u64));
        let workers: Vec<WorkerGameData> = (0..n)
            .map(|_| {
                let counts =
                    InteractionCounts::new(rng.random_range(20..60), rng.random_range(0..5));
                WorkerGameData {
                    counts,
                    composite_reputation: reputation_value(local_opinion(counts, &rep), rep.gamma),
                }
            })
            .collect();

        for &amount in &cfg.task_amounts {
            let comp = cfg.comp_model(amount / k as f64);
            let game = Game::new(&comm, &comp, &inc, &rep, k, n);
            match game.solve_equilibrium(&workers) {
                Ok(sol) => rows.push(TaskSweepRow {
                    task_amount: amount,
                    n,
                    k,
                    status: "ok".into(),
                    r_com_star: sol.r_com_star,
                    msp_utility: sol.leader_utility,
                    mean_mu_star: mean(&sol.mu_star),
                    mean_worker_utility: mean(&sol.follower_utilities),
                }),
                Err(e @ GameError::NonPositiveA(_)) => {
                    errors.push(format!("amount={amount} n={n} k={k}: {e}"));
                    rows.push(TaskSweepRow {
                        task_amount: amount,
                        n,
                        k,
                        status: "non-positive-exponent-rate".into(),
                        r_com_star: f64::NAN,
                        msp_utility: f64::NAN,
                        mean_mu_star: f64::NAN,
                        mean_worker_utility: f64::NAN,
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok((rows, errors))
}

pub fn task_sweep_csv(rows: &[TaskSweepRow]) -> String {
    csv_table(
        &["task_amount", "n", "k", "status", "r_com_star", "msp_utility", "mean_mu_star", "mean_worker_utility"],
        rows.iter().map(|r| {
            vec![
                r.task_amount.to_string(),
                r.n.to_string(),
                r.k.to_string(),
                r.status.clone(),
                r.r_com_star.to_string(),
                r.msp_utility.to_string(),
                r.mean_mu_star.to_string(),
                r.mean_worker_utility.to_string(),
            ]
        }),
    )
}

/// Diagnostic grid for the first sweep cell, as CSV.
pub fn reward_diagnostics_csv(cfg: &ScenarioConfig) -> Result<String, ScenarioError> {
    let rep = cfg.reputation_params();
    let comm = cfg.comm_model();
    let inc = cfg.incentive_params();
    let (n, k) = *cfg
        .nk_pairs
        .first()
        .ok_or_else(|| ScenarioError::Config("nk_pairs is empty".into()))?;
    let amount = *cfg
        .task_amounts
        .first()
        .ok_or_else(|| ScenarioError::Config("task_amounts is empty".into()))?;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 0x5eed));
    let workers: Vec<WorkerGameData> = (0..n)
        .map(|_| {
            let counts = InteractionCounts::new(rng.random_range(20..60), rng.random_range(0..5));
            WorkerGameData {
                counts,
                composite_reputation: reputation_value(local_opinion(counts, &rep), rep.gamma),
            }
        })
        .collect();
    let comp = cfg.comp_model(amount / k as f64);
    let game = Game::new(&comm, &comp, &inc, &rep, k, n);
    let grid = game.reward_diagnostics(&workers, 257)?;
    Ok(csv_table(
        &["r_com", "msp_utility", "marginal_utility"],
        grid.iter().map(|(r, u, g)| vec![r.to_string(), u.to_string(), g.to_string()]),
    ))
}
