//! Selection comparison: the reputation-screened coalition pipeline versus
//! uniform random worker selection, at matched equilibrium play.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::stackelberg::{
    expected_new_local_reputation, reputation_update_bounds, reputation_weight,
    reward_probability, worker_best_response, Game, WorkerGameData,
};

use super::config::{ScenarioConfig, Scheme};
use super::pipeline::run_worker_selection;
use super::population::{bootstrap_population, Population};
use super::stats::csv_table;
use super::{derive_seed, ScenarioError};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub n: usize,
    pub scheme: String,
    pub misbehavior_ratio: f64,
    pub msp_utility: f64,
    pub mean_worker_utility: f64,
}

/// Measured maxima over the worker-count grid, next to the reference
/// improvement figures this comparison is judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSummaryRow {
    pub misbehavior_ratio: f64,
    pub max_msp_improvement_pct: f64,
    pub reference_msp_improvement_pct: f64,
    pub max_worker_improvement_pct: f64,
    pub reference_worker_improvement_pct: f64,
}

pub const REFERENCE_MSP_IMPROVEMENT_PCT: f64 = 24.0;
pub const REFERENCE_WORKER_IMPROVEMENT_PCT: f64 = 57.0;

struct RealizedUtilities {
    msp: f64,
    mean_worker: f64,
}

/// Plays the game for the given worker set and applies the sampled
/// misbehavior: a worker that misbehaves on this task contributes nothing
/// to the leader's contribution sum and collects the negative reputation
/// update, while its payout terms still count.
fn realized_utilities(
    cfg: &ScenarioConfig,
    pop: &Population,
    composites: &[f64],
    selected: &[usize],
    misbehaves: &[bool],
    k: usize,
) -> Result<RealizedUtilities, ScenarioError> {
    let rep = cfg.reputation_params();
    let comm = cfg.comm_model();
    let inc = cfg.incentive_params();
    let comp = cfg.comp_model(cfg.task_amount / k as f64);
    let n = selected.len();
    let game = Game::new(&comm, &comp, &inc, &rep, k, n);

    let workers: Vec<WorkerGameData> = selected
        .iter()
        .map(|&w| WorkerGameData {
            counts: pop.workers[w].counts[0],
            composite_reputation: composites[w],
        })
        .collect();
    let sol = game.solve_equilibrium(&workers)?;

    let mut contribution = 0.0;
    let mut payout = 0.0;
    let mut worker_total = 0.0;
    for (i, &w) in selected.iter().enumerate() {
        let data = &workers[i];
        let terms = game.derive_terms(data.counts)?;
        let mu = worker_best_response(sol.r_com_star, &terms, &comp);
        let p = reward_probability(mu, &terms);
        let h = reputation_weight(data.composite_reputation, &rep, &inc)?;
        let behaves = !misbehaves[w];
        if behaves {
            contribution += (1.0 + mu).ln() * h;
        }
        payout += p * sol.r_com_star;

        let rep_term = if behaves {
            expected_new_local_reputation(data.counts, &rep, p)
        } else {
            // A misbehaving worker's interaction is a negative event.
            reputation_update_bounds(data.counts, &rep).1
        };
        worker_total +=
            inc.xi * game.worker_profit(mu, sol.r_com_star, &terms) + inc.beta * rep_term;
    }
    Ok(RealizedUtilities {
        msp: inc.nu * contribution - n as f64 * inc.r_base - payout,
        mean_worker: worker_total / n as f64,
    })
}

/// Compares the proposed pipeline against uniform random selection over the
/// configured worker-count grid and misbehavior ratios.
pub fn run_selection_comparison(
    cfg: &ScenarioConfig,
) -> Result<(Vec<SelectionRow>, Vec<SelectionSummaryRow>), ScenarioError> {
    let k = cfg.selection_k;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();

    for (mr_idx, &mr) in cfg.selection_mr_grid.iter().enumerate() {
        let mut cell_cfg = cfg.clone();
        cell_cfg.misbehavior_ratio = mr;
        cell_cfg.validate()?;
        let mut rng =
            ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 0x5e1ec7 + mr_idx as u64));
        let pop = bootstrap_population(&cell_cfg, &mut rng);
        let pipeline = run_worker_selection(&cell_cfg, &pop)?;

        // One behavior draw per worker and ratio: a worker acts the same
        // under both schemes.
        let misbehaves: Vec<bool> = pop
            .workers
            .iter()
            .map(|w| !w.honest && rng.random_bool(w.misbehave_prob[0]))
            .collect();

        let mut max_msp_pct = f64::NEG_INFINITY;
        let mut max_worker_pct = f64::NEG_INFINITY;
        for &n in &cfg.n_grid {
            if k >= n {
                return Err(ScenarioError::Config(format!(
                    "selection_k {k} must be below every n_grid entry, got n={n}"
                )));
            }
            // Proposed: the best coalition's workers, topped up from the
            // remaining screened workers when the coalition is too small.
            let mut proposed: Vec<usize> = pipeline.selected_workers.iter().copied().take(n).collect();
            if proposed.len() < n {
                let mut rest: Vec<usize> = (0..pop.len())
                    .filter(|i| {
                        !proposed.contains(i)
                            && pipeline.composites[*i] >= cell_cfg.rep_threshold
                    })
                    .collect();
                rest.sort_by(|&a, &b| {
                    pipeline.composites[b].total_cmp(&pipeline.composites[a]).then(a.cmp(&b))
                });
                proposed.extend(rest.into_iter().take(n - proposed.len()));
            }
            if proposed.len() < n {
                return Err(ScenarioError::NotEnoughWorkers { needed: n, got: proposed.len() });
            }

            let random: Vec<usize> = sample(&mut rng, pop.len(), n).into_iter().collect();

            let prop =
                realized_utilities(&cell_cfg, &pop, &pipeline.composites, &proposed, &misbehaves, k)?;
            let rand =
                realized_utilities(&cell_cfg, &pop, &pipeline.composites, &random, &misbehaves, k)?;

            rows.push(SelectionRow {
                n,
                scheme: Scheme::Proposed.name().into(),
                misbehavior_ratio: mr,
                msp_utility: prop.msp,
                mean_worker_utility: prop.mean_worker,
            });
            rows.push(SelectionRow {
                n,
                scheme: Scheme::RandomSelection.name().into(),
                misbehavior_ratio: mr,
                msp_utility: rand.msp,
                mean_worker_utility: rand.mean_worker,
            });

            max_msp_pct = max_msp_pct
                .max(100.0 * (prop.msp - rand.msp) / rand.msp.abs().max(1e-9));
            max_worker_pct = max_worker_pct.max(
                100.0 * (prop.mean_worker - rand.mean_worker)
                    / rand.mean_worker.abs().max(1e-9),
            );
        }
        summaries.push(SelectionSummaryRow {
            misbehavior_ratio: mr,
            max_msp_improvement_pct: max_msp_pct,
            reference_msp_improvement_pct: REFERENCE_MSP_IMPROVEMENT_PCT,
            max_worker_improvement_pct: max_worker_pct,
            reference_worker_improvement_pct: REFERENCE_WORKER_IMPROVEMENT_PCT,
        });
    }
    Ok((rows, summaries))
}

pub fn selection_csv(rows: &[SelectionRow]) -> String {
    csv_table(
        &["n", "scheme", "misbehavior_ratio", "msp_utility", "mean_worker_utility"],
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.scheme.clone(),
                r.misbehavior_ratio.to_string(),
                r.msp_utility.to_string(),
                r.mean_worker_utility.to_string(),
            ]
        }),
    )
}

pub fn selection_summary_csv(rows: &[SelectionSummaryRow]) -> String {
    csv_table(
        &[
            "misbehavior_ratio",
            "max_msp_improvement_pct",
            "reference_msp_improvement_pct",
            "max_worker_improvement_pct",
            "reference_worker_improvement_pct",
        ],
        rows.iter().map(|r| {
            vec![
                r.misbehavior_ratio.to_string(),
                r.max_msp_improvement_pct.to_string(),
                r.reference_msp_improvement_pct.to_string(),
                r.max_worker_improvement_pct.to_string(),
                r.reference_worker_improvement_pct.to_string(),
            ]
        }),
    )
}
