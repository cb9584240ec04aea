//! End-to-end protocol run: recruitment through coded execution, rewards,
//! and reputation updates, with every step leaving ledger records.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::cdc::{
    decode_from_k, sample_completion_times, shard_compute, split_encode, task_latency, CdcTask,
};
use crate::coalition::TraceStep as FormationStep;
use crate::ledger::{ChainedLedger, Transaction, TxKind};
use crate::reputation::{local_opinion, InteractionCounts, TaskOutcome};
use crate::stackelberg::{EquilibriumSolution, Game, WorkerGameData};

use super::config::ScenarioConfig;
use super::pipeline::{run_worker_selection, PipelineOutcome};
use super::population::bootstrap_population;
use super::stats::csv_table;
use super::{derive_seed, ScenarioError};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub description: String,
    pub reputation_txs: usize,
    pub resource_txs: usize,
    pub detail: String,
}

#[derive(Debug)]
pub struct FullProtocolOutcome {
    pub trace: Vec<TraceRow>,
    pub selected: Vec<usize>,
    pub equilibrium: EquilibriumSolution,
    pub result: Array1<f64>,
    pub reference: Array1<f64>,
    pub latency_s: f64,
    /// Positions (within the selected list) of the workers whose results
    /// arrived among the fastest k.
    pub fastest: Vec<usize>,
    pub rep_chain: ChainedLedger,
    pub res_chain: ChainedLedger,
    /// The observer's updated interaction tallies for the selected workers.
    pub final_counts: Vec<InteractionCounts>,
    pub pipeline_composites: Vec<f64>,
    /// Accepted merge/split steps of the coalition formation, for audit.
    pub formation_trace: Vec<FormationStep>,
}

fn sealed_tx_count(l: &ChainedLedger) -> usize {
    l.transactions().count()
}

/// Runs the whole protocol once. Steps 1 through 6 ride on the selection
/// pipeline; this function continues with the incentive game, the coded
/// execution at the equilibrium speeds, reward settlement on the resource
/// chain, and reputation updates on the reputation chain.
pub fn run_full_protocol(cfg: &ScenarioConfig) -> Result<FullProtocolOutcome, ScenarioError> {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 0xf011));
    let pop = bootstrap_population(cfg, &mut rng);
    let mut trace = Vec::new();

    let PipelineOutcome {
        composites,
        discarded,
        formation,
        selected_workers,
        mut rep_chain,
        mut res_chain,
        mut clock,
        ..
    } = run_worker_selection(cfg, &pop)?;
    trace.push(TraceRow {
        step: 1,
        description: "recruitment and worker registration".into(),
        reputation_txs: sealed_tx_count(&rep_chain),
        resource_txs: sealed_tx_count(&res_chain),
        detail: format!("{} workers online", pop.len()),
    });
    trace.push(TraceRow {
        step: 3,
        description: "reputation screening".into(),
        reputation_txs: sealed_tx_count(&rep_chain),
        resource_txs: sealed_tx_count(&res_chain),
        detail: format!("{} discarded below {}", discarded.len(), cfg.rep_threshold),
    });
    trace.push(TraceRow {
        step: 4,
        description: "coalition formation".into(),
        reputation_txs: sealed_tx_count(&rep_chain),
        resource_txs: sealed_tx_count(&res_chain),
        detail: format!(
            "{} coalitions, winner of {} miners, {} formation steps",
            formation.partition.len(),
            formation.best.size(),
            formation.trace.len()
        ),
    });

    // Step 7: pick the n workers, solve the game, execute the coded task.
    // When the winning coalition is smaller than n, top up from the other
    // screened workers, best reputation first.
    let mut selected: Vec<usize> = selected_workers.iter().copied().take(cfg.n).collect();
    if selected.len() < cfg.n {
        let mut rest: Vec<usize> = (0..pop.len())
            .filter(|i| !selected.contains(i) && composites[*i] >= cfg.rep_threshold)
            .collect();
        rest.sort_by(|&a, &b| composites[b].total_cmp(&composites[a]).then(a.cmp(&b)));
        selected.extend(rest.into_iter().take(cfg.n - selected.len()));
    }
    if selected.len() < cfg.n {
        return Err(ScenarioError::NotEnoughWorkers { needed: cfg.n, got: selected.len() });
    }

    let matrix = match &cfg.matrix_file {
        Some(path) => crate::cdc::load_matrix(path)?,
        None => {
            let mut task_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 0x7a5c));
            Array2::from_shape_fn((cfg.task_rows, cfg.task_cols), |_| {
                task_rng.random_range(-1.0..1.0)
            })
        }
    };
    let mut task_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 0x7a5d));
    let vector = Array1::from_shape_fn(matrix.ncols(), |_| task_rng.random_range(-1.0..1.0));
    let task = CdcTask::new(matrix, vector, cfg.k, cfg.n)?;
    let reference = task.reference_result();

    let work = (task.matrix.nrows() * task.matrix.ncols()) as f64;
    let comm = cfg.comm_model();
    let comp = cfg.comp_model(work / cfg.k as f64);
    let inc = cfg.incentive_params();
    let rep = cfg.reputation_params();
    let game = Game::new(&comm, &comp, &inc, &rep, cfg.k, cfg.n);
    let worker_data: Vec<WorkerGameData> = selected
        .iter()
        .map(|&w| WorkerGameData {
            counts: pop.workers[w].counts[0],
            composite_reputation: composites[w],
        })
        .collect();
    let equilibrium = game.solve_equilibrium(&worker_data)?;

    let encoding = split_encode(&task, derive_seed(cfg.seed, 0xc0de))?;
    let partials: Vec<Array1<f64>> = encoding
        .shards
        .iter()
        .map(|s| shard_compute(s, &task.vector.view()))
        .collect::<Result<_, _>>()?;
    let samples = sample_completion_times(
        &equilibrium.mu_star,
        &comm,
        &comp,
        derive_seed(cfg.seed, 0x1a7e),
    );
    let latency_s = task_latency(&samples, cfg.k)?;

    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.sort_by(|&a, &b| samples[a].total.total_cmp(&samples[b].total));
    let fastest: Vec<usize> = order[..cfg.k].to_vec();
    let results: Vec<(usize, Array1<f64>)> =
        fastest.iter().map(|&i| (i, partials[i].clone())).collect();
    let result = decode_from_k(&results, &encoding.generator.view(), task.matrix.nrows())?;
    trace.push(TraceRow {
        step: 7,
        description: "equilibrium allocation and coded execution".into(),
        reputation_txs: sealed_tx_count(&rep_chain),
        resource_txs: sealed_tx_count(&res_chain),
        detail: format!(
            "reward {}, latency {}s, decoded from shards {:?}",
            equilibrium.r_com_star, latency_s, fastest
        ),
    });

    // Step 8: record the interactions and pay rewards on the resource chain.
    clock += 1;
    let task_id = derive_seed(cfg.seed, 0x7a5b);
    for (i, &w) in selected.iter().enumerate() {
        let in_time = fastest.contains(&i);
        let reward = cfg.r_base + if in_time { equilibrium.r_com_star } else { 0.0 };
        let outcome = if in_time { TaskOutcome::Positive } else { TaskOutcome::Negative };
        res_chain.append_tx(
            Transaction::new(
                TxKind::ResourceInteraction {
                    msp: 0,
                    worker: w as u64,
                    task_id,
                    reward,
                    outcome,
                },
                clock,
            ),
            clock,
        )?;
    }
    res_chain.seal_all(clock);
    trace.push(TraceRow {
        step: 8,
        description: "resource interactions and rewards".into(),
        reputation_txs: sealed_tx_count(&rep_chain),
        resource_txs: sealed_tx_count(&res_chain),
        detail: format!("{} interactions recorded", selected.len()),
    });

    // Step 9: the observer updates its local opinions on the reputation chain.
    clock += 1;
    let mut final_counts = Vec::with_capacity(selected.len());
    for (i, &w) in selected.iter().enumerate() {
        let outcome = if fastest.contains(&i) { TaskOutcome::Positive } else { TaskOutcome::Negative };
        let counts = pop.workers[w].counts[0].record(outcome);
        final_counts.push(counts);
        rep_chain.append_tx(
            Transaction::new(
                TxKind::ReputationUpdate {
                    msp: 0,
                    worker: w as u64,
                    opinion: local_opinion(counts, &rep),
                },
                clock,
            ),
            clock,
        )?;
    }
    rep_chain.seal_all(clock);
    trace.push(TraceRow {
        step: 9,
        description: "reputation updates".into(),
        reputation_txs: sealed_tx_count(&rep_chain),
        resource_txs: sealed_tx_count(&res_chain),
        detail: format!("{} opinions refreshed", selected.len()),
    });

    Ok(FullProtocolOutcome {
        trace,
        selected,
        equilibrium,
        result,
        reference,
        latency_s,
        fastest,
        rep_chain,
        res_chain,
        final_counts,
        pipeline_composites: composites,
        formation_trace: formation.trace,
    })
}

/// Formation trace as JSON lines, one accepted merge or split per line.
pub fn formation_trace_jsonl(steps: &[FormationStep]) -> String {
    steps
        .iter()
        .map(|s| serde_json::to_string(s).expect("trace steps serialize"))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    csv_table(
        &["step", "description", "reputation_txs", "resource_txs", "detail"],
        rows.iter().map(|r| {
            vec![
                r.step.to_string(),
                r.description.clone(),
                r.reputation_txs.to_string(),
                r.resource_txs.to_string(),
                // Commas inside the free-form detail would break the row.
                r.detail.replace(',', ";"),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.workers = 4;
        cfg.miners = 2;
        cfg.msps = 2;
        cfg.n = 3;
        cfg.k = 2;
        cfg.task_rows = 10;
        cfg.task_cols = 6;
        cfg.misbehavior_ratio = 0.0;
        cfg
    }

    #[test]
    fn smoke_run_completes_and_chains_verify() {
        let out = run_full_protocol(&smoke_cfg()).unwrap();
        assert!(out.rep_chain.verify_chain());
        assert!(out.res_chain.verify_chain());
        assert_eq!(out.selected.len(), 3);
        assert_eq!(out.fastest.len(), 2);
        assert_eq!(out.trace.last().unwrap().step, 9);
    }

    #[test]
    fn decoded_result_matches_reference() {
        let out = run_full_protocol(&smoke_cfg()).unwrap();
        let scale = out.reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in out.result.iter().zip(out.reference.iter()) {
            assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn reputation_chain_replays_to_final_state() {
        let cfg = smoke_cfg();
        let out = run_full_protocol(&cfg).unwrap();
        let state = out.rep_chain.reputation_state();
        let rep = cfg.reputation_params();
        for (&w, counts) in out.selected.iter().zip(&out.final_counts) {
            let expected = local_opinion(*counts, &rep);
            assert_eq!(state.latest.get(&(0, w as u64)), Some(&expected));
        }
    }

    #[test]
    fn every_reward_has_a_resource_record() {
        let out = run_full_protocol(&smoke_cfg()).unwrap();
        let mut recorded = 0;
        for tx in out.res_chain.transactions() {
            if let TxKind::ResourceInteraction { worker, reward, outcome, .. } = &tx.kind {
                recorded += 1;
                let i = out.selected.iter().position(|&w| w as u64 == *worker).unwrap();
                if out.fastest.contains(&i) {
                    assert_eq!(*outcome, TaskOutcome::Positive);
                    assert!(*reward > 10.0);
                } else {
                    assert_eq!(*outcome, TaskOutcome::Negative);
                    assert_eq!(*reward, 10.0);
                }
            }
        }
        assert_eq!(recorded, out.selected.len());
    }
}
