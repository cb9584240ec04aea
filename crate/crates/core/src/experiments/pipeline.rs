//! The worker-selection pipeline: recruitment, cross-chain reputation
//! query, per-miner screening, and coalition formation, all recorded on the
//! chain pair.

use crate::coalition::{
    assign_workers, form_coalitions, CoalitionConfig, FormationOutcome, MinerAssignment,
    MinerTable,
};
use crate::ledger::{
    ChainId, ChainedLedger, CrossChainBridge, QueryRequest, ReputationQuery,
    ReputationQueryResponse, SimMicros, Transaction, TxKind, LATEST_REPUTATION_HANDLER,
};
use crate::reputation::{local_opinion, Opinion};

use super::config::ScenarioConfig;
use super::population::Population;
use super::ScenarioError;

/// Everything the selection phase produced, chains included.
#[derive(Debug)]
pub struct PipelineOutcome {
    /// Composite reputation of every worker from the observer's (msp 0)
    /// perspective, as answered by the reputation chain.
    pub composites: Vec<f64>,
    pub opinions: Vec<Opinion>,
    /// Worker indices screened out below the reputation threshold.
    pub discarded: Vec<usize>,
    pub formation: FormationOutcome,
    /// Workers of the winning coalition, highest composite first.
    pub selected_workers: Vec<usize>,
    pub rep_chain: ChainedLedger,
    pub res_chain: ChainedLedger,
    pub clock: SimMicros,
}

/// Runs the selection phase for `pop` and records every step on a fresh
/// chain pair:
///
/// 1. workers register on the resource chain and every msp's local opinion
///    lands on the reputation chain;
/// 2. the observer msp posts a recruitment transaction;
/// 3. the resource chain queries the reputation chain for composite
///    opinions of all online workers;
/// 4. miners screen their assigned workers against the threshold;
/// 5. miners form coalitions and the highest-utility coalition wins;
/// 6. the winning coalition's worker reputations go back across the bridge.
pub fn run_worker_selection(
    cfg: &ScenarioConfig,
    pop: &Population,
) -> Result<PipelineOutcome, ScenarioError> {
    let rep_params = cfg.reputation_params();
    let mut rep_chain = ChainedLedger::new(ChainId::Reputation);
    let mut res_chain = ChainedLedger::new(ChainId::Resource);
    rep_chain.block_size = cfg.block_size;
    res_chain.block_size = cfg.block_size;
    let mut now: SimMicros = 0;

    for worker in &pop.workers {
        res_chain.append_tx(
            Transaction::new(
                TxKind::WorkerRegistration { worker: worker.worker_id, metadata: String::new() },
                now,
            ),
            now,
        )?;
    }
    for msp in 0..pop.msps {
        for worker in &pop.workers {
            let opinion = local_opinion(worker.counts[msp], &rep_params);
            rep_chain.append_tx(
                Transaction::new(
                    TxKind::ReputationUpdate { msp: msp as u64, worker: worker.worker_id, opinion },
                    now,
                ),
                now,
            )?;
        }
    }
    now += 1;
    res_chain.seal_all(now);
    rep_chain.seal_all(now);

    // Step 1: recruitment.
    now += 1;
    res_chain.append_tx(
        Transaction::new(
            TxKind::Recruitment {
                msp: 0,
                rep_threshold: cfg.rep_threshold,
                task_descriptor: format!("matvec {}x{}", cfg.task_rows, cfg.task_cols),
            },
            now,
        ),
        now,
    )?;
    res_chain.seal_all(now);

    // Steps 2-3: composite opinions of all online workers via the bridge.
    now += 1;
    let bridge = CrossChainBridge::new();
    let query = ReputationQuery {
        observer: 0,
        gamma: cfg.gamma,
        workers: pop.workers.iter().map(|w| w.worker_id).collect(),
    };
    let outcome = bridge.query(
        &mut res_chain,
        &mut rep_chain,
        &QueryRequest { handler: LATEST_REPUTATION_HANDLER.into(), params: query.encode() },
        now,
    )?;
    let response = ReputationQueryResponse::decode(&outcome.payload)?;
    res_chain.seal_all(now);
    rep_chain.seal_all(now);

    let composites: Vec<f64> = response.entries.iter().map(|(_, _, v)| *v).collect();
    let opinions: Vec<Opinion> = response.entries.iter().map(|(_, op, _)| *op).collect();

    // Step 4: miners screen their assignments against the threshold.
    let worker_reps: Vec<(u64, f64)> = response
        .entries
        .iter()
        .map(|(w, _, v)| (*w, *v))
        .collect();
    let discarded: Vec<usize> = composites
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < cfg.rep_threshold)
        .map(|(i, _)| i)
        .collect();
    let assignments: Vec<MinerAssignment> = assign_workers(&worker_reps, cfg.miners)
        .into_iter()
        .map(|mut a| {
            a.workers.retain(|(_, v)| *v >= cfg.rep_threshold);
            a
        })
        .collect();

    // Step 5: coalition formation over the screened assignments.
    let table = MinerTable::new(&assignments)?;
    let total_reputation_sum: f64 = composites.iter().sum();
    let coalition_cfg = CoalitionConfig {
        total_miners: cfg.miners,
        delta: cfg.delta,
        rho: cfg.rho,
        barrier_offset: cfg.barrier_offset,
        preference: cfg.preference_order(),
        total_reputation_sum,
    };
    let formation = form_coalitions(&table, &coalition_cfg, None)?;

    let mut selected_workers: Vec<usize> = assignments
        .iter()
        .filter(|a| formation.best.contains(a.miner_id))
        .flat_map(|a| a.workers.iter().map(|(w, _)| *w as usize))
        .collect();
    selected_workers.sort_by(|&a, &b| composites[b].total_cmp(&composites[a]).then(a.cmp(&b)));

    // Step 6: the winning coalition's worker reputations cross back.
    now += 1;
    let selected_resp = ReputationQueryResponse {
        entries: selected_workers
            .iter()
            .map(|&w| (w as u64, opinions[w], composites[w]))
            .collect(),
    };
    record_cross_chain_result(&mut rep_chain, &mut res_chain, selected_resp.encode(), now)?;
    rep_chain.seal_all(now);
    res_chain.seal_all(now);

    Ok(PipelineOutcome {
        composites,
        opinions,
        discarded,
        formation,
        selected_workers,
        rep_chain,
        res_chain,
        clock: now,
    })
}

/// Records an identical cross-chain result transaction on both chains.
pub fn record_cross_chain_result(
    rep_chain: &mut ChainedLedger,
    res_chain: &mut ChainedLedger,
    payload: Vec<u8>,
    now: SimMicros,
) -> Result<(), ScenarioError> {
    let tx = TxKind::CrossChainResult { payload };
    rep_chain.append_tx(Transaction::new(tx.clone(), now), now)?;
    res_chain.append_tx(Transaction::new(tx, now), now)?;
    Ok(())
}

/// Mean composite reputation of the given workers.
pub fn mean_composite(composites: &[f64], workers: &[usize]) -> f64 {
    if workers.is_empty() {
        return f64::NAN;
    }
    workers.iter().map(|&w| composites[w]).sum::<f64>() / workers.len() as f64
}

/// Double checks a pipeline invariant: no selected worker sits below the
/// threshold.
pub fn assert_scheme_isolation(outcome: &PipelineOutcome, threshold: f64) -> bool {
    outcome
        .selected_workers
        .iter()
        .all(|&w| outcome.composites[w] >= threshold)
}

#[allow(unused_imports)]
use crate::coalition::CoalitionError;

impl From<CoalitionError> for ScenarioError {
    fn from(e: CoalitionError) -> Self {
        ScenarioError::Coalition(e)
    }
}
