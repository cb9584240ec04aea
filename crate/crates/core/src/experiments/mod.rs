//! Deterministic scenario runner.
//!
//! Each scenario wires the reputation, coalition, incentive, coded
//! execution, and ledger subsystems together and produces CSV tables. A
//! scenario is a pure function of its [`ScenarioConfig`]; the same seed
//! yields byte-identical output. Sweep cells draw their randomness from
//! per-cell derived seeds, so they are order-independent and could run
//! concurrently.

pub mod attack;
pub mod config;
pub mod full_protocol;
pub mod ledger_bench;
pub mod misbehavior;
pub mod pipeline;
pub mod population;
pub mod selection;
pub mod stats;
pub mod task_sweep;

use std::str::FromStr;

use thiserror::Error;

use crate::cdc::CdcError;
use crate::coalition::CoalitionError;
use crate::ledger::LedgerError;
use crate::reputation::ReputationError;
use crate::stackelberg::GameError;

pub use config::{default_config_text, ScenarioConfig, Scheme};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error("not enough eligible workers: needed {needed}, got {got}")]
    NotEnoughWorkers { needed: usize, got: usize },
    #[error("reputation: {0}")]
    Reputation(#[from] ReputationError),
    #[error("coalition: {0}")]
    Coalition(CoalitionError),
    #[error("game: {0}")]
    Game(#[from] GameError),
    #[error("coded execution: {0}")]
    Cdc(#[from] CdcError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
}

/// Mixes a stream index into the master seed (splitmix64 finalizer), so
/// every sweep cell and sampling stage gets an independent stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The runnable scenarios, by CLI name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Attack,
    Misbehavior,
    TaskSweep,
    Selection,
    Full,
    LedgerBench,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Attack,
        ScenarioKind::Misbehavior,
        ScenarioKind::TaskSweep,
        ScenarioKind::Selection,
        ScenarioKind::Full,
        ScenarioKind::LedgerBench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Attack => "attack",
            ScenarioKind::Misbehavior => "misbehavior",
            ScenarioKind::TaskSweep => "task-sweep",
            ScenarioKind::Selection => "selection",
            ScenarioKind::Full => "full",
            ScenarioKind::LedgerBench => "ledger-bench",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown scenario {s:?} (expected one of {})",
                    ScenarioKind::ALL.map(|k| k.name()).join(", ")
                )
            })
    }
}

/// Files produced by one scenario run: `(file name, contents)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub files: Vec<(String, String)>,
}

/// Runs one scenario to completion and renders its output files.
pub fn run_scenario(kind: ScenarioKind, cfg: &ScenarioConfig) -> Result<ScenarioOutput, ScenarioError> {
    cfg.validate()?;
    let files = match kind {
        ScenarioKind::Attack => {
            let out = attack::run_reputation_attack(cfg)?;
            vec![("attack.csv".into(), attack::attack_csv(&out.rows))]
        }
        ScenarioKind::Misbehavior => {
            let rows = misbehavior::run_misbehavior_sweep(cfg)?;
            vec![("misbehavior.csv".into(), misbehavior::misbehavior_csv(&rows))]
        }
        ScenarioKind::TaskSweep => {
            let (rows, errors) = task_sweep::run_task_amount_sweep(cfg)?;
            let mut files = vec![("task_sweep.csv".into(), task_sweep::task_sweep_csv(&rows))];
            if !errors.is_empty() {
                files.push(("task_sweep_errors.txt".into(), errors.join("\n") + "\n"));
            }
            if cfg.dump_diagnostics {
                files.push((
                    "reward_diagnostics.csv".into(),
                    task_sweep::reward_diagnostics_csv(cfg)?,
                ));
            }
            files
        }
        ScenarioKind::Selection => {
            let (rows, summaries) = selection::run_selection_comparison(cfg)?;
            vec![
                ("selection.csv".into(), selection::selection_csv(&rows)),
                ("selection_summary.csv".into(), selection::selection_summary_csv(&summaries)),
            ]
        }
        ScenarioKind::Full => {
            let out = full_protocol::run_full_protocol(cfg)?;
            vec![
                ("full_trace.csv".into(), full_protocol::trace_csv(&out.trace)),
                ("formation_trace.jsonl".into(), full_protocol::formation_trace_jsonl(&out.formation_trace)),
                ("result_y.csv".into(), crate::cdc::vector_to_csv(&out.result.view())),
                ("reputation.chain".into(), out.rep_chain.save_to_string()),
                ("resource.chain".into(), out.res_chain.save_to_string()),
            ]
        }
        ScenarioKind::LedgerBench => {
            let rows = ledger_bench::run_ledger_bench(cfg);
            vec![("ledger_bench.csv".into(), ledger_bench::ledger_bench_csv(&rows))]
        }
    };
    Ok(ScenarioOutput { files })
}
