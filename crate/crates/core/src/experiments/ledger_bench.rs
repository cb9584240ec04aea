//! Single- versus double-chain throughput and latency over a transaction
//! count grid.

use crate::ledger::{measure_throughput, ChainSetup};

use super::config::ScenarioConfig;
use super::stats::csv_table;

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerBenchRow {
    pub n_txs: usize,
    pub configuration: &'static str,
    pub throughput_tps: f64,
    pub avg_latency_s: f64,
}

pub fn run_ledger_bench(cfg: &ScenarioConfig) -> Vec<LedgerBenchRow> {
    let mut rows = Vec::new();
    for &n_txs in &cfg.ledger_tx_counts {
        for setup in [ChainSetup::Single, ChainSetup::Double] {
            let (throughput_tps, avg_latency_s) =
                measure_throughput(setup, n_txs, cfg.service_time_us);
            rows.push(LedgerBenchRow {
                n_txs,
                configuration: setup.name(),
                throughput_tps,
                avg_latency_s,
            });
        }
    }
    rows
}

pub fn ledger_bench_csv(rows: &[LedgerBenchRow]) -> String {
    csv_table(
        &["n_txs", "configuration", "throughput_tps", "avg_latency_s"],
        rows.iter().map(|r| {
            vec![
                r.n_txs.to_string(),
                r.configuration.to_string(),
                r.throughput_tps.to_string(),
                r.avg_latency_s.to_string(),
            ]
        }),
    )
}
