//! Shared fixture builders for the benchmarks.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use rcdc_core::cdc::CdcTask;
use rcdc_core::coalition::{CoalitionConfig, MinerAssignment, MinerTable, PreferenceOrder};
use rcdc_core::reputation::InteractionCounts;
use rcdc_core::stackelberg::WorkerGameData;

pub fn random_workers(n: usize, seed: u64) -> Vec<WorkerGameData> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| WorkerGameData {
            counts: InteractionCounts::new(rng.random_range(10..80), rng.random_range(0..8)),
            composite_reputation: rng.random_range(0.6..1.0),
        })
        .collect()
}

pub fn random_miner_instance(miners: usize, seed: u64) -> (MinerTable, CoalitionConfig) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let assignments: Vec<MinerAssignment> = (0..miners)
        .map(|miner_id| MinerAssignment {
            miner_id,
            workers: (0..5)
                .map(|i| ((miner_id * 5 + i) as u64, rng.random_range(0.6..1.0)))
                .collect(),
        })
        .collect();
    let table = MinerTable::new(&assignments).unwrap();
    let total = table.total_reputation();
    let cfg = CoalitionConfig {
        total_miners: miners,
        delta: 1.0,
        rho: 0.01,
        barrier_offset: 0.1,
        preference: PreferenceOrder::Pareto,
        total_reputation_sum: total,
    };
    (table, cfg)
}

pub fn random_task(rows: usize, cols: usize, k: usize, n: usize, seed: u64) -> CdcTask {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let matrix = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0));
    let vector = Array1::from_shape_fn(cols, |_| rng.random_range(-1.0..1.0));
    CdcTask::new(matrix, vector, k, n).unwrap()
}
