//! Minimal library tour: screen a worker, solve the incentive game, and run
//! the coded task at the equilibrium speeds.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use rcdc_core::cdc::{decode_from_k, sample_completion_times, shard_compute, split_encode, task_latency, CdcTask};
use rcdc_core::reputation::{composite_reputation, InteractionCounts, ReputationParams};
use rcdc_core::stackelberg::{CommModel, CompModel, Game, IncentiveParams, WorkerGameData};

fn main() {
    let rep = ReputationParams::default();
    let comm = CommModel::default();
    let comp = CompModel { task_share: 600.0, ..CompModel::default() };
    let inc = IncentiveParams { t_max: Some(300.0), ..IncentiveParams::default() };

    // Composite reputation of a worker with a mostly-positive history.
    let counts = InteractionCounts::new(34, 3);
    let value = composite_reputation(counts, &[], &rep).unwrap();
    println!("composite reputation: {value:.4}");

    // One leader, four followers: equilibrium reward and speeds.
    let (k, n) = (2, 4);
    let game = Game::new(&comm, &comp, &inc, &rep, k, n);
    let workers = vec![WorkerGameData { counts, composite_reputation: value }; n];
    let sol = game.solve_equilibrium(&workers).unwrap();
    println!("equilibrium reward: {:.4}, speeds: {:?}", sol.r_com_star, sol.mu_star);

    // Encode a task, compute all shards, decode from the fastest k.
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let matrix = Array2::from_shape_fn((24, 12), |_| rng.random_range(-1.0..1.0));
    let vector = Array1::from_shape_fn(12, |_| rng.random_range(-1.0..1.0));
    let task = CdcTask::new(matrix, vector, k, n).unwrap();
    let enc = split_encode(&task, 7).unwrap();
    let partials: Vec<_> = enc
        .shards
        .iter()
        .map(|s| (s.shard_index, shard_compute(s, &task.vector.view()).unwrap()))
        .collect();
    let samples = sample_completion_times(&sol.mu_star, &comm, &comp, 7);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].total.total_cmp(&samples[b].total));
    let fastest: Vec<_> = order[..k].iter().map(|&i| partials[i].clone()).collect();
    let y = decode_from_k(&fastest, &enc.generator.view(), 24).unwrap();
    let reference = task.reference_result();
    let err = y
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!(
        "task latency {:.3}s, max decode error {err:.2e}",
        task_latency(&samples, k).unwrap()
    );
}
