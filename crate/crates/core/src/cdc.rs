//! Coded matrix-vector execution.
//!
//! A task `y = A x` is split into `k` equal row blocks, expanded into `n`
//! coded shards through an `n x k` real generator matrix, and farmed out to
//! `n` workers. Any `k` returned shard results reconstruct `y` exactly by
//! solving the `k x k` system formed by the corresponding generator rows.
//! Worker completion times are sampled from the shifted-exponential
//! computation model plus geometric uplink retransmissions, so the k-th
//! order statistic of the totals is the task latency.
//!
//! Generators are sampled from a continuous distribution and re-sampled
//! until every checked `k x k` minor is well conditioned, which makes the
//! decode numerically safe for any shard subset. An exact-rational decode
//! path backs the floating-point solver in oracle tests.
//!
//! Shard computations are independent and may run in parallel; the latency
//! sampler is deterministic per seed.

use std::collections::BTreeSet;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use itertools::Itertools;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use num::BigRational;
use num::FromPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::stackelberg::{expected_uplink_delay, CommModel, CompModel};

#[derive(Debug, Error)]
pub enum CdcError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("could not sample a well-conditioned generator in {0} attempts")]
    EncodingFailed(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("duplicate shard index {0}")]
    IndexDuplicate(usize),
    #[error("shard index {0} out of range for {1} shards")]
    IndexOutOfRange(usize, usize),
    #[error("need results from {needed} distinct shards, got {got}")]
    NotEnoughResults { needed: usize, got: usize },
    #[error("coding rows for the chosen shard subset are singular")]
    SingularSubset,
    #[error("order index {k} out of range 1..={n}")]
    InvalidOrder { k: usize, n: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad matrix file: {0}")]
    BadFormat(String),
}

/// A matrix-vector multiplication task with its `(n, k)` coding choice.
#[derive(Debug, Clone)]
pub struct CdcTask {
    pub matrix: Array2<f64>,
    pub vector: Array1<f64>,
    pub k: usize,
    pub n: usize,
}

impl CdcTask {
    pub fn new(matrix: Array2<f64>, vector: Array1<f64>, k: usize, n: usize) -> Result<Self, CdcError> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(CdcError::InvalidTask("matrix must be nonempty".into()));
        }
        if matrix.ncols() != vector.len() {
            return Err(CdcError::DimensionMismatch(format!(
                "matrix has {} columns but vector has length {}",
                matrix.ncols(),
                vector.len()
            )));
        }
        if !(1 <= k && k < n) {
            return Err(CdcError::InvalidTask(format!("need 1 <= k < n, got k={k}, n={n}")));
        }
        Ok(Self { matrix, vector, k, n })
    }

    /// The exact product `A x`, used as the reference result.
    pub fn reference_result(&self) -> Array1<f64> {
        self.matrix.dot(&self.vector)
    }
}

/// One coded shard: a linear combination of the row blocks, tagged with the
/// generator row that produced it.
#[derive(Debug, Clone)]
pub struct EncodedShard {
    pub shard_index: usize,
    pub coded_submatrix: Array2<f64>,
    pub coding_row: Vec<f64>,
}

/// The full encoding of a task.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub shards: Vec<EncodedShard>,
    /// `n x k` generator; row `i` produced shard `i`.
    pub generator: Array2<f64>,
    /// Rows per block after zero-padding to a multiple of `k`.
    pub block_rows: usize,
    /// Rows of the original matrix (decode truncates back to this).
    pub original_rows: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    /// Prefix the generator with the identity so shards `0..k` are the raw
    /// row blocks.
    pub systematic: bool,
    /// Largest acceptable infinity-norm condition number of any checked
    /// `k x k` minor.
    pub condition_bound: f64,
    pub max_resamples: usize,
    /// Exhaustively check all `C(n, k)` minors up to this many; beyond it,
    /// check the `n` cyclic windows plus the lexicographically first
    /// combinations up to the limit.
    pub minor_check_limit: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { systematic: true, condition_bound: 1e8, max_resamples: 64, minor_check_limit: 100_000 }
    }
}

/// Splits the (zero-padded) matrix into `k` row blocks.
fn row_blocks(task: &CdcTask) -> (Vec<Array2<f64>>, usize) {
    let block_rows = task.matrix.nrows().div_ceil(task.k);
    let cols = task.matrix.ncols();
    let mut padded = Array2::zeros((block_rows * task.k, cols));
    padded
        .slice_mut(s![..task.matrix.nrows(), ..])
        .assign(&task.matrix);
    let blocks = (0..task.k)
        .map(|j| padded.slice(s![j * block_rows..(j + 1) * block_rows, ..]).to_owned())
        .collect();
    (blocks, block_rows)
}

/// Encodes with a caller-supplied `n x k` generator.
pub fn encode_with_generator(task: &CdcTask, generator: Array2<f64>) -> Result<Encoding, CdcError> {
    if generator.nrows() != task.n || generator.ncols() != task.k {
        return Err(CdcError::DimensionMismatch(format!(
            "generator must be {} x {}, got {} x {}",
            task.n,
            task.k,
            generator.nrows(),
            generator.ncols()
        )));
    }
    let (blocks, block_rows) = row_blocks(task);
    let shards = (0..task.n)
        .map(|i| {
            let mut coded = Array2::zeros((block_rows, task.matrix.ncols()));
            for (j, block) in blocks.iter().enumerate() {
                coded.scaled_add(generator[[i, j]], block);
            }
            EncodedShard {
                shard_index: i,
                coded_submatrix: coded,
                coding_row: generator.row(i).to_vec(),
            }
        })
        .collect();
    Ok(Encoding { shards, generator, block_rows, original_rows: task.matrix.nrows() })
}

/// Splits and encodes the task with a random generator, re-sampling until
/// every checked `k x k` minor is invertible with condition number under the
/// configured bound.
pub fn split_encode(task: &CdcTask, seed: u64) -> Result<Encoding, CdcError> {
    split_encode_with(task, seed, &EncodeOptions::default())
}

pub fn split_encode_with(
    task: &CdcTask,
    seed: u64,
    opts: &EncodeOptions,
) -> Result<Encoding, CdcError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..opts.max_resamples {
        let mut generator = Array2::zeros((task.n, task.k));
        for i in 0..task.n {
            for j in 0..task.k {
                if opts.systematic && i < task.k {
                    generator[[i, j]] = if i == j { 1.0 } else { 0.0 };
                } else {
                    generator[[i, j]] = rng.random_range(-1.0..1.0);
                }
            }
        }
        if generator_is_well_conditioned(&generator.view(), task.k, opts) {
            return encode_with_generator(task, generator);
        }
    }
    Err(CdcError::EncodingFailed(opts.max_resamples))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn generator_is_well_conditioned(g: &ArrayView2<f64>, k: usize, opts: &EncodeOptions) -> bool {
    let n = g.nrows();
    let minor_ok = |rows: &[usize]| -> bool {
        let mut minor = Array2::zeros((k, k));
        for (r, &i) in rows.iter().enumerate() {
            minor.row_mut(r).assign(&g.row(i));
        }
        matches!(condition_inf(&minor.view()), Some(c) if c <= opts.condition_bound)
    };

    if binomial(n, k) <= opts.minor_check_limit as u128 {
        (0..n).combinations(k).all(|rows| minor_ok(&rows))
    } else {
        let windows = (0..n).map(|start| {
            (0..k).map(|offset| (start + offset) % n).sorted().collect::<Vec<_>>()
        });
        let lex = (0..n).combinations(k).take(opts.minor_check_limit);
        windows.chain(lex).all(|rows| minor_ok(&rows))
    }
}

/// Infinity-norm condition number via the explicit inverse; `None` when the
/// matrix is singular.
fn condition_inf(m: &ArrayView2<f64>) -> Option<f64> {
    let k = m.nrows();
    let inv = solve_multi(m.to_owned(), Array2::eye(k))?;
    let norm = |a: &Array2<f64>| {
        (0..a.nrows())
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    Some(norm(&m.to_owned()) * norm(&inv))
}

/// Solves `M X = B` by Gaussian elimination with partial pivoting.
fn solve_multi(mut m: Array2<f64>, mut b: Array2<f64>) -> Option<Array2<f64>> {
    let k = m.nrows();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))?;
        if m[[pivot, col]].abs() < f64::EPSILON * 16.0 {
            return None;
        }
        if pivot != col {
            for c in 0..k {
                m.swap([col, c], [pivot, c]);
            }
            for c in 0..b.ncols() {
                b.swap([col, c], [pivot, c]);
            }
        }
        for row in col + 1..k {
            let factor = m[[row, col]] / m[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for c in col..k {
                m[[row, c]] -= factor * m[[col, c]];
            }
            for c in 0..b.ncols() {
                b[[row, c]] -= factor * b[[col, c]];
            }
        }
    }
    // Back substitution.
    for col in (0..k).rev() {
        for c in 0..b.ncols() {
            b[[col, c]] /= m[[col, col]];
        }
        for row in 0..col {
            let factor = m[[row, col]];
            for c in 0..b.ncols() {
                b[[row, c]] -= factor * b[[col, c]];
            }
        }
        for c in col + 1..k {
            m[[col, c]] = 0.0;
        }
        m[[col, col]] = 1.0;
    }
    Some(b)
}

/// One worker's product: the coded submatrix times the input vector.
pub fn shard_compute(shard: &EncodedShard, x: &ArrayView1<f64>) -> Result<Array1<f64>, CdcError> {
    if shard.coded_submatrix.ncols() != x.len() {
        return Err(CdcError::DimensionMismatch(format!(
            "shard has {} columns but vector has length {}",
            shard.coded_submatrix.ncols(),
            x.len()
        )));
    }
    Ok(shard.coded_submatrix.dot(x))
}

/// `(shard indices, partial results, block length)` of a validated subset.
type DecodeInputs<'a> = (Vec<usize>, Vec<&'a Array1<f64>>, usize);

fn gather_decode_inputs<'a>(
    results: &'a [(usize, Array1<f64>)],
    generator: &ArrayView2<f64>,
) -> Result<DecodeInputs<'a>, CdcError> {
    let k = generator.ncols();
    if results.len() < k {
        return Err(CdcError::NotEnoughResults { needed: k, got: results.len() });
    }
    let mut seen = BTreeSet::new();
    let mut indices = Vec::with_capacity(k);
    let mut partials = Vec::with_capacity(k);
    for (idx, partial) in results.iter().take(k) {
        if *idx >= generator.nrows() {
            return Err(CdcError::IndexOutOfRange(*idx, generator.nrows()));
        }
        if !seen.insert(*idx) {
            return Err(CdcError::IndexDuplicate(*idx));
        }
        indices.push(*idx);
        partials.push(partial);
    }
    let block = partials[0].len();
    if partials.iter().any(|p| p.len() != block) {
        return Err(CdcError::DimensionMismatch("partial results differ in length".into()));
    }
    Ok((indices, partials, block))
}

/// Reconstructs `y = A x` from any `k` distinct shard results by solving the
/// `k x k` coding system, then truncating the padded rows.
pub fn decode_from_k(
    results: &[(usize, Array1<f64>)],
    generator: &ArrayView2<f64>,
    original_rows: usize,
) -> Result<Array1<f64>, CdcError> {
    let k = generator.ncols();
    let (indices, partials, block) = gather_decode_inputs(results, generator)?;

    let mut minor = Array2::zeros((k, k));
    let mut rhs = Array2::zeros((k, block));
    for (r, &idx) in indices.iter().enumerate() {
        minor.row_mut(r).assign(&generator.row(idx));
        rhs.row_mut(r).assign(partials[r]);
    }
    let blocks = solve_multi(minor, rhs).ok_or(CdcError::SingularSubset)?;

    let mut y = Array1::zeros(original_rows);
    for j in 0..k {
        for r in 0..block {
            let row = j * block + r;
            if row < original_rows {
                y[row] = blocks[[j, r]];
            }
        }
    }
    Ok(y)
}

/// Exact-rational reconstruction of the same `k x k` system, used as an
/// independent oracle for the floating-point decoder. Inputs are converted
/// bit-exactly from f64.
pub fn decode_from_k_exact(
    results: &[(usize, Array1<f64>)],
    generator: &ArrayView2<f64>,
    original_rows: usize,
) -> Result<Vec<BigRational>, CdcError> {
    let k = generator.ncols();
    let (indices, partials, block) = gather_decode_inputs(results, generator)?;

    let rat = |v: f64| BigRational::from_f64(v).expect("finite float");
    let mut m: Vec<Vec<BigRational>> = indices
        .iter()
        .map(|&i| (0..k).map(|j| rat(generator[[i, j]])).collect())
        .collect();
    let mut b: Vec<Vec<BigRational>> = partials
        .iter()
        .map(|p| p.iter().map(|&v| rat(v)).collect())
        .collect();

    for col in 0..k {
        let pivot = (col..k)
            .find(|&r| m[r][col] != BigRational::from_integer(0.into()))
            .ok_or(CdcError::SingularSubset)?;
        m.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_m = m[col].clone();
        let pivot_b = b[col].clone();
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = &m[row][col] / &pivot_m[col];
            for (dst, src) in m[row].iter_mut().zip(&pivot_m) {
                *dst -= &factor * src;
            }
            for (dst, src) in b[row].iter_mut().zip(&pivot_b) {
                *dst -= &factor * src;
            }
        }
    }
    let mut y = Vec::with_capacity(original_rows);
    for j in 0..k {
        for value in b[j].iter().take(original_rows.saturating_sub(j * block)) {
            y.push(value / &m[j][j]);
        }
    }
    Ok(y)
}

/// One worker's sampled execution: shifted-exponential computation plus
/// geometric uplink retransmissions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionSample {
    pub worker_id: usize,
    pub comp_time: f64,
    pub uplink_time: f64,
    pub total: f64,
}

/// Samples per-worker completion times, deterministically per seed.
///
/// The computation draw is `a*l + Exp(mu/l)` (inverse CDF); the uplink draw
/// multiplies the per-transmission delay by a geometric transmission count
/// with success probability `1 - p`.
pub fn sample_completion_times(
    mus: &[f64],
    comm: &CommModel,
    comp: &CompModel,
    seed: u64,
) -> Vec<CompletionSample> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = mus.len();
    let per_transmission = expected_uplink_delay(comm, n) * (1.0 - comm.erasure_prob);
    mus.iter()
        .enumerate()
        .map(|(worker_id, &mu)| {
            let u: f64 = rng.random();
            let comp_time = comp.startup * comp.task_share
                - (1.0 - u).ln() * comp.task_share / mu;
            let transmissions = if comm.erasure_prob > 0.0 {
                let u: f64 = rng.random();
                ((1.0 - u).ln() / comm.erasure_prob.ln()).ceil().max(1.0)
            } else {
                1.0
            };
            let uplink_time = transmissions * per_transmission;
            CompletionSample { worker_id, comp_time, uplink_time, total: comp_time + uplink_time }
        })
        .collect()
}

/// The k-th smallest total completion time: when any `k` results suffice,
/// this is the task latency.
pub fn task_latency(samples: &[CompletionSample], k: usize) -> Result<f64, CdcError> {
    if k == 0 || k > samples.len() {
        return Err(CdcError::InvalidOrder { k, n: samples.len() });
    }
    let mut totals: Vec<f64> = samples.iter().map(|s| s.total).collect();
    totals.sort_by(f64::total_cmp);
    Ok(totals[k - 1])
}

const MATRIX_MAGIC: &[u8; 8] = b"RCDCMAT1";

/// Writes the dense binary matrix format: an 8-byte magic, big-endian u32
/// row and column counts, then row-major big-endian f64 values.
pub fn write_matrix_bin<W: Write>(w: &mut W, m: &ArrayView2<f64>) -> Result<(), CdcError> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u32).to_be_bytes())?;
    w.write_all(&(m.ncols() as u32).to_be_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_bits().to_be_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_bin<R: Read>(r: &mut R) -> Result<Array2<f64>, CdcError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != MATRIX_MAGIC {
        return Err(CdcError::BadFormat("bad magic".into()));
    }
    let rows = u32::from_be_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_be_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f64::from_bits(u64::from_be_bytes(buf)));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| CdcError::BadFormat(format!("shape: {e}")))
}

pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<Array2<f64>, CdcError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| CdcError::BadFormat(format!("line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CdcError::BadFormat(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CdcError::BadFormat("empty matrix".into()));
    }
    let cols = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = data.len() / cols;
    Array2::from_shape_vec((nrows, cols), data)
        .map_err(|e| CdcError::BadFormat(format!("shape: {e}")))
}

/// Loads a matrix by file extension: `.bin` for the dense binary format,
/// anything else parsed as CSV.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>, CdcError> {
    let bytes = std::fs::read(path)?;
    if path.extension().is_some_and(|e| e == "bin") || bytes.starts_with(MATRIX_MAGIC) {
        read_matrix_bin(&mut bytes.as_slice())
    } else {
        read_matrix_csv(std::io::BufReader::new(bytes.as_slice()))
    }
}

/// Renders a result vector as CSV with an `index,value` header.
pub fn vector_to_csv(y: &ArrayView1<f64>) -> String {
    let mut out = String::from("index,value\n");
    for (i, v) in y.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}
