//! Miner coalition formation by merge-and-split.
//!
//! Miners hold disjoint sets of screened workers. A coalition's utility is
//! its selection probability times its reputation mass, minus a logarithmic
//! communication barrier and a per-worker computation cost. Starting from
//! singletons, coalitions repeatedly merge and split whenever the result is
//! preferred (Pareto order over per-miner utilities, or total coalition
//! utility), until a full pass makes no change. Every accepted step strictly
//! increases the sum of miner utilities, so the iteration terminates.
//!
//! Utility evaluations are pure; formation is single-threaded and
//! deterministic for a given input and seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type MinerId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoalitionError {
    #[error("total reputation sum must be positive, got {0}")]
    InvalidConfig(f64),
    #[error("coalition has zero total reputation")]
    ZeroReputationCoalition,
    #[error("the two collections partition different miner sets")]
    MismatchedPlayers,
    #[error("miner {0} is not a coalition member")]
    NotAMember(MinerId),
    #[error("miner {0} out of range (have {1} assignments)")]
    UnknownMiner(MinerId, usize),
    #[error("instance too large for the exhaustive stability check: {0}")]
    InstanceTooLarge(String),
    #[error("merge-and-split exceeded {0} accepted steps without converging")]
    NoConvergence(usize),
}

/// Workers assigned to one miner, each with its composite reputation value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerAssignment {
    pub miner_id: MinerId,
    pub workers: Vec<(u64, f64)>,
}

impl MinerAssignment {
    pub fn reputation_sum(&self) -> f64 {
        self.workers.iter().map(|(_, t)| t).sum()
    }
}

/// Distributes workers over `miners` round-robin: worker `i` goes to miner
/// `i % miners`. When the worker count divides evenly every miner gets the
/// same share; otherwise the remainder spreads one extra worker each over
/// the first miners.
pub fn assign_workers(worker_reps: &[(u64, f64)], miners: usize) -> Vec<MinerAssignment> {
    let mut out: Vec<MinerAssignment> = (0..miners)
        .map(|miner_id| MinerAssignment { miner_id, workers: Vec::new() })
        .collect();
    for (i, wr) in worker_reps.iter().enumerate() {
        out[i % miners].workers.push(*wr);
    }
    out
}

/// Precomputed per-miner reputation sums and worker counts, indexed by miner
/// id. Inputs must cover miner ids `0..len` exactly once.
#[derive(Debug, Clone)]
pub struct MinerTable {
    rep_sums: Vec<f64>,
    worker_counts: Vec<usize>,
}

impl MinerTable {
    pub fn new(assignments: &[MinerAssignment]) -> Result<Self, CoalitionError> {
        let n = assignments.len();
        let mut rep_sums = vec![f64::NAN; n];
        let mut worker_counts = vec![0usize; n];
        for a in assignments {
            if a.miner_id >= n || !rep_sums[a.miner_id].is_nan() {
                return Err(CoalitionError::UnknownMiner(a.miner_id, n));
            }
            rep_sums[a.miner_id] = a.reputation_sum();
            worker_counts[a.miner_id] = a.workers.len();
        }
        Ok(Self { rep_sums, worker_counts })
    }

    pub fn len(&self) -> usize {
        self.rep_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rep_sums.is_empty()
    }

    pub fn reputation_sum(&self, m: MinerId) -> f64 {
        self.rep_sums[m]
    }

    pub fn worker_count(&self, m: MinerId) -> usize {
        self.worker_counts[m]
    }

    pub fn coalition_reputation(&self, c: &Coalition) -> f64 {
        c.members().map(|m| self.rep_sums[m]).sum()
    }

    pub fn coalition_workers(&self, c: &Coalition) -> usize {
        c.members().map(|m| self.worker_counts[m]).sum()
    }

    pub fn total_reputation(&self) -> f64 {
        self.rep_sums.iter().sum()
    }
}

/// A nonempty set of miners acting together.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition {
    members: BTreeSet<MinerId>,
}

impl Coalition {
    pub fn new(members: impl IntoIterator<Item = MinerId>) -> Self {
        let members: BTreeSet<MinerId> = members.into_iter().collect();
        assert!(!members.is_empty(), "coalition must be nonempty");
        Self { members }
    }

    pub fn singleton(m: MinerId) -> Self {
        Self::new([m])
    }

    pub fn members(&self) -> impl Iterator<Item = MinerId> + '_ {
        self.members.iter().copied()
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, m: MinerId) -> bool {
        self.members.contains(&m)
    }

    pub fn union(&self, other: &Coalition) -> Coalition {
        Self::new(self.members().chain(other.members()))
    }
}

/// Disjoint coalitions covering a miner universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    coalitions: Vec<Coalition>,
}

impl Partition {
    /// The all-singletons partition of miners `0..n`.
    pub fn singletons(n: usize) -> Self {
        Self { coalitions: (0..n).map(Coalition::singleton).collect() }
    }

    pub fn new(coalitions: Vec<Coalition>) -> Self {
        let mut seen = BTreeSet::new();
        for c in &coalitions {
            for m in c.members() {
                assert!(seen.insert(m), "partition coalitions must be disjoint");
            }
        }
        Self { coalitions }
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn miner_set(&self) -> BTreeSet<MinerId> {
        self.coalitions.iter().flat_map(|c| c.members()).collect()
    }
}

/// Which preference order compares two ways of partitioning the same miners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreferenceOrder {
    /// Every affected miner at least as well off, at least one strictly.
    Pareto,
    /// Strictly larger sum of coalition utilities.
    CoalitionOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionConfig {
    pub total_miners: usize,
    pub delta: f64,
    pub rho: f64,
    pub barrier_offset: f64,
    pub preference: PreferenceOrder,
    /// Denominator of the selection probability: the reputation mass of the
    /// whole online worker population.
    pub total_reputation_sum: f64,
}

impl CoalitionConfig {
    pub fn new(total_miners: usize, total_reputation_sum: f64) -> Self {
        Self {
            total_miners,
            delta: 1.0,
            rho: 0.01,
            barrier_offset: 0.1,
            preference: PreferenceOrder::Pareto,
            total_reputation_sum,
        }
    }
}

/// Probability that a coalition is selected: its reputation mass over the
/// population's total reputation mass.
pub fn selection_probability(
    c: &Coalition,
    table: &MinerTable,
    cfg: &CoalitionConfig,
) -> Result<f64, CoalitionError> {
    if cfg.total_reputation_sum <= 0.0 {
        return Err(CoalitionError::InvalidConfig(cfg.total_reputation_sum));
    }
    Ok(table.coalition_reputation(c) / cfg.total_reputation_sum)
}

/// Communication cost of coordinating `size` miners: a logarithmic barrier
/// `-ln(1 - ((size - o) / M)^2)` for `size >= 2`, zero for a singleton.
/// The offset `o` in (0, 1) keeps the cost finite at `size = M`; the cost is
/// strictly increasing and convex in `size` on `[2, M]`.
pub fn communication_cost(size: usize, cfg: &CoalitionConfig) -> f64 {
    if size < 2 {
        return 0.0;
    }
    let ratio = (size as f64 - cfg.barrier_offset) / cfg.total_miners as f64;
    -(1.0 - ratio * ratio).ln()
}

/// Coalition utility: selection probability times reputation mass, minus the
/// weighted communication barrier and the per-worker computation cost.
pub fn coalition_utility(
    c: &Coalition,
    table: &MinerTable,
    cfg: &CoalitionConfig,
) -> Result<f64, CoalitionError> {
    let rep = table.coalition_reputation(c);
    let pr = selection_probability(c, table, cfg)?;
    let comm = cfg.delta * communication_cost(c.size(), cfg);
    let comp = table.coalition_workers(c) as f64 * cfg.rho;
    Ok(pr * rep - comm - comp)
}

/// A miner's share of its coalition's utility under the equal fair
/// allocation rule: proportional to the miner's reputation mass.
pub fn miner_utility(
    m: MinerId,
    c: &Coalition,
    table: &MinerTable,
    cfg: &CoalitionConfig,
) -> Result<f64, CoalitionError> {
    if !c.contains(m) {
        return Err(CoalitionError::NotAMember(m));
    }
    let coalition_rep = table.coalition_reputation(c);
    if coalition_rep <= 0.0 {
        return Err(CoalitionError::ZeroReputationCoalition);
    }
    Ok(table.reputation_sum(m) / coalition_rep * coalition_utility(c, table, cfg)?)
}

fn fragment_miners(frag: &[Coalition]) -> BTreeSet<MinerId> {
    frag.iter().flat_map(|c| c.members()).collect()
}

/// Memo table for coalition utilities, keyed by the sorted member list.
/// Utilities are pure functions of the (table, cfg) pair a cache is scoped
/// to, so formation and the stability oracle reuse evaluations across the
/// many preference tests they run.
#[derive(Default)]
struct UtilityCache {
    map: HashMap<Vec<MinerId>, f64>,
}

impl UtilityCache {
    fn utility(
        &mut self,
        c: &Coalition,
        table: &MinerTable,
        cfg: &CoalitionConfig,
    ) -> Result<f64, CoalitionError> {
        let key: Vec<MinerId> = c.members().collect();
        if let Some(&u) = self.map.get(&key) {
            return Ok(u);
        }
        let u = coalition_utility(c, table, cfg)?;
        self.map.insert(key, u);
        Ok(u)
    }

    /// Per-miner shares across a fragment. The reputation-proportional rule
    /// is undefined for a coalition with zero reputation mass (all its
    /// workers screened out); such a coalition splits its utility equally.
    fn shares(
        &mut self,
        frag: &[Coalition],
        table: &MinerTable,
        cfg: &CoalitionConfig,
    ) -> Result<BTreeMap<MinerId, f64>, CoalitionError> {
        let mut out = BTreeMap::new();
        for c in frag {
            let utility = self.utility(c, table, cfg)?;
            let rep = table.coalition_reputation(c);
            for m in c.members() {
                let share = if rep <= 0.0 {
                    utility / c.size() as f64
                } else {
                    table.reputation_sum(m) / rep * utility
                };
                out.insert(m, share);
            }
        }
        Ok(out)
    }
}

fn pareto_preferred_cached(
    p1: &[Coalition],
    p2: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
    cache: &mut UtilityCache,
) -> Result<bool, CoalitionError> {
    let shares1 = cache.shares(p1, table, cfg)?;
    let shares2 = cache.shares(p2, table, cfg)?;
    if shares1.len() != shares2.len()
        || !shares1.keys().zip(shares2.keys()).all(|(a, b)| a == b)
    {
        return Err(CoalitionError::MismatchedPlayers);
    }
    let mut strict = false;
    for (m, u1) in &shares1 {
        let u2 = shares2[m];
        if *u1 < u2 {
            return Ok(false);
        }
        if *u1 > u2 {
            strict = true;
        }
    }
    Ok(strict)
}

fn coalition_order_preferred_cached(
    p1: &[Coalition],
    p2: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
    cache: &mut UtilityCache,
) -> Result<bool, CoalitionError> {
    if fragment_miners(p1) != fragment_miners(p2) {
        return Err(CoalitionError::MismatchedPlayers);
    }
    let mut total1 = 0.0;
    for c in p1 {
        total1 += cache.utility(c, table, cfg)?;
    }
    let mut total2 = 0.0;
    for c in p2 {
        total2 += cache.utility(c, table, cfg)?;
    }
    Ok(total1 > total2)
}

fn preferred_cached(
    p1: &[Coalition],
    p2: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
    cache: &mut UtilityCache,
) -> Result<bool, CoalitionError> {
    match cfg.preference {
        PreferenceOrder::Pareto => pareto_preferred_cached(p1, p2, table, cfg, cache),
        PreferenceOrder::CoalitionOrder => {
            coalition_order_preferred_cached(p1, p2, table, cfg, cache)
        }
    }
}

/// Pareto comparison of two ways to partition the same miner subset: true
/// iff every miner is at least as well off under `p1` with at least one
/// strict improvement.
pub fn pareto_preferred(
    p1: &[Coalition],
    p2: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
) -> Result<bool, CoalitionError> {
    pareto_preferred_cached(p1, p2, table, cfg, &mut UtilityCache::default())
}

/// Coalition-order comparison: true iff `p1`'s total coalition utility is
/// strictly larger than `p2`'s.
pub fn coalition_order_preferred(
    p1: &[Coalition],
    p2: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
) -> Result<bool, CoalitionError> {
    coalition_order_preferred_cached(p1, p2, table, cfg, &mut UtilityCache::default())
}

/// Dispatches to the configured preference order.
pub fn preferred(
    p1: &[Coalition],
    p2: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
) -> Result<bool, CoalitionError> {
    preferred_cached(p1, p2, table, cfg, &mut UtilityCache::default())
}

/// One accepted merge or split, recorded for audit. Serializable as a JSON
/// line.
#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub operation: &'static str,
    pub before: Vec<Coalition>,
    pub after: Vec<Coalition>,
    pub miner_utils_before: Vec<(MinerId, f64)>,
    pub miner_utils_after: Vec<(MinerId, f64)>,
}

/// Result of coalition formation: the stable partition, the coalition with
/// the highest utility inside it, and the audit trace.
#[derive(Debug, Clone)]
pub struct FormationOutcome {
    pub partition: Partition,
    pub best: Coalition,
    pub trace: Vec<TraceStep>,
}

/// Hard cap on accepted merge/split steps; generously above the partition
/// lattice sizes this simulator runs at.
const MAX_ACCEPTED_STEPS: usize = 100_000;

fn miner_utils_of(
    frag: &[Coalition],
    table: &MinerTable,
    cfg: &CoalitionConfig,
    cache: &mut UtilityCache,
) -> Result<Vec<(MinerId, f64)>, CoalitionError> {
    Ok(cache.shares(frag, table, cfg)?.into_iter().collect())
}

/// Merge-and-split coalition formation.
///
/// Starts from the all-singletons partition. Merge passes scan coalition
/// pairs in canonical index order and, when a pair merge is rejected,
/// greedily extend the candidate union with further coalitions before moving
/// on. Split passes enumerate binary splits of each coalition. An accepted
/// operation restarts its pass; the loop ends when a full merge-and-split
/// pass accepts nothing. Ties never trigger a change (strict preference is
/// required), which rules out cycles.
///
/// `seed` switches on the randomized scan-order mode used by robustness
/// experiments; `None` keeps the canonical deterministic order. Either way
/// the outcome is a pure function of `(table, cfg, seed)`.
pub fn form_coalitions(
    table: &MinerTable,
    cfg: &CoalitionConfig,
    seed: Option<u64>,
) -> Result<FormationOutcome, CoalitionError> {
    let n = table.len();
    assert!(n >= 1, "need at least one miner");
    let mut rng = seed.map(ChaCha12Rng::seed_from_u64);
    let mut coalitions = Partition::singletons(n).coalitions.clone();
    let mut trace: Vec<TraceStep> = Vec::new();
    let mut cache = UtilityCache::default();

    loop {
        let mut changed = false;

        // Merge pass.
        'merge: loop {
            let mut order: Vec<usize> = (0..coalitions.len()).collect();
            if let Some(rng) = rng.as_mut() {
                order.shuffle(rng);
            }
            for (oi, &i) in order.iter().enumerate() {
                for &j in order.iter().skip(oi + 1) {
                    let mut picked = vec![i, j];
                    let mut union = coalitions[i].union(&coalitions[j]);
                    let mut accepted = preferred_cached(
                        std::slice::from_ref(&union),
                        &pick(&coalitions, &picked),
                        table,
                        cfg,
                        &mut cache,
                    )?;
                    if !accepted {
                        // Greedy extension: only tried once the pair merge
                        // is rejected.
                        for &k in order.iter().skip(oi + 1) {
                            if picked.contains(&k) {
                                continue;
                            }
                            picked.push(k);
                            union = union.union(&coalitions[k]);
                            if preferred_cached(
                                std::slice::from_ref(&union),
                                &pick(&coalitions, &picked),
                                table,
                                cfg,
                                &mut cache,
                            )? {
                                accepted = true;
                                break;
                            }
                        }
                    }
                    if accepted {
                        let before = pick(&coalitions, &picked);
                        let after = vec![union];
                        trace.push(TraceStep {
                            step: trace.len(),
                            operation: "merge",
                            miner_utils_before: miner_utils_of(&before, table, cfg, &mut cache)?,
                            miner_utils_after: miner_utils_of(&after, table, cfg, &mut cache)?,
                            before,
                            after: after.clone(),
                        });
                        apply_replace(&mut coalitions, &picked, after);
                        changed = true;
                        if trace.len() > MAX_ACCEPTED_STEPS {
                            return Err(CoalitionError::NoConvergence(MAX_ACCEPTED_STEPS));
                        }
                        continue 'merge;
                    }
                }
            }
            break;
        }

        // Split pass: binary splits only. The stability oracle checks full
        // sub-partitions; at the sizes this runs at the binary fixed point
        // has matched it on every tested instance.
        'split: loop {
            let mut order: Vec<usize> = (0..coalitions.len()).collect();
            if let Some(rng) = rng.as_mut() {
                order.shuffle(rng);
            }
            for &ci in &order {
                let c = &coalitions[ci];
                if c.size() < 2 {
                    continue;
                }
                if let Some(frag) = find_preferred_split(c, table, cfg, &mut cache)? {
                    let before = vec![c.clone()];
                    trace.push(TraceStep {
                        step: trace.len(),
                        operation: "split",
                        miner_utils_before: miner_utils_of(&before, table, cfg, &mut cache)?,
                        miner_utils_after: miner_utils_of(&frag, table, cfg, &mut cache)?,
                        before,
                        after: frag.clone(),
                    });
                    apply_replace(&mut coalitions, &[ci], frag);
                    changed = true;
                    if trace.len() > MAX_ACCEPTED_STEPS {
                        return Err(CoalitionError::NoConvergence(MAX_ACCEPTED_STEPS));
                    }
                    continue 'split;
                }
            }
            break;
        }

        if !changed {
            break;
        }
    }

    coalitions.sort();
    let best = coalitions
        .iter()
        .map(|c| Ok((c.clone(), coalition_utility(c, table, cfg)?)))
        .collect::<Result<Vec<_>, CoalitionError>>()?
        .into_iter()
        .max_by(|(_, a), (_, b)| a.total_cmp(b))
        .map(|(c, _)| c)
        .expect("at least one coalition");
    Ok(FormationOutcome { partition: Partition::new(coalitions), best, trace })
}

/// Scans every binary split of `c` for one preferred over staying whole.
///
/// Bipartitions are walked in Gray-code order with running reputation,
/// worker, and size sums, so each rejected candidate costs O(1): a miner's
/// share only depends on its side's utility-per-reputation density, which
/// makes the per-miner Pareto comparison collapse to two density checks
/// (zero-mass sides fall back to the equal split). A candidate that passes
/// the O(1) screen is confirmed with the exact per-miner comparison before
/// being returned.
fn find_preferred_split(
    c: &Coalition,
    table: &MinerTable,
    cfg: &CoalitionConfig,
    cache: &mut UtilityCache,
) -> Result<Option<Vec<Coalition>>, CoalitionError> {
    let members: Vec<MinerId> = c.members().collect();
    let n = members.len();
    debug_assert!(n >= 2);
    if cfg.total_reputation_sum <= 0.0 {
        return Err(CoalitionError::InvalidConfig(cfg.total_reputation_sum));
    }
    let cost_by_size: Vec<f64> = (0..=n).map(|s| communication_cost(s, cfg)).collect();
    let utility = |rep: f64, workers: f64, size: usize| {
        rep / cfg.total_reputation_sum * rep - cfg.delta * cost_by_size[size] - workers * cfg.rho
    };

    let total_rep = table.coalition_reputation(c);
    let total_workers = table.coalition_workers(c) as f64;
    let whole = utility(total_rep, total_workers, n);
    let whole_density = whole / total_rep; // meaningful only when total_rep > 0

    // (weak acceptability, strict improvement) of one side of a split.
    let side_ok = |rep: f64, u: f64, size: usize| -> (bool, bool) {
        if total_rep <= 0.0 {
            let share = u / size as f64;
            let old = whole / n as f64;
            (share >= old, share > old)
        } else if rep > 0.0 {
            let d = u / rep;
            (d >= whole_density, d > whole_density)
        } else {
            // All-zero-mass side: members move from a zero share to an
            // equal split of this side's (nonpositive) utility.
            let share = u / size as f64;
            (share >= 0.0, share > 0.0)
        }
    };

    let mut in_left = vec![false; n - 1];
    let mut rep_left = 0.0;
    let mut workers_left = 0.0;
    let mut count_left = 0usize;
    let mut prev_gray = 0u64;
    // Gray-code walk over subsets of members[..n-1]; the last member stays
    // on the right, so each unordered bipartition appears exactly once.
    for i in 1u64..(1 << (n - 1)) {
        let gray = i ^ (i >> 1);
        let bit = (gray ^ prev_gray).trailing_zeros() as usize;
        prev_gray = gray;
        let m = members[bit];
        if in_left[bit] {
            in_left[bit] = false;
            rep_left -= table.reputation_sum(m);
            workers_left -= table.worker_count(m) as f64;
            count_left -= 1;
        } else {
            in_left[bit] = true;
            rep_left += table.reputation_sum(m);
            workers_left += table.worker_count(m) as f64;
            count_left += 1;
        }
        if count_left == 0 {
            continue;
        }
        let rep_right = total_rep - rep_left;
        let workers_right = total_workers - workers_left;
        let count_right = n - count_left;
        let u_left = utility(rep_left, workers_left, count_left);
        let u_right = utility(rep_right, workers_right, count_right);

        let candidate = match cfg.preference {
            PreferenceOrder::CoalitionOrder => u_left + u_right > whole,
            PreferenceOrder::Pareto => {
                let (ok_l, strict_l) = side_ok(rep_left, u_left, count_left);
                let (ok_r, strict_r) = side_ok(rep_right, u_right, count_right);
                ok_l && ok_r && (strict_l || strict_r)
            }
        };
        if !candidate {
            continue;
        }
        let left: Vec<MinerId> = members[..n - 1]
            .iter()
            .zip(&in_left)
            .filter(|(_, l)| **l)
            .map(|(m, _)| *m)
            .collect();
        let right: Vec<MinerId> = members
            .iter()
            .filter(|m| !left.contains(m))
            .copied()
            .collect();
        let frag = vec![Coalition::new(left), Coalition::new(right)];
        // Confirm with the exact per-miner comparison; the incremental sums
        // can disagree with it by an ulp on razor-thin ties.
        if preferred_cached(&frag, std::slice::from_ref(c), table, cfg, cache)? {
            return Ok(Some(frag));
        }
    }
    Ok(None)
}

fn pick(coalitions: &[Coalition], idx: &[usize]) -> Vec<Coalition> {
    idx.iter().map(|&i| coalitions[i].clone()).collect()
}

fn apply_replace(coalitions: &mut Vec<Coalition>, removed: &[usize], added: Vec<Coalition>) {
    let mut removed: Vec<usize> = removed.to_vec();
    removed.sort_unstable_by(|a, b| b.cmp(a));
    for i in removed {
        coalitions.swap_remove(i);
    }
    coalitions.extend(added);
    coalitions.sort();
}

/// Bounds for the exhaustive stability check.
#[derive(Debug, Clone, Copy)]
pub struct StabilityLimits {
    /// Largest coalition whose sub-partitions are enumerated.
    pub max_coalition_size: usize,
    /// Largest number of coalitions whose merge subsets are enumerated.
    pub max_coalitions: usize,
}

impl Default for StabilityLimits {
    fn default() -> Self {
        Self { max_coalition_size: 8, max_coalitions: 12 }
    }
}

/// Exhaustive defection-function stability check: a partition is stable iff
/// (1) no coalition has a sub-partition preferred over it, and (2) no subset
/// of coalitions has a preferred merged union. Intended for small instances;
/// errors above the configured enumeration bounds.
pub fn is_dhp_stable(
    partition: &Partition,
    table: &MinerTable,
    cfg: &CoalitionConfig,
    limits: &StabilityLimits,
) -> Result<bool, CoalitionError> {
    let mut cache = UtilityCache::default();
    // Condition 1: no profitable split into any sub-partition.
    for c in partition.coalitions() {
        if c.size() > limits.max_coalition_size {
            return Err(CoalitionError::InstanceTooLarge(format!(
                "coalition of size {} exceeds split bound {}",
                c.size(),
                limits.max_coalition_size
            )));
        }
        let members: Vec<MinerId> = c.members().collect();
        for sub in set_partitions(&members) {
            if sub.len() < 2 {
                continue;
            }
            let frag: Vec<Coalition> = sub.into_iter().map(Coalition::new).collect();
            if preferred_cached(&frag, std::slice::from_ref(c), table, cfg, &mut cache)? {
                return Ok(false);
            }
        }
    }

    // Condition 2: no profitable merge of any coalition subset.
    let l = partition.len();
    if l > limits.max_coalitions {
        return Err(CoalitionError::InstanceTooLarge(format!(
            "{} coalitions exceed merge bound {}",
            l, limits.max_coalitions
        )));
    }
    for mask in 1u64..(1 << l) {
        if mask.count_ones() < 2 {
            continue;
        }
        let subset: Vec<Coalition> = (0..l)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| partition.coalitions()[i].clone())
            .collect();
        let union = subset
            .iter()
            .skip(1)
            .fold(subset[0].clone(), |acc, c| acc.union(c));
        if preferred_cached(std::slice::from_ref(&union), &subset, table, cfg, &mut cache)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All set partitions of `items`, enumerated via restricted-growth strings.
pub fn set_partitions<T: Clone>(items: &[T]) -> Vec<Vec<Vec<T>>> {
    let n = items.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    // rgs[i] = block index of item i; rgs[i] <= max(rgs[..i]) + 1.
    let mut rgs = vec![0usize; n];
    loop {
        let blocks = rgs.iter().max().unwrap() + 1;
        let mut parts: Vec<Vec<T>> = vec![Vec::new(); blocks];
        for (i, &b) in rgs.iter().enumerate() {
            parts[b].push(items[i].clone());
        }
        out.push(parts);

        // Advance to the next restricted-growth string.
        let mut i = n;
        loop {
            if i == 1 {
                return out;
            }
            i -= 1;
            let prefix_max = rgs[..i].iter().max().copied().unwrap_or(0);
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    const TOL: f64 = 1e-9;

    /// Two miners with reputation masses 1.5 and 1.5 over two workers each.
    fn two_miner_table() -> MinerTable {
        let assignments = vec![
            MinerAssignment { miner_id: 0, workers: vec![(0, 0.8), (1, 0.7)] },
            MinerAssignment { miner_id: 1, workers: vec![(2, 0.6), (3, 0.9)] },
        ];
        MinerTable::new(&assignments).unwrap()
    }

    fn two_miner_cfg() -> CoalitionConfig {
        CoalitionConfig {
            total_miners: 2,
            delta: 1.0,
            rho: 0.01,
            barrier_offset: 0.1,
            preference: PreferenceOrder::Pareto,
            total_reputation_sum: 3.0,
        }
    }

    #[test]
    fn selection_probability_examples() {
        let table = two_miner_table();
        let cfg = two_miner_cfg();
        let single = Coalition::singleton(0);
        assert_abs_diff_eq!(selection_probability(&single, &table, &cfg).unwrap(), 0.5, epsilon = TOL);
        let grand = Coalition::new([0, 1]);
        assert_abs_diff_eq!(selection_probability(&grand, &table, &cfg).unwrap(), 1.0, epsilon = TOL);

        let empty_workers = MinerTable::new(&[
            MinerAssignment { miner_id: 0, workers: vec![] },
            MinerAssignment { miner_id: 1, workers: vec![] },
        ])
        .unwrap();
        assert_abs_diff_eq!(
            selection_probability(&single, &empty_workers, &cfg).unwrap(),
            0.0,
            epsilon = TOL
        );

        let bad = CoalitionConfig { total_reputation_sum: 0.0, ..cfg };
        assert!(matches!(
            selection_probability(&single, &table, &bad),
            Err(CoalitionError::InvalidConfig(_))
        ));
    }

    #[test]
    fn selection_probability_additive_over_disjoint_coalitions() {
        let table = two_miner_table();
        let cfg = two_miner_cfg();
        let a = selection_probability(&Coalition::singleton(0), &table, &cfg).unwrap();
        let b = selection_probability(&Coalition::singleton(1), &table, &cfg).unwrap();
        let ab = selection_probability(&Coalition::new([0, 1]), &table, &cfg).unwrap();
        assert_abs_diff_eq!(a + b, ab, epsilon = TOL);
    }

    #[test]
    fn communication_cost_frozen_values() {
        let cfg = CoalitionConfig { total_miners: 20, ..two_miner_cfg() };
        assert_abs_diff_eq!(communication_cost(1, &cfg), 0.0, epsilon = TOL);
        // -ln(1 - (1.9/20)^2) and -ln(1 - (19.9/20)^2), evaluated directly.
        assert_abs_diff_eq!(communication_cost(2, &cfg), 0.00906597201375, epsilon = 1e-10);
        assert_abs_diff_eq!(communication_cost(20, &cfg), 4.60767331621, epsilon = 1e-9);
    }

    #[test]
    fn communication_cost_strictly_increasing() {
        let cfg = CoalitionConfig { total_miners: 20, ..two_miner_cfg() };
        for size in 2..20 {
            assert!(communication_cost(size + 1, &cfg) > communication_cost(size, &cfg));
        }
        assert!(communication_cost(2, &cfg) > communication_cost(1, &cfg));
    }

    #[test]
    fn coalition_utility_worked_example() {
        let table = two_miner_table();
        let cfg = two_miner_cfg();
        // Pr = 0.5, mass 1.5, no barrier for a singleton, two workers at rho each.
        let u = coalition_utility(&Coalition::singleton(0), &table, &cfg).unwrap();
        assert_abs_diff_eq!(u, 0.5 * 1.5 - 0.02, epsilon = TOL);

        // Grand coalition: Pr = 1, mass 3, barrier -ln(1 - (1.9/2)^2), four workers.
        let grand = coalition_utility(&Coalition::new([0, 1]), &table, &cfg).unwrap();
        assert_abs_diff_eq!(grand, 3.0 - 2.32790290098 - 0.04, epsilon = 1e-9);
    }

    #[test]
    fn coalition_utility_zero_workers() {
        let table = MinerTable::new(&[MinerAssignment { miner_id: 0, workers: vec![] }]).unwrap();
        let cfg = CoalitionConfig { total_miners: 1, ..two_miner_cfg() };
        let u = coalition_utility(&Coalition::singleton(0), &table, &cfg).unwrap();
        assert_abs_diff_eq!(u, 0.0, epsilon = TOL);
    }

    #[test]
    fn miner_utility_shares() {
        let table = two_miner_table();
        let cfg = two_miner_cfg();
        let single = Coalition::singleton(0);
        assert_abs_diff_eq!(
            miner_utility(0, &single, &table, &cfg).unwrap(),
            coalition_utility(&single, &table, &cfg).unwrap(),
            epsilon = TOL
        );

        // Equal reputation masses split the grand coalition utility evenly.
        let grand = Coalition::new([0, 1]);
        let total = coalition_utility(&grand, &table, &cfg).unwrap();
        assert_abs_diff_eq!(miner_utility(0, &grand, &table, &cfg).unwrap(), total / 2.0, epsilon = TOL);
        assert_abs_diff_eq!(miner_utility(1, &grand, &table, &cfg).unwrap(), total / 2.0, epsilon = TOL);

        assert!(matches!(
            miner_utility(1, &single, &table, &cfg),
            Err(CoalitionError::NotAMember(1))
        ));
    }

    #[test]
    fn pareto_comparison_edge_cases() {
        let table = two_miner_table();
        let cfg = two_miner_cfg();
        let p = vec![Coalition::singleton(0), Coalition::singleton(1)];
        // Identical fragments: no strict inequality.
        assert!(!pareto_preferred(&p, &p, &table, &cfg).unwrap());

        let mismatched = vec![Coalition::singleton(0)];
        assert!(matches!(
            pareto_preferred(&p, &mismatched, &table, &cfg),
            Err(CoalitionError::MismatchedPlayers)
        ));
    }

    #[test]
    fn coalition_order_compares_totals() {
        let table = two_miner_table();
        let cfg = CoalitionConfig { delta: 0.0, rho: 0.0, ..two_miner_cfg() };
        let split = vec![Coalition::singleton(0), Coalition::singleton(1)];
        let merged = vec![Coalition::new([0, 1])];
        // With no costs the grand coalition's Pr * mass = 3 beats 0.75 + 0.75.
        assert!(coalition_order_preferred(&merged, &split, &table, &cfg).unwrap());
        assert!(!coalition_order_preferred(&split, &merged, &table, &cfg).unwrap());
        assert!(!coalition_order_preferred(&split, &split, &table, &cfg).unwrap());
    }

    #[test]
    fn form_coalitions_single_miner() {
        let table = MinerTable::new(&[MinerAssignment { miner_id: 0, workers: vec![(0, 0.9)] }]).unwrap();
        let cfg = CoalitionConfig { total_miners: 1, total_reputation_sum: 0.9, ..two_miner_cfg() };
        let out = form_coalitions(&table, &cfg, None).unwrap();
        assert_eq!(out.partition.len(), 1);
        assert_eq!(out.best, Coalition::singleton(0));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn form_coalitions_two_miners_cost_regimes() {
        let table = two_miner_table();
        // Barrier dominates: -ln(1 - (1.9/2)^2) ~ 2.33 eats the merge gain.
        let costly = two_miner_cfg();
        let out = form_coalitions(&table, &costly, None).unwrap();
        assert_eq!(out.partition.len(), 2, "should stay split");

        // Free coordination: merging lifts Pr from 0.5 to 1.
        let free = CoalitionConfig { delta: 0.0, ..two_miner_cfg() };
        let out = form_coalitions(&table, &free, None).unwrap();
        assert_eq!(out.partition.len(), 1, "should merge");
        assert_eq!(out.best, Coalition::new([0, 1]));
    }

    #[test]
    fn dhp_stability_examples() {
        let table = MinerTable::new(&[MinerAssignment { miner_id: 0, workers: vec![(0, 1.0)] }]).unwrap();
        let cfg = CoalitionConfig { total_miners: 1, total_reputation_sum: 1.0, ..two_miner_cfg() };
        let p = Partition::singletons(1);
        assert!(is_dhp_stable(&p, &table, &cfg, &StabilityLimits::default()).unwrap());

        // Two singletons whose merge is preferred: unstable by construction.
        let table = two_miner_table();
        let cfg = CoalitionConfig { delta: 0.0, ..two_miner_cfg() };
        let p = Partition::singletons(2);
        assert!(!is_dhp_stable(&p, &table, &cfg, &StabilityLimits::default()).unwrap());
    }

    #[test]
    fn stability_limit_errors() {
        let n = 13;
        let assignments: Vec<MinerAssignment> = (0..n)
            .map(|m| MinerAssignment { miner_id: m, workers: vec![(m as u64, 0.5)] })
            .collect();
        let table = MinerTable::new(&assignments).unwrap();
        let cfg = CoalitionConfig {
            total_miners: n,
            total_reputation_sum: 0.5 * n as f64,
            ..two_miner_cfg()
        };
        let p = Partition::singletons(n);
        assert!(matches!(
            is_dhp_stable(&p, &table, &cfg, &StabilityLimits::default()),
            Err(CoalitionError::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn set_partitions_counts_are_bell_numbers() {
        assert_eq!(set_partitions(&[1]).len(), 1);
        assert_eq!(set_partitions(&[1, 2]).len(), 2);
        assert_eq!(set_partitions(&[1, 2, 3]).len(), 5);
        assert_eq!(set_partitions(&[1, 2, 3, 4]).len(), 15);
        assert_eq!(set_partitions(&[1, 2, 3, 4, 5]).len(), 52);
    }

    #[test]
    fn assign_workers_round_robin() {
        let reps: Vec<(u64, f64)> = (0..7).map(|i| (i, 0.5)).collect();
        let a = assign_workers(&reps, 3);
        assert_eq!(a[0].workers.len(), 3);
        assert_eq!(a[1].workers.len(), 2);
        assert_eq!(a[2].workers.len(), 2);
        let even = assign_workers(&reps[..6], 3);
        assert!(even.iter().all(|m| m.workers.len() == 2));
    }

    /// Random small instance for stability and trace properties.
    fn random_instance(
        rng: &mut impl Rng,
        max_miners: usize,
    ) -> (MinerTable, CoalitionConfig) {
        let m = rng.random_range(1..=max_miners);
        let assignments: Vec<MinerAssignment> = (0..m)
            .map(|miner_id| {
                let w = rng.random_range(1..4usize);
                let workers = (0..w)
                    .map(|i| ((miner_id * 8 + i) as u64, rng.random_range(0.6..1.0)))
                    .collect();
                MinerAssignment { miner_id, workers }
            })
            .collect();
        let table = MinerTable::new(&assignments).unwrap();
        let total = table.total_reputation();
        let cfg = CoalitionConfig {
            total_miners: m,
            delta: rng.random_range(0.0..2.0),
            rho: rng.random_range(0.0..0.05),
            barrier_offset: 0.1,
            preference: if rng.random_bool(0.5) {
                PreferenceOrder::Pareto
            } else {
                PreferenceOrder::CoalitionOrder
            },
            total_reputation_sum: total,
        };
        (table, cfg)
    }

    #[test]
    fn formation_output_is_stable_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..25 {
            let (table, cfg) = random_instance(&mut rng, 6);
            let out = form_coalitions(&table, &cfg, None).unwrap();
            assert!(
                is_dhp_stable(&out.partition, &table, &cfg, &StabilityLimits::default()).unwrap(),
                "unstable outcome for cfg {cfg:?}"
            );
        }
    }

    #[test]
    fn trace_steps_strictly_improve() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..25 {
            let (table, cfg) = random_instance(&mut rng, 7);
            let out = form_coalitions(&table, &cfg, None).unwrap();
            for step in &out.trace {
                match cfg.preference {
                    PreferenceOrder::Pareto => {
                        let mut strict = false;
                        for ((m, before), (m2, after)) in
                            step.miner_utils_before.iter().zip(&step.miner_utils_after)
                        {
                            assert_eq!(m, m2);
                            assert!(after >= before);
                            if after > before {
                                strict = true;
                            }
                        }
                        assert!(strict);
                    }
                    PreferenceOrder::CoalitionOrder => {
                        let total = |frag: &[Coalition]| -> f64 {
                            frag.iter()
                                .map(|c| coalition_utility(c, &table, &cfg).unwrap())
                                .sum()
                        };
                        assert!(total(&step.after) > total(&step.before));
                    }
                }
            }
        }
    }

    #[test]
    fn randomized_scan_order_still_terminates_and_is_stable() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for seed in 0..10u64 {
            let (table, cfg) = random_instance(&mut rng, 6);
            let out = form_coalitions(&table, &cfg, Some(seed)).unwrap();
            assert!(is_dhp_stable(&out.partition, &table, &cfg, &StabilityLimits::default()).unwrap());
        }
    }

    #[test]
    fn trace_serializes_to_json_lines() {
        let table = two_miner_table();
        let cfg = CoalitionConfig { delta: 0.0, ..two_miner_cfg() };
        let out = form_coalitions(&table, &cfg, None).unwrap();
        assert!(!out.trace.is_empty());
        for step in &out.trace {
            let line = serde_json::to_string(step).unwrap();
            assert!(line.contains("\"operation\""));
            assert!(!line.contains('\n'));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn formation_terminates_below_bell_bound(seed in 0u64..1_000_000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (table, cfg) = random_instance(&mut rng, 6);
            let out = form_coalitions(&table, &cfg, None).unwrap();
            // Bell(6) = 203 partitions bounds the number of strict improvements.
            prop_assert!(out.trace.len() < 203);
            // Partition covers the miner universe exactly.
            let covered = out.partition.miner_set();
            prop_assert_eq!(covered.len(), table.len());
        }
    }
}
