//! The double-ledger pair: two independent append-only hash-chained logs.
//!
//! The reputation chain records opinion updates; the resource chain records
//! recruitment, worker registration, and resource interactions. A bridge
//! executes registered cross-chain query handlers against a consistent
//! snapshot of the target chain, recording the request on the source chain
//! and the result on both.
//!
//! Transactions serialize to a canonical byte form (length-prefixed
//! variable fields in declaration order, big-endian integers, IEEE-754 bit
//! patterns for floats) and blocks hash over `(height, prev_hash, tx bytes,
//! sealed_at)` with SHA-256, so any stored bit flip breaks verification.
//! Time is a logical clock in integer microseconds.
//!
//! Each ledger is single-writer; the two chains are independent and may be
//! driven by separate scenario threads.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::reputation::{
    self, Opinion, Recommendation, ReputationError, ServiceHistory, TaskOutcome,
};

/// Logical simulated time in integer microseconds.
pub type SimMicros = u64;
pub type Hash32 = [u8; 32];

pub const GENESIS_PREV_HASH: Hash32 = [0u8; 32];
pub const DEFAULT_BLOCK_SIZE: usize = 256;
const PERSIST_HEADER: &str = "RCDC-LEDGER v1";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("transaction already present (same canonical digest)")]
    DuplicateTx,
    #[error("nothing pending to seal")]
    NothingPending,
    #[error("worker {0} has no recorded reputation history")]
    UnknownWorker(u64),
    #[error("no cross-chain handler registered under {0:?}")]
    HandlerNotRegistered(String),
    #[error("chain verification failed on reload")]
    VerifyFailed,
    #[error("malformed record: {0}")]
    BadRecord(String),
    #[error("reputation: {0}")]
    Reputation(#[from] ReputationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainId {
    Reputation,
    Resource,
}

impl ChainId {
    fn tag(self) -> u8 {
        match self {
            ChainId::Reputation => 0,
            ChainId::Resource => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self, LedgerError> {
        match t {
            0 => Ok(ChainId::Reputation),
            1 => Ok(ChainId::Resource),
            other => Err(LedgerError::BadRecord(format!("unknown chain tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChainId::Reputation => "reputation",
            ChainId::Resource => "resource",
        }
    }
}

/// Transaction payloads of both chains.
#[derive(Debug, Clone, PartialEq)]
pub enum TxKind {
    ReputationUpdate { msp: u64, worker: u64, opinion: Opinion },
    ResourceInteraction { msp: u64, worker: u64, task_id: u64, reward: f64, outcome: TaskOutcome },
    Recruitment { msp: u64, rep_threshold: f64, task_descriptor: String },
    WorkerRegistration { worker: u64, metadata: String },
    WorkerLogout { worker: u64 },
    CrossChainResult { payload: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub kind: TxKind,
    pub submitted_at: SimMicros,
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        if self.pos + n > self.buf.len() {
            return Err(LedgerError::BadRecord("truncated record".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, LedgerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, LedgerError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, LedgerError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn var_bytes(&mut self) -> Result<&'a [u8], LedgerError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn string(&mut self) -> Result<String, LedgerError> {
        String::from_utf8(self.var_bytes()?.to_vec())
            .map_err(|e| LedgerError::BadRecord(format!("bad utf-8: {e}")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

impl Transaction {
    pub fn new(kind: TxKind, submitted_at: SimMicros) -> Self {
        Self { kind, submitted_at }
    }

    /// Canonical byte form: a kind tag, the fields in declaration order,
    /// then the submission time.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match &self.kind {
            TxKind::ReputationUpdate { msp, worker, opinion } => {
                out.push(0);
                out.extend_from_slice(&msp.to_be_bytes());
                out.extend_from_slice(&worker.to_be_bytes());
                out.extend_from_slice(&opinion.belief().to_bits().to_be_bytes());
                out.extend_from_slice(&opinion.disbelief().to_bits().to_be_bytes());
                out.extend_from_slice(&opinion.uncertainty().to_bits().to_be_bytes());
            }
            TxKind::ResourceInteraction { msp, worker, task_id, reward, outcome } => {
                out.push(1);
                out.extend_from_slice(&msp.to_be_bytes());
                out.extend_from_slice(&worker.to_be_bytes());
                out.extend_from_slice(&task_id.to_be_bytes());
                out.extend_from_slice(&reward.to_bits().to_be_bytes());
                out.push(match outcome {
                    TaskOutcome::Positive => 1,
                    TaskOutcome::Negative => 0,
                });
            }
            TxKind::Recruitment { msp, rep_threshold, task_descriptor } => {
                out.push(2);
                out.extend_from_slice(&msp.to_be_bytes());
                out.extend_from_slice(&rep_threshold.to_bits().to_be_bytes());
                put_bytes(&mut out, task_descriptor.as_bytes());
            }
            TxKind::WorkerRegistration { worker, metadata } => {
                out.push(3);
                out.extend_from_slice(&worker.to_be_bytes());
                put_bytes(&mut out, metadata.as_bytes());
            }
            TxKind::WorkerLogout { worker } => {
                out.push(4);
                out.extend_from_slice(&worker.to_be_bytes());
            }
            TxKind::CrossChainResult { payload } => {
                out.push(5);
                put_bytes(&mut out, payload);
            }
        }
        out.extend_from_slice(&self.submitted_at.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut c = Cursor::new(bytes);
        let kind = match c.u8()? {
            0 => TxKind::ReputationUpdate {
                msp: c.u64()?,
                worker: c.u64()?,
                opinion: Opinion::new(c.f64()?, c.f64()?, c.f64()?)?,
            },
            1 => TxKind::ResourceInteraction {
                msp: c.u64()?,
                worker: c.u64()?,
                task_id: c.u64()?,
                reward: c.f64()?,
                outcome: match c.u8()? {
                    1 => TaskOutcome::Positive,
                    0 => TaskOutcome::Negative,
                    other => return Err(LedgerError::BadRecord(format!("bad outcome {other}"))),
                },
            },
            2 => TxKind::Recruitment {
                msp: c.u64()?,
                rep_threshold: c.f64()?,
                task_descriptor: c.string()?,
            },
            3 => TxKind::WorkerRegistration { worker: c.u64()?, metadata: c.string()? },
            4 => TxKind::WorkerLogout { worker: c.u64()? },
            5 => TxKind::CrossChainResult { payload: c.var_bytes()?.to_vec() },
            other => return Err(LedgerError::BadRecord(format!("unknown tx tag {other}"))),
        };
        let submitted_at = c.u64()?;
        if !c.done() {
            return Err(LedgerError::BadRecord("trailing bytes after transaction".into()));
        }
        Ok(Self { kind, submitted_at })
    }

    /// Transaction id: SHA-256 of the canonical bytes.
    pub fn id(&self) -> Hash32 {
        sha256(&self.canonical_bytes())
    }
}

fn sha256(bytes: &[u8]) -> Hash32 {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash32,
    pub tx_list: Vec<Transaction>,
    pub sealed_at: SimMicros,
    pub hash: Hash32,
}

fn tx_blob(txs: &[Transaction]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(txs.len() as u32).to_be_bytes());
    for tx in txs {
        put_bytes(&mut out, &tx.canonical_bytes());
    }
    out
}

impl Block {
    pub fn compute_hash(
        height: u64,
        prev_hash: &Hash32,
        txs: &[Transaction],
        sealed_at: SimMicros,
    ) -> Hash32 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&height.to_be_bytes());
        bytes.extend_from_slice(prev_hash);
        bytes.extend_from_slice(&tx_blob(txs));
        bytes.extend_from_slice(&sealed_at.to_be_bytes());
        sha256(&bytes)
    }

    fn seal(height: u64, prev_hash: Hash32, tx_list: Vec<Transaction>, sealed_at: SimMicros) -> Self {
        let hash = Self::compute_hash(height, &prev_hash, &tx_list, sealed_at);
        Self { height, prev_hash, tx_list, sealed_at, hash }
    }

    /// Canonical persisted record: version, chain tag, header fields, the
    /// transaction blob, then the stored hash.
    pub fn canonical_bytes(&self, chain: ChainId) -> Vec<u8> {
        let mut out = vec![1u8, chain.tag()];
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.prev_hash);
        out.extend_from_slice(&self.sealed_at.to_be_bytes());
        out.extend_from_slice(&tx_blob(&self.tx_list));
        out.extend_from_slice(&self.hash);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<(ChainId, Self), LedgerError> {
        let mut c = Cursor::new(bytes);
        let version = c.u8()?;
        if version != 1 {
            return Err(LedgerError::BadRecord(format!("unknown block version {version}")));
        }
        let chain = ChainId::from_tag(c.u8()?)?;
        let height = c.u64()?;
        let prev_hash: Hash32 = c.take(32)?.try_into().unwrap();
        let sealed_at = c.u64()?;
        let count = c.u32()? as usize;
        let mut tx_list = Vec::with_capacity(count);
        for _ in 0..count {
            tx_list.push(Transaction::decode(c.var_bytes()?)?);
        }
        let hash: Hash32 = c.take(32)?.try_into().unwrap();
        if !c.done() {
            return Err(LedgerError::BadRecord("trailing bytes after block".into()));
        }
        Ok((chain, Self { height, prev_hash, tx_list, sealed_at, hash }))
    }
}

/// Receipt returned by [`ChainedLedger::append_tx`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub tx_id: Hash32,
    pub enqueue_time: SimMicros,
}

/// One append-only hash-chained ledger.
#[derive(Debug, Clone)]
pub struct ChainedLedger {
    chain_id: ChainId,
    blocks: Vec<Block>,
    pending: VecDeque<Transaction>,
    seen: BTreeSet<Hash32>,
    pub block_size: usize,
    pub service_time_per_tx: SimMicros,
}

impl ChainedLedger {
    /// A fresh chain holding only the genesis block.
    pub fn new(chain_id: ChainId) -> Self {
        Self {
            chain_id,
            blocks: vec![Block::seal(0, GENESIS_PREV_HASH, Vec::new(), 0)],
            pending: VecDeque::new(),
            seen: BTreeSet::new(),
            block_size: DEFAULT_BLOCK_SIZE,
            service_time_per_tx: 1000,
        }
    }

    pub fn chain_id(&self) -> ChainId {
        self.chain_id
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().expect("genesis always present").height
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// All sealed transactions in chain order.
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks.iter().flat_map(|b| b.tx_list.iter())
    }

    /// Enqueues a transaction. The id is the digest of the canonical bytes;
    /// re-submitting an identical transaction is rejected.
    pub fn append_tx(&mut self, tx: Transaction, now: SimMicros) -> Result<Receipt, LedgerError> {
        let tx_id = tx.id();
        if !self.seen.insert(tx_id) {
            return Err(LedgerError::DuplicateTx);
        }
        self.pending.push_back(tx);
        Ok(Receipt { tx_id, enqueue_time: now })
    }

    /// Drains up to `block_size` pending transactions into a new block.
    pub fn seal_block(&mut self, now: SimMicros) -> Result<&Block, LedgerError> {
        if self.pending.is_empty() {
            return Err(LedgerError::NothingPending);
        }
        let take = self.pending.len().min(self.block_size);
        let txs: Vec<Transaction> = self.pending.drain(..take).collect();
        let prev = self.blocks.last().unwrap();
        let block = Block::seal(prev.height + 1, prev.hash, txs, now);
        self.blocks.push(block);
        Ok(self.blocks.last().unwrap())
    }

    /// Seals until nothing is pending; returns the number of blocks sealed.
    pub fn seal_all(&mut self, now: SimMicros) -> usize {
        let mut sealed = 0;
        while !self.pending.is_empty() {
            self.seal_block(now).expect("pending nonempty");
            sealed += 1;
        }
        sealed
    }

    /// True iff every block's hash recomputes, heights are consecutive, and
    /// each block links to its predecessor (genesis to the zero hash).
    pub fn verify_chain(&self) -> bool {
        let mut prev_hash = GENESIS_PREV_HASH;
        for (i, block) in self.blocks.iter().enumerate() {
            if block.height != i as u64 || block.prev_hash != prev_hash {
                return false;
            }
            let recomputed =
                Block::compute_hash(block.height, &block.prev_hash, &block.tx_list, block.sealed_at);
            if recomputed != block.hash {
                return false;
            }
            prev_hash = block.hash;
        }
        true
    }

    /// Writes the chain as a versioned header line plus one hex-encoded
    /// canonical block record per line. Pending transactions are not
    /// persisted; only sealed state is.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), LedgerError> {
        writeln!(w, "{PERSIST_HEADER} {}", self.chain_id.name())?;
        for block in &self.blocks {
            writeln!(w, "{}", hex::encode(block.canonical_bytes(self.chain_id)))?;
        }
        Ok(())
    }

    pub fn save_to_string(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("hex output is ascii")
    }

    /// Reloads a persisted chain and re-verifies it.
    pub fn load<R: BufRead>(r: R) -> Result<Self, LedgerError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| LedgerError::BadRecord("empty ledger file".into()))??;
        let chain_id = match header.strip_prefix(PERSIST_HEADER) {
            Some(" reputation") => ChainId::Reputation,
            Some(" resource") => ChainId::Resource,
            _ => return Err(LedgerError::BadRecord(format!("bad header {header:?}"))),
        };
        let mut blocks = Vec::new();
        let mut seen = BTreeSet::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bytes = hex::decode(line.trim())
                .map_err(|e| LedgerError::BadRecord(format!("bad hex: {e}")))?;
            let (chain, block) = Block::decode(&bytes)?;
            if chain != chain_id {
                return Err(LedgerError::BadRecord("block belongs to the other chain".into()));
            }
            for tx in &block.tx_list {
                seen.insert(tx.id());
            }
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(LedgerError::BadRecord("ledger has no genesis block".into()));
        }
        let ledger = Self {
            chain_id,
            blocks,
            pending: VecDeque::new(),
            seen,
            block_size: DEFAULT_BLOCK_SIZE,
            service_time_per_tx: 1000,
        };
        if !ledger.verify_chain() {
            return Err(LedgerError::VerifyFailed);
        }
        Ok(ledger)
    }

    /// Latest recorded local opinion per (msp, worker) pair, plus each msp's
    /// served-worker history, replayed from the sealed reputation updates.
    pub fn reputation_state(&self) -> ReputationState {
        let mut latest = BTreeMap::new();
        let mut served: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for tx in self.transactions() {
            if let TxKind::ReputationUpdate { msp, worker, opinion } = &tx.kind {
                latest.insert((*msp, *worker), *opinion);
                served.entry(*msp).or_default().insert(*worker);
            }
        }
        ReputationState { latest, served }
    }
}

/// Replayed view of a reputation chain: the latest opinion per (msp,
/// worker) pair and the service histories implied by the update records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReputationState {
    pub latest: BTreeMap<(u64, u64), Opinion>,
    pub served: BTreeMap<u64, BTreeSet<u64>>,
}

impl ReputationState {
    pub fn history(&self, msp: u64) -> ServiceHistory {
        ServiceHistory::new(msp, self.served.get(&msp).cloned().unwrap_or_default())
    }

    /// Composite opinion of `worker` from `observer`'s perspective: the
    /// observer's latest local opinion fused with tie- and familiarity-
    /// weighted recommendations from every other msp that recorded one.
    pub fn composite_opinion(&self, observer: u64, worker: u64) -> Result<Opinion, LedgerError> {
        let mut local = None;
        let mut recs = Vec::new();
        let observer_history = self.history(observer);
        for ((msp, w), opinion) in &self.latest {
            if *w != worker {
                continue;
            }
            if *msp == observer {
                local = Some(*opinion);
            } else {
                recs.push(Recommendation {
                    tie: reputation::social_tie(&observer_history, &self.history(*msp)),
                    opinion: *opinion,
                });
            }
        }
        if local.is_none() && recs.is_empty() {
            return Err(LedgerError::UnknownWorker(worker));
        }
        Ok(reputation::composite_opinion(local.unwrap_or_else(Opinion::vacuous), &recs)?)
    }
}

/// A cross-chain query: handler name plus an opaque parameter payload.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub handler: String,
    pub params: Vec<u8>,
}

impl QueryRequest {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8]; // request marker inside CrossChainResult payloads
        put_bytes(&mut out, self.handler.as_bytes());
        put_bytes(&mut out, &self.params);
        out
    }
}

/// Result payload returned by a cross-chain query.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossChainOutcome {
    pub payload: Vec<u8>,
}

pub type HandlerFn = Box<dyn Fn(&ChainedLedger, &[u8]) -> Result<Vec<u8>, LedgerError> + Send + Sync>;

/// Registry of cross-chain query handlers.
///
/// The built-in `latest-reputation` handler answers with the composite
/// reputation opinions and values of the requested workers, computed from
/// the target (reputation) chain's sealed update history.
pub struct CrossChainBridge {
    handlers: BTreeMap<String, HandlerFn>,
}

impl Default for CrossChainBridge {
    fn default() -> Self {
        Self::new()
    }
}

pub const LATEST_REPUTATION_HANDLER: &str = "latest-reputation";

impl CrossChainBridge {
    pub fn new() -> Self {
        let mut bridge = Self { handlers: BTreeMap::new() };
        bridge.register(LATEST_REPUTATION_HANDLER, |target, params| {
            let req = ReputationQuery::decode(params)?;
            let state = target.reputation_state();
            let mut resp = ReputationQueryResponse { entries: Vec::new() };
            for worker in &req.workers {
                let opinion = state.composite_opinion(req.observer, *worker)?;
                let value = reputation::reputation_value(opinion, req.gamma);
                resp.entries.push((*worker, opinion, value));
            }
            Ok(resp.encode())
        });
        bridge
    }

    pub fn register(
        &mut self,
        name: &str,
        handler: impl Fn(&ChainedLedger, &[u8]) -> Result<Vec<u8>, LedgerError> + Send + Sync + 'static,
    ) {
        self.handlers.insert(name.to_string(), Box::new(handler));
    }

    /// Runs `request` against a snapshot of `target`, recording the request
    /// on `source` and the result on both chains.
    pub fn query(
        &self,
        source: &mut ChainedLedger,
        target: &mut ChainedLedger,
        request: &QueryRequest,
        now: SimMicros,
    ) -> Result<CrossChainOutcome, LedgerError> {
        let handler = self
            .handlers
            .get(&request.handler)
            .ok_or_else(|| LedgerError::HandlerNotRegistered(request.handler.clone()))?;
        let result = handler(target, &request.params)?;

        source.append_tx(
            Transaction::new(TxKind::CrossChainResult { payload: request.canonical_bytes() }, now),
            now,
        )?;
        let mut result_payload = vec![1u8]; // result marker
        put_bytes(&mut result_payload, request.handler.as_bytes());
        put_bytes(&mut result_payload, &result);
        let result_tx = TxKind::CrossChainResult { payload: result_payload };
        source.append_tx(Transaction::new(result_tx.clone(), now), now)?;
        target.append_tx(Transaction::new(result_tx, now), now)?;
        Ok(CrossChainOutcome { payload: result })
    }
}

/// Parameters of the built-in reputation query.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationQuery {
    pub observer: u64,
    pub gamma: f64,
    pub workers: Vec<u64>,
}

impl ReputationQuery {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.observer.to_be_bytes());
        out.extend_from_slice(&self.gamma.to_bits().to_be_bytes());
        out.extend_from_slice(&(self.workers.len() as u32).to_be_bytes());
        for w in &self.workers {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut c = Cursor::new(bytes);
        let observer = c.u64()?;
        let gamma = c.f64()?;
        let count = c.u32()? as usize;
        let workers = (0..count).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { observer, gamma, workers })
    }
}

/// Entries of the built-in reputation query response:
/// `(worker, composite opinion, composite value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationQueryResponse {
    pub entries: Vec<(u64, Opinion, f64)>,
}

impl ReputationQueryResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        for (w, op, v) in &self.entries {
            out.extend_from_slice(&w.to_be_bytes());
            out.extend_from_slice(&op.belief().to_bits().to_be_bytes());
            out.extend_from_slice(&op.disbelief().to_bits().to_be_bytes());
            out.extend_from_slice(&op.uncertainty().to_bits().to_be_bytes());
            out.extend_from_slice(&v.to_bits().to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut c = Cursor::new(bytes);
        let count = c.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let w = c.u64()?;
            let op = Opinion::new(c.f64()?, c.f64()?, c.f64()?)?;
            entries.push((w, op, c.f64()?));
        }
        Ok(Self { entries })
    }
}

/// Single chain or a parallel pair, for the throughput model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainSetup {
    Single,
    Double,
}

impl ChainSetup {
    pub fn name(self) -> &'static str {
        match self {
            ChainSetup::Single => "single",
            ChainSetup::Double => "double",
        }
    }
}

/// Deterministic queue-model instrumentation.
///
/// All transactions are submitted at time zero. A single chain seals them
/// one per service interval; the double configuration splits them evenly
/// over two chains whose queues drain in parallel. Returns
/// `(throughput tx/s, average submission-to-seal latency in seconds)`.
pub fn measure_throughput(
    setup: ChainSetup,
    n_txs: usize,
    service_time_per_tx: SimMicros,
) -> (f64, f64) {
    assert!(n_txs >= 1, "need at least one transaction");
    let make_tx = |i: usize| {
        Transaction::new(
            TxKind::WorkerRegistration { worker: i as u64, metadata: String::new() },
            0,
        )
    };

    let drain = |ledger: &mut ChainedLedger, txs: usize| -> Vec<SimMicros> {
        let mut sealed_at = Vec::with_capacity(txs);
        for i in 0..txs {
            let now = (i as u64 + 1) * service_time_per_tx;
            ledger.seal_block(now).expect("pending transaction");
            sealed_at.push(now);
        }
        sealed_at
    };

    let seal_times: Vec<SimMicros> = match setup {
        ChainSetup::Single => {
            let mut ledger = ChainedLedger::new(ChainId::Resource);
            ledger.block_size = 1;
            for i in 0..n_txs {
                ledger.append_tx(make_tx(i), 0).unwrap();
            }
            let times = drain(&mut ledger, n_txs);
            debug_assert!(ledger.verify_chain());
            times
        }
        ChainSetup::Double => {
            let mut first = ChainedLedger::new(ChainId::Reputation);
            let mut second = ChainedLedger::new(ChainId::Resource);
            first.block_size = 1;
            second.block_size = 1;
            for i in 0..n_txs {
                let target = if i % 2 == 0 { &mut first } else { &mut second };
                target.append_tx(make_tx(i), 0).unwrap();
            }
            let mut times = drain(&mut first, n_txs.div_ceil(2));
            times.extend(drain(&mut second, n_txs / 2));
            debug_assert!(first.verify_chain() && second.verify_chain());
            times
        }
    };

    let makespan = *seal_times.iter().max().unwrap() as f64 / 1e6;
    let avg_latency = seal_times.iter().map(|&t| t as f64 / 1e6).sum::<f64>() / n_txs as f64;
    (n_txs as f64 / makespan, avg_latency)
}
