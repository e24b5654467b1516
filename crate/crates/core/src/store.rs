//! Persistent block store and immutable analysis snapshots.
//!
//! A store is a directory holding `blocks.jsonl`, the canonical dump format
//! ordered by height. Writers take an exclusive `LOCK` file. Opening a
//! [`Snapshot`] reads every block, resolves transparent inputs against
//! earlier outputs and builds the lookup indices used by the analyses:
//! txid, address, height, and deposit/withdrawal value.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::amount::Amount;
use crate::dump::{BlockRecord, RecordError};
use crate::model::{
    classify_tx, is_pool_deposit, is_pool_withdrawal, pool_deposit, pool_withdrawal, Address,
    LedgerError, Transaction, TxId, TxKind,
};

const BLOCKS_FILE: &str = "blocks.jsonl";
const LOCK_FILE: &str = "LOCK";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("store {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("corrupt store line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("duplicate txid {0}")]
    DuplicateTxid(String),
    #[error("block {height} has hash {found}, store holds {stored} (reorgs are not supported)")]
    Reorg {
        height: u32,
        stored: String,
        found: String,
    },
    #[error("block {found} does not extend tip (expected height {expected})")]
    HeightGap { expected: u32, found: u32 },
    #[error("output {txid}:{index} spent twice (second spend in {spender})")]
    DoubleSpend {
        txid: TxId,
        index: u32,
        spender: TxId,
    },
    #[error("nullifier {0} revealed twice")]
    DuplicateNullifier(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Counts from an ingest or resolve pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub blocks_ingested: u64,
    pub txs_ingested: u64,
    pub inputs_resolved: u64,
    pub inputs_unresolvable: u64,
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Store { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn blocks_path(&self) -> PathBuf {
        self.dir.join(BLOCKS_FILE)
    }

    /// Streams stored block records in height order.
    pub fn records(&self) -> Result<RecordIter, StoreError> {
        let path = self.blocks_path();
        let reader = match File::open(&path) {
            Ok(f) => Some(BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&path)(e)),
        };
        Ok(RecordIter {
            path,
            reader,
            line: 0,
            buf: String::new(),
        })
    }

    pub fn writer(&self) -> Result<StoreWriter, StoreError> {
        let lock_path = self.dir.join(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => StoreError::Locked(self.dir.clone()),
                _ => io_err(&lock_path)(e),
            })?;
        let lock = LockGuard(lock_path);
        let mut hashes = Vec::new();
        let mut txids = HashSet::new();
        for rec in self.records()? {
            let rec = rec?;
            hashes.push(rec.hash);
            for t in rec.txs {
                txids.insert(t.txid);
            }
        }
        let path = self.blocks_path();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(StoreWriter {
            _lock: lock,
            path,
            out: BufWriter::new(file),
            hashes,
            txids,
        })
    }

    pub fn snapshot(&self) -> Result<Snapshot, StoreError> {
        Snapshot::from_records(self.records()?)
    }

    /// Hex SHA-256 over the canonical block lines.
    pub fn digest(&self) -> Result<String, StoreError> {
        let mut hasher = Sha256::new();
        for rec in self.records()? {
            hasher.update(rec?.to_line().as_bytes());
            hasher.update(b"\n");
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

pub struct RecordIter {
    path: PathBuf,
    reader: Option<BufReader<File>>,
    line: usize,
    buf: String,
}

impl Iterator for RecordIter {
    type Item = Result<BlockRecord, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        let reader = self.reader.as_mut()?;
        loop {
            self.buf.clear();
            self.line += 1;
            match reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) if self.buf.trim().is_empty() => continue,
                Ok(_) => {
                    return Some(serde_json::from_str(self.buf.trim_end()).map_err(|e| {
                        StoreError::Corrupt {
                            line: self.line,
                            msg: e.to_string(),
                        }
                    }))
                }
                Err(e) => return Some(Err(io_err(&self.path)(e))),
            }
        }
    }
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Single writer over a store; appends blocks strictly in height order.
pub struct StoreWriter {
    _lock: LockGuard,
    path: PathBuf,
    out: BufWriter<File>,
    hashes: Vec<String>,
    txids: HashSet<String>,
}

impl StoreWriter {
    pub fn tip(&self) -> Option<u32> {
        (self.hashes.len() as u32).checked_sub(1)
    }

    pub fn next_height(&self) -> u32 {
        self.hashes.len() as u32
    }

    pub fn stored_hash(&self, height: u32) -> Option<&str> {
        self.hashes.get(height as usize).map(String::as_str)
    }

    /// Appends `rec` if it extends the tip. A block already stored with the
    /// same hash is skipped (`Ok(false)`); a different hash is a reorg error.
    pub fn offer(&mut self, rec: &BlockRecord) -> Result<bool, StoreError> {
        if let Some(stored) = self.stored_hash(rec.height) {
            if stored == rec.hash {
                return Ok(false);
            }
            return Err(StoreError::Reorg {
                height: rec.height,
                stored: stored.to_string(),
                found: rec.hash.clone(),
            });
        }
        if rec.height != self.next_height() {
            return Err(StoreError::HeightGap {
                expected: self.next_height(),
                found: rec.height,
            });
        }
        rec.to_block()?;
        let mut seen = HashSet::new();
        for t in &rec.txs {
            if self.txids.contains(&t.txid) || !seen.insert(t.txid.as_str()) {
                return Err(StoreError::DuplicateTxid(t.txid.clone()));
            }
        }
        self.txids.extend(rec.txs.iter().map(|t| t.txid.clone()));
        writeln!(self.out, "{}", rec.to_line()).map_err(io_err(&self.path))?;
        self.hashes.push(rec.hash.clone());
        Ok(true)
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

impl Drop for StoreWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub type AddrId = u32;

#[derive(Debug, Clone)]
pub struct BlockHeader {
    pub height: u32,
    pub hash: String,
    pub time: i64,
    pub txs: Range<usize>,
}

/// Where an address appears, as sorted distinct transaction indices.
#[derive(Debug, Clone, Default)]
pub struct AddressActivity {
    pub first_height: u32,
    pub as_input: Vec<usize>,
    pub as_output: Vec<usize>,
}

impl AddressActivity {
    /// Distinct transactions touching the address as input or output.
    pub fn tx_count(&self) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.as_input.len() || j < self.as_output.len() {
            match (self.as_input.get(i), self.as_output.get(j)) {
                (Some(a), Some(b)) if a == b => {
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) if a < b => i += 1,
                (Some(_), None) => i += 1,
                _ => j += 1,
            }
            n += 1;
        }
        n
    }
}

fn push_dedup(v: &mut Vec<usize>, tx: usize) {
    if v.last() != Some(&tx) {
        v.push(tx);
    }
}

/// Immutable resolved view over a chain prefix.
#[derive(Debug, Clone)]
pub struct Snapshot {
    blocks: Vec<BlockHeader>,
    txs: Vec<Transaction>,
    kinds: Vec<TxKind>,
    deposits: Vec<Amount>,
    withdrawals: Vec<Amount>,
    by_txid: HashMap<TxId, usize>,
    addresses: Vec<Address>,
    addr_ids: HashMap<Address, AddrId>,
    activity: Vec<AddressActivity>,
    deposits_by_value: BTreeMap<Amount, Vec<usize>>,
    withdrawals_by_value: BTreeMap<Amount, Vec<usize>>,
    unresolved: Vec<(usize, usize)>,
    report: IngestReport,
    digest: String,
}

impl Snapshot {
    pub fn from_records<I>(records: I) -> Result<Snapshot, StoreError>
    where
        I: IntoIterator<Item = Result<BlockRecord, StoreError>>,
    {
        let mut snap = Snapshot {
            blocks: Vec::new(),
            txs: Vec::new(),
            kinds: Vec::new(),
            deposits: Vec::new(),
            withdrawals: Vec::new(),
            by_txid: HashMap::new(),
            addresses: Vec::new(),
            addr_ids: HashMap::new(),
            activity: Vec::new(),
            deposits_by_value: BTreeMap::new(),
            withdrawals_by_value: BTreeMap::new(),
            unresolved: Vec::new(),
            report: IngestReport::default(),
            digest: String::new(),
        };
        let mut hasher = Sha256::new();
        let mut utxo: HashMap<(usize, u32), (Address, Amount)> = HashMap::new();
        let mut nullifiers: HashSet<Vec<u8>> = HashSet::new();

        for rec in records {
            let rec = rec?;
            hasher.update(rec.to_line().as_bytes());
            hasher.update(b"\n");
            let expected = snap.blocks.len() as u32;
            if rec.height != expected {
                return Err(StoreError::HeightGap {
                    expected,
                    found: rec.height,
                });
            }
            let block = rec.to_block()?;
            let start = snap.txs.len();
            for mut tx in block.txs {
                let idx = snap.txs.len();
                if snap.by_txid.insert(tx.txid.clone(), idx).is_some() {
                    return Err(StoreError::DuplicateTxid(tx.txid.to_string()));
                }
                for (i, input) in tx.vin.iter_mut().enumerate() {
                    let prev = snap.by_txid.get(&input.prev_txid).copied();
                    match prev.and_then(|p| utxo.remove(&(p, input.prev_index))) {
                        Some(found) => {
                            input.resolved = Some(found);
                            snap.report.inputs_resolved += 1;
                        }
                        None => {
                            let existed = prev.is_some_and(|p| {
                                p != idx
                                    && snap.txs[p].vout.iter().any(|o| o.index == input.prev_index)
                            });
                            if existed {
                                return Err(StoreError::DoubleSpend {
                                    txid: input.prev_txid.clone(),
                                    index: input.prev_index,
                                    spender: tx.txid.clone(),
                                });
                            }
                            snap.unresolved.push((idx, i));
                            snap.report.inputs_unresolvable += 1;
                        }
                    }
                }
                for js in &tx.joinsplits {
                    for n in &js.nullifiers {
                        if !nullifiers.insert(n.clone()) {
                            return Err(StoreError::DuplicateNullifier(hex::encode(n)));
                        }
                    }
                }
                for o in &tx.vout {
                    utxo.insert((idx, o.index), (o.address.clone(), o.value));
                }
                snap.index_tx(idx, &tx)?;
                snap.txs.push(tx);
            }
            snap.report.blocks_ingested += 1;
            snap.blocks.push(BlockHeader {
                height: block.height,
                hash: block.hash,
                time: block.time,
                txs: start..snap.txs.len(),
            });
        }
        snap.report.txs_ingested = snap.txs.len() as u64;
        snap.digest = hex::encode(hasher.finalize());
        Ok(snap)
    }

    /// Builds a snapshot directly from in-memory records.
    pub fn from_block_records(records: Vec<BlockRecord>) -> Result<Snapshot, StoreError> {
        Snapshot::from_records(records.into_iter().map(Ok))
    }

    fn intern(&mut self, address: &Address, height: u32) -> AddrId {
        if let Some(&id) = self.addr_ids.get(address) {
            return id;
        }
        let id = self.addresses.len() as AddrId;
        self.addresses.push(address.clone());
        self.addr_ids.insert(address.clone(), id);
        self.activity.push(AddressActivity {
            first_height: height,
            ..Default::default()
        });
        id
    }

    fn index_tx(&mut self, idx: usize, tx: &Transaction) -> Result<(), StoreError> {
        let kind = classify_tx(tx);
        let dep = pool_deposit(tx)?;
        let wd = pool_withdrawal(tx)?;
        self.kinds.push(kind);
        self.deposits.push(dep);
        self.withdrawals.push(wd);
        if is_pool_deposit(tx) {
            self.deposits_by_value.entry(dep).or_default().push(idx);
        }
        if is_pool_withdrawal(tx) {
            self.withdrawals_by_value.entry(wd).or_default().push(idx);
        }
        for input in &tx.vin {
            if let Some(a) = input.address() {
                let id = self.intern(a, tx.block_height);
                push_dedup(&mut self.activity[id as usize].as_input, idx);
            }
        }
        for o in &tx.vout {
            let id = self.intern(&o.address, tx.block_height);
            push_dedup(&mut self.activity[id as usize].as_output, idx);
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<u32> {
        self.blocks.last().map(|b| b.height)
    }

    pub fn blocks(&self) -> &[BlockHeader] {
        &self.blocks
    }

    pub fn block(&self, height: u32) -> Option<&BlockHeader> {
        self.blocks.get(height as usize)
    }

    pub fn txs(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn tx(&self, idx: usize) -> &Transaction {
        &self.txs[idx]
    }

    pub fn kind(&self, idx: usize) -> TxKind {
        self.kinds[idx]
    }

    /// Cached `pool_deposit` of transaction `idx`.
    pub fn deposit(&self, idx: usize) -> Amount {
        self.deposits[idx]
    }

    /// Cached `pool_withdrawal` of transaction `idx`.
    pub fn withdrawal(&self, idx: usize) -> Amount {
        self.withdrawals[idx]
    }

    pub fn tx_index(&self, txid: &TxId) -> Option<usize> {
        self.by_txid.get(txid).copied()
    }

    pub fn address_count(&self) -> usize {
        self.addresses.len()
    }

    pub fn address(&self, id: AddrId) -> &Address {
        &self.addresses[id as usize]
    }

    pub fn address_id(&self, address: &Address) -> Option<AddrId> {
        self.addr_ids.get(address).copied()
    }

    pub fn activity(&self, id: AddrId) -> &AddressActivity {
        &self.activity[id as usize]
    }

    /// Distinct resolved input address ids of a transaction, in input order.
    pub fn input_ids(&self, idx: usize) -> Vec<AddrId> {
        let mut out: Vec<AddrId> = Vec::new();
        for a in self.txs[idx].vin.iter().filter_map(|i| i.address()) {
            let id = self.addr_ids[a];
            if !out.contains(&id) {
                out.push(id);
            }
        }
        out
    }

    /// Distinct output address ids of a transaction, in output order.
    pub fn output_ids(&self, idx: usize) -> Vec<AddrId> {
        let mut out: Vec<AddrId> = Vec::new();
        for o in &self.txs[idx].vout {
            let id = self.addr_ids[&o.address];
            if !out.contains(&id) {
                out.push(id);
            }
        }
        out
    }

    /// Deposit transactions (t-to-z side) keyed by `pool_deposit` value.
    pub fn deposits_by_value(&self) -> &BTreeMap<Amount, Vec<usize>> {
        &self.deposits_by_value
    }

    /// Withdrawal transactions (z-to-t side) keyed by `pool_withdrawal` value.
    pub fn withdrawals_by_value(&self) -> &BTreeMap<Amount, Vec<usize>> {
        &self.withdrawals_by_value
    }

    /// Inputs left unresolved, as (tx index, input index).
    pub fn unresolved(&self) -> &[(usize, usize)] {
        &self.unresolved
    }

    pub fn report(&self) -> IngestReport {
        self.report
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn height_of(&self, idx: usize) -> u32 {
        self.txs[idx].block_height
    }
}
