//! Ledger data model and the pure per-transaction functions: kind
//! classification, pool deposit/withdrawal sums and value conservation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{Amount, AmountError};

/// A transparent address. Shielded addresses never appear in ledger data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(Arc<str>);

impl Address {
    pub fn new(s: impl Into<Arc<str>>) -> Self {
        Address(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Loose syntactic check for a transparent address string: a leading
    /// `t`, 26 to 36 characters, base58 alphabet only.
    pub fn is_well_formed(s: &str) -> bool {
        const BASE58: &str = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
        (26..=36).contains(&s.len())
            && s.starts_with('t')
            && s.chars().all(|c| BASE58.contains(c))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(Arc<str>);

impl TxId {
    pub fn new(s: impl Into<Arc<str>>) -> Self {
        TxId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TxId {
    fn from(s: &str) -> Self {
        TxId::new(s)
    }
}

/// A spent transparent output. `resolved` is filled by the resolve pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxIn {
    pub prev_txid: TxId,
    pub prev_index: u32,
    pub resolved: Option<(Address, Amount)>,
}

impl TxIn {
    pub fn unresolved(prev_txid: TxId, prev_index: u32) -> Self {
        TxIn {
            prev_txid,
            prev_index,
            resolved: None,
        }
    }

    pub fn address(&self) -> Option<&Address> {
        self.resolved.as_ref().map(|(a, _)| a)
    }

    pub fn value(&self) -> Option<Amount> {
        self.resolved.as_ref().map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOut {
    pub address: Address,
    pub value: Amount,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinSplit {
    /// Value entering the shielded pool from the transparent side.
    pub vpub_old: Amount,
    /// Value leaving the pool to the transparent side.
    pub vpub_new: Amount,
    pub nullifiers: [Vec<u8>; 2],
    pub commitments: [Vec<u8>; 2],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub txid: TxId,
    pub block_height: u32,
    pub block_time: i64,
    pub is_coinbase: bool,
    pub vin: Vec<TxIn>,
    pub vout: Vec<TxOut>,
    pub joinsplits: Vec<JoinSplit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u32,
    pub hash: String,
    pub time: i64,
    pub txs: Vec<Transaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Coingen,
    Transparent,
    Shielded,
    Deshielded,
    Private,
    Mixed,
}

impl TxKind {
    /// Table order used by every report.
    pub const ALL: [TxKind; 6] = [
        TxKind::Transparent,
        TxKind::Coingen,
        TxKind::Deshielded,
        TxKind::Shielded,
        TxKind::Mixed,
        TxKind::Private,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Coingen => "coingen",
            TxKind::Transparent => "transparent",
            TxKind::Shielded => "shielded",
            TxKind::Deshielded => "deshielded",
            TxKind::Private => "private",
            TxKind::Mixed => "mixed",
        }
    }

    pub fn index(self) -> usize {
        TxKind::ALL.iter().position(|k| *k == self).unwrap()
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction {0}: value overflow")]
    Overflow(TxId),
    #[error("transaction {txid}: input {index} is not resolved")]
    Unresolved { txid: TxId, index: usize },
    #[error("transaction {txid}: outputs exceed inputs by {deficit} zat")]
    Conservation { txid: TxId, deficit: u64 },
}

/// Classifies a transaction by the presence of transparent inputs, transparent
/// outputs and joinsplits. Total over all transactions.
pub fn classify_tx(tx: &Transaction) -> TxKind {
    if tx.is_coinbase {
        return TxKind::Coingen;
    }
    if tx.joinsplits.is_empty() {
        return TxKind::Transparent;
    }
    match (tx.vin.is_empty(), tx.vout.is_empty()) {
        (false, true) => TxKind::Shielded,
        (true, false) => TxKind::Deshielded,
        (true, true) => TxKind::Private,
        (false, false) => TxKind::Mixed,
    }
}

fn sum_or_overflow(tx: &Transaction, it: impl Iterator<Item = Amount>) -> Result<Amount, LedgerError> {
    Amount::sum(it).map_err(|_: AmountError| LedgerError::Overflow(tx.txid.clone()))
}

/// Total value moved into the shielded pool (sum of `vpub_old`).
pub fn pool_deposit(tx: &Transaction) -> Result<Amount, LedgerError> {
    sum_or_overflow(tx, tx.joinsplits.iter().map(|js| js.vpub_old))
}

/// Total value taken out of the shielded pool (sum of `vpub_new`).
pub fn pool_withdrawal(tx: &Transaction) -> Result<Amount, LedgerError> {
    sum_or_overflow(tx, tx.joinsplits.iter().map(|js| js.vpub_new))
}

/// Whether the transaction counts as a t-to-z deposit for attribution and
/// round-trip purposes.
pub fn is_pool_deposit(tx: &Transaction) -> bool {
    matches!(classify_tx(tx), TxKind::Shielded | TxKind::Mixed)
        && tx.joinsplits.iter().any(|js| !js.vpub_old.is_zero())
}

/// Whether the transaction counts as a z-to-t withdrawal.
pub fn is_pool_withdrawal(tx: &Transaction) -> bool {
    matches!(classify_tx(tx), TxKind::Deshielded | TxKind::Mixed)
        && tx.joinsplits.iter().any(|js| !js.vpub_new.is_zero())
}

/// Sum of transparent output values.
pub fn transparent_out(tx: &Transaction) -> Result<Amount, LedgerError> {
    sum_or_overflow(tx, tx.vout.iter().map(|o| o.value))
}

/// Returns the fee `inputs + vpub_new - outputs - vpub_old`. Coinbase
/// transactions mint value and always report a zero fee.
pub fn conservation_check(tx: &Transaction) -> Result<Amount, LedgerError> {
    if tx.is_coinbase {
        return Ok(Amount::ZERO);
    }
    let mut inputs = Vec::with_capacity(tx.vin.len());
    for (index, input) in tx.vin.iter().enumerate() {
        match input.value() {
            Some(v) => inputs.push(v),
            None => {
                return Err(LedgerError::Unresolved {
                    txid: tx.txid.clone(),
                    index,
                })
            }
        }
    }
    let credit = sum_or_overflow(tx, inputs.into_iter())?
        .checked_add(pool_withdrawal(tx)?)
        .map_err(|_| LedgerError::Overflow(tx.txid.clone()))?;
    let debit = transparent_out(tx)?
        .checked_add(pool_deposit(tx)?)
        .map_err(|_| LedgerError::Overflow(tx.txid.clone()))?;
    credit.checked_sub(debit).ok_or_else(|| LedgerError::Conservation {
        txid: tx.txid.clone(),
        deficit: debit.zat() - credit.zat(),
    })
}
