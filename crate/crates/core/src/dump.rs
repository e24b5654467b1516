//! Newline-delimited JSON block records.
//!
//! One object per line:
//!
//! ```text
//! {"height":0,"hash":"..","time":1477641360,"txs":[{"txid":"..","coinbase":true,
//!   "vin":[],"vout":[{"address":"t1..","value_zat":1000000000}],"joinsplits":[]}]}
//! ```
//!
//! Non-coinbase inputs carry `prev_txid`/`prev_index`; joinsplits carry
//! `vpub_old_zat`, `vpub_new_zat` and two hex nullifiers and commitments.
//! All amounts are integers in zatoshis. Serialization is canonical (fixed
//! key order, no whitespace) so identical chains produce identical bytes.

use serde::{Deserialize, Serialize};

use crate::amount::Amount;
use crate::model::{Address, Block, JoinSplit, Transaction, TxId, TxIn, TxOut};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u32,
    pub hash: String,
    pub time: i64,
    pub txs: Vec<TxRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub txid: String,
    pub coinbase: bool,
    #[serde(default)]
    pub vin: Vec<InputRecord>,
    #[serde(default)]
    pub vout: Vec<OutputRecord>,
    #[serde(default)]
    pub joinsplits: Vec<JoinSplitRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub prev_txid: String,
    pub prev_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub address: String,
    pub value_zat: u64,
    /// Original output index when it differs from the position in `vout`
    /// (only when a node reported outputs without an address).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSplitRecord {
    pub vpub_old_zat: u64,
    pub vpub_new_zat: u64,
    pub nullifiers: [String; 2],
    pub commitments: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("tx {txid}: {msg}")]
    Tx { txid: String, msg: String },
    #[error("block {height}: {msg}")]
    Block { height: u32, msg: String },
}

/// Hex SHA-256 over the canonical lines of a chain, each newline terminated.
pub fn chain_digest<'a>(records: impl IntoIterator<Item = &'a BlockRecord>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for rec in records {
        hasher.update(rec.to_line().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

impl BlockRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("block records always serialize")
    }

    /// Structural validation plus conversion into the in-memory model.
    /// Inputs come back unresolved.
    pub fn to_block(&self) -> Result<Block, RecordError> {
        if self.hash.is_empty() {
            return Err(RecordError::Block {
                height: self.height,
                msg: "empty block hash".into(),
            });
        }
        let mut txs = Vec::with_capacity(self.txs.len());
        for (i, t) in self.txs.iter().enumerate() {
            if t.coinbase != (i == 0) {
                return Err(RecordError::Block {
                    height: self.height,
                    msg: format!("transaction {i} coinbase flag out of place"),
                });
            }
            txs.push(t.to_tx(self.height, self.time)?);
        }
        if txs.is_empty() {
            return Err(RecordError::Block {
                height: self.height,
                msg: "block has no coinbase".into(),
            });
        }
        Ok(Block {
            height: self.height,
            hash: self.hash.clone(),
            time: self.time,
            txs,
        })
    }

    pub fn from_block(block: &Block) -> Self {
        BlockRecord {
            height: block.height,
            hash: block.hash.clone(),
            time: block.time,
            txs: block.txs.iter().map(TxRecord::from_tx).collect(),
        }
    }
}

fn decode_hex(txid: &str, s: &str) -> Result<Vec<u8>, RecordError> {
    hex::decode(s).map_err(|e| RecordError::Tx {
        txid: txid.to_string(),
        msg: format!("bad hex {s:?}: {e}"),
    })
}

impl TxRecord {
    pub fn to_tx(&self, height: u32, time: i64) -> Result<Transaction, RecordError> {
        let fail = |msg: String| RecordError::Tx {
            txid: self.txid.clone(),
            msg,
        };
        if self.txid.is_empty() {
            return Err(fail("empty txid".into()));
        }
        if self.coinbase && (!self.vin.is_empty() || !self.joinsplits.is_empty()) {
            return Err(fail("coinbase with inputs or joinsplits".into()));
        }
        let vin = self
            .vin
            .iter()
            .map(|i| TxIn::unresolved(TxId::new(i.prev_txid.as_str()), i.prev_index))
            .collect();
        let mut vout = Vec::with_capacity(self.vout.len());
        let mut last_index: Option<u32> = None;
        for (pos, o) in self.vout.iter().enumerate() {
            if o.address.is_empty() {
                return Err(fail(format!("output {pos} has no address")));
            }
            let index = o.index.unwrap_or(pos as u32);
            if last_index.is_some_and(|l| index <= l) {
                return Err(fail(format!("output {pos} index out of order")));
            }
            last_index = Some(index);
            vout.push(TxOut {
                address: Address::new(o.address.as_str()),
                value: Amount::from_zat(o.value_zat),
                index,
            });
        }
        let mut joinsplits = Vec::with_capacity(self.joinsplits.len());
        for js in &self.joinsplits {
            if js.vpub_old_zat != 0 && js.vpub_new_zat != 0 {
                return Err(fail("joinsplit with both vpub_old and vpub_new nonzero".into()));
            }
            joinsplits.push(JoinSplit {
                vpub_old: Amount::from_zat(js.vpub_old_zat),
                vpub_new: Amount::from_zat(js.vpub_new_zat),
                nullifiers: [
                    decode_hex(&self.txid, &js.nullifiers[0])?,
                    decode_hex(&self.txid, &js.nullifiers[1])?,
                ],
                commitments: [
                    decode_hex(&self.txid, &js.commitments[0])?,
                    decode_hex(&self.txid, &js.commitments[1])?,
                ],
            });
        }
        Ok(Transaction {
            txid: TxId::new(self.txid.as_str()),
            block_height: height,
            block_time: time,
            is_coinbase: self.coinbase,
            vin,
            vout,
            joinsplits,
        })
    }

    pub fn from_tx(tx: &Transaction) -> Self {
        TxRecord {
            txid: tx.txid.to_string(),
            coinbase: tx.is_coinbase,
            vin: tx
                .vin
                .iter()
                .map(|i| InputRecord {
                    prev_txid: i.prev_txid.to_string(),
                    prev_index: i.prev_index,
                })
                .collect(),
            vout: tx
                .vout
                .iter()
                .enumerate()
                .map(|(pos, o)| OutputRecord {
                    address: o.address.to_string(),
                    value_zat: o.value.zat(),
                    index: (o.index != pos as u32).then_some(o.index),
                })
                .collect(),
            joinsplits: tx
                .joinsplits
                .iter()
                .map(|js| JoinSplitRecord {
                    vpub_old_zat: js.vpub_old.zat(),
                    vpub_new_zat: js.vpub_new.zat(),
                    nullifiers: [hex::encode(&js.nullifiers[0]), hex::encode(&js.nullifiers[1])],
                    commitments: [
                        hex::encode(&js.commitments[0]),
                        hex::encode(&js.commitments[1]),
                    ],
                })
                .collect(),
        }
    }
}
