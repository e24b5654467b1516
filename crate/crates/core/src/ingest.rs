//! Getting blocks into a [`Store`]: dump import, node sync over JSON-RPC,
//! and the input resolution report.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::config::KvConfig;
use crate::dump::{BlockRecord, InputRecord, JoinSplitRecord, OutputRecord, TxRecord};
use crate::store::{IngestReport, Store, StoreError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: StoreError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("node request failed at height {resume_height} (retry from there): {msg}")]
    Retriable { resume_height: u32, msg: String },
    #[error("node returned inconsistent data at height {height}: {msg}")]
    Node { height: u32, msg: String },
}

/// Imports a newline-delimited dump file, then resolves inputs over the
/// whole store. Blocks already present with the same hash are skipped.
pub fn import_dump(store: &Store, path: &Path) -> Result<IngestReport, IngestError> {
    let file = File::open(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut reader = BufReader::new(file);
    let mut report = IngestReport::default();
    let mut writer = store.writer()?;
    let mut buf = String::new();
    let mut line = 0usize;
    loop {
        buf.clear();
        line += 1;
        let n = reader.read_line(&mut buf).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if n == 0 {
            break;
        }
        if buf.trim().is_empty() {
            continue;
        }
        let rec: BlockRecord =
            serde_json::from_str(buf.trim_end()).map_err(|e| IngestError::Parse {
                path: path.display().to_string(),
                line,
                msg: e.to_string(),
            })?;
        let appended = writer
            .offer(&rec)
            .map_err(|source| IngestError::AtLine { line, source })?;
        if appended {
            report.blocks_ingested += 1;
            report.txs_ingested += rec.txs.len() as u64;
        }
    }
    writer.flush()?;
    drop(writer);
    let resolved = resolve_inputs(store)?;
    report.inputs_resolved = resolved.inputs_resolved;
    report.inputs_unresolvable = resolved.inputs_unresolvable;
    Ok(report)
}

/// Resolves every input in the store against earlier outputs and reports
/// the totals. Resolution itself is recomputed whenever a snapshot opens.
pub fn resolve_inputs(store: &Store) -> Result<IngestReport, StoreError> {
    Ok(store.snapshot()?.report())
}

/// Block as returned by a node's `getblock <hash> 2`.
#[derive(Debug, Clone, Deserialize)]
pub struct NodeBlock {
    pub hash: String,
    pub height: u32,
    pub time: i64,
    #[serde(default, rename = "previousblockhash")]
    pub previous_hash: Option<String>,
    pub tx: Vec<NodeTx>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NodeTx {
    pub txid: String,
    #[serde(default)]
    pub vin: Vec<NodeInput>,
    #[serde(default)]
    pub vout: Vec<NodeOutput>,
    #[serde(default)]
    pub vjoinsplit: Vec<NodeJoinSplit>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NodeInput {
    #[serde(default)]
    pub coinbase: Option<String>,
    #[serde(default)]
    pub txid: Option<String>,
    #[serde(default)]
    pub vout: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NodeOutput {
    #[serde(rename = "valueZat")]
    pub value_zat: u64,
    pub n: u32,
    #[serde(default, rename = "scriptPubKey")]
    pub script_pub_key: NodeScript,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct NodeScript {
    #[serde(default)]
    pub addresses: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NodeJoinSplit {
    #[serde(rename = "vpub_oldZat")]
    pub vpub_old_zat: u64,
    #[serde(rename = "vpub_newZat")]
    pub vpub_new_zat: u64,
    pub nullifiers: [String; 2],
    pub commitments: [String; 2],
}

impl NodeBlock {
    /// Normalizes into a dump record. Outputs without a single resolvable
    /// address are dropped; the count of dropped outputs is returned.
    pub fn to_record(&self) -> Result<(BlockRecord, u64), String> {
        let mut dropped = 0;
        let mut txs = Vec::with_capacity(self.tx.len());
        for (i, t) in self.tx.iter().enumerate() {
            let coinbase = t.vin.iter().any(|v| v.coinbase.is_some());
            if coinbase != (i == 0) {
                return Err(format!("tx {} coinbase position", t.txid));
            }
            let vin = if coinbase {
                Vec::new()
            } else {
                t.vin
                    .iter()
                    .map(|v| match (&v.txid, v.vout) {
                        (Some(p), Some(n)) => Ok(InputRecord {
                            prev_txid: p.clone(),
                            prev_index: n,
                        }),
                        _ => Err(format!("tx {} input without outpoint", t.txid)),
                    })
                    .collect::<Result<_, _>>()?
            };
            let mut vout = Vec::with_capacity(t.vout.len());
            for o in &t.vout {
                match o.script_pub_key.addresses.as_slice() {
                    [a] => {
                        let pos = vout.len() as u32;
                        vout.push(OutputRecord {
                            address: a.clone(),
                            value_zat: o.value_zat,
                            index: (o.n != pos).then_some(o.n),
                        })
                    }
                    _ => dropped += 1,
                }
            }
            let joinsplits = t
                .vjoinsplit
                .iter()
                .map(|js| JoinSplitRecord {
                    vpub_old_zat: js.vpub_old_zat,
                    vpub_new_zat: js.vpub_new_zat,
                    nullifiers: js.nullifiers.clone(),
                    commitments: js.commitments.clone(),
                })
                .collect();
            txs.push(TxRecord {
                txid: t.txid.clone(),
                coinbase,
                vin,
                vout,
                joinsplits,
            });
        }
        Ok((
            BlockRecord {
                height: self.height,
                hash: self.hash.clone(),
                time: self.time,
                txs,
            },
            dropped,
        ))
    }
}

#[derive(Debug, Error)]
pub enum RpcError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("decode: {0}")]
    Decode(String),
}

/// The three node calls ingestion needs.
pub trait NodeSource {
    fn block_count(&mut self) -> Result<u32, RpcError>;
    fn block_hash(&mut self, height: u32) -> Result<String, RpcError>;
    fn block(&mut self, hash: &str) -> Result<NodeBlock, RpcError>;
}

/// Summary of a sync run. `outputs_without_address` counts outputs the node
/// reported with no single transparent address; they are not stored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncReport {
    pub ingest: IngestReport,
    pub outputs_without_address: u64,
}

/// Pulls blocks `from..=to` from a node into the store. Re-running a range
/// already stored is a no-op; a hash that differs from the stored one aborts.
pub fn sync_from_node<S: NodeSource>(
    store: &Store,
    source: &mut S,
    from: u32,
    to: u32,
) -> Result<SyncReport, IngestError> {
    let mut out = SyncReport::default();
    if from > to {
        return Ok(out);
    }
    let retriable = |h: u32| move |e: RpcError| match e {
        RpcError::Transport(msg) => IngestError::Retriable {
            resume_height: h,
            msg,
        },
        other => IngestError::Node {
            height: h,
            msg: other.to_string(),
        },
    };
    let node_tip = source.block_count().map_err(retriable(from))?;
    let to = to.min(node_tip);
    let mut writer = store.writer()?;
    if from > writer.next_height() {
        return Err(StoreError::HeightGap {
            expected: writer.next_height(),
            found: from,
        }
        .into());
    }
    for h in from..=to {
        let hash = source.block_hash(h).map_err(retriable(h))?;
        if let Some(stored) = writer.stored_hash(h) {
            if stored == hash {
                continue;
            }
        }
        let node_block = source.block(&hash).map_err(retriable(h))?;
        if node_block.height != h || node_block.hash != hash {
            return Err(IngestError::Node {
                height: h,
                msg: format!("asked for {hash}, got {} at {}", node_block.hash, node_block.height),
            });
        }
        if h > 0 {
            let parent = writer.stored_hash(h - 1).map(str::to_string);
            if parent.is_some() && node_block.previous_hash != parent {
                return Err(StoreError::Reorg {
                    height: h - 1,
                    stored: parent.unwrap_or_default(),
                    found: node_block.previous_hash.unwrap_or_default(),
                }
                .into());
            }
        }
        let (rec, dropped) = node_block
            .to_record()
            .map_err(|msg| IngestError::Node { height: h, msg })?;
        if writer.offer(&rec)? {
            out.ingest.blocks_ingested += 1;
            out.ingest.txs_ingested += rec.txs.len() as u64;
            out.outputs_without_address += dropped;
        }
    }
    writer.flush()?;
    drop(writer);
    let resolved = resolve_inputs(store)?;
    out.ingest.inputs_resolved = resolved.inputs_resolved;
    out.ingest.inputs_unresolvable = resolved.inputs_unresolvable;
    Ok(out)
}

/// Node endpoint settings. Environment variables `ZFLOW_RPC_URL`,
/// `ZFLOW_RPC_USER` and `ZFLOW_RPC_PASSWORD` override the config file keys
/// `rpc_url`, `rpc_user` and `rpc_password`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcConfig {
    pub url: String,
    pub user: Option<String>,
    pub password: Option<String>,
}

impl RpcConfig {
    pub fn resolve(file: &KvConfig, env: impl Fn(&str) -> Option<String>) -> Option<RpcConfig> {
        let pick = |env_key: &str, file_key: &str| {
            env(env_key).or_else(|| file.get(file_key).map(str::to_string))
        };
        Some(RpcConfig {
            url: pick("ZFLOW_RPC_URL", "rpc_url")?,
            user: pick("ZFLOW_RPC_USER", "rpc_user"),
            password: pick("ZFLOW_RPC_PASSWORD", "rpc_password"),
        })
    }
}

#[cfg(feature = "rpc")]
pub use http::HttpNode;

#[cfg(feature = "rpc")]
mod http {
    use std::time::Duration;

    use base64::Engine;
    use serde::de::DeserializeOwned;
    use serde_json::{json, Value};

    use super::{NodeBlock, NodeSource, RpcConfig, RpcError};

    /// JSON-RPC 1.0 client for a zcashd-compatible node.
    pub struct HttpNode {
        agent: ureq::Agent,
        config: RpcConfig,
        next_id: u64,
    }

    impl HttpNode {
        pub fn new(config: RpcConfig) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(60)))
                .http_status_as_error(false)
                .build()
                .into();
            HttpNode {
                agent,
                config,
                next_id: 0,
            }
        }

        fn call<T: DeserializeOwned>(&mut self, method: &str, params: Value) -> Result<T, RpcError> {
            self.next_id += 1;
            let body = json!({
                "jsonrpc": "1.0",
                "id": self.next_id,
                "method": method,
                "params": params,
            });
            let mut req = self.agent.post(&self.config.url);
            if let Some(user) = &self.config.user {
                let pass = self.config.password.as_deref().unwrap_or("");
                let token = base64::engine::general_purpose::STANDARD.encode(format!("{user}:{pass}"));
                req = req.header("Authorization", format!("Basic {token}"));
            }
            let mut resp = req
                .send_json(&body)
                .map_err(|e| RpcError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            let reply: Value = resp.body_mut().read_json().map_err(|e| {
                if status >= 400 {
                    RpcError::Transport(format!("http status {status}"))
                } else {
                    RpcError::Decode(e.to_string())
                }
            })?;
            if let Some(err) = reply.get("error").filter(|e| !e.is_null()) {
                return Err(RpcError::Rpc {
                    code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                    message: err
                        .get("message")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                });
            }
            let result = reply.get("result").cloned().unwrap_or(Value::Null);
            serde_json::from_value(result).map_err(|e| RpcError::Decode(e.to_string()))
        }
    }

    impl NodeSource for HttpNode {
        fn block_count(&mut self) -> Result<u32, RpcError> {
            self.call("getblockcount", json!([]))
        }

        fn block_hash(&mut self, height: u32) -> Result<String, RpcError> {
            self.call("getblockhash", json!([height]))
        }

        fn block(&mut self, hash: &str) -> Result<NodeBlock, RpcError> {
            self.call("getblock", json!([hash, 2]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_block_normalization() {
        let raw = r#"{"hash":"h1","height":1,"time":5,"previousblockhash":"h0","tx":[
            {"txid":"c","vin":[{"coinbase":"03"}],"vout":[{"valueZat":10,"n":0,"scriptPubKey":{"addresses":["tA"]}}],"vjoinsplit":[]},
            {"txid":"d","vin":[{"txid":"c","vout":0}],"vout":[
                {"valueZat":1,"n":0,"scriptPubKey":{}},
                {"valueZat":8,"n":1,"scriptPubKey":{"addresses":["tB"]}}],
             "vjoinsplit":[{"vpub_oldZat":0,"vpub_newZat":0,"nullifiers":["aa","bb"],"commitments":["cc","dd"]}]}]}"#;
        let nb: NodeBlock = serde_json::from_str(raw).unwrap();
        let (rec, dropped) = nb.to_record().unwrap();
        assert_eq!(dropped, 1);
        assert!(rec.txs[0].coinbase && rec.txs[0].vin.is_empty());
        assert_eq!(rec.txs[1].vin[0].prev_txid, "c");
        assert_eq!(rec.txs[1].vout.len(), 1);
        assert_eq!(rec.txs[1].vout[0].index, Some(1));
        rec.to_block().unwrap();
    }

    #[test]
    fn rpc_config_env_overrides_file() {
        let file = KvConfig::parse("rpc_url = http://file\nrpc_user = u\n").unwrap();
        let cfg = RpcConfig::resolve(&file, |k| {
            (k == "ZFLOW_RPC_URL").then(|| "http://env".to_string())
        })
        .unwrap();
        assert_eq!(cfg.url, "http://env");
        assert_eq!(cfg.user.as_deref(), Some("u"));
        assert!(RpcConfig::resolve(&KvConfig::default(), |_| None).is_none());
    }

    #[test]
    fn empty_dump_gives_zero_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        assert_eq!(import_dump(&store, &path).unwrap(), IngestReport::default());
    }

    #[test]
    fn parse_error_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"height":0,"hash":"h0","time":1,"txs":[{"txid":"c0","coinbase":true,"vin":[],"vout":[{"address":"tA","value_zat":5}],"joinsplits":[]}]}"#;
        let bad = r#"{"height":1,"hash":"h1","time":2,"txs":[{"txid":"c1","coinbase":true,"vin":[],"vout":[{"address":"tA","value_zat":-5}],"joinsplits":[]}]}"#;
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        match import_dump(&store, &path) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_range_reports_zeros() {
        struct Never;
        impl NodeSource for Never {
            fn block_count(&mut self) -> Result<u32, RpcError> {
                unreachable!()
            }
            fn block_hash(&mut self, _: u32) -> Result<String, RpcError> {
                unreachable!()
            }
            fn block(&mut self, _: &str) -> Result<NodeBlock, RpcError> {
                unreachable!()
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let r = sync_from_node(&store, &mut Never, 5, 4).unwrap();
        assert_eq!(r, SyncReport::default());
    }
}
