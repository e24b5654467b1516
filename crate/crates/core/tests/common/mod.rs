//! Brute-force oracles and scenario helpers shared by the integration tests.
//! The oracles read the raw block records and never call the analysis code
//! they are checked against.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use zflow::dump::BlockRecord;
use zflow::synth::{generate, ScenarioConfig, Synthetic};

/// A short randomized scenario; `seed` also varies the population sizes.
pub fn small_scenario(seed: u64, blocks: u32) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        blocks,
        users: 60 + (seed % 7) as usize * 40,
        exchanges: 1 + (seed % 3) as usize,
        pool_members: 200 + (seed % 5) as usize * 50,
        solo_miners: 4 + (seed % 4) as usize,
        round_trip_rate_pct: 5 + (seed % 4) as u32 * 5,
        round_trip_max_gap: [3, 20, 150][(seed % 3) as usize],
        ..ScenarioConfig::default()
    }
}

pub fn generate_small(seed: u64, blocks: u32) -> Synthetic {
    generate(&small_scenario(seed, blocks)).expect("scenario generates")
}

/// Output address of every (txid, index) in the chain.
fn outpoints(blocks: &[BlockRecord]) -> HashMap<(String, u32), String> {
    let mut map = HashMap::new();
    for b in blocks {
        for tx in &b.txs {
            for (pos, o) in tx.vout.iter().enumerate() {
                let index = o.index.unwrap_or(pos as u32);
                map.insert((tx.txid.clone(), index), o.address.clone());
            }
        }
    }
    map
}

/// Co-spend components by breadth-first search over an adjacency list, as
/// a set of sorted address lists. Every address seen anywhere is a node.
pub fn bfs_components(blocks: &[BlockRecord]) -> BTreeSet<Vec<String>> {
    let spent = outpoints(blocks);
    let mut adj: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for b in blocks {
        for tx in &b.txs {
            for o in &tx.vout {
                adj.entry(o.address.clone()).or_default();
            }
            let inputs: Vec<&String> = tx
                .vin
                .iter()
                .filter_map(|i| spent.get(&(i.prev_txid.clone(), i.prev_index)))
                .collect();
            for a in &inputs {
                for b in &inputs {
                    if a != b {
                        adj.entry((*a).clone()).or_default().push((*b).clone());
                    }
                }
            }
        }
    }
    let mut seen: BTreeSet<&String> = BTreeSet::new();
    let mut out = BTreeSet::new();
    for start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start.clone()];
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for m in &adj[n] {
                if seen.insert(m) {
                    comp.push(m.clone());
                    queue.push_back(m);
                }
            }
        }
        comp.sort();
        out.insert(comp);
    }
    out
}

/// (height, txid, deposit zat, withdrawal zat) of every transaction.
pub fn pool_flows(blocks: &[BlockRecord]) -> Vec<(u32, String, u64, u64)> {
    let mut out = Vec::new();
    for b in blocks {
        for tx in &b.txs {
            let dep = tx.joinsplits.iter().map(|j| j.vpub_old_zat).sum();
            let wd = tx.joinsplits.iter().map(|j| j.vpub_new_zat).sum();
            out.push((b.height, tx.txid.clone(), dep, wd));
        }
    }
    out
}

/// Quadratic round-trip scan: (deposit txid, withdrawal txid, value).
pub fn brute_round_trips(blocks: &[BlockRecord], max_gap: u32) -> BTreeSet<(String, String, u64)> {
    let flows = pool_flows(blocks);
    let deposits: Vec<_> = flows.iter().filter(|f| f.2 > 0).collect();
    let withdrawals: Vec<_> = flows.iter().filter(|f| f.3 > 0).collect();
    let mut out = BTreeSet::new();
    for d in &deposits {
        if deposits.iter().filter(|o| o.2 == d.2).count() != 1 {
            continue;
        }
        let same: Vec<_> = withdrawals.iter().filter(|w| w.3 == d.2).collect();
        let [w] = same.as_slice() else { continue };
        if w.0 > d.0 && w.0 - d.0 <= max_gap {
            out.insert((d.1.clone(), w.1.clone(), d.2));
        }
    }
    out
}

/// Running pool balance per block, as signed integers so a negative value
/// is visible instead of wrapping.
pub fn naive_pool_balances(blocks: &[BlockRecord]) -> Vec<i128> {
    let mut balance = 0i128;
    blocks
        .iter()
        .map(|b| {
            for tx in &b.txs {
                for j in &tx.joinsplits {
                    balance += j.vpub_old_zat as i128 - j.vpub_new_zat as i128;
                }
            }
            balance
        })
        .collect()
}

/// Naive UTXO replay: balance of every address at the end of `height`.
pub fn naive_balances(blocks: &[BlockRecord], height: u32) -> BTreeMap<String, u64> {
    let mut utxo: HashMap<(String, u32), (String, u64)> = HashMap::new();
    for b in blocks.iter().filter(|b| b.height <= height) {
        for tx in &b.txs {
            for i in &tx.vin {
                utxo.remove(&(i.prev_txid.clone(), i.prev_index));
            }
            for (pos, o) in tx.vout.iter().enumerate() {
                let index = o.index.unwrap_or(pos as u32);
                utxo.insert((tx.txid.clone(), index), (o.address.clone(), o.value_zat));
            }
        }
    }
    let mut out = BTreeMap::new();
    for (addr, v) in utxo.into_values() {
        *out.entry(addr).or_insert(0) += v;
    }
    out
}

/// Hand-built chain: block `h` has a coinbase `cb{h}` paying
/// `coinbase_zat` to `coinbase_to(h)`, plus whatever is pushed.
pub struct ChainBuilder {
    pub blocks: Vec<BlockRecord>,
    tag: u32,
}

impl ChainBuilder {
    pub fn new(n: u32, coinbase_zat: u64, coinbase_to: impl Fn(u32) -> String) -> Self {
        use zflow::dump::{OutputRecord, TxRecord};
        let blocks = (0..n)
            .map(|h| BlockRecord {
                height: h,
                hash: format!("{h:064x}"),
                time: 1_480_000_000 + h as i64 * 150,
                txs: vec![TxRecord {
                    txid: format!("cb{h}"),
                    coinbase: true,
                    vin: vec![],
                    vout: vec![OutputRecord {
                        address: coinbase_to(h),
                        value_zat: coinbase_zat,
                        index: None,
                    }],
                    joinsplits: vec![],
                }],
            })
            .collect();
        ChainBuilder { blocks, tag: 0 }
    }

    /// Appends a transaction at height `h` and returns its txid.
    pub fn push(
        &mut self,
        h: u32,
        vin: &[(&str, u32)],
        vout: &[(String, u64)],
        vpub: Option<(u64, u64)>,
    ) -> String {
        use zflow::dump::{InputRecord, JoinSplitRecord, OutputRecord, TxRecord};
        self.tag += 1;
        let tag = self.tag;
        let txid = format!("t{tag:06}");
        self.blocks[h as usize].txs.push(TxRecord {
            txid: txid.clone(),
            coinbase: false,
            vin: vin
                .iter()
                .map(|(t, i)| InputRecord {
                    prev_txid: t.to_string(),
                    prev_index: *i,
                })
                .collect(),
            vout: vout
                .iter()
                .map(|(a, v)| OutputRecord {
                    address: a.clone(),
                    value_zat: *v,
                    index: None,
                })
                .collect(),
            joinsplits: vpub
                .map(|(old, new)| JoinSplitRecord {
                    vpub_old_zat: old,
                    vpub_new_zat: new,
                    nullifiers: [format!("{tag:08x}01"), format!("{tag:08x}02")],
                    commitments: [format!("{tag:08x}03"), format!("{tag:08x}04")],
                })
                .into_iter()
                .collect(),
        });
        txid
    }

    pub fn snapshot(&self) -> zflow::Snapshot {
        zflow::Snapshot::from_block_records(self.blocks.clone()).expect("valid chain")
    }
}
