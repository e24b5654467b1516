//! Property tests on hand-built random chains, each checked against a
//! brute-force oracle from `common`.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;
use zflow::cluster::build_clusters;
use zflow::link::{find_round_trips, linked_value_curve};
use zflow::model::conservation_check;
use zflow::stats::{pool_series, wealth_distribution};

const COIN: u64 = 1_000_000;

/// One spend: `pick` selects unspent outputs (modulo the pool size) and
/// `to` names the recipients from a small address space.
#[derive(Debug, Clone)]
struct Spend {
    pick: Vec<usize>,
    to: Vec<u8>,
}

fn spend() -> impl Strategy<Value = Spend> {
    (prop::collection::vec(any::<usize>(), 1..4), prop::collection::vec(0u8..40, 1..4))
        .prop_map(|(pick, to)| Spend { pick, to })
}

/// Blocks of coinbases to `tA{h % 25}` plus the given spends, two per block
/// from height 2. Values are split evenly with the remainder as fee.
fn transfer_chain(spends: &[Spend]) -> common::ChainBuilder {
    let blocks = 2 + spends.len().div_ceil(2) as u32 + 1;
    let mut c = common::ChainBuilder::new(blocks, 50 * COIN, |h| format!("tA{}", h % 25));
    let mut unspent: Vec<(String, u32, u64)> = vec![("cb0".into(), 0, 50 * COIN)];
    for (i, s) in spends.iter().enumerate() {
        let h = 2 + i as u32 / 2;
        if i % 2 == 0 {
            unspent.push((format!("cb{}", h - 1), 0, 50 * COIN));
        }
        let mut chosen = BTreeSet::new();
        for p in &s.pick {
            chosen.insert(p % unspent.len());
        }
        let taken: Vec<(String, u32, u64)> = chosen.iter().rev().map(|&k| unspent.remove(k)).collect();
        let total: u64 = taken.iter().map(|t| t.2).sum();
        let each = total / s.to.len() as u64;
        let outs: Vec<(String, u64)> = s.to.iter().map(|a| (format!("tU{a}"), each)).collect();
        let vin: Vec<(&str, u32)> = taken.iter().map(|t| (t.0.as_str(), t.1)).collect();
        let txid = c.push(h, &vin, &outs, None);
        for n in 0..outs.len() {
            unspent.push((txid.clone(), n as u32, each));
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clusters_equal_bfs_components(spends in prop::collection::vec(spend(), 0..60)) {
        let c = transfer_chain(&spends);
        let snap = c.snapshot();
        let clusters = build_clusters(&snap, false, &HashSet::new()).unwrap();
        let got: BTreeSet<Vec<String>> = (0..clusters.len() as u32)
            .map(|id| {
                let mut m: Vec<String> = clusters.members(id).map(|a| a.to_string()).collect();
                m.sort();
                m
            })
            .collect();
        prop_assert_eq!(got, common::bfs_components(&c.blocks));
    }

    #[test]
    fn transfer_chains_conserve_value(spends in prop::collection::vec(spend(), 0..40)) {
        let snap = transfer_chain(&spends).snapshot();
        for tx in snap.txs() {
            prop_assert!(conservation_check(tx).is_ok());
        }
    }

    #[test]
    fn wealth_equals_utxo_replay(spends in prop::collection::vec(spend(), 1..40), at in 0u32..30) {
        let c = transfer_chain(&spends);
        let snap = c.snapshot();
        let h = at.min(snap.tip().unwrap());
        let w = wealth_distribution(&snap, h);
        let got: BTreeMap<String, u64> = w.balances.iter().map(|(a, v)| (a.to_string(), v.zat())).collect();
        let mut want = common::naive_balances(&c.blocks, h);
        want.retain(|_, v| *v > 0);
        prop_assert_eq!(w.total.zat(), want.values().sum::<u64>());
        prop_assert_eq!(got, want);
    }

    /// Values from a tiny domain so repeats, reversed order and same-block
    /// pairs all occur.
    #[test]
    fn round_trips_equal_quadratic_scan(
        deps in prop::collection::vec((2u32..80, 1u64..25), 0..30),
        wds in prop::collection::vec((2u32..80, 1u64..25), 0..30),
    ) {
        let mut c = common::ChainBuilder::new(80, 1_000 * COIN, |h| format!("tM{h}"));
        let mut spent = BTreeSet::new();
        for &(h, v) in &deps {
            // Each coinbase funds at most one deposit.
            let src = (0..h).rev().find(|s| !spent.contains(s));
            let Some(src) = src else { continue };
            spent.insert(src);
            let cb = format!("cb{src}");
            c.push(h, &[(cb.as_str(), 0)], &[], Some((v * COIN, 0)));
        }
        for (i, &(h, v)) in wds.iter().enumerate() {
            c.push(h, &[], &[(format!("tW{i}"), v * COIN)], Some((0, v * COIN)));
        }
        let snap = c.snapshot();
        for gap in [1, 3, 10, 100] {
            let got: BTreeSet<_> = find_round_trips(&snap, gap)
                .into_iter()
                .map(|t| (t.deposit_txid.to_string(), t.withdrawal_txid.to_string(), t.value.zat()))
                .collect();
            prop_assert_eq!(got, common::brute_round_trips(&c.blocks, gap));
        }
        let curve = linked_value_curve(&snap, &[1, 2, 5, 10, 50, 100]).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[0].links <= w[1].links && w[0].value <= w[1].value));
    }
}

#[test]
fn pool_series_equals_replay_on_scenarios() {
    for seed in 40..46 {
        let syn = common::generate_small(seed, 900);
        let snap = zflow::Snapshot::from_block_records(syn.blocks.clone()).unwrap();
        let series = pool_series(&snap).unwrap();
        let naive = common::naive_pool_balances(&syn.blocks);
        let got: Vec<i128> = series.points.iter().map(|p| p.balance.zat() as i128).collect();
        assert_eq!(got, naive, "seed {seed}");

        let minted: u64 = syn.blocks.iter().map(|b| b.txs[0].vout.iter().map(|o| o.value_zat).sum::<u64>()).sum();
        let fees: u64 = snap.txs().iter().map(|t| conservation_check(t).unwrap().zat()).sum();
        let unspent: u64 = common::naive_balances(&syn.blocks, snap.tip().unwrap()).values().sum();
        assert_eq!(unspent + fees + series.final_balance().zat(), minted, "seed {seed}");
    }
}

#[test]
fn wealth_equals_replay_on_scenario() {
    let syn = common::generate_small(4, 1_200);
    let snap = zflow::Snapshot::from_block_records(syn.blocks.clone()).unwrap();
    for h in [0, 300, 777, 1_199] {
        let w = wealth_distribution(&snap, h);
        let got: BTreeMap<String, u64> = w.balances.iter().map(|(a, v)| (a.to_string(), v.zat())).collect();
        let mut want = common::naive_balances(&syn.blocks, h);
        want.retain(|_, v| *v > 0);
        assert_eq!(got, want, "height {h}");
    }
}
