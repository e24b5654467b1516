//! Chain-wide statistics: transaction kind breakdown, shielded pool value
//! over time, address and wealth figures, z-to-z joinsplit usage and
//! per-block pool spikes.

use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;

use thiserror::Error;

use crate::amount::{percent_1dp, Amount};
use crate::calendar::day_label;
use crate::model::{is_pool_deposit, is_pool_withdrawal, transparent_out, Address, TxKind};
use crate::store::Snapshot;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("height range {lo}..={hi} extends past tip {tip:?}")]
    RangeBeyondTip { lo: u32, hi: u32, tip: Option<u32> },
    #[error("pool balance negative at height {height}: corrupt data")]
    NegativeBalance { height: u32 },
    #[error("value overflow at height {height}")]
    Overflow { height: u32 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KindBreakdown {
    /// Indexed by [`TxKind::index`].
    pub counts: [u64; 6],
}

impl KindBreakdown {
    pub fn count(&self, kind: TxKind) -> u64 {
        self.counts[kind.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// One-decimal percentage of the total.
    pub fn percent(&self, kind: TxKind) -> String {
        percent_1dp(self.count(kind) as u128, self.total() as u128)
    }

    pub fn merge(&self, other: &KindBreakdown) -> KindBreakdown {
        let mut counts = self.counts;
        for (c, o) in counts.iter_mut().zip(other.counts) {
            *c += o;
        }
        KindBreakdown { counts }
    }
}

pub fn kind_breakdown(
    snap: &Snapshot,
    heights: RangeInclusive<u32>,
) -> Result<KindBreakdown, StatsError> {
    let mut out = KindBreakdown::default();
    if heights.is_empty() || snap.is_empty() {
        return Ok(out);
    }
    let (lo, hi) = (*heights.start(), *heights.end());
    if snap.tip().is_none_or(|t| hi > t) {
        return Err(StatsError::RangeBeyondTip {
            lo,
            hi,
            tip: snap.tip(),
        });
    }
    for h in lo..=hi {
        for idx in snap.blocks()[h as usize].txs.clone() {
            out.counts[snap.kind(idx).index()] += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolPoint {
    pub height: u32,
    pub deposited: Amount,
    pub withdrawn: Amount,
    pub balance: Amount,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolSeries {
    pub points: Vec<PoolPoint>,
    pub total_deposited: Amount,
    pub total_withdrawn: Amount,
}

impl PoolSeries {
    pub fn final_balance(&self) -> Amount {
        self.points.last().map(|p| p.balance).unwrap_or_default()
    }
}

/// Per-block pool inflow, outflow and running balance over every
/// joinsplit in the chain.
pub fn pool_series(snap: &Snapshot) -> Result<PoolSeries, StatsError> {
    let mut series = PoolSeries::default();
    let mut balance = Amount::ZERO;
    for b in snap.blocks() {
        let of = |_| StatsError::Overflow { height: b.height };
        let mut dep = Amount::ZERO;
        let mut wd = Amount::ZERO;
        for idx in b.txs.clone() {
            dep = dep.checked_add(snap.deposit(idx)).map_err(of)?;
            wd = wd.checked_add(snap.withdrawal(idx)).map_err(of)?;
        }
        balance = balance
            .checked_add(dep)
            .map_err(of)?
            .checked_sub(wd)
            .ok_or(StatsError::NegativeBalance { height: b.height })?;
        series.total_deposited = series.total_deposited.checked_add(dep).map_err(of)?;
        series.total_withdrawn = series.total_withdrawn.checked_add(wd).map_err(of)?;
        series.points.push(PoolPoint {
            height: b.height,
            deposited: dep,
            withdrawn: wd,
            balance,
        });
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AddressStats {
    pub distinct_t: u64,
    /// Addresses ever used as an input of a t-to-z deposit.
    pub ever_shielding_inputs: u64,
    /// Addresses ever paid by a z-to-t withdrawal.
    pub ever_deshielding_outputs: u64,
}

pub fn address_stats(snap: &Snapshot) -> AddressStats {
    let mut shielding = vec![false; snap.address_count()];
    let mut deshielding = vec![false; snap.address_count()];
    for (idx, tx) in snap.txs().iter().enumerate() {
        if is_pool_deposit(tx) {
            for id in snap.input_ids(idx) {
                shielding[id as usize] = true;
            }
        }
        if is_pool_withdrawal(tx) {
            for id in snap.output_ids(idx) {
                deshielding[id as usize] = true;
            }
        }
    }
    AddressStats {
        distinct_t: snap.address_count() as u64,
        ever_shielding_inputs: shielding.iter().filter(|b| **b).count() as u64,
        ever_deshielding_outputs: deshielding.iter().filter(|b| **b).count() as u64,
    }
}

/// Transparent balances at a height.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Wealth {
    pub addresses_seen: u64,
    /// Nonzero balances, largest first.
    pub balances: Vec<(Address, Amount)>,
    pub total: Amount,
}

impl Wealth {
    pub fn nonzero_count(&self) -> u64 {
        self.balances.len() as u64
    }

    pub fn nonzero_fraction(&self) -> f64 {
        if self.addresses_seen == 0 {
            return 0.0;
        }
        self.nonzero_count() as f64 / self.addresses_seen as f64
    }

    /// Number of addresses in the top `percent`% (at least one when any
    /// balance is nonzero).
    pub fn top_count(&self, percent: u32) -> usize {
        let n = self.balances.len();
        if n == 0 {
            return 0;
        }
        (n * percent as usize).div_ceil(100).clamp(1, n)
    }

    /// Value held by the top `percent`% of nonzero addresses.
    pub fn top_value(&self, percent: u32) -> Amount {
        Amount::from_zat(
            self.balances[..self.top_count(percent)]
                .iter()
                .map(|(_, v)| v.zat())
                .sum(),
        )
    }

    pub fn top_percent_share(&self, percent: u32) -> f64 {
        if self.total.is_zero() {
            return 0.0;
        }
        self.top_value(percent).zat() as f64 / self.total.zat() as f64
    }

    pub fn max_balance(&self) -> Amount {
        self.balances.first().map(|(_, v)| *v).unwrap_or_default()
    }
}

/// Unspent transparent value per address after all blocks up to `height`.
pub fn wealth_distribution(snap: &Snapshot, height: u32) -> Wealth {
    let mut bal: HashMap<u32, u64> = HashMap::new();
    let mut seen = 0u64;
    let mut seen_flags = vec![false; snap.address_count()];
    for b in snap.blocks().iter().take_while(|b| b.height <= height) {
        for idx in b.txs.clone() {
            let tx = snap.tx(idx);
            for input in &tx.vin {
                if let Some((a, v)) = &input.resolved {
                    let id = snap.address_id(a).expect("indexed");
                    *bal.entry(id).or_default() -= v.zat();
                }
            }
            for o in &tx.vout {
                let id = snap.address_id(&o.address).expect("indexed");
                if !seen_flags[id as usize] {
                    seen_flags[id as usize] = true;
                    seen += 1;
                }
                *bal.entry(id).or_default() += o.value.zat();
            }
        }
    }
    let mut balances: Vec<(Address, Amount)> = bal
        .into_iter()
        .filter(|(_, v)| *v > 0)
        .map(|(id, v)| (snap.address(id).clone(), Amount::from_zat(v)))
        .collect();
    balances.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total = Amount::from_zat(balances.iter().map(|(_, v)| v.zat()).sum());
    Wealth {
        addresses_seen: seen,
        balances,
        total,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZzDay {
    pub day: String,
    pub private_txs: u64,
    pub joinsplits: u64,
    pub cumulative_joinsplits: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZzStats {
    pub private_tx_count: u64,
    pub joinsplit_count: u64,
    pub single_js_count: u64,
    pub per_day: Vec<ZzDay>,
}

impl ZzStats {
    pub fn single_js_fraction(&self) -> f64 {
        if self.private_tx_count == 0 {
            return 0.0;
        }
        self.single_js_count as f64 / self.private_tx_count as f64
    }
}

pub fn zz_joinsplit_stats(snap: &Snapshot) -> ZzStats {
    let mut out = ZzStats::default();
    let mut days: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (idx, tx) in snap.txs().iter().enumerate() {
        if snap.kind(idx) != TxKind::Private {
            continue;
        }
        let n = tx.joinsplits.len() as u64;
        out.private_tx_count += 1;
        out.joinsplit_count += n;
        if n == 1 {
            out.single_js_count += 1;
        }
        let e = days.entry(day_label(tx.block_time)).or_default();
        e.0 += 1;
        e.1 += n;
    }
    let mut cum = 0;
    for (day, (txs, js)) in days {
        cum += js;
        out.per_day.push(ZzDay {
            day,
            private_txs: txs,
            joinsplits: js,
            cumulative_joinsplits: cum,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Deposit,
    Withdrawal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Deposit => "deposit",
            Direction::Withdrawal => "withdrawal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spike {
    pub height: u32,
    pub direction: Direction,
    pub amount: Amount,
}

/// Blocks whose total deposit or withdrawal exceeds `threshold`.
pub fn spike_report(series: &PoolSeries, threshold: Amount) -> Vec<Spike> {
    let mut out = Vec::new();
    for p in &series.points {
        if p.deposited > threshold {
            out.push(Spike {
                height: p.height,
                direction: Direction::Deposit,
                amount: p.deposited,
            });
        }
        if p.withdrawn > threshold {
            out.push(Spike {
                height: p.height,
                direction: Direction::Withdrawal,
                amount: p.withdrawn,
            });
        }
    }
    out
}

/// Per-day value and count aggregates. Fees belong to no column.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DailyRow {
    pub day: String,
    pub counts: [u64; 6],
    pub coingen: Amount,
    /// Transparent outputs of transparent and mixed transactions.
    pub public: Amount,
    pub deposited: Amount,
    pub withdrawn: Amount,
}

pub fn daily_series(snap: &Snapshot) -> Vec<DailyRow> {
    let mut days: BTreeMap<String, DailyRow> = BTreeMap::new();
    for (idx, tx) in snap.txs().iter().enumerate() {
        let day = day_label(tx.block_time);
        let row = days.entry(day.clone()).or_insert_with(|| DailyRow {
            day,
            ..Default::default()
        });
        let kind = snap.kind(idx);
        row.counts[kind.index()] += 1;
        let out = transparent_out(tx).unwrap_or_default();
        match kind {
            TxKind::Coingen => row.coingen = Amount::from_zat(row.coingen.zat() + out.zat()),
            TxKind::Transparent | TxKind::Mixed => {
                row.public = Amount::from_zat(row.public.zat() + out.zat())
            }
            _ => {}
        }
        row.deposited = Amount::from_zat(row.deposited.zat() + snap.deposit(idx).zat());
        row.withdrawn = Amount::from_zat(row.withdrawn.zat() + snap.withdrawal(idx).zat());
    }
    days.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::{BlockRecord, InputRecord, JoinSplitRecord, OutputRecord, TxRecord};

    fn out(a: &str, v: u64) -> OutputRecord {
        OutputRecord {
            address: a.into(),
            value_zat: v,
            index: None,
        }
    }

    fn js(old: u64, new: u64, n: u8) -> JoinSplitRecord {
        JoinSplitRecord {
            vpub_old_zat: old,
            vpub_new_zat: new,
            nullifiers: [format!("{:02x}00", n), format!("{:02x}01", n)],
            commitments: ["00".into(), "01".into()],
        }
    }

    /// Block 0: coinbase 100 to tA. Block 1: tA deposits 90 (fee 10), a
    /// private tx. Block 2: withdrawal of 40 to tB.
    fn tiny() -> Snapshot {
        let b0 = BlockRecord {
            height: 0,
            hash: "h0".into(),
            time: 1_477_641_360,
            txs: vec![TxRecord {
                txid: "c0".into(),
                coinbase: true,
                vin: vec![],
                vout: vec![out("tA", 100)],
                joinsplits: vec![],
            }],
        };
        let b1 = BlockRecord {
            height: 1,
            hash: "h1".into(),
            time: 1_477_641_510,
            txs: vec![
                TxRecord {
                    txid: "c1".into(),
                    coinbase: true,
                    vin: vec![],
                    vout: vec![out("tM", 100)],
                    joinsplits: vec![],
                },
                TxRecord {
                    txid: "d".into(),
                    coinbase: false,
                    vin: vec![InputRecord {
                        prev_txid: "c0".into(),
                        prev_index: 0,
                    }],
                    vout: vec![],
                    joinsplits: vec![js(90, 0, 1)],
                },
                TxRecord {
                    txid: "p".into(),
                    coinbase: false,
                    vin: vec![],
                    vout: vec![],
                    joinsplits: vec![js(0, 0, 2)],
                },
            ],
        };
        let b2 = BlockRecord {
            height: 2,
            hash: "h2".into(),
            time: 1_477_728_000,
            txs: vec![
                TxRecord {
                    txid: "c2".into(),
                    coinbase: true,
                    vin: vec![],
                    vout: vec![out("tM", 100)],
                    joinsplits: vec![],
                },
                TxRecord {
                    txid: "w".into(),
                    coinbase: false,
                    vin: vec![],
                    vout: vec![out("tB", 40)],
                    joinsplits: vec![js(0, 40, 3)],
                },
            ],
        };
        Snapshot::from_block_records(vec![b0, b1, b2]).unwrap()
    }

    #[test]
    fn breakdown_counts_and_partition() {
        let s = tiny();
        let all = kind_breakdown(&s, 0..=2).unwrap();
        assert_eq!(all.count(TxKind::Coingen), 3);
        assert_eq!(all.count(TxKind::Shielded), 1);
        assert_eq!(all.count(TxKind::Private), 1);
        assert_eq!(all.count(TxKind::Deshielded), 1);
        assert_eq!(all.total(), 6);
        let split = kind_breakdown(&s, 0..=0)
            .unwrap()
            .merge(&kind_breakdown(&s, 1..=2).unwrap());
        assert_eq!(split, all);
        assert!(kind_breakdown(&s, 0..=3).is_err());
    }

    #[test]
    fn empty_chain_is_all_zero() {
        let s = Snapshot::from_block_records(vec![]).unwrap();
        assert_eq!(kind_breakdown(&s, 0..=10).unwrap(), KindBreakdown::default());
        assert_eq!(address_stats(&s), AddressStats::default());
        assert_eq!(zz_joinsplit_stats(&s), ZzStats::default());
        assert!(pool_series(&s).unwrap().points.is_empty());
    }

    #[test]
    fn pool_balance_tracks_deposits_and_withdrawals() {
        let series = pool_series(&tiny()).unwrap();
        let bal: Vec<u64> = series.points.iter().map(|p| p.balance.zat()).collect();
        assert_eq!(bal, [0, 90, 50]);
        assert_eq!(series.total_deposited.zat(), 90);
        assert_eq!(series.total_withdrawn.zat(), 40);
    }

    #[test]
    fn negative_pool_balance_is_flagged() {
        let b0 = BlockRecord {
            height: 0,
            hash: "h0".into(),
            time: 0,
            txs: vec![
                TxRecord {
                    txid: "c".into(),
                    coinbase: true,
                    vin: vec![],
                    vout: vec![out("tA", 1)],
                    joinsplits: vec![],
                },
                TxRecord {
                    txid: "w".into(),
                    coinbase: false,
                    vin: vec![],
                    vout: vec![out("tB", 5)],
                    joinsplits: vec![js(0, 5, 1)],
                },
            ],
        };
        let s = Snapshot::from_block_records(vec![b0]).unwrap();
        assert_eq!(pool_series(&s), Err(StatsError::NegativeBalance { height: 0 }));
    }

    #[test]
    fn addresses_and_wealth() {
        let s = tiny();
        let a = address_stats(&s);
        assert_eq!((a.distinct_t, a.ever_shielding_inputs, a.ever_deshielding_outputs), (3, 1, 1));
        let w = wealth_distribution(&s, 2);
        assert_eq!(w.addresses_seen, 3);
        assert_eq!(w.max_balance().zat(), 200);
        assert_eq!(w.nonzero_count(), 2);
        assert_eq!(w.top_count(1), 1);
        assert!((w.top_percent_share(1) - 200.0 / 240.0).abs() < 1e-12);
        let w0 = wealth_distribution(&s, 0);
        assert_eq!(w0.top_percent_share(1), 1.0);
    }

    #[test]
    fn zz_and_spikes() {
        let s = tiny();
        let zz = zz_joinsplit_stats(&s);
        assert_eq!((zz.private_tx_count, zz.joinsplit_count, zz.single_js_count), (1, 1, 1));
        let series = pool_series(&s).unwrap();
        let spikes = spike_report(&series, Amount::from_zat(50));
        assert_eq!(spikes.len(), 1);
        assert_eq!(spikes[0].height, 1);
        assert!(spike_report(&series, Amount::from_zat(1000)).is_empty());
    }

    #[test]
    fn daily_rows_bucket_by_utc_day() {
        let rows = daily_series(&tiny());
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].day, "2016-10-28");
        assert_eq!(rows[0].coingen.zat(), 200);
        assert_eq!(rows[0].deposited.zat(), 90);
        assert_eq!(rows[1].withdrawn.zat(), 40);
    }
}
