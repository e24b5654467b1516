//! Round-trip linking: a value deposited into the pool exactly once and
//! withdrawn exactly once shortly afterwards links the two transactions.

use thiserror::Error;

use crate::amount::{percent_1dp, Amount};
use crate::attribute::{Attribution, AttributionResult};
use crate::model::TxId;
use crate::store::Snapshot;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("no value withdrawn from the pool")]
    NothingWithdrawn,
    #[error("gaps must be sorted ascending")]
    UnsortedGaps,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTrip {
    pub value: Amount,
    pub deposit_tx: usize,
    pub deposit_txid: TxId,
    pub deposit_height: u32,
    pub withdrawal_tx: usize,
    pub withdrawal_txid: TxId,
    pub withdrawal_height: u32,
    /// `withdrawal_height - deposit_height`, at least 1.
    pub gap: u32,
}

/// Every globally unique value deposited once and withdrawn once, with the
/// withdrawal following within `max_gap` blocks. Ordered by deposit height,
/// then value.
pub fn find_round_trips(snap: &Snapshot, max_gap: u32) -> Vec<RoundTrip> {
    let mut out: Vec<RoundTrip> = all_round_trips(snap)
        .into_iter()
        .filter(|t| t.gap <= max_gap)
        .collect();
    out.sort_by_key(|t| (t.deposit_height, t.value));
    out
}

fn all_round_trips(snap: &Snapshot) -> Vec<RoundTrip> {
    let withdrawals = snap.withdrawals_by_value();
    let mut out = Vec::new();
    for (value, deps) in snap.deposits_by_value() {
        let [d] = deps.as_slice() else { continue };
        let Some([w]) = withdrawals.get(value).map(Vec::as_slice) else {
            continue;
        };
        let (dh, wh) = (snap.height_of(*d), snap.height_of(*w));
        if wh <= dh {
            continue;
        }
        out.push(RoundTrip {
            value: *value,
            deposit_tx: *d,
            deposit_txid: snap.tx(*d).txid.clone(),
            deposit_height: dh,
            withdrawal_tx: *w,
            withdrawal_txid: snap.tx(*w).txid.clone(),
            withdrawal_height: wh,
            gap: wh - dh,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurvePoint {
    pub gap: u32,
    pub links: u64,
    pub value: Amount,
}

/// Linked count and value for each maximum gap.
pub fn linked_value_curve(snap: &Snapshot, gaps: &[u32]) -> Result<Vec<CurvePoint>, LinkError> {
    if gaps.windows(2).any(|w| w[0] > w[1]) {
        return Err(LinkError::UnsortedGaps);
    }
    let mut trips: Vec<(u32, u64)> = all_round_trips(snap)
        .iter()
        .map(|t| (t.gap, t.value.zat()))
        .collect();
    trips.sort_unstable();
    let mut points = Vec::with_capacity(gaps.len());
    let (mut i, mut links, mut value) = (0, 0u64, 0u64);
    for &gap in gaps {
        while i < trips.len() && trips[i].0 <= gap {
            links += 1;
            value += trips[i].1;
            i += 1;
        }
        points.push(CurvePoint {
            gap,
            links,
            value: Amount::from_zat(value),
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueUniqueness {
    pub unique_value_count: u64,
    /// Count of linked values by number of ZEC decimal places, 0 to 8.
    pub decimal_places: [u64; 9],
}

impl ValueUniqueness {
    /// Share of values with more than three decimal places.
    pub fn over_three_decimals_percent(&self) -> String {
        let over: u64 = self.decimal_places[4..].iter().sum();
        percent_1dp(over as u128, self.unique_value_count as u128)
    }
}

pub fn value_uniqueness_stats(trips: &[RoundTrip]) -> ValueUniqueness {
    let mut out = ValueUniqueness {
        unique_value_count: trips.len() as u64,
        decimal_places: [0; 9],
    };
    for t in trips {
        out.decimal_places[t.value.decimal_places() as usize] += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnonymityReduction {
    pub total_withdrawn: Amount,
    pub founder_value: Amount,
    pub miner_value: Amount,
    /// Round-trip value whose withdrawal was not attributed to founders or
    /// miners.
    pub roundtrip_only_value: Amount,
}

impl AnonymityReduction {
    fn pct(&self, v: Amount) -> String {
        percent_1dp(v.zat() as u128, self.total_withdrawn.zat() as u128)
    }

    pub fn founder_pct(&self) -> String {
        self.pct(self.founder_value)
    }

    pub fn miner_pct(&self) -> String {
        self.pct(self.miner_value)
    }

    pub fn founder_miner_pct(&self) -> String {
        self.pct(Amount::from_zat(self.founder_value.zat() + self.miner_value.zat()))
    }

    pub fn roundtrip_only_pct(&self) -> String {
        self.pct(self.roundtrip_only_value)
    }

    pub fn total_value(&self) -> Amount {
        Amount::from_zat(self.founder_value.zat() + self.miner_value.zat() + self.roundtrip_only_value.zat())
    }

    pub fn total_pct(&self) -> String {
        self.pct(self.total_value())
    }
}

pub fn anonymity_reduction(
    attribution: &AttributionResult,
    trips: &[RoundTrip],
) -> Result<AnonymityReduction, LinkError> {
    let w = &attribution.coverage.withdrawals;
    let total = w.total().value;
    if total.is_zero() {
        return Err(LinkError::NothingWithdrawn);
    }
    let roundtrip_only: u64 = trips
        .iter()
        .filter(|t| attribution.category(t.withdrawal_tx).is_none_or(|c| c == Attribution::Other))
        .map(|t| t.value.zat())
        .sum();
    Ok(AnonymityReduction {
        total_withdrawn: total,
        founder_value: w.get(Attribution::Founder).value,
        miner_value: w.get(Attribution::Miner).value,
        roundtrip_only_value: Amount::from_zat(roundtrip_only),
    })
}
