//! Price-schedule payment scan: flags clusters whose shielded pool deposits
//! match a published monthly price list, restricted to fresh, low-activity
//! addresses that never received a pool withdrawal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::amount::Amount;
use crate::calendar::{month_label, month_of, parse_month};
use crate::cluster::{ClusterId, ClusterSet};
use crate::model::{TxId, TxKind};
use crate::store::Snapshot;
use crate::tags::TagRegistry;

const THIRTY_DAYS: i64 = 30 * 86_400;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TsbError {
    #[error("price schedule is empty")]
    EmptySchedule,
    #[error("{origin}: line {line}: {msg}")]
    Schedule {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Reporting period: a calendar month, optionally split in two halves at a
/// configured date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    pub month: (i32, u32),
    /// `Some(false)` before the split date, `Some(true)` from it on.
    pub after_split: Option<bool>,
}

impl Period {
    pub fn of(ts: i64, split_at: Option<i64>) -> Period {
        let month = month_of(ts);
        let after_split = split_at.filter(|s| month_of(*s) == month).map(|s| ts >= s);
        Period { month, after_split }
    }

    pub fn label(&self) -> String {
        match self.after_split {
            None => month_label(self.month),
            Some(false) => format!("{}-before", month_label(self.month)),
            Some(true) => format!("{}-after", month_label(self.month)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceSchedule {
    /// Month label (`YYYY-MM`, optionally `-before`/`-after`) to prices.
    pub entries: BTreeMap<String, BTreeSet<Amount>>,
}

impl PriceSchedule {
    pub fn load(path: &Path) -> Result<PriceSchedule, TsbError> {
        let file = std::fs::File::open(path).map_err(|e| TsbError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Reads `month,amount_zec` rows; several rows per month are allowed.
    pub fn from_reader<R: Read>(reader: R, origin: &str) -> Result<PriceSchedule, TsbError> {
        let err = |line: usize, msg: String| TsbError::Schedule {
            origin: origin.to_string(),
            line,
            msg,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["month", "amount_zec"] {
            return Err(err(1, "expected header month,amount_zec".into()));
        }
        let mut out = PriceSchedule::default();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| err(line, e.to_string()))?;
            let month = &row[0];
            let base = month
                .strip_suffix("-before")
                .or_else(|| month.strip_suffix("-after"))
                .unwrap_or(month);
            if parse_month(base).is_none() {
                return Err(err(line, format!("bad month {month:?}")));
            }
            let amount: Amount = row[1].parse().map_err(|e| err(line, format!("{e}")))?;
            if amount.is_zero() {
                return Err(err(line, "amount must be positive".into()));
            }
            out.entries.entry(month.to_string()).or_default().insert(amount);
        }
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(|s| s.is_empty())
    }

    /// Every price appearing in any month.
    pub fn amounts(&self) -> BTreeSet<Amount> {
        self.entries.values().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    CalendarMonth,
    /// The 30 days ending at each deposit.
    Sliding30Days,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TsbConfig {
    pub deposit_tol: Amount,
    pub cluster_tol: Amount,
    pub activity_limit: usize,
    pub window: Window,
    pub split_at: Option<i64>,
}

impl Default for TsbConfig {
    fn default() -> Self {
        TsbConfig {
            deposit_tol: Amount::from_zec(5),
            cluster_tol: Amount::from_zec(1),
            activity_limit: 250,
            window: Window::CalendarMonth,
            split_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsbCandidate {
    pub cluster_id: ClusterId,
    pub period: Period,
    pub matched_amount: Amount,
    /// Cluster deposits in the matching window.
    pub window_total: Amount,
    pub deposit_txids: Vec<TxId>,
    pub deposit_txs: Vec<usize>,
    pub prior_pool_receipt: bool,
    /// Highest transaction count among the deposits' input addresses.
    pub tx_activity_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TsbScan {
    pub candidates: Vec<TsbCandidate>,
    /// Column amounts of [`TsbScan::table`].
    pub amounts: Vec<Amount>,
    /// Per period label, the number of distinct flagged clusters per amount.
    pub table: BTreeMap<Period, Vec<u64>>,
    pub flagged_clusters: usize,
}

fn nearest(amounts: &BTreeSet<Amount>, v: Amount, tol: Amount) -> Option<Amount> {
    amounts
        .iter()
        .filter(|a| a.abs_diff(v) <= tol)
        .min_by_key(|a| (a.abs_diff(v), **a))
        .copied()
}

/// Cluster owning a transaction's inputs.
fn input_cluster(snap: &Snapshot, clusters: &ClusterSet, idx: usize) -> Option<ClusterId> {
    snap.input_ids(idx).first().map(|a| clusters.cluster_of_id(*a))
}

/// Pool deposits made from each cluster, in chain order, as (tx, time, value).
fn cluster_deposits(
    snap: &Snapshot,
    clusters: &ClusterSet,
) -> HashMap<ClusterId, Vec<(usize, i64, Amount)>> {
    let mut out: HashMap<ClusterId, Vec<(usize, i64, Amount)>> = HashMap::new();
    for idx in 0..snap.txs().len() {
        let d = snap.deposit(idx);
        if d.is_zero() {
            continue;
        }
        if let Some(c) = input_cluster(snap, clusters, idx) {
            out.entry(c).or_default().push((idx, snap.tx(idx).block_time, d));
        }
    }
    out
}

fn window_total(deps: &[(usize, i64, Amount)], at: i64, window: Window) -> Amount {
    let sum = deps
        .iter()
        .filter(|(_, t, _)| match window {
            Window::CalendarMonth => month_of(*t) == month_of(at),
            Window::Sliding30Days => *t > at - THIRTY_DAYS && *t <= at,
        })
        .map(|(_, _, v)| v.zat())
        .sum();
    Amount::from_zat(sum)
}

pub fn scan(
    snap: &Snapshot,
    clusters: &ClusterSet,
    registry: &TagRegistry,
    schedule: &PriceSchedule,
    config: &TsbConfig,
) -> Result<TsbScan, TsbError> {
    if schedule.is_empty() {
        return Err(TsbError::EmptySchedule);
    }
    let amounts = schedule.amounts();
    let by_cluster = cluster_deposits(snap, clusters);
    let mut grouped: BTreeMap<(ClusterId, Period), TsbCandidate> = BTreeMap::new();

    for (idx, tx) in snap.txs().iter().enumerate() {
        if !matches!(snap.kind(idx), TxKind::Shielded | TxKind::Mixed) {
            continue;
        }
        let d = snap.deposit(idx);
        if d.is_zero() || nearest(&amounts, d, config.deposit_tol).is_none() {
            continue;
        }
        let inputs = snap.input_ids(idx);
        if inputs.is_empty()
            || inputs.iter().any(|a| {
                let a = snap.address(*a);
                registry.is_founder(a) || registry.is_miner(a)
            })
        {
            continue;
        }
        let prior_receipt = inputs.iter().any(|a| {
            snap.activity(*a)
                .as_output
                .iter()
                .any(|&o| o < idx && snap.kind(o) == TxKind::Deshielded)
        });
        if prior_receipt {
            continue;
        }
        let activity = inputs
            .iter()
            .map(|a| snap.activity(*a).tx_count())
            .max()
            .unwrap_or(0);
        if activity > config.activity_limit {
            continue;
        }
        let cid = clusters.cluster_of_id(inputs[0]);
        let total = window_total(&by_cluster[&cid], tx.block_time, config.window);
        let Some(matched) = nearest(&amounts, total, config.cluster_tol) else {
            continue;
        };
        let period = Period::of(tx.block_time, config.split_at);
        let cand = grouped.entry((cid, period)).or_insert_with(|| TsbCandidate {
            cluster_id: cid,
            period,
            matched_amount: matched,
            window_total: total,
            deposit_txids: Vec::new(),
            deposit_txs: Vec::new(),
            prior_pool_receipt: false,
            tx_activity_count: 0,
        });
        cand.deposit_txids.push(tx.txid.clone());
        cand.deposit_txs.push(idx);
        cand.tx_activity_count = cand.tx_activity_count.max(activity);
    }

    let amounts: Vec<Amount> = amounts.into_iter().collect();
    let mut cells: BTreeMap<Period, Vec<BTreeSet<ClusterId>>> = BTreeMap::new();
    for c in grouped.values() {
        let col = amounts.iter().position(|a| *a == c.matched_amount).expect("scheduled");
        cells
            .entry(c.period)
            .or_insert_with(|| vec![BTreeSet::new(); amounts.len()])[col]
            .insert(c.cluster_id);
    }
    let table = cells
        .into_iter()
        .map(|(p, cols)| (p, cols.iter().map(|s| s.len() as u64).collect()))
        .collect();
    let flagged: BTreeSet<ClusterId> = grouped.keys().map(|(c, _)| *c).collect();
    let mut candidates: Vec<TsbCandidate> = grouped.into_values().collect();
    candidates.sort_by_key(|c| (c.period, c.cluster_id));
    Ok(TsbScan {
        candidates,
        amounts,
        table,
        flagged_clusters: flagged.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundingSource {
    /// Sending cluster, `None` for coin generation and pool withdrawals.
    pub cluster_id: Option<ClusterId>,
    /// Tagged entity of the sender, `coingen` or `pool` for those sources.
    pub label: Option<String>,
    pub value: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateDetail {
    pub cluster_id: ClusterId,
    /// Largest first.
    pub funding: Vec<FundingSource>,
    /// Calendar month label to total pool deposits by the cluster.
    pub monthly_deposits: Vec<(String, Amount)>,
    /// Months in which the cluster's total matched a price.
    pub matching_months: usize,
}

impl CandidateDetail {
    pub fn repeat_pattern(&self) -> bool {
        self.matching_months >= 2
    }
}

/// Traces where a candidate cluster's transparent funds came from and lists
/// its monthly pool deposits.
pub fn candidate_detail(
    candidate: &TsbCandidate,
    snap: &Snapshot,
    clusters: &ClusterSet,
    registry: &TagRegistry,
    schedule: &PriceSchedule,
    cluster_tol: Amount,
) -> CandidateDetail {
    let cid = candidate.cluster_id;
    let mut received: BTreeSet<usize> = BTreeSet::new();
    for &a in clusters.member_ids(cid) {
        received.extend(snap.activity(a).as_output.iter().copied());
    }
    let mut funding: BTreeMap<(Option<ClusterId>, Option<String>), u64> = BTreeMap::new();
    for idx in received {
        let sender = input_cluster(snap, clusters, idx);
        if sender == Some(cid) {
            continue;
        }
        let value: u64 = snap
            .tx(idx)
            .vout
            .iter()
            .filter(|o| clusters.cluster_of(&o.address) == Ok(cid))
            .map(|o| o.value.zat())
            .sum();
        let label = match (snap.kind(idx), sender) {
            (TxKind::Coingen, _) => Some("coingen".to_string()),
            (_, Some(s)) => clusters.members(s).find_map(|a| registry.entity_name(a)),
            (_, None) => Some("pool".to_string()),
        };
        *funding.entry((sender, label)).or_default() += value;
    }
    let mut funding: Vec<FundingSource> = funding
        .into_iter()
        .map(|((cluster_id, label), v)| FundingSource {
            cluster_id,
            label,
            value: Amount::from_zat(v),
        })
        .collect();
    funding.sort_by(|a, b| b.value.cmp(&a.value).then(a.cluster_id.cmp(&b.cluster_id)));

    let mut monthly: BTreeMap<(i32, u32), u64> = BTreeMap::new();
    if let Some(deps) = cluster_deposits(snap, clusters).get(&cid) {
        for (_, t, v) in deps {
            *monthly.entry(month_of(*t)).or_default() += v.zat();
        }
    }
    let amounts = schedule.amounts();
    let matching_months = monthly
        .values()
        .filter(|v| nearest(&amounts, Amount::from_zat(**v), cluster_tol).is_some())
        .count();
    CandidateDetail {
        cluster_id: cid,
        funding,
        monthly_deposits: monthly
            .into_iter()
            .map(|(m, v)| (month_label(m), Amount::from_zat(v)))
            .collect(),
        matching_months,
    }
}
