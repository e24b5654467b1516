//! Attribution of shielded pool deposits and withdrawals to founders, miners
//! or everyone else.
//!
//! Deposits are categorized by their input addresses. Withdrawals are
//! categorized by the founder value signature (a withdrawal of exactly
//! 250.0001 ZEC), by the miner payout shape (more than 100 output addresses
//! including a known pool), and otherwise by tagged output addresses. Tags
//! derived from withdrawals feed back into deposit attribution, so the
//! rounds repeat until no new address is tagged.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::amount::{percent_1dp, Amount};
use crate::model::{Address, TxKind};
use crate::store::Snapshot;
use crate::tags::{Category, CategoryKind, TagRegistry, TagSource};

/// 250.0001 ZEC.
pub const FOUNDER_WITHDRAWAL: Amount = Amount::from_zat(25_000_010_000);
/// 249.9999 ZEC.
pub const FOUNDER_DEPOSIT: Amount = Amount::from_zat(24_999_990_000);
/// Per-address founder reward cap, 44,272.5 ZEC.
pub const FOUNDER_CAP: Amount = Amount::from_zat(4_427_250_000_000);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttributeError {
    #[error("transaction {txid} has unresolved inputs")]
    Unresolved { txid: String },
    #[error("need at least two matching transactions, found {found}")]
    TooFewMatches { found: usize },
    #[error("no value withdrawn from the pool")]
    NothingWithdrawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribution {
    Founder,
    Miner,
    Other,
}

impl Attribution {
    pub const ALL: [Attribution; 3] = [Attribution::Founder, Attribution::Miner, Attribution::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribution::Founder => "founder",
            Attribution::Miner => "miner",
            Attribution::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Which rule produced a transaction's category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    DepositInputs,
    FounderValue,
    PoolPayout,
    WithdrawalOutputs,
    Unmatched,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::DepositInputs => "deposit-inputs",
            Rule::FounderValue => "founder-value",
            Rule::PoolPayout => "pool-payout",
            Rule::WithdrawalOutputs => "withdrawal-outputs",
            Rule::Unmatched => "unmatched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxAttribution {
    pub tx_index: usize,
    pub category: Attribution,
    pub rule: Rule,
    /// Pool name when matched by the payout shape.
    pub pool: Option<String>,
    /// Round in which the transaction first received its final category.
    pub round_discovered: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    pub tx_count: u64,
    pub value: Amount,
}

/// Per-category counts and values, indexed by [`Attribution::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverageSide(pub [Totals; 3]);

impl CoverageSide {
    fn add(&mut self, cat: Attribution, value: Amount) {
        let t = &mut self.0[cat.index()];
        t.tx_count += 1;
        t.value = Amount::from_zat(t.value.zat() + value.zat());
    }

    pub fn get(&self, cat: Attribution) -> Totals {
        self.0[cat.index()]
    }

    pub fn total(&self) -> Totals {
        Totals {
            tx_count: self.0.iter().map(|t| t.tx_count).sum(),
            value: Amount::from_zat(self.0.iter().map(|t| t.value.zat()).sum()),
        }
    }

    pub fn count_percent(&self, cat: Attribution) -> String {
        percent_1dp(self.get(cat).tx_count as u128, self.total().tx_count as u128)
    }

    pub fn value_percent(&self, cat: Attribution) -> String {
        percent_1dp(self.get(cat).value.zat() as u128, self.total().value.zat() as u128)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coverage {
    /// Every transaction with a nonzero pool deposit.
    pub deposits: CoverageSide,
    /// Every transaction with a nonzero pool withdrawal.
    pub withdrawals: CoverageSide,
    /// Deshielded transactions only, valued by pool withdrawal.
    pub deshielded: CoverageSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub max_rounds: u32,
    pub founder_value: bool,
    pub pool_payout: bool,
    pub founder_withdrawal: Amount,
    /// Payouts need strictly more distinct output addresses than this.
    pub payout_min_outputs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_rounds: 10,
            founder_value: true,
            pool_payout: true,
            founder_withdrawal: FOUNDER_WITHDRAWAL,
            payout_min_outputs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagEvent {
    pub address: Address,
    pub category: Category,
    pub source: TagSource,
    pub round: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributionResult {
    /// Keyed by transaction index.
    pub txs: BTreeMap<usize, TxAttribution>,
    pub new_tags: Vec<TagEvent>,
    pub conflicts: Vec<String>,
    pub anomalies: Vec<String>,
    pub rounds: u32,
    pub converged: bool,
    pub coverage: Coverage,
}

impl AttributionResult {
    pub fn category(&self, tx_index: usize) -> Option<Attribution> {
        self.txs.get(&tx_index).map(|t| t.category)
    }
}

/// Categorizes every Shielded and Mixed transaction by its inputs.
pub fn attribute_deposits(
    snap: &Snapshot,
    registry: &TagRegistry,
) -> Result<Vec<(usize, Attribution)>, AttributeError> {
    let mut out = Vec::new();
    for (idx, tx) in snap.txs().iter().enumerate() {
        if !matches!(snap.kind(idx), TxKind::Shielded | TxKind::Mixed) {
            continue;
        }
        if tx.vin.iter().any(|i| i.resolved.is_none()) {
            return Err(AttributeError::Unresolved {
                txid: tx.txid.to_string(),
            });
        }
        let inputs = || tx.vin.iter().filter_map(|i| i.address());
        let cat = if inputs().any(|a| registry.is_founder(a)) {
            Attribution::Founder
        } else if inputs().any(|a| registry.is_miner(a)) {
            Attribution::Miner
        } else {
            Attribution::Other
        };
        out.push((idx, cat));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeuristicOutcome {
    pub txs: Vec<usize>,
    pub addresses_tagged: usize,
    pub conflicts: Vec<String>,
    pub anomalies: Vec<String>,
    /// Pool name per matched transaction, for payouts.
    pub pools: Vec<String>,
}

/// Deshielded transactions withdrawing exactly `value` are founder
/// withdrawals; their outputs become founder addresses.
pub fn apply_founder_withdrawal_heuristic(
    snap: &Snapshot,
    registry: &mut TagRegistry,
    value: Amount,
    round: u32,
) -> HeuristicOutcome {
    let mut out = HeuristicOutcome::default();
    let Some(list) = snap.withdrawals_by_value().get(&value) else {
        return out;
    };
    for &idx in list {
        if snap.kind(idx) != TxKind::Deshielded {
            continue;
        }
        out.txs.push(idx);
        for o in &snap.tx(idx).vout {
            match registry.tag(&o.address, Category::Founder, TagSource::Heuristic3, round) {
                Ok(true) => out.addresses_tagged += 1,
                Ok(false) => {}
                Err(e) => out.conflicts.push(format!("{}: {e}", snap.tx(idx).txid)),
            }
        }
    }
    out
}

/// Deshielded transactions paying more than `min_outputs` distinct addresses,
/// one of them a known pool, are pool payouts; their other outputs become
/// miner addresses.
pub fn apply_miner_withdrawal_heuristic(
    snap: &Snapshot,
    registry: &mut TagRegistry,
    min_outputs: usize,
    round: u32,
) -> HeuristicOutcome {
    let mut out = HeuristicOutcome::default();
    for (idx, tx) in snap.txs().iter().enumerate() {
        if snap.kind(idx) != TxKind::Deshielded {
            continue;
        }
        let ids = snap.output_ids(idx);
        if ids.len() <= min_outputs {
            continue;
        }
        let mut pools = ids
            .iter()
            .filter_map(|id| registry.pool_name(snap.address(*id)).map(str::to_string));
        let Some(pool) = pools.next() else {
            continue;
        };
        if let Some(other) = pools.find(|p| *p != pool) {
            out.anomalies.push(format!(
                "{}: outputs of pools {pool} and {other}; attributed to {pool}",
                tx.txid
            ));
        }
        out.txs.push(idx);
        out.pools.push(pool);
        for id in ids {
            let a = snap.address(id);
            if registry.has_kind(a, CategoryKind::Pool) {
                continue;
            }
            match registry.tag(a, Category::Miner, TagSource::Heuristic4, round) {
                Ok(true) => out.addresses_tagged += 1,
                Ok(false) => {}
                Err(e) => out.conflicts.push(format!("{}: {e}", tx.txid)),
            }
        }
    }
    out
}

/// Runs deposit attribution and both withdrawal heuristics until no new
/// address is tagged or `max_rounds` is reached, then categorizes every
/// pool-touching transaction and computes coverage.
pub fn run_pipeline(
    snap: &Snapshot,
    registry: &mut TagRegistry,
    config: &PipelineConfig,
) -> Result<AttributionResult, AttributeError> {
    let mut result = AttributionResult::default();
    let before: Vec<_> = registry.all_tags().collect();
    let mut prev: BTreeMap<usize, (Attribution, Rule, Option<String>)> = BTreeMap::new();
    let mut round = 0;
    loop {
        round += 1;
        let tagged_before = registry.len();
        let current = categorize(snap, registry, config, round, &mut result)?;
        for (idx, (cat, rule, pool)) in &current {
            let changed = prev.get(idx).is_none_or(|p| p.0 != *cat);
            let entry = result.txs.entry(*idx).or_insert(TxAttribution {
                tx_index: *idx,
                category: *cat,
                rule: *rule,
                pool: None,
                round_discovered: round,
            });
            if changed {
                entry.round_discovered = round;
            }
            entry.category = *cat;
            entry.rule = *rule;
            entry.pool = pool.clone();
        }
        prev = current;
        if registry.len() == tagged_before {
            result.converged = true;
            break;
        }
        if round >= config.max_rounds {
            break;
        }
    }
    result.rounds = round;
    result.new_tags = registry
        .all_tags()
        .filter(|t| !before.contains(t))
        .map(|t| TagEvent {
            address: t.address,
            category: t.category,
            source: t.source,
            round: t.created_at,
        })
        .collect();
    result.new_tags.sort_by_key(|t| t.round);
    for (idx, t) in &result.txs {
        let (d, w) = (snap.deposit(*idx), snap.withdrawal(*idx));
        if !d.is_zero() {
            result.coverage.deposits.add(t.category, d);
        }
        if !w.is_zero() {
            result.coverage.withdrawals.add(t.category, w);
        }
        if snap.kind(*idx) == TxKind::Deshielded {
            result.coverage.deshielded.add(t.category, w);
        }
    }
    Ok(result)
}

type RoundCategories = BTreeMap<usize, (Attribution, Rule, Option<String>)>;

fn categorize(
    snap: &Snapshot,
    registry: &mut TagRegistry,
    config: &PipelineConfig,
    round: u32,
    result: &mut AttributionResult,
) -> Result<RoundCategories, AttributeError> {
    let mut cats: RoundCategories = BTreeMap::new();
    for (idx, cat) in attribute_deposits(snap, registry)? {
        cats.insert(idx, (cat, Rule::DepositInputs, None));
    }
    if config.founder_value {
        let h3 = apply_founder_withdrawal_heuristic(snap, registry, config.founder_withdrawal, round);
        for idx in h3.txs {
            cats.insert(idx, (Attribution::Founder, Rule::FounderValue, None));
        }
        push_new(&mut result.conflicts, h3.conflicts);
    }
    if config.pool_payout {
        let h4 = apply_miner_withdrawal_heuristic(snap, registry, config.payout_min_outputs, round);
        for (idx, pool) in h4.txs.into_iter().zip(h4.pools) {
            cats.entry(idx)
                .or_insert((Attribution::Miner, Rule::PoolPayout, Some(pool)));
        }
        push_new(&mut result.conflicts, h4.conflicts);
        push_new(&mut result.anomalies, h4.anomalies);
    }
    for (idx, tx) in snap.txs().iter().enumerate() {
        let kind = snap.kind(idx);
        let pool_side = !snap.deposit(idx).is_zero() || !snap.withdrawal(idx).is_zero();
        if cats.contains_key(&idx) || !(kind == TxKind::Deshielded || pool_side) {
            continue;
        }
        let outputs = || tx.vout.iter().map(|o| &o.address);
        let entry = if kind != TxKind::Deshielded {
            (Attribution::Other, Rule::Unmatched, None)
        } else if outputs().any(|a| registry.is_founder(a)) {
            (Attribution::Founder, Rule::WithdrawalOutputs, None)
        } else if outputs().any(|a| registry.is_miner(a)) {
            (Attribution::Miner, Rule::WithdrawalOutputs, None)
        } else {
            (Attribution::Other, Rule::Unmatched, None)
        };
        cats.insert(idx, entry);
    }
    Ok(cats)
}

fn push_new(into: &mut Vec<String>, items: Vec<String>) {
    for item in items {
        if !into.contains(&item) {
            into.push(item);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FounderRow {
    pub address: Address,
    pub source: TagSource,
    pub first_height: u32,
    pub deposit_count: u64,
    /// Sum of this address's input values in its deposits.
    pub total_input: Amount,
    pub total_deposited: Amount,
    pub quantum_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FounderReport {
    pub rows: Vec<FounderRow>,
    pub total_deposits: u64,
    pub total_input: Amount,
    pub total_deposited: Amount,
    pub total_quantum: u64,
}

/// Per founder address: deposits it funded, their value and how many carried
/// exactly `quantum`. Addresses that never deposited are omitted.
pub fn founder_report(snap: &Snapshot, registry: &TagRegistry, quantum: Amount) -> FounderReport {
    let mut rows = Vec::new();
    for a in registry.addresses(CategoryKind::Founder) {
        let Some(id) = snap.address_id(a) else { continue };
        let mut row = FounderRow {
            address: a.clone(),
            source: registry
                .tags(a)
                .iter()
                .find(|t| t.category == Category::Founder)
                .map_or(TagSource::Params, |t| t.source),
            first_height: u32::MAX,
            deposit_count: 0,
            total_input: Amount::ZERO,
            total_deposited: Amount::ZERO,
            quantum_count: 0,
        };
        for &idx in &snap.activity(id).as_input {
            let d = snap.deposit(idx);
            if d.is_zero() {
                continue;
            }
            let tx = snap.tx(idx);
            row.first_height = row.first_height.min(tx.block_height);
            row.deposit_count += 1;
            let own: u64 = tx
                .vin
                .iter()
                .filter(|i| i.address() == Some(a))
                .filter_map(|i| i.value())
                .map(|v| v.zat())
                .sum();
            row.total_input = Amount::from_zat(row.total_input.zat() + own);
            row.total_deposited = Amount::from_zat(row.total_deposited.zat() + d.zat());
            if d == quantum {
                row.quantum_count += 1;
            }
        }
        if row.deposit_count > 0 {
            rows.push(row);
        }
    }
    rows.sort_by(|x, y| (x.first_height, &x.address).cmp(&(y.first_height, &y.address)));
    FounderReport {
        total_deposits: rows.iter().map(|r| r.deposit_count).sum(),
        total_input: Amount::from_zat(rows.iter().map(|r| r.total_input.zat()).sum()),
        total_deposited: Amount::from_zat(rows.iter().map(|r| r.total_deposited.zat()).sum()),
        total_quantum: rows.iter().map(|r| r.quantum_count).sum(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Deposit,
    Withdrawal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalStats {
    pub matches: usize,
    pub gaps: usize,
    pub within: usize,
}

impl IntervalStats {
    pub fn fraction(&self) -> f64 {
        self.within as f64 / self.gaps as f64
    }
}

/// How many consecutive transactions carrying exactly `value` on `side`
/// follow the previous one by a block gap within `lo..=hi`.
pub fn interval_stats(
    snap: &Snapshot,
    side: Side,
    value: Amount,
    lo: u32,
    hi: u32,
) -> Result<IntervalStats, AttributeError> {
    let index = match side {
        Side::Deposit => snap.deposits_by_value(),
        Side::Withdrawal => snap.withdrawals_by_value(),
    };
    let txs = index.get(&value).map(Vec::as_slice).unwrap_or(&[]);
    if txs.len() < 2 {
        return Err(AttributeError::TooFewMatches { found: txs.len() });
    }
    let heights: Vec<u32> = txs.iter().map(|i| snap.height_of(*i)).collect();
    let within = heights
        .windows(2)
        .filter(|w| (lo..=hi).contains(&(w[1] - w[0])))
        .count();
    Ok(IntervalStats {
        matches: txs.len(),
        gaps: txs.len() - 1,
        within,
    })
}
