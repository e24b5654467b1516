//! Deterministic synthetic chains with complete ground truth.
//!
//! The generator plays founders, mining pools and their members, solo
//! miners, a hoarding whale, exchanges, plain users, a shielded wallet
//! service, price-schedule buyers and their decoys. Every transaction is
//! built from an actor's own funds, so value is conserved and the pool never
//! goes negative. Every pool-touching value passes through a value book that
//! keeps deposit and withdrawal values disjoint except for the planted round
//! trips and the founder signature values, which makes round-trip ground
//! truth exact.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::amount::{percent_1dp, Amount, ZAT_PER_ZEC};
use crate::attribute::{Attribution, AttributionResult, Rule};
use crate::calendar::{month_label, month_of};
use crate::cluster::ClusterSet;
use crate::config::{ConfigError, KvConfig};
use crate::dump::{chain_digest, BlockRecord, InputRecord, JoinSplitRecord, OutputRecord, TxRecord};
use crate::link::RoundTrip;
use crate::model::{Address, TxId, TxKind};
use crate::tags::{derive_miner_tags, TagError, TagRegistry};
use crate::store::Snapshot;
use crate::tsb::{PriceSchedule, TsbScan};

const ZEC: u64 = ZAT_PER_ZEC;
/// Headroom kept in shielded balances so upward value jitter never overdraws.
const MARGIN: u64 = 1_000;
const SERVICE_FEE: u64 = ZEC / 1_000;
/// Exchanges keep this much back from ordinary customer payouts.
const EXCHANGE_RESERVE: u64 = 600 * ZEC;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("manifest digest {manifest} does not match chain digest {chain}")]
    DigestMismatch { manifest: String, chain: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub blocks: u32,
    pub seed: u64,
    pub genesis_time: i64,
    pub block_spacing_secs: i64,
    pub fee_zat: u64,
    /// Founder addresses listed in the chain parameters.
    pub founders: usize,
    pub founder_reward_zat: u64,
    pub miner_reward_zat: u64,
    pub founder_cap_zat: u64,
    pub founder_deposit_zat: u64,
    pub founder_withdrawal_zat: u64,
    pub founder_step_min: u32,
    pub founder_step_max: u32,
    /// Deposits a founder accumulates before starting a deposit burst.
    pub founder_deposit_burst: u64,
    pub founder_withdraw_burst: u64,
    pub founder_redeposit_pct: u32,
    pub pools: usize,
    pub pool_share_pct: u32,
    pub pool_members: usize,
    pub pool_fanout_min: usize,
    pub pool_fanout_max: usize,
    pub pool_deposit_period: u32,
    pub exchange_member_pct: u32,
    pub solo_miners: usize,
    pub solo_deposit_every: usize,
    pub whale_share_pct: u32,
    pub spike_threshold_zat: u64,
    pub exchanges: usize,
    pub users: usize,
    pub user_actions: u32,
    pub member_actions: u32,
    pub round_trip_rate_pct: u32,
    pub round_trip_max_gap: u32,
    pub tsb_prices_zec: Vec<u64>,
    pub tsb_buyers: usize,
    pub tsb_repeat_buyers: usize,
    pub tsb_decoys: usize,
    pub h3_decoys: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            blocks: 5_000,
            seed: 7,
            genesis_time: 1_477_641_360,
            block_spacing_secs: 150,
            fee_zat: 10_000,
            founders: 48,
            founder_reward_zat: 250_000_000,
            miner_reward_zat: 1_000_000_000,
            founder_cap_zat: 4_427_250_000_000,
            founder_deposit_zat: 24_999_990_000,
            founder_withdrawal_zat: 25_000_010_000,
            founder_step_min: 6,
            founder_step_max: 10,
            founder_deposit_burst: 4,
            founder_withdraw_burst: 3,
            founder_redeposit_pct: 50,
            pools: 3,
            pool_share_pct: 60,
            pool_members: 400,
            pool_fanout_min: 101,
            pool_fanout_max: 160,
            pool_deposit_period: 40,
            exchange_member_pct: 5,
            solo_miners: 12,
            solo_deposit_every: 5,
            whale_share_pct: 8,
            spike_threshold_zat: 2_000 * ZEC,
            exchanges: 3,
            users: 300,
            user_actions: 3,
            member_actions: 2,
            round_trip_rate_pct: 10,
            round_trip_max_gap: 5,
            tsb_prices_zec: vec![100, 200, 400, 500],
            tsb_buyers: 4,
            tsb_repeat_buyers: 1,
            tsb_decoys: 3,
            h3_decoys: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "blocks",
    "seed",
    "genesis_time",
    "block_spacing_secs",
    "fee_zat",
    "founders",
    "founder_reward_zat",
    "miner_reward_zat",
    "founder_cap_zat",
    "founder_deposit_zat",
    "founder_withdrawal_zat",
    "founder_step_min",
    "founder_step_max",
    "founder_deposit_burst",
    "founder_withdraw_burst",
    "founder_redeposit_pct",
    "pools",
    "pool_share_pct",
    "pool_members",
    "pool_fanout_min",
    "pool_fanout_max",
    "pool_deposit_period",
    "exchange_member_pct",
    "solo_miners",
    "solo_deposit_every",
    "whale_share_pct",
    "spike_threshold_zat",
    "exchanges",
    "users",
    "user_actions",
    "member_actions",
    "round_trip_rate_pct",
    "round_trip_max_gap",
    "tsb_prices_zec",
    "tsb_buyers",
    "tsb_repeat_buyers",
    "tsb_decoys",
    "h3_decoys",
];

macro_rules! each_scalar {
    ($m:ident, $cfg:expr, $arg:expr) => {
        $m!($cfg, $arg, blocks, seed, genesis_time, block_spacing_secs, fee_zat, founders,
            founder_reward_zat, miner_reward_zat, founder_cap_zat, founder_deposit_zat,
            founder_withdrawal_zat, founder_step_min, founder_step_max, founder_deposit_burst,
            founder_withdraw_burst, founder_redeposit_pct, pools, pool_share_pct, pool_members,
            pool_fanout_min, pool_fanout_max, pool_deposit_period, exchange_member_pct,
            solo_miners, solo_deposit_every, whale_share_pct, spike_threshold_zat, exchanges,
            users, user_actions, member_actions, round_trip_rate_pct, round_trip_max_gap,
            tsb_buyers, tsb_repeat_buyers, tsb_decoys, h3_decoys)
    };
}

macro_rules! read_fields {
    ($cfg:expr, $kv:expr, $($f:ident),*) => {
        $( $kv.read_into(stringify!($f), &mut $cfg.$f)?; )*
    };
}

macro_rules! write_fields {
    ($cfg:expr, $kv:expr, $($f:ident),*) => {
        $( $kv.set(stringify!($f), $cfg.$f.to_string()); )*
    };
}

impl ScenarioConfig {
    /// Defaults overridden by any keys present in `kv`.
    pub fn from_kv(kv: &KvConfig) -> Result<ScenarioConfig, SynthError> {
        kv.check_keys(KEYS)?;
        let mut cfg = ScenarioConfig::default();
        each_scalar!(read_fields, cfg, kv);
        if let Some(list) = kv.get("tsb_prices_zec") {
            cfg.tsb_prices_zec = list
                .split(',')
                .map(|p| p.trim())
                .filter(|p| !p.is_empty())
                .map(|p| {
                    p.parse::<u64>().map_err(|e| ConfigError::Value {
                        key: "tsb_prices_zec".into(),
                        value: list.into(),
                        msg: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        each_scalar!(write_fields, self, kv);
        let prices: Vec<String> = self.tsb_prices_zec.iter().map(u64::to_string).collect();
        kv.set("tsb_prices_zec", prices.join(","));
        kv
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.blocks == 0 {
            return bad("blocks must be positive");
        }
        if self.block_spacing_secs <= 0 {
            return bad("block_spacing_secs must be positive");
        }
        if self.founders == 0 || self.founder_reward_zat == 0 || self.miner_reward_zat == 0 {
            return bad("founders and both rewards must be positive");
        }
        let step = self.founder_deposit_zat + self.fee_zat;
        if self.founder_cap_zat < step {
            return bad("founder cap is below the deposit quantum plus fee");
        }
        if self.founder_cap_zat % self.founder_reward_zat != 0 {
            return bad("founder cap must be a multiple of the founder reward");
        }
        if step % self.founder_reward_zat != 0 {
            return bad("founder deposit quantum plus fee must be a multiple of the founder reward");
        }
        if self.founder_deposit_zat == self.founder_withdrawal_zat {
            return bad("founder deposit and withdrawal quanta must differ");
        }
        if self.founder_withdrawal_zat <= self.fee_zat {
            return bad("founder withdrawal quantum must exceed the fee");
        }
        if self.founder_step_min == 0 || self.founder_step_min > self.founder_step_max {
            return bad("founder step range is empty");
        }
        if self.founder_deposit_burst == 0 || self.founder_withdraw_burst == 0 {
            return bad("founder bursts must be positive");
        }
        if self.pool_share_pct + self.whale_share_pct > 100 {
            return bad("pool and whale shares exceed 100%");
        }
        if self.pools == 0 && self.pool_share_pct > 0 {
            return bad("pool_share_pct needs at least one pool");
        }
        if self.solo_miners == 0 && self.pool_share_pct + self.whale_share_pct < 100 {
            return bad("blocks left to solo miners but solo_miners = 0");
        }
        if self.pools > 0 {
            if self.pool_fanout_min < 2 || self.pool_fanout_min > self.pool_fanout_max {
                return bad("pool fan-out range is empty or below 2");
            }
            if self.pool_members + 1 < self.pool_fanout_max {
                return bad("pool_members too small for the maximum fan-out");
            }
            if self.pool_deposit_period == 0 {
                return bad("pool_deposit_period must be positive");
            }
        }
        if self.solo_deposit_every == 0 {
            return bad("solo_deposit_every must be positive");
        }
        if self.round_trip_max_gap == 0 {
            return bad("round_trip_max_gap must be at least 1");
        }
        let wants_exchange = self.users > 0
            || self.tsb_buyers > 0
            || self.tsb_decoys > 0
            || self.h3_decoys > 0
            || (self.pools > 0 && self.pool_members > 0);
        if wants_exchange && self.exchanges == 0 {
            return bad("exchanges are required to fund users, buyers and decoys");
        }
        if self.tsb_buyers + self.tsb_decoys > 0 && self.tsb_prices_zec.is_empty() {
            return bad("tsb_prices_zec is empty");
        }
        if self.tsb_prices_zec.contains(&0) {
            return bad("tsb prices must be positive");
        }
        if self.tsb_repeat_buyers > self.tsb_buyers {
            return bad("tsb_repeat_buyers exceeds tsb_buyers");
        }
        if self.tsb_decoys > 0
            && self
                .tsb_prices_zec
                .iter()
                .any(|p| out_of_tolerance_amount(&self.tsb_prices_zec, *p).is_none())
        {
            return bad("cannot place a decoy deposit outside every price tolerance");
        }
        Ok(())
    }
}

/// Deposit tolerance the decoys are designed against.
const DECOY_DEPOSIT_TOL: u64 = 5;
const DECOY_CLUSTER_TOL: u64 = 1;
const DECOY_SIDE_ZEC: u64 = 30;

fn out_of_tolerance_amount(prices: &[u64], base: u64) -> Option<u64> {
    (DECOY_DEPOSIT_TOL + 1..base.max(10) * 2)
        .map(|d| base + d)
        .find(|v| prices.iter().all(|p| v.abs_diff(*p) > DECOY_DEPOSIT_TOL))
}

fn extra_for_over_deposit(prices: &[u64], base: u64) -> Option<u64> {
    (DECOY_DEPOSIT_TOL + 2..base.max(10) * 4).find(|x| {
        prices.iter().all(|p| (base + x).abs_diff(*p) > DECOY_CLUSTER_TOL + 1)
            && prices.iter().all(|p| x.abs_diff(*p) > DECOY_DEPOSIT_TOL)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TxTruth {
    pub txid: String,
    pub height: u32,
    pub kind: String,
    pub behavior: String,
    pub actor: String,
    /// Attribution category for pool-touching transactions.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    pub fee_zat: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LedgerPoint {
    pub height: u32,
    pub deposited_zat: u64,
    pub withdrawn_zat: u64,
    pub balance_zat: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct AddressTruth {
    pub distinct_t: u64,
    pub ever_shielding_inputs: u64,
    pub ever_deshielding_outputs: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct ZzTruth {
    pub private_tx_count: u64,
    pub joinsplit_count: u64,
    pub single_js_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FounderTruth {
    pub address: String,
    pub params: bool,
    pub deposit_count: u64,
    pub total_input_zat: u64,
    pub total_deposited_zat: u64,
    pub quantum_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RoundTripTruth {
    pub value_zat: u64,
    pub deposit_txid: String,
    pub deposit_height: u32,
    pub withdrawal_txid: String,
    pub withdrawal_height: u32,
    pub gap: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TsbBuyerTruth {
    pub address: String,
    pub month: String,
    pub amount_zat: u64,
    pub deposit_txids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TsbDecoyTruth {
    pub address: String,
    pub month: String,
    pub pattern: String,
    pub deposit_txids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SpikeTruth {
    pub height: u32,
    pub direction: String,
    pub amount_zat: u64,
}

/// Everything the generator knows about the chain it produced.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GroundTruth {
    pub schema: u32,
    pub digest: String,
    pub seed: u64,
    pub blocks: u32,
    pub kind_counts: BTreeMap<String, u64>,
    pub pool_ledger: Vec<LedgerPoint>,
    pub address_stats: AddressTruth,
    pub zz: ZzTruth,
    /// Address to owning actor.
    pub owners: BTreeMap<String, String>,
    pub founder_params: Vec<String>,
    pub founder_report: Vec<FounderTruth>,
    /// Non-founder coinbase recipients.
    pub miner_roster: Vec<String>,
    /// Non-pool outputs of payouts with more than 100 distinct outputs.
    pub payout_recipients: Vec<String>,
    pub round_trips: Vec<RoundTripTruth>,
    pub tsb_buyers: Vec<TsbBuyerTruth>,
    pub tsb_decoys: Vec<TsbDecoyTruth>,
    pub h3_decoys: Vec<String>,
    pub spike_threshold_zat: u64,
    pub spikes: Vec<SpikeTruth>,
    pub txs: Vec<TxTruth>,
}

impl GroundTruth {
    pub fn kind_count(&self, kind: TxKind) -> u64 {
        self.kind_counts.get(kind.as_str()).copied().unwrap_or(0)
    }

    pub fn load(path: &Path) -> Result<GroundTruth, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| SynthError::Manifest(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// A generated chain plus the side files an analysis run needs.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub config: ScenarioConfig,
    pub blocks: Vec<BlockRecord>,
    pub truth: GroundTruth,
    /// `address,category,name,source` rows for pools, exchanges and the
    /// wallet service.
    pub tags_csv: String,
    /// Addresses excluded from change linking.
    pub exclusions: Vec<String>,
    pub schedule: PriceSchedule,
}

impl Synthetic {
    /// Founder parameters and generator tags loaded, coinbase miners
    /// derived from `snap`.
    pub fn registry(&self, snap: &Snapshot) -> Result<TagRegistry, TagError> {
        let mut reg = TagRegistry::new();
        reg.load_founder_params_str(&self.founders_txt(), "founders.txt")?;
        let import = reg.import_tags_reader(self.tags_csv.as_bytes(), "tags.csv")?;
        if let Some((row, reason)) = import.rejected.first() {
            return Err(TagError::Line {
                path: "tags.csv".into(),
                line: row + 1,
                msg: reason.clone(),
            });
        }
        derive_miner_tags(snap, &mut reg);
        Ok(reg)
    }

    pub fn exclusion_set(&self) -> HashSet<Address> {
        self.exclusions.iter().map(|a| Address::from(a.as_str())).collect()
    }

    pub fn founders_txt(&self) -> String {
        let mut s = String::new();
        for a in &self.truth.founder_params {
            s.push_str(a);
            s.push('\n');
        }
        s
    }

    pub fn schedule_csv(&self) -> String {
        let mut s = String::from("month,amount_zec\n");
        for (m, amounts) in &self.schedule.entries {
            for a in amounts {
                s.push_str(&format!("{m},{}\n", a.to_zec_string()));
            }
        }
        s
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            s.push_str(&b.to_line());
            s.push('\n');
        }
        s
    }

    /// Writes chain.jsonl, manifest.json, founders.txt, tags.csv,
    /// exclusions.txt, tsb_schedule.csv and run.cfg into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path, e: std::io::Error| SynthError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut exclusions = self.exclusions.join("\n");
        if !exclusions.is_empty() {
            exclusions.push('\n');
        }
        let files = [
            ("chain.jsonl", self.dump()),
            ("manifest.json", self.truth.to_json()),
            ("founders.txt", self.founders_txt()),
            ("tags.csv", self.tags_csv.clone()),
            ("exclusions.txt", exclusions),
            ("tsb_schedule.csv", self.schedule_csv()),
            ("run.cfg", self.config.to_kv().to_text()),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Founder,
    Pool,
    Member,
    Solo,
    Whale,
    Exchange,
    User,
    Service,
    Buyer,
    Decoy,
}

impl Role {
    fn category(self) -> Attribution {
        match self {
            Role::Founder => Attribution::Founder,
            Role::Pool | Role::Member | Role::Solo | Role::Whale => Attribution::Miner,
            _ => Attribution::Other,
        }
    }
}

#[derive(Debug, Clone)]
struct Actor {
    name: String,
    role: Role,
    addrs: Vec<String>,
    shielded: u64,
    /// Shielded value held back for a scheduled withdrawal.
    locked: u64,
    /// Exchange deposit address this actor sells to.
    sell_to: Option<String>,
}

impl Actor {
    fn free_shielded(&self) -> u64 {
        self.shielded - self.locked
    }
}

#[derive(Debug, Clone)]
struct Utxo {
    txid: String,
    index: u32,
    value: u64,
}

struct PoolState {
    actor: usize,
    name: String,
    addr: String,
    roster: Vec<String>,
    next_deposit: u32,
}

struct ExchangeState {
    actor: usize,
    hot: String,
    deposit_addrs: Vec<String>,
}

#[derive(Debug, Clone)]
enum Event {
    FounderRedeposit { addr: String },
    PoolPayout(usize),
    RoundTripWithdraw { actor: usize, value: u64 },
    WhaleWithdraw,
    Tsb { plan: usize, step: u8 },
    H3Decoy { actor: usize, step: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DecoyPattern {
    PriorReceipt,
    OverDeposit,
    OutOfTolerance,
}

impl DecoyPattern {
    fn as_str(self) -> &'static str {
        match self {
            DecoyPattern::PriorReceipt => "prior-pool-receipt",
            DecoyPattern::OverDeposit => "over-deposit",
            DecoyPattern::OutOfTolerance => "out-of-tolerance",
        }
    }
}

struct TsbPlan {
    actor: usize,
    price: u64,
    month: (i32, u32),
    deadline: u32,
    decoy: Option<DecoyPattern>,
    txids: Vec<String>,
    done: bool,
}

#[derive(Default)]
struct ValueBook {
    deposits: HashSet<u64>,
    withdrawals: HashSet<u64>,
    reserved: HashSet<u64>,
}

impl ValueBook {
    fn deposit_value(&self, mut v: u64) -> u64 {
        while self.withdrawals.contains(&v) || self.reserved.contains(&v) {
            v -= 1;
        }
        v
    }

    fn withdrawal_value(&self, mut v: u64) -> u64 {
        while self.deposits.contains(&v) || self.reserved.contains(&v) {
            v += 1;
        }
        v
    }

    fn is_fresh(&self, v: u64) -> bool {
        !self.deposits.contains(&v) && !self.withdrawals.contains(&v) && !self.reserved.contains(&v)
    }
}

struct TxPlan {
    actor: usize,
    behavior: &'static str,
    kind: TxKind,
    inputs: Vec<(String, Utxo)>,
    outputs: Vec<(String, u64)>,
    vpub_old: u64,
    vpub_new: u64,
    private_js: usize,
    category: Option<Attribution>,
}

impl TxPlan {
    fn new(actor: usize, behavior: &'static str, kind: TxKind) -> TxPlan {
        TxPlan {
            actor,
            behavior,
            kind,
            inputs: Vec::new(),
            outputs: Vec::new(),
            vpub_old: 0,
            vpub_new: 0,
            private_js: 0,
            category: None,
        }
    }
}

struct Gen {
    cfg: ScenarioConfig,
    rng: ChaCha8Rng,
    height: u32,
    blocks: Vec<BlockRecord>,
    cur: Vec<TxRecord>,
    counter: u64,
    actors: Vec<Actor>,
    owners: BTreeMap<String, String>,
    utxos: HashMap<String, VecDeque<Utxo>>,
    values: ValueBook,
    events: BTreeMap<(u32, u64), Event>,
    ledger: Vec<LedgerPoint>,
    block_dep: u64,
    block_wd: u64,
    pool_balance: u64,
    /// Addresses that ever received an output.
    used: HashSet<String>,
    shielding_inputs: HashSet<String>,
    deshielding_outputs: HashSet<String>,
    zz: ZzTruth,
    txs: Vec<TxTruth>,
    kind_counts: BTreeMap<String, u64>,
    // founders
    founder_actor: usize,
    founder_params: Vec<String>,
    active_founder: usize,
    active_received: u64,
    founder_next_dep: u32,
    founder_dep_burst: bool,
    founder_next_wd: u32,
    founder_wd_burst: bool,
    founder_stats: BTreeMap<String, FounderTruth>,
    // miners
    pools: Vec<PoolState>,
    members: Vec<usize>,
    solos: Vec<usize>,
    whale: Option<usize>,
    /// Coinbase value the whale received since its last deposit.
    whale_hoard: u64,
    miner_roster: BTreeSet<String>,
    payout_recipients: BTreeSet<String>,
    exchanges: Vec<ExchangeState>,
    users: Vec<usize>,
    service_addr: Option<String>,
    // planted behaviors
    round_trips: Vec<RoundTripTruth>,
    pending_trips: HashMap<u64, (String, u32)>,
    plans: Vec<TsbPlan>,
    h3_decoys: Vec<String>,
    spike_heights: BTreeSet<u32>,
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Synthetic, SynthError> {
    cfg.validate()?;
    let mut g = Gen::new(cfg.clone());
    g.setup();
    for h in 0..cfg.blocks {
        g.block(h);
    }
    Ok(g.finish())
}

impl Gen {
    fn new(cfg: ScenarioConfig) -> Gen {
        let mut values = ValueBook::default();
        values.reserved.insert(cfg.founder_deposit_zat);
        values.reserved.insert(cfg.founder_withdrawal_zat);
        Gen {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            height: 0,
            blocks: Vec::new(),
            cur: Vec::new(),
            counter: 0,
            actors: Vec::new(),
            owners: BTreeMap::new(),
            utxos: HashMap::new(),
            values,
            events: BTreeMap::new(),
            ledger: Vec::new(),
            block_dep: 0,
            block_wd: 0,
            pool_balance: 0,
            used: HashSet::new(),
            shielding_inputs: HashSet::new(),
            deshielding_outputs: HashSet::new(),
            zz: ZzTruth::default(),
            txs: Vec::new(),
            kind_counts: TxKind::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect(),
            founder_actor: 0,
            founder_params: Vec::new(),
            active_founder: 0,
            active_received: 0,
            founder_next_dep: 0,
            founder_dep_burst: false,
            founder_next_wd: 0,
            founder_wd_burst: false,
            founder_stats: BTreeMap::new(),
            pools: Vec::new(),
            members: Vec::new(),
            solos: Vec::new(),
            whale: None,
            whale_hoard: 0,
            miner_roster: BTreeSet::new(),
            payout_recipients: BTreeSet::new(),
            exchanges: Vec::new(),
            users: Vec::new(),
            service_addr: None,
            round_trips: Vec::new(),
            pending_trips: HashMap::new(),
            plans: Vec::new(),
            h3_decoys: Vec::new(),
            spike_heights: BTreeSet::new(),
        }
    }

    fn hash(&mut self, domain: &[u8]) -> [u8; 32] {
        self.counter += 1;
        let mut h = Sha256::new();
        h.update(self.cfg.seed.to_le_bytes());
        h.update(domain);
        h.update(self.counter.to_le_bytes());
        h.finalize().into()
    }

    fn new_address(&mut self, actor: usize, prefix: &str) -> String {
        let bytes = self.hash(b"addr");
        let mut body = bs58::encode(&bytes[..25]).into_string();
        while body.len() < 33 {
            body.push('1');
        }
        body.truncate(33);
        let addr = format!("{prefix}{body}");
        let owner = self.actors[actor].name.clone();
        let prev = self.owners.insert(addr.clone(), owner);
        assert!(prev.is_none(), "address generated twice");
        self.actors[actor].addrs.push(addr.clone());
        addr
    }

    fn add_actor(&mut self, name: String, role: Role) -> usize {
        self.actors.push(Actor {
            name,
            role,
            addrs: Vec::new(),
            shielded: 0,
            locked: 0,
            sell_to: None,
        });
        self.actors.len() - 1
    }

    fn schedule(&mut self, height: u32, ev: Event) {
        self.counter += 1;
        self.events.insert((height, self.counter), ev);
    }

    fn setup(&mut self) {
        let cfg = self.cfg.clone();
        self.founder_actor = self.add_actor("founders".into(), Role::Founder);
        for _ in 0..cfg.founders {
            let a = self.new_address(self.founder_actor, "t3");
            self.founder_params.push(a);
        }
        for e in 0..cfg.exchanges {
            let actor = self.add_actor(format!("exchange:Exchange{e}"), Role::Exchange);
            let hot = self.new_address(actor, "t1");
            self.exchanges.push(ExchangeState {
                actor,
                hot,
                deposit_addrs: Vec::new(),
            });
        }
        for p in 0..cfg.pools {
            let name = format!("Pool{p}");
            let actor = self.add_actor(format!("pool:{name}"), Role::Pool);
            let addr = self.new_address(actor, "t1");
            self.miner_roster.insert(addr.clone());
            self.pools.push(PoolState {
                actor,
                name,
                addr,
                roster: Vec::new(),
                next_deposit: cfg.pool_deposit_period,
            });
        }
        for p in 0..cfg.pools {
            for m in 0..cfg.pool_members {
                let addr = if self.rng.random_range(0..100) < cfg.exchange_member_pct {
                    let e = self.rng.random_range(0..self.exchanges.len());
                    self.exchange_deposit_address(e)
                } else {
                    let actor = self.add_actor(format!("member:{p}.{m}"), Role::Member);
                    let addr = self.new_address(actor, "t1");
                    let e = self.rng.random_range(0..self.exchanges.len());
                    let sell = self.exchange_deposit_address(e);
                    self.actors[actor].sell_to = Some(sell);
                    self.members.push(actor);
                    addr
                };
                self.pools[p].roster.push(addr);
            }
        }
        for s in 0..cfg.solo_miners {
            let actor = self.add_actor(format!("solo:{s}"), Role::Solo);
            let addr = self.new_address(actor, "t1");
            self.miner_roster.insert(addr);
            self.solos.push(actor);
        }
        if cfg.whale_share_pct > 0 {
            let actor = self.add_actor("whale".into(), Role::Whale);
            let addr = self.new_address(actor, "t1");
            self.miner_roster.insert(addr);
            self.whale = Some(actor);
        }
        if cfg.users > 0 {
            let actor = self.add_actor("service:zcash4win".into(), Role::Service);
            self.service_addr = Some(self.new_address(actor, "t1"));
        }
        for u in 0..cfg.users {
            let actor = self.add_actor(format!("user:{u}"), Role::User);
            self.new_address(actor, "t1");
            self.users.push(actor);
        }
        self.plan_tsb();
        for d in 0..cfg.h3_decoys {
            let actor = self.add_actor(format!("h3decoy:{d}"), Role::User);
            self.new_address(actor, "t1");
            let lo = cfg.blocks / 3;
            let hi = (cfg.blocks * 2 / 3).max(lo + 1);
            let h = self.rng.random_range(lo..hi);
            self.schedule(h, Event::H3Decoy { actor, step: 0 });
        }
    }

    fn exchange_deposit_address(&mut self, e: usize) -> String {
        let actor = self.exchanges[e].actor;
        let a = self.new_address(actor, "t1");
        self.exchanges[e].deposit_addrs.push(a.clone());
        a
    }

    /// Months the chain spans, with their first and last heights.
    fn months(&self) -> Vec<((i32, u32), u32, u32)> {
        let mut out: Vec<((i32, u32), u32, u32)> = Vec::new();
        for h in 0..self.cfg.blocks {
            let m = month_of(self.time_of(h));
            match out.last_mut() {
                Some(last) if last.0 == m => last.2 = h,
                _ => out.push((m, h, h)),
            }
        }
        out
    }

    fn time_of(&self, h: u32) -> i64 {
        self.cfg.genesis_time + h as i64 * self.cfg.block_spacing_secs
    }

    fn plan_tsb(&mut self) {
        let cfg = self.cfg.clone();
        let months = self.months();
        if months.is_empty() || cfg.tsb_prices_zec.is_empty() {
            return;
        }
        // Month i of the chain is priced at entry i of the cycling schedule.
        let price_of = |slot: usize| cfg.tsb_prices_zec[(slot % months.len()) % cfg.tsb_prices_zec.len()] * ZEC;
        let add = |g: &mut Gen, actor: usize, slot: usize, decoy: Option<DecoyPattern>| {
            let (month, lo, hi) = months[slot % months.len()];
            let span = hi - lo;
            if span < 12 {
                return;
            }
            let start = lo + span / 4 + g.rng.random_range(0..=span / 4);
            g.plans.push(TsbPlan {
                actor,
                price: price_of(slot),
                month,
                deadline: hi - 6,
                decoy,
                txids: Vec::new(),
                done: false,
            });
            let plan = g.plans.len() - 1;
            g.schedule(start, Event::Tsb { plan, step: 0 });
        };
        for b in 0..cfg.tsb_buyers {
            let actor = self.add_actor(format!("tsb:{b}"), Role::Buyer);
            self.new_address(actor, "t1");
            add(self, actor, b, None);
            if b < cfg.tsb_repeat_buyers && months.len() > 1 {
                add(self, actor, b + 1, None);
            }
        }
        let patterns = [
            DecoyPattern::PriorReceipt,
            DecoyPattern::OverDeposit,
            DecoyPattern::OutOfTolerance,
        ];
        for d in 0..cfg.tsb_decoys {
            let actor = self.add_actor(format!("tsbdecoy:{d}"), Role::Decoy);
            self.new_address(actor, "t1");
            add(self, actor, d, Some(patterns[d % 3]));
        }
    }

    fn balance(&self, addr: &str) -> u64 {
        self.utxos.get(addr).map_or(0, |q| q.iter().map(|u| u.value).sum())
    }

    fn actor_balance(&self, actor: usize) -> u64 {
        self.actors[actor].addrs.iter().map(|a| self.balance(a)).sum()
    }

    fn take_all(&mut self, addr: &str) -> Vec<(String, Utxo)> {
        self.utxos
            .remove(addr)
            .map(|q| q.into_iter().map(|u| (addr.to_string(), u)).collect())
            .unwrap_or_default()
    }

    /// Oldest coins of `addr` until their sum reaches `target`.
    fn take_value(&mut self, addr: &str, target: u64) -> Vec<(String, Utxo)> {
        let mut out = Vec::new();
        let mut sum = 0;
        if let Some(q) = self.utxos.get_mut(addr) {
            while sum < target {
                let Some(u) = q.pop_front() else { break };
                sum += u.value;
                out.push((addr.to_string(), u));
            }
        }
        out
    }

    fn take_count(&mut self, addr: &str, n: usize) -> Vec<(String, Utxo)> {
        let q = self.utxos.get_mut(addr).expect("coins present");
        q.drain(..n).map(|u| (addr.to_string(), u)).collect()
    }

    fn emit(&mut self, plan: TxPlan) -> String {
        let txid = hex::encode(self.hash(b"tx"));
        let in_sum: u64 = plan.inputs.iter().map(|(_, u)| u.value).sum();
        let out_sum: u64 = plan.outputs.iter().map(|(_, v)| v).sum();
        let fee = if plan.kind == TxKind::Coingen {
            0
        } else {
            (in_sum + plan.vpub_new)
                .checked_sub(out_sum + plan.vpub_old)
                .expect("generator builds balanced transactions")
        };
        let mut joinsplits = Vec::new();
        let mut js = |g: &mut Gen, old: u64, new: u64| {
            let nf = [hex::encode(g.hash(b"nf")), hex::encode(g.hash(b"nf"))];
            let cm = [hex::encode(g.hash(b"cm")), hex::encode(g.hash(b"cm"))];
            joinsplits.push(JoinSplitRecord {
                vpub_old_zat: old,
                vpub_new_zat: new,
                nullifiers: nf,
                commitments: cm,
            });
        };
        if plan.vpub_old > 0 {
            js(self, plan.vpub_old, 0);
        }
        if plan.vpub_new > 0 {
            js(self, 0, plan.vpub_new);
        }
        for _ in 0..plan.private_js {
            js(self, 0, 0);
        }
        let coinbase = plan.kind == TxKind::Coingen;
        let rec = TxRecord {
            txid: txid.clone(),
            coinbase,
            vin: plan
                .inputs
                .iter()
                .map(|(_, u)| InputRecord {
                    prev_txid: u.txid.clone(),
                    prev_index: u.index,
                })
                .collect(),
            vout: plan
                .outputs
                .iter()
                .map(|(a, v)| OutputRecord {
                    address: a.clone(),
                    value_zat: *v,
                    index: None,
                })
                .collect(),
            joinsplits,
        };
        for (i, (a, v)) in plan.outputs.iter().enumerate() {
            self.used.insert(a.clone());
            self.utxos.entry(a.clone()).or_default().push_back(Utxo {
                txid: txid.clone(),
                index: i as u32,
                value: *v,
            });
        }
        if plan.vpub_old > 0 {
            self.block_dep += plan.vpub_old;
            self.values.deposits.insert(plan.vpub_old);
            self.actors[plan.actor].shielded += plan.vpub_old;
            for (a, _) in &plan.inputs {
                self.shielding_inputs.insert(a.clone());
            }
        }
        if plan.vpub_new > 0 {
            self.block_wd += plan.vpub_new;
            self.values.withdrawals.insert(plan.vpub_new);
            let actor = &mut self.actors[plan.actor];
            actor.shielded = actor
                .shielded
                .checked_sub(plan.vpub_new)
                .expect("withdrawal within the actor's shielded funds");
            for (a, _) in &plan.outputs {
                self.deshielding_outputs.insert(a.clone());
            }
        }
        if plan.kind == TxKind::Private {
            self.zz.private_tx_count += 1;
            self.zz.joinsplit_count += plan.private_js as u64;
            if plan.private_js == 1 {
                self.zz.single_js_count += 1;
            }
        }
        let pool_tx = matches!(plan.kind, TxKind::Shielded | TxKind::Deshielded | TxKind::Mixed)
            || plan.vpub_old > 0
            || plan.vpub_new > 0;
        let category = pool_tx.then(|| {
            plan.category
                .unwrap_or_else(|| self.actors[plan.actor].role.category())
                .as_str()
                .to_string()
        });
        *self.kind_counts.entry(plan.kind.as_str().to_string()).or_default() += 1;
        self.txs.push(TxTruth {
            txid: txid.clone(),
            height: self.height,
            kind: plan.kind.as_str().to_string(),
            behavior: plan.behavior.to_string(),
            actor: self.actors[plan.actor].name.clone(),
            category,
            fee_zat: fee,
        });
        self.cur.push(rec);
        txid
    }

    fn block(&mut self, h: u32) {
        self.height = h;
        self.block_dep = 0;
        self.block_wd = 0;
        self.coinbase();
        self.founders();
        self.pool_cycle();
        let due: Vec<Event> = {
            let later = self.events.split_off(&(h + 1, 0));
            let now = std::mem::replace(&mut self.events, later);
            now.into_values().collect()
        };
        for ev in due {
            self.handle(ev);
        }
        for _ in 0..self.cfg.member_actions {
            self.member_action();
        }
        self.solo_action();
        self.whale_action();
        if h % 20 == 19 {
            for e in 0..self.exchanges.len() {
                self.sweep(e);
            }
        }
        for _ in 0..self.cfg.user_actions {
            self.user_action();
        }
        if !self.users.is_empty() && self.rng.random_range(0..100) < self.cfg.round_trip_rate_pct {
            self.plant_round_trip();
        }

        if self.block_dep > self.cfg.spike_threshold_zat || self.block_wd > self.cfg.spike_threshold_zat {
            self.spike_heights.insert(h);
        }
        self.pool_balance = self.pool_balance + self.block_dep - self.block_wd;
        self.ledger.push(LedgerPoint {
            height: h,
            deposited_zat: self.block_dep,
            withdrawn_zat: self.block_wd,
            balance_zat: self.pool_balance,
        });
        let hash = hex::encode(self.hash(b"block"));
        self.blocks.push(BlockRecord {
            height: h,
            hash,
            time: self.time_of(h),
            txs: std::mem::take(&mut self.cur),
        });
    }

    fn coinbase(&mut self) {
        let cfg = &self.cfg;
        let r = self.rng.random_range(0..100);
        let (actor, addr) = if r < cfg.whale_share_pct {
            let w = self.whale.expect("whale exists when its share is positive");
            self.whale_hoard += cfg.miner_reward_zat;
            (w, self.actors[w].addrs[0].clone())
        } else if r < cfg.whale_share_pct + cfg.pool_share_pct {
            let p = self.rng.random_range(0..self.pools.len());
            (self.pools[p].actor, self.pools[p].addr.clone())
        } else {
            let s = self.solos[self.rng.random_range(0..self.solos.len())];
            (s, self.actors[s].addrs[0].clone())
        };
        let founder = self.founder_params[self.active_founder].clone();
        let mut plan = TxPlan::new(actor, "coinbase", TxKind::Coingen);
        plan.outputs = vec![(addr, cfg.miner_reward_zat), (founder, cfg.founder_reward_zat)];
        self.emit(plan);
        self.active_received += self.cfg.founder_reward_zat;
        if self.active_received == self.cfg.founder_cap_zat
            && self.active_founder + 1 < self.founder_params.len()
        {
            self.active_founder += 1;
            self.active_received = 0;
        }
    }

    fn founder_step(&mut self) -> u32 {
        self.rng
            .random_range(self.cfg.founder_step_min..=self.cfg.founder_step_max)
    }

    fn founders(&mut self) {
        let h = self.height;
        let step = self.cfg.founder_deposit_zat + self.cfg.fee_zat;
        if h >= self.founder_next_dep {
            let active = self.founder_params[self.active_founder].clone();
            if !self.founder_dep_burst && self.balance(&active) >= step * self.cfg.founder_deposit_burst {
                self.founder_dep_burst = true;
            }
            // Retired addresses drain first, including their sub-quantum rest.
            let retired = self.founder_params[..self.active_founder]
                .iter()
                .find(|a| self.balance(a) > self.cfg.fee_zat)
                .cloned();
            if let Some(addr) = retired.filter(|_| self.founder_dep_burst) {
                self.founder_deposit(&addr);
                self.founder_next_dep = h + self.founder_step();
            } else if self.founder_dep_burst {
                if self.balance(&active) >= step {
                    self.founder_deposit(&active);
                    self.founder_next_dep = h + self.founder_step();
                } else {
                    self.founder_dep_burst = false;
                }
            }
        }
        let wq = self.cfg.founder_withdrawal_zat;
        if h >= self.founder_next_wd {
            let free = self.actors[self.founder_actor].free_shielded();
            if !self.founder_wd_burst && free >= wq * self.cfg.founder_withdraw_burst {
                self.founder_wd_burst = true;
            }
            if self.founder_wd_burst {
                if free >= wq {
                    self.founder_withdraw();
                    self.founder_next_wd = h + self.founder_step();
                } else {
                    self.founder_wd_burst = false;
                }
            }
        }
    }

    fn founder_deposit(&mut self, addr: &str) {
        let step = self.cfg.founder_deposit_zat + self.cfg.fee_zat;
        let bal = self.balance(addr);
        let (inputs, value) = if bal >= step {
            let n = (step / self.cfg.founder_reward_zat) as usize;
            let inputs = self.take_count(addr, n);
            (inputs, self.cfg.founder_deposit_zat)
        } else {
            let inputs = self.take_all(addr);
            (inputs, self.values.deposit_value(bal - self.cfg.fee_zat))
        };
        self.record_founder_deposit(addr, &inputs, value);
        let mut plan = TxPlan::new(self.founder_actor, "founder-deposit", TxKind::Shielded);
        plan.inputs = inputs;
        plan.vpub_old = value;
        self.emit(plan);
    }

    fn record_founder_deposit(&mut self, addr: &str, inputs: &[(String, Utxo)], value: u64) {
        let params = self.founder_params.iter().any(|a| a == addr);
        let e = self
            .founder_stats
            .entry(addr.to_string())
            .or_insert_with(|| FounderTruth {
                address: addr.to_string(),
                params,
                deposit_count: 0,
                total_input_zat: 0,
                total_deposited_zat: 0,
                quantum_count: 0,
            });
        e.deposit_count += 1;
        e.total_input_zat += inputs.iter().map(|(_, u)| u.value).sum::<u64>();
        e.total_deposited_zat += value;
        if value == self.cfg.founder_deposit_zat {
            e.quantum_count += 1;
        }
    }

    fn founder_withdraw(&mut self) {
        let wq = self.cfg.founder_withdrawal_zat;
        let addr = self.new_address(self.founder_actor, "t1");
        let mut plan = TxPlan::new(self.founder_actor, "founder-withdrawal", TxKind::Deshielded);
        plan.vpub_new = wq;
        plan.outputs = vec![(addr.clone(), wq - self.cfg.fee_zat)];
        self.emit(plan);
        if self.rng.random_range(0..100) < self.cfg.founder_redeposit_pct {
            let at = self.height + self.rng.random_range(20..200);
            self.schedule(at, Event::FounderRedeposit { addr });
        }
    }

    fn founder_redeposit(&mut self, addr: &str) {
        let bal = self.balance(addr);
        if bal <= self.cfg.fee_zat {
            return;
        }
        let inputs = self.take_all(addr);
        let raw = bal - self.cfg.fee_zat;
        let value = if raw == self.cfg.founder_deposit_zat {
            raw
        } else {
            self.values.deposit_value(raw)
        };
        self.record_founder_deposit(addr, &inputs, value);
        let mut plan = TxPlan::new(self.founder_actor, "founder-redeposit", TxKind::Shielded);
        plan.inputs = inputs;
        plan.vpub_old = value;
        self.emit(plan);
    }

    fn pool_cycle(&mut self) {
        for p in 0..self.pools.len() {
            if self.height < self.pools[p].next_deposit {
                continue;
            }
            self.pools[p].next_deposit = self.height + self.cfg.pool_deposit_period;
            let addr = self.pools[p].addr.clone();
            let bal = self.balance(&addr);
            if bal <= self.cfg.fee_zat + ZEC {
                continue;
            }
            let inputs = self.take_all(&addr);
            let value = self.values.deposit_value(bal - self.cfg.fee_zat);
            let mut plan = TxPlan::new(self.pools[p].actor, "pool-deposit", TxKind::Shielded);
            plan.inputs = inputs;
            plan.vpub_old = value;
            self.emit(plan);
            let at = self.height + self.rng.random_range(1..=5);
            self.schedule(at, Event::PoolPayout(p));
        }
    }

    fn pool_payout(&mut self, p: usize) {
        let actor = self.pools[p].actor;
        let fee = self.cfg.fee_zat;
        let free = self.actors[actor].free_shielded();
        let n = self
            .rng
            .random_range(self.cfg.pool_fanout_min..=self.cfg.pool_fanout_max);
        if free <= MARGIN + fee + n as u64 * 10_000 {
            return;
        }
        let total = free - MARGIN - fee;
        let mut recipients: Vec<String> = self.pools[p]
            .roster
            .choose_multiple(&mut self.rng, n - 1)
            .cloned()
            .collect();
        let pos = self.rng.random_range(0..=recipients.len());
        recipients.insert(pos, self.pools[p].addr.clone());
        let weights: Vec<u64> = (0..n).map(|_| self.rng.random_range(1..=100)).collect();
        let wsum: u64 = weights.iter().sum();
        let mut outputs: Vec<(String, u64)> = recipients
            .iter()
            .zip(&weights)
            .map(|(a, w)| (a.clone(), (total as u128 * *w as u128 / wsum as u128) as u64))
            .collect();
        let paid: u64 = outputs.iter().map(|(_, v)| v).sum();
        outputs[pos].1 += total - paid;
        if n > 100 {
            for (i, (a, _)) in outputs.iter().enumerate() {
                if i != pos {
                    self.payout_recipients.insert(a.clone());
                }
            }
        }
        let mut plan = TxPlan::new(actor, "pool-payout", TxKind::Deshielded);
        plan.vpub_new = self.values.withdrawal_value(total + fee);
        plan.outputs = outputs;
        self.emit(plan);
    }

    fn member_action(&mut self) {
        if self.members.is_empty() {
            return;
        }
        let m = self.members[self.rng.random_range(0..self.members.len())];
        let addr = self.actors[m].addrs[0].clone();
        let fee = self.cfg.fee_zat;
        let bal = self.balance(&addr);
        let free = self.actors[m].free_shielded();
        match self.rng.random_range(0..10) {
            0..=2 if bal > ZEC / 10 => {
                let inputs = self.take_all(&addr);
                let mut plan = TxPlan::new(m, "member-deposit", TxKind::Shielded);
                plan.inputs = inputs;
                plan.vpub_old = self.values.deposit_value(bal - fee);
                self.emit(plan);
            }
            3..=7 if bal > ZEC / 10 => {
                let to = self.actors[m].sell_to.clone().expect("members sell somewhere");
                let inputs = self.take_all(&addr);
                let mut plan = TxPlan::new(m, "member-sell", TxKind::Transparent);
                plan.inputs = inputs;
                plan.outputs = vec![(to, bal - fee)];
                self.emit(plan);
            }
            8 if free > ZEC / 10 + MARGIN + fee => {
                let w = self.rng.random_range(ZEC / 20..=free - MARGIN - fee);
                self.withdraw_to(m, "member-withdrawal", w, addr);
            }
            _ => {}
        }
    }

    /// Deshielded payment of about `value` from `actor`'s shielded funds to
    /// `to`.
    fn withdraw_to(&mut self, actor: usize, behavior: &'static str, value: u64, to: String) {
        let fee = self.cfg.fee_zat;
        let mut plan = TxPlan::new(actor, behavior, TxKind::Deshielded);
        plan.vpub_new = self.values.withdrawal_value(value + fee);
        plan.outputs = vec![(to, value)];
        self.emit(plan);
    }

    fn solo_action(&mut self) {
        if self.solos.is_empty() {
            return;
        }
        let s = self.solos[self.rng.random_range(0..self.solos.len())];
        let addr = self.actors[s].addrs[0].clone();
        let fee = self.cfg.fee_zat;
        let coins = self.utxos.get(&addr).map_or(0, |q| q.len());
        if coins >= self.cfg.solo_deposit_every {
            let bal = self.balance(&addr);
            let inputs = self.take_all(&addr);
            let mut plan = TxPlan::new(s, "solo-deposit", TxKind::Shielded);
            plan.inputs = inputs;
            plan.vpub_old = self.values.deposit_value(bal - fee);
            self.emit(plan);
            return;
        }
        let free = self.actors[s].free_shielded();
        if free > 2 * ZEC && self.rng.random_range(0..4) == 0 {
            let w = self.rng.random_range(ZEC..=free - MARGIN - fee);
            self.withdraw_to(s, "solo-withdrawal", w, addr);
        }
    }

    fn whale_action(&mut self) {
        let Some(w) = self.whale else { return };
        let addr = self.actors[w].addrs[0].clone();
        let bal = self.balance(&addr);
        if self.whale_hoard < self.cfg.spike_threshold_zat + 10 * ZEC || self.actors[w].locked > 0 {
            return;
        }
        self.whale_hoard = 0;
        let inputs = self.take_all(&addr);
        let mut plan = TxPlan::new(w, "whale-deposit", TxKind::Shielded);
        plan.inputs = inputs;
        plan.vpub_old = self.values.deposit_value(bal - self.cfg.fee_zat);
        self.emit(plan);
        self.actors[w].locked = self.actors[w].shielded;
        let at = self.height + self.rng.random_range(50..200);
        self.schedule(at, Event::WhaleWithdraw);
    }

    fn whale_withdraw(&mut self) {
        let w = self.whale.expect("scheduled by the whale");
        self.actors[w].locked = 0;
        let addr = self.actors[w].addrs[0].clone();
        let value = self.actors[w].shielded - MARGIN - self.cfg.fee_zat;
        self.withdraw_to(w, "whale-withdrawal", value, addr);
    }

    fn sweep(&mut self, e: usize) {
        let ex = &self.exchanges[e];
        let (actor, hot) = (ex.actor, ex.hot.clone());
        let funded: Vec<String> = ex
            .deposit_addrs
            .iter()
            .filter(|a| self.utxos.get(*a).is_some_and(|q| !q.is_empty()))
            .cloned()
            .collect();
        if funded.is_empty() {
            return;
        }
        let mut inputs = self.take_value(&hot, 1);
        for a in &funded {
            inputs.extend(self.take_all(a));
        }
        let sum: u64 = inputs.iter().map(|(_, u)| u.value).sum();
        if sum <= self.cfg.fee_zat {
            for (a, u) in inputs {
                self.utxos.entry(a).or_default().push_front(u);
            }
            return;
        }
        let mut plan = TxPlan::new(actor, "exchange-sweep", TxKind::Transparent);
        plan.inputs = inputs;
        plan.outputs = vec![(hot, sum - self.cfg.fee_zat)];
        self.emit(plan);
    }

    /// Exchange `e` pays exactly `value` to `to` if its hot wallet holds
    /// `value + fee` above `reserve`.
    fn exchange_pay(&mut self, e: usize, to: &str, value: u64, reserve: u64) -> Option<String> {
        let ex = &self.exchanges[e];
        let (actor, hot) = (ex.actor, ex.hot.clone());
        let fee = self.cfg.fee_zat;
        if self.balance(&hot) < reserve + value + fee {
            return None;
        }
        let inputs = self.take_value(&hot, value + fee);
        let sum: u64 = inputs.iter().map(|(_, u)| u.value).sum();
        let mut plan = TxPlan::new(actor, "exchange-payment", TxKind::Transparent);
        plan.inputs = inputs;
        plan.outputs = vec![(to.to_string(), value)];
        if sum > value + fee {
            plan.outputs.push((hot, sum - value - fee));
        }
        Some(self.emit(plan))
    }

    fn richest_exchange(&self) -> Option<usize> {
        (0..self.exchanges.len()).max_by_key(|e| (self.balance(&self.exchanges[*e].hot), usize::MAX - e))
    }

    fn user_address(&mut self, u: usize, fresh: bool) -> String {
        if fresh && self.actors[u].addrs.len() < 4 {
            self.new_address(u, "t1")
        } else {
            let n = self.actors[u].addrs.len();
            self.actors[u].addrs[self.rng.random_range(0..n)].clone()
        }
    }

    /// Takes coins from the user's addresses, richest first, until `target`.
    fn take_user(&mut self, u: usize, target: u64) -> Vec<(String, Utxo)> {
        let mut addrs = self.actors[u].addrs.clone();
        addrs.sort_by_key(|a| std::cmp::Reverse(self.balance(a)));
        let mut out = Vec::new();
        let mut sum = 0;
        for a in addrs {
            if sum >= target {
                break;
            }
            let part = self.take_value(&a, target - sum);
            sum += part.iter().map(|(_, u)| u.value).sum::<u64>();
            out.extend(part);
        }
        out
    }

    fn user_action(&mut self) {
        if self.users.is_empty() {
            return;
        }
        let u = self.users[self.rng.random_range(0..self.users.len())];
        let fee = self.cfg.fee_zat;
        let bal = self.actor_balance(u);
        let free = self.actors[u].free_shielded();
        let roll = self.rng.random_range(0..100);
        match roll {
            0..=29 => {
                let e = self.rng.random_range(0..self.exchanges.len());
                let to = { let fresh = self.rng.random_bool(0.3); self.user_address(u, fresh) };
                let v = self.rng.random_range(ZEC / 10..=5 * ZEC);
                self.exchange_pay(e, &to, v, EXCHANGE_RESERVE);
            }
            30..=44 if bal > ZEC / 10 => {
                let other = self.users[self.rng.random_range(0..self.users.len())];
                if other == u {
                    return;
                }
                let v = self.rng.random_range(ZEC / 100..=bal - fee);
                let inputs = self.take_user(u, v + fee);
                let sum: u64 = inputs.iter().map(|(_, x)| x.value).sum();
                let to = self.user_address(other, false);
                let mut plan = TxPlan::new(u, "user-transfer", TxKind::Transparent);
                plan.inputs = inputs;
                plan.outputs = vec![(to, v)];
                if sum > v + fee {
                    let change = { let fresh = self.rng.random_bool(0.5); self.user_address(u, fresh) };
                    plan.outputs.push((change, sum - v - fee));
                }
                self.emit(plan);
            }
            45..=64 if bal > ZEC / 10 => {
                let v = self.rng.random_range(ZEC / 20..=bal - fee);
                let inputs = self.take_user(u, v + fee);
                let sum: u64 = inputs.iter().map(|(_, x)| x.value).sum();
                let change = sum - v - fee;
                if change > 0 && self.rng.random_bool(0.5) {
                    let to = { let fresh = self.rng.random_bool(0.5); self.user_address(u, fresh) };
                    let mut plan = TxPlan::new(u, "user-deposit-with-change", TxKind::Mixed);
                    plan.inputs = inputs;
                    plan.outputs = vec![(to, change)];
                    plan.vpub_old = self.values.deposit_value(v);
                    self.emit(plan);
                } else {
                    let mut plan = TxPlan::new(u, "user-deposit", TxKind::Shielded);
                    plan.inputs = inputs;
                    plan.vpub_old = self.values.deposit_value(sum - fee);
                    self.emit(plan);
                }
            }
            65..=69 if bal > ZEC / 10 => {
                let Some(svc) = self.service_addr.clone() else { return };
                let inputs = self.take_user(u, bal);
                let sum: u64 = inputs.iter().map(|(_, x)| x.value).sum();
                let mut plan = TxPlan::new(u, "wallet-service-deposit", TxKind::Mixed);
                plan.inputs = inputs;
                plan.outputs = vec![(svc, SERVICE_FEE)];
                plan.vpub_old = self.values.deposit_value(sum - SERVICE_FEE - fee);
                self.emit(plan);
            }
            70..=84 if free > ZEC / 10 + MARGIN + fee => {
                let v = self.rng.random_range(ZEC / 20..=free - MARGIN - fee);
                let to = { let fresh = self.rng.random_bool(0.5); self.user_address(u, fresh) };
                self.withdraw_to(u, "user-withdrawal", v, to);
            }
            85..=87 if free > ZEC / 10 + MARGIN + fee && bal > ZEC / 100 => {
                let w = self.rng.random_range(ZEC / 20..=free - MARGIN - fee);
                let w = self.values.withdrawal_value(w);
                let addr = self.actors[u].addrs[0].clone();
                let inputs = if self.balance(&addr) > fee {
                    self.take_value(&addr, 1)
                } else {
                    self.take_user(u, 1)
                };
                let sum: u64 = inputs.iter().map(|(_, x)| x.value).sum();
                if sum + w <= fee {
                    for (a, x) in inputs {
                        self.utxos.entry(a).or_default().push_front(x);
                    }
                    return;
                }
                let to = self.user_address(u, false);
                let mut plan = TxPlan::new(u, "user-mixed-withdrawal", TxKind::Mixed);
                plan.inputs = inputs;
                plan.vpub_new = w;
                plan.outputs = vec![(to, sum + w - fee)];
                self.emit(plan);
            }
            88..=94 if self.actors[u].shielded > 0 => {
                let n = if self.rng.random_range(0..100) < 93 { 1 } else { 2 };
                let mut plan = TxPlan::new(u, "private-transfer", TxKind::Private);
                plan.private_js = n;
                self.emit(plan);
            }
            _ => {}
        }
    }

    fn plant_round_trip(&mut self) {
        let u = self.users[self.rng.random_range(0..self.users.len())];
        let fee = self.cfg.fee_zat;
        let bal = self.actor_balance(u);
        if bal < ZEC / 5 {
            return;
        }
        let hi = (bal - fee).min(50 * ZEC);
        let v = loop {
            let v = self.rng.random_range(ZEC / 10..=hi);
            if v % 10 != 0 && self.values.is_fresh(v) {
                break v;
            }
        };
        let inputs = self.take_user(u, v + fee);
        let sum: u64 = inputs.iter().map(|(_, x)| x.value).sum();
        let change = sum - v - fee;
        let mut plan = if change > 0 {
            let to = self.user_address(u, false);
            let mut s = TxPlan::new(u, "round-trip-deposit", TxKind::Mixed);
            s.outputs = vec![(to, change)];
            s
        } else {
            TxPlan::new(u, "round-trip-deposit", TxKind::Shielded)
        };
        plan.inputs = inputs;
        plan.vpub_old = v;
        let txid = self.emit(plan);
        self.values.reserved.insert(v);
        self.actors[u].locked += v;
        self.pending_trips.insert(v, (txid, self.height));
        let gap = self.rng.random_range(1..=self.cfg.round_trip_max_gap);
        self.schedule(self.height + gap, Event::RoundTripWithdraw { actor: u, value: v });
    }

    fn round_trip_withdraw(&mut self, u: usize, v: u64) {
        let (dep_txid, dep_h) = self.pending_trips.remove(&v).expect("planted");
        self.actors[u].locked -= v;
        self.values.reserved.remove(&v);
        let to = { let fresh = self.rng.random_bool(0.5); self.user_address(u, fresh) };
        let mut plan = TxPlan::new(u, "round-trip-withdrawal", TxKind::Deshielded);
        plan.vpub_new = v;
        plan.outputs = vec![(to, v - self.cfg.fee_zat)];
        let txid = self.emit(plan);
        self.round_trips.push(RoundTripTruth {
            value_zat: v,
            deposit_txid: dep_txid,
            deposit_height: dep_h,
            withdrawal_txid: txid,
            withdrawal_height: self.height,
            gap: self.height - dep_h,
        });
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::FounderRedeposit { addr } => self.founder_redeposit(&addr),
            Event::PoolPayout(p) => self.pool_payout(p),
            Event::RoundTripWithdraw { actor, value } => self.round_trip_withdraw(actor, value),
            Event::WhaleWithdraw => self.whale_withdraw(),
            Event::Tsb { plan, step } => self.tsb_step(plan, step),
            Event::H3Decoy { actor, step } => self.h3_decoy_step(actor, step),
        }
    }

    fn retry_tsb(&mut self, plan: usize, step: u8) {
        if self.height < self.plans[plan].deadline {
            self.schedule(self.height + 1, Event::Tsb { plan, step });
        }
    }

    fn tsb_deposit(&mut self, actor: usize, addr: &str, value: u64, coins: Vec<(String, Utxo)>) -> String {
        let sum: u64 = coins.iter().map(|(_, u)| u.value).sum();
        let mut plan = TxPlan::new(actor, "price-deposit", TxKind::Shielded);
        plan.inputs = coins;
        plan.vpub_old = self.values.deposit_value(value.min(sum - self.cfg.fee_zat));
        let _ = addr;
        self.emit(plan)
    }

    /// Funds and deposits for one scheduled buyer or decoy purchase.
    fn tsb_step(&mut self, plan: usize, step: u8) {
        let fee = self.cfg.fee_zat;
        let (actor, price, decoy) = {
            let p = &self.plans[plan];
            (p.actor, p.price, p.decoy)
        };
        let addr = self.actors[actor].addrs[0].clone();
        let next = |g: &mut Gen, s: u8| {
            let at = g.height + g.rng.random_range(1..=2);
            g.schedule(at, Event::Tsb { plan, step: s });
        };
        match (decoy, step) {
            (None, 0) | (Some(DecoyPattern::OutOfTolerance), 0) => {
                let amount = match decoy {
                    None => price,
                    _ => out_of_tolerance_amount(&self.cfg.tsb_prices_zec, price / ZEC).expect("validated") * ZEC,
                };
                let Some(e) = self.richest_exchange() else { return };
                match self.exchange_pay(e, &addr, amount + fee, 0) {
                    Some(_) => next(self, 1),
                    None => self.retry_tsb(plan, 0),
                }
            }
            (None, 1) | (Some(DecoyPattern::OutOfTolerance), 1) => {
                let bal = self.balance(&addr);
                let coins = self.take_all(&addr);
                let txid = self.tsb_deposit(actor, &addr, bal - fee, coins);
                let p = &mut self.plans[plan];
                p.txids.push(txid);
                p.done = true;
            }
            (Some(DecoyPattern::OverDeposit), 0) => {
                let extra = extra_for_over_deposit(&self.cfg.tsb_prices_zec, price / ZEC).unwrap_or(37) * ZEC;
                let Some(e) = self.richest_exchange() else { return };
                match self.exchange_pay(e, &addr, price + extra + 2 * fee, 0) {
                    Some(_) => next(self, 1),
                    None => self.retry_tsb(plan, 0),
                }
            }
            (Some(DecoyPattern::OverDeposit), 1) => {
                let coins = self.take_all(&addr);
                let sum: u64 = coins.iter().map(|(_, u)| u.value).sum();
                let mut tx = TxPlan::new(actor, "price-deposit", TxKind::Mixed);
                tx.inputs = coins;
                tx.vpub_old = self.values.deposit_value(price);
                tx.outputs = vec![(addr.clone(), sum - price - fee)];
                let txid = self.emit(tx);
                self.plans[plan].txids.push(txid);
                next(self, 2);
            }
            (Some(DecoyPattern::OverDeposit), 2) => {
                let bal = self.balance(&addr);
                let coins = self.take_all(&addr);
                let txid = self.tsb_deposit(actor, &addr, bal - fee, coins);
                let p = &mut self.plans[plan];
                p.txids.push(txid);
                p.done = true;
            }
            (Some(DecoyPattern::PriorReceipt), 0) => {
                // A side address shields some funds which then come back out
                // to the address that later pays the price.
                if self.actors[actor].addrs.len() < 2 {
                    self.new_address(actor, "t1");
                }
                let side = self.actors[actor].addrs[1].clone();
                let Some(e) = self.richest_exchange() else { return };
                match self.exchange_pay(e, &side, DECOY_SIDE_ZEC * ZEC + fee, 0) {
                    Some(_) => next(self, 1),
                    None => self.retry_tsb(plan, 0),
                }
            }
            (Some(DecoyPattern::PriorReceipt), 1) => {
                let side = self.actors[actor].addrs[1].clone();
                let bal = self.balance(&side);
                let coins = self.take_all(&side);
                let mut plan = TxPlan::new(actor, "decoy-side-deposit", TxKind::Shielded);
                plan.inputs = coins;
                plan.vpub_old = self.values.deposit_value(bal - fee);
                self.emit(plan);
                next(self, 2);
            }
            (Some(DecoyPattern::PriorReceipt), 2) => {
                let v = self.actors[actor].free_shielded() - MARGIN - fee;
                self.withdraw_to(actor, "decoy-receipt", v, addr);
                next(self, 3);
            }
            (Some(DecoyPattern::PriorReceipt), 3) => {
                let Some(e) = self.richest_exchange() else { return };
                match self.exchange_pay(e, &addr, price + fee, 0) {
                    Some(_) => next(self, 4),
                    None => self.retry_tsb(plan, 3),
                }
            }
            (Some(DecoyPattern::PriorReceipt), 4) => {
                let coins: Vec<(String, Utxo)> = {
                    let q = self.utxos.get_mut(&addr).expect("funded");
                    let pos = q.iter().position(|u| u.value == price + fee).expect("price coin");
                    let u = q.remove(pos).expect("present");
                    vec![(addr.clone(), u)]
                };
                let txid = self.tsb_deposit(actor, &addr, price, coins);
                let p = &mut self.plans[plan];
                p.txids.push(txid);
                p.done = true;
            }
            _ => unreachable!("unknown purchase step"),
        }
    }

    fn h3_decoy_step(&mut self, actor: usize, step: u8) {
        let fee = self.cfg.fee_zat;
        let wq = self.cfg.founder_withdrawal_zat;
        let addr = self.actors[actor].addrs[0].clone();
        match step {
            0 => {
                let Some(e) = self.richest_exchange() else { return };
                let need = wq + MARGIN + 2 * fee;
                if self.exchange_pay(e, &addr, need, 0).is_some() {
                    self.schedule(self.height + 1, Event::H3Decoy { actor, step: 1 });
                } else if self.height + 1 < self.cfg.blocks {
                    self.schedule(self.height + 1, Event::H3Decoy { actor, step: 0 });
                }
            }
            1 => {
                let bal = self.balance(&addr);
                let coins = self.take_all(&addr);
                let mut plan = TxPlan::new(actor, "user-deposit", TxKind::Shielded);
                plan.inputs = coins;
                plan.vpub_old = self.values.deposit_value(bal - fee);
                self.emit(plan);
                let at = self.height + self.rng.random_range(2..10);
                self.schedule(at, Event::H3Decoy { actor, step: 2 });
            }
            _ => {
                let to = self.new_address(actor, "t1");
                let mut plan = TxPlan::new(actor, "decoy-founder-value", TxKind::Deshielded);
                plan.vpub_new = wq;
                plan.outputs = vec![(to, wq - fee)];
                let txid = self.emit(plan);
                self.h3_decoys.push(txid);
            }
        }
    }

    fn finish(self) -> Synthetic {
        let digest = chain_digest(&self.blocks);
        let months = self.months();
        let mut buyers = Vec::new();
        let mut decoys = Vec::new();
        for p in &self.plans {
            if !p.done {
                continue;
            }
            let addr = self.actors[p.actor].addrs[0].clone();
            match p.decoy {
                None => buyers.push(TsbBuyerTruth {
                    address: addr,
                    month: month_label(p.month),
                    amount_zat: p.price,
                    deposit_txids: p.txids.clone(),
                }),
                Some(d) => decoys.push(TsbDecoyTruth {
                    address: addr,
                    month: month_label(p.month),
                    pattern: d.as_str().to_string(),
                    deposit_txids: p.txids.clone(),
                }),
            }
        }
        let spikes = self
            .spike_heights
            .iter()
            .flat_map(|h| {
                let l = &self.ledger[*h as usize];
                let mut v = Vec::new();
                if l.deposited_zat > self.cfg.spike_threshold_zat {
                    v.push(SpikeTruth {
                        height: *h,
                        direction: "deposit".into(),
                        amount_zat: l.deposited_zat,
                    });
                }
                if l.withdrawn_zat > self.cfg.spike_threshold_zat {
                    v.push(SpikeTruth {
                        height: *h,
                        direction: "withdrawal".into(),
                        amount_zat: l.withdrawn_zat,
                    });
                }
                v
            })
            .collect();
        let address_stats = AddressTruth {
            distinct_t: self.used.len() as u64,
            ever_shielding_inputs: self.shielding_inputs.len() as u64,
            ever_deshielding_outputs: self.deshielding_outputs.len() as u64,
        };
        let owners = self
            .owners
            .iter()
            .filter(|(a, _)| self.used.contains(*a))
            .map(|(a, o)| (a.clone(), o.clone()))
            .collect();

        let mut founder_report: Vec<FounderTruth> = self.founder_stats.into_values().collect();
        founder_report.sort_by(|a, b| a.address.cmp(&b.address));
        let mut tags_csv = String::from("address,category,name,source\n");
        for p in &self.pools {
            tags_csv.push_str(&format!("{},pool,{},generator\n", p.addr, p.name));
        }
        for (i, e) in self.exchanges.iter().enumerate() {
            tags_csv.push_str(&format!("{},exchange,Exchange{i},generator\n", e.hot));
        }
        if let Some(s) = &self.service_addr {
            tags_csv.push_str(&format!("{s},service,zcash4win,generator\n"));
        }
        let mut schedule = PriceSchedule::default();
        for (i, (m, _, _)) in months.iter().enumerate() {
            if self.cfg.tsb_prices_zec.is_empty() {
                break;
            }
            let price = self.cfg.tsb_prices_zec[i % self.cfg.tsb_prices_zec.len()];
            schedule
                .entries
                .entry(month_label(*m))
                .or_default()
                .insert(Amount::from_zec(price));
        }
        let truth = GroundTruth {
            schema: 1,
            digest,
            seed: self.cfg.seed,
            blocks: self.cfg.blocks,
            kind_counts: self.kind_counts,
            pool_ledger: self.ledger,
            address_stats,
            zz: self.zz,
            owners,
            founder_params: self.founder_params,
            founder_report,
            miner_roster: self.miner_roster.into_iter().collect(),
            payout_recipients: self.payout_recipients.into_iter().collect(),
            round_trips: self.round_trips,
            tsb_buyers: buyers,
            tsb_decoys: decoys,
            h3_decoys: self.h3_decoys,
            spike_threshold_zat: self.cfg.spike_threshold_zat,
            spikes,
            txs: self.txs,
        };
        Synthetic {
            exclusions: self.service_addr.into_iter().collect(),
            config: self.cfg,
            blocks: self.blocks,
            truth,
            tags_csv,
            schedule,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    fn from_sets<T: Ord>(predicted: &BTreeSet<T>, truth: &BTreeSet<T>) -> Confusion {
        let tp = predicted.intersection(truth).count() as u64;
        Confusion {
            tp,
            fp: predicted.len() as u64 - tp,
            fn_: truth.len() as u64 - tp,
        }
    }

    /// `None` when nothing was predicted.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there was nothing to find.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn precision_pct(&self) -> String {
        pct_or_na(self.tp, self.tp + self.fp)
    }

    pub fn recall_pct(&self) -> String {
        pct_or_na(self.tp, self.tp + self.fn_)
    }
}

fn pct_or_na(num: u64, den: u64) -> String {
    if den == 0 {
        "n/a".into()
    } else {
        percent_1dp(num as u128, den as u128)
    }
}

/// Scores an analysis run against the generator's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub multi_address_clusters: u64,
    /// Multi-address clusters whose members all share one owner.
    pub pure_clusters: u64,
    pub h3: Confusion,
    pub h4: Confusion,
    pub h5: Confusion,
    /// `matrix[truth][predicted]` in [`Attribution::ALL`] order.
    pub attribution: [[u64; 3]; 3],
    pub tsb: Confusion,
}

impl Evaluation {
    pub fn h1_purity_pct(&self) -> String {
        pct_or_na(self.pure_clusters, self.multi_address_clusters)
    }

    pub fn attribution_accuracy_pct(&self) -> String {
        let total: u64 = self.attribution.iter().flatten().sum();
        let diag: u64 = (0..3).map(|i| self.attribution[i][i]).sum();
        pct_or_na(diag, total)
    }
}

pub fn evaluate(
    snap: &Snapshot,
    clusters: &ClusterSet,
    attribution: &AttributionResult,
    trips: &[RoundTrip],
    max_gap: u32,
    tsb: Option<&TsbScan>,
    truth: &GroundTruth,
) -> Result<Evaluation, SynthError> {
    if snap.digest() != truth.digest {
        return Err(SynthError::DigestMismatch {
            manifest: truth.digest.clone(),
            chain: snap.digest().to_string(),
        });
    }
    let index = |txid: &str| {
        snap.tx_index(&TxId::from(txid))
            .ok_or_else(|| SynthError::Manifest(format!("transaction {txid} not in chain")))
    };

    let mut multi = 0;
    let mut pure = 0;
    for id in 0..clusters.len() as u32 {
        if clusters.size(id) < 2 {
            continue;
        }
        multi += 1;
        let owners: BTreeSet<Option<&String>> = clusters
            .members(id)
            .map(|a| truth.owners.get(a.as_str()))
            .collect();
        if owners.len() == 1 && !owners.contains(&None) {
            pure += 1;
        }
    }

    let rule_set = |rule: Rule| -> BTreeSet<usize> {
        attribution
            .txs
            .values()
            .filter(|t| t.rule == rule)
            .map(|t| t.tx_index)
            .collect()
    };
    let mut h3_truth = BTreeSet::new();
    let mut h4_truth = BTreeSet::new();
    let mut matrix = [[0u64; 3]; 3];
    for t in &truth.txs {
        match t.behavior.as_str() {
            "founder-withdrawal" => {
                h3_truth.insert(index(&t.txid)?);
            }
            "pool-payout" => {
                h4_truth.insert(index(&t.txid)?);
            }
            _ => {}
        }
        if let Some(cat) = &t.category {
            let truth_cat = Attribution::ALL
                .iter()
                .position(|a| a.as_str() == cat)
                .ok_or_else(|| SynthError::Manifest(format!("unknown category {cat}")))?;
            let idx = index(&t.txid)?;
            let predicted = attribution.category(idx).unwrap_or(Attribution::Other);
            matrix[truth_cat][predicted.index()] += 1;
        }
    }
    let h3 = Confusion::from_sets(&rule_set(Rule::FounderValue), &h3_truth);
    let h4 = Confusion::from_sets(&rule_set(Rule::PoolPayout), &h4_truth);

    let predicted_trips: BTreeSet<(String, String)> = trips
        .iter()
        .map(|t| (t.deposit_txid.to_string(), t.withdrawal_txid.to_string()))
        .collect();
    let truth_trips: BTreeSet<(String, String)> = truth
        .round_trips
        .iter()
        .filter(|t| t.gap <= max_gap)
        .map(|t| (t.deposit_txid.clone(), t.withdrawal_txid.clone()))
        .collect();
    let h5 = Confusion::from_sets(&predicted_trips, &truth_trips);

    let tsb = match tsb {
        None => Confusion::default(),
        Some(scan) => {
            let predicted: BTreeSet<(u32, String)> = scan
                .candidates
                .iter()
                .map(|c| (c.cluster_id, month_label(c.period.month)))
                .collect();
            let mut expected = BTreeSet::new();
            for b in &truth.tsb_buyers {
                let addr = Address::from(b.address.as_str());
                let id = clusters
                    .cluster_of(&addr)
                    .map_err(|e| SynthError::Manifest(e.to_string()))?;
                expected.insert((id, b.month.clone()));
            }
            Confusion::from_sets(&predicted, &expected)
        }
    };

    Ok(Evaluation {
        multi_address_clusters: multi,
        pure_clusters: pure,
        h3,
        h4,
        h5,
        attribution: matrix,
        tsb,
    })
}
