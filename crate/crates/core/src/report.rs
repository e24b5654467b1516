//! The full CSV report bundle. Every file has a header row and a fixed
//! column order; amounts are written both as integer zat and as fixed
//! 8-decimal ZEC strings, percentages with one decimal place. No floats are
//! ever formatted, so identical inputs give byte-identical bundles.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::amount::{percent_1dp, Amount};
use crate::attribute::{
    founder_report, interval_stats, run_pipeline, AttributeError, Attribution, AttributionResult, Coverage,
    FounderReport, PipelineConfig, Side, FOUNDER_DEPOSIT, FOUNDER_WITHDRAWAL,
};
use crate::cluster::{build_clusters, ClusterError, ClusterSet};
use crate::link::{
    anonymity_reduction, find_round_trips, linked_value_curve, value_uniqueness_stats, AnonymityReduction, CurvePoint,
    RoundTrip, ValueUniqueness,
};
use crate::model::{Address, TxKind};
use crate::stats::{
    address_stats, daily_series, kind_breakdown, pool_series, spike_report, wealth_distribution, zz_joinsplit_stats,
    AddressStats, DailyRow, KindBreakdown, PoolSeries, Spike, StatsError, Wealth, ZzStats,
};
use crate::store::Snapshot;
use crate::tags::{cluster_tags, CategoryKind, TagRegistry};
use crate::tsb::{candidate_detail, scan, PriceSchedule, TsbConfig, TsbError, TsbScan};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("empty store")]
    EmptyStore,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Tsb(#[from] TsbError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone)]
pub struct ReportConfig {
    /// Change linking for the cluster statistics. The price scan always
    /// clusters with change linking.
    pub use_change: bool,
    pub max_gap: u32,
    pub curve_gaps: Vec<u32>,
    pub spike_threshold: Amount,
    pub pipeline: PipelineConfig,
    pub interval_lo: u32,
    pub interval_hi: u32,
    pub wealth_top_percents: Vec<u32>,
    pub tsb: TsbConfig,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            use_change: false,
            max_gap: 100,
            curve_gaps: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            spike_threshold: Amount::from_zec(5_000),
            pipeline: PipelineConfig::default(),
            interval_lo: 6,
            interval_hi: 10,
            wealth_top_percents: vec![1, 10],
            tsb: TsbConfig::default(),
        }
    }
}

/// Named CSV files in a fixed order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportBundle {
    pub files: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }

    /// sha256 over every file name and body, in bundle order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, body) in &self.files {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(body.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        let io = |p: &Path, e: std::io::Error| ReportError::Io {
            path: p.display().to_string(),
            msg: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, body) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }

    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }
}

/// Everything the bundle is computed from, kept for callers that want the
/// structured results as well.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub clusters: ClusterSet,
    pub attribution: AttributionResult,
    pub round_trips: Vec<RoundTrip>,
    pub tsb: Option<TsbScan>,
    /// Clusters with change linking, used by the price scan.
    pub tsb_clusters: Option<ClusterSet>,
}

fn zat_zec(a: Amount) -> String {
    format!("{},{}", a.zat(), a.to_zec_string())
}

fn pct(num: u64, den: u64) -> String {
    if den == 0 {
        "n/a".into()
    } else {
        percent_1dp(num as u128, den as u128)
    }
}

pub fn render_kinds(kinds: &KindBreakdown) -> String {
    let mut s = String::from("kind,count,percent\n");
    for k in TxKind::ALL {
        let _ = writeln!(s, "{},{},{}", k.as_str(), kinds.count(k), kinds.percent(k));
    }
    let _ = writeln!(s, "total,{},{}", kinds.total(), pct(kinds.total(), kinds.total()));
    s
}

pub fn render_pool_series(series: &PoolSeries) -> String {
    let mut s = String::from(
        "height,deposited_zat,deposited_zec,withdrawn_zat,withdrawn_zec,balance_zat,balance_zec\n",
    );
    for p in &series.points {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            p.height,
            zat_zec(p.deposited),
            zat_zec(p.withdrawn),
            zat_zec(p.balance)
        );
    }
    s
}

pub fn render_pool_totals(series: &PoolSeries) -> String {
    let mut s = String::from("metric,zat,zec\n");
    let _ = writeln!(s, "total_deposited,{}", zat_zec(series.total_deposited));
    let _ = writeln!(s, "total_withdrawn,{}", zat_zec(series.total_withdrawn));
    let _ = writeln!(s, "final_balance,{}", zat_zec(series.final_balance()));
    s
}

pub fn render_daily(rows: &[DailyRow]) -> String {
    let mut s = String::from("day");
    for k in TxKind::ALL {
        let _ = write!(s, ",{}_count", k.as_str());
    }
    s.push_str(",coingen_zat,coingen_zec,public_zat,public_zec,deposited_zat,deposited_zec,withdrawn_zat,withdrawn_zec\n");
    for row in rows {
        s.push_str(&row.day);
        for c in row.counts {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            zat_zec(row.coingen),
            zat_zec(row.public),
            zat_zec(row.deposited),
            zat_zec(row.withdrawn)
        );
    }
    s
}

pub fn render_address_stats(a: &AddressStats) -> String {
    format!(
        "metric,count\ndistinct_t,{}\never_shielding_inputs,{}\never_deshielding_outputs,{}\n",
        a.distinct_t, a.ever_shielding_inputs, a.ever_deshielding_outputs
    )
}

pub fn render_wealth(w: &Wealth, height: u32, top_percents: &[u32]) -> String {
    let mut s = String::from("metric,value,zat,zec\n");
    let _ = writeln!(s, "height,{height},,");
    let _ = writeln!(s, "addresses_seen,{},,", w.addresses_seen);
    let _ = writeln!(s, "nonzero_addresses,{},,", w.nonzero_count());
    let _ = writeln!(s, "nonzero_percent,{},,", pct(w.nonzero_count(), w.addresses_seen));
    let _ = writeln!(s, "total_balance,,{}", zat_zec(w.total));
    let _ = writeln!(s, "max_balance,,{}", zat_zec(w.max_balance()));
    for &p in top_percents {
        let v = w.top_value(p);
        let _ = writeln!(s, "top_{p}pct_addresses,{},,", w.top_count(p));
        let _ = writeln!(s, "top_{p}pct_share,{},{}", pct(v.zat(), w.total.zat()), zat_zec(v));
    }
    s
}

pub fn render_zz(zz: &ZzStats) -> String {
    format!(
        "metric,value\nprivate_txs,{}\njoinsplits,{}\nsingle_joinsplit_txs,{}\nsingle_joinsplit_percent,{}\n",
        zz.private_tx_count,
        zz.joinsplit_count,
        zz.single_js_count,
        pct(zz.single_js_count, zz.private_tx_count)
    )
}

pub fn render_zz_daily(zz: &ZzStats) -> String {
    let mut s = String::from("day,private_txs,joinsplits,cumulative_joinsplits\n");
    for d in &zz.per_day {
        let _ = writeln!(s, "{},{},{},{}", d.day, d.private_txs, d.joinsplits, d.cumulative_joinsplits);
    }
    s
}

pub fn render_spikes(spikes: &[Spike]) -> String {
    let mut s = String::from("height,direction,amount_zat,amount_zec\n");
    for sp in spikes {
        let _ = writeln!(s, "{},{},{}", sp.height, sp.direction.as_str(), zat_zec(sp.amount));
    }
    s
}

pub fn render_clusters(clusters: &ClusterSet, use_change: bool) -> String {
    let largest = (0..clusters.len() as u32).map(|c| clusters.size(c)).max().unwrap_or(0);
    format!(
        "metric,value\nuse_change,{}\nclusters,{}\nmulti_address_clusters,{}\nlargest_cluster,{}\n",
        use_change,
        clusters.len(),
        clusters.multi_address_count(),
        largest
    )
}

/// One `address,cluster_id` row per observed address.
pub fn render_cluster_assignments(snap: &Snapshot, clusters: &ClusterSet) -> String {
    let mut s = String::from("address,cluster_id\n");
    for id in 0..snap.address_count() as u32 {
        let _ = writeln!(s, "{},{}", snap.address(id), clusters.cluster_of_id(id));
    }
    s
}

const TAG_KINDS: [CategoryKind; 6] = [
    CategoryKind::Founder,
    CategoryKind::Miner,
    CategoryKind::Pool,
    CategoryKind::Exchange,
    CategoryKind::Service,
    CategoryKind::User,
];

pub fn render_cluster_tags(registry: &TagRegistry, clusters: &ClusterSet) -> String {
    let mut s = String::from("cluster_id,size");
    for k in TAG_KINDS {
        let _ = write!(s, ",{}", k.as_str());
    }
    s.push('\n');
    for (cid, counts) in cluster_tags(registry, clusters) {
        let _ = write!(s, "{cid},{}", clusters.size(cid));
        for k in TAG_KINDS {
            let _ = write!(s, ",{}", counts.get(&k).copied().unwrap_or(0));
        }
        s.push('\n');
    }
    s
}

pub fn render_tags(registry: &TagRegistry) -> String {
    let mut s = String::from("address,category,name,source,round\n");
    for t in registry.all_tags() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            t.address,
            t.category.kind().as_str(),
            t.category.name().unwrap_or(""),
            t.source.as_str(),
            t.created_at
        );
    }
    s
}

pub fn render_attribution(snap: &Snapshot, attribution: &AttributionResult) -> String {
    let mut s = String::from(
        "txid,height,kind,category,rule,pool,deposit_zat,deposit_zec,withdrawal_zat,withdrawal_zec,round_discovered\n",
    );
    for (idx, t) in &attribution.txs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            snap.tx(*idx).txid,
            snap.height_of(*idx),
            snap.kind(*idx).as_str(),
            t.category.as_str(),
            t.rule.as_str(),
            t.pool.as_deref().unwrap_or(""),
            zat_zec(snap.deposit(*idx)),
            zat_zec(snap.withdrawal(*idx)),
            t.round_discovered
        );
    }
    s
}

pub fn render_coverage(coverage: &Coverage) -> String {
    let mut s = String::from("side,category,tx_count,count_percent,value_zat,value_zec,value_percent\n");
    let sides = [
        ("deposits", &coverage.deposits),
        ("withdrawals", &coverage.withdrawals),
        ("deshielded", &coverage.deshielded),
    ];
    for (name, side) in sides {
        let total = side.total();
        for cat in Attribution::ALL {
            let t = side.get(cat);
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{}",
                cat.as_str(),
                t.tx_count,
                pct(t.tx_count, total.tx_count),
                zat_zec(t.value),
                pct(t.value.zat(), total.value.zat())
            );
        }
        let _ = writeln!(
            s,
            "{name},total,{},{},{},{}",
            total.tx_count,
            pct(total.tx_count, total.tx_count),
            zat_zec(total.value),
            pct(total.value.zat(), total.value.zat())
        );
    }
    s
}

pub fn render_pipeline(attribution: &AttributionResult) -> String {
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "rounds,{}", attribution.rounds);
    let _ = writeln!(s, "converged,{}", attribution.converged);
    let _ = writeln!(s, "new_tags,{}", attribution.new_tags.len());
    let _ = writeln!(s, "conflicts,{}", attribution.conflicts.len());
    let _ = writeln!(s, "anomalies,{}", attribution.anomalies.len());
    s
}

pub fn render_founders(fr: &FounderReport) -> String {
    let mut s = String::from(
        "address,source,first_height,deposit_count,total_input_zat,total_input_zec,total_deposited_zat,total_deposited_zec,quantum_count\n",
    );
    for r in &fr.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.address,
            r.source.as_str(),
            r.first_height,
            r.deposit_count,
            zat_zec(r.total_input),
            zat_zec(r.total_deposited),
            r.quantum_count
        );
    }
    let _ = writeln!(
        s,
        "total,,,{},{},{},{}",
        fr.total_deposits,
        zat_zec(fr.total_input),
        zat_zec(fr.total_deposited),
        fr.total_quantum
    );
    s
}

pub fn render_intervals(snap: &Snapshot, lo: u32, hi: u32) -> Result<String, AttributeError> {
    let mut s = String::from("side,value_zat,value_zec,lo,hi,matches,gaps,within,percent\n");
    for (side, name, v) in [
        (Side::Deposit, "deposit", FOUNDER_DEPOSIT),
        (Side::Withdrawal, "withdrawal", FOUNDER_WITHDRAWAL),
    ] {
        match interval_stats(snap, side, v, lo, hi) {
            Ok(st) => {
                let _ = writeln!(
                    s,
                    "{name},{},{lo},{hi},{},{},{},{}",
                    zat_zec(v),
                    st.matches,
                    st.gaps,
                    st.within,
                    pct(st.within as u64, st.gaps as u64)
                );
            }
            Err(AttributeError::TooFewMatches { found }) => {
                let _ = writeln!(s, "{name},{},{lo},{hi},{found},0,0,n/a", zat_zec(v));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(s)
}

pub fn render_round_trips(trips: &[RoundTrip]) -> String {
    let mut s = String::from(
        "value_zat,value_zec,deposit_txid,deposit_height,withdrawal_txid,withdrawal_height,gap\n",
    );
    for t in trips {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            zat_zec(t.value),
            t.deposit_txid,
            t.deposit_height,
            t.withdrawal_txid,
            t.withdrawal_height,
            t.gap
        );
    }
    s
}

/// Single-row link summary for one maximum gap.
pub fn render_link_summary(max_gap: u32, trips: &[RoundTrip]) -> String {
    let value = Amount::from_zat(trips.iter().map(|t| t.value.zat()).sum());
    format!("max_gap,links,value_zat,value_zec\n{max_gap},{},{}\n", trips.len(), zat_zec(value))
}

pub fn render_curve(curve: &[CurvePoint]) -> String {
    let mut s = String::from("gap,links,value_zat,value_zec\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{}", p.gap, p.links, zat_zec(p.value));
    }
    s
}

pub fn render_value_uniqueness(vu: &ValueUniqueness) -> String {
    let mut s = String::from("decimal_places,count,percent\n");
    for (d, c) in vu.decimal_places.iter().enumerate() {
        let _ = writeln!(s, "{d},{c},{}", pct(*c, vu.unique_value_count));
    }
    let over: u64 = vu.decimal_places[4..].iter().sum();
    let _ = writeln!(s, "over_3,{over},{}", pct(over, vu.unique_value_count));
    let _ = writeln!(s, "total,{},{}", vu.unique_value_count, pct(vu.unique_value_count, vu.unique_value_count));
    s
}

pub fn render_anonymity(ar: Option<&AnonymityReduction>) -> String {
    let mut s = String::from("component,value_zat,value_zec,percent\n");
    match ar {
        Some(ar) => {
            let fm = Amount::from_zat(ar.founder_value.zat() + ar.miner_value.zat());
            let _ = writeln!(s, "withdrawn,{},100.0", zat_zec(ar.total_withdrawn));
            let _ = writeln!(s, "founder,{},{}", zat_zec(ar.founder_value), ar.founder_pct());
            let _ = writeln!(s, "miner,{},{}", zat_zec(ar.miner_value), ar.miner_pct());
            let _ = writeln!(s, "founder_miner,{},{}", zat_zec(fm), ar.founder_miner_pct());
            let _ = writeln!(s, "roundtrip_only,{},{}", zat_zec(ar.roundtrip_only_value), ar.roundtrip_only_pct());
            let _ = writeln!(s, "total,{},{}", zat_zec(ar.total_value()), ar.total_pct());
        }
        None => {
            let _ = writeln!(s, "withdrawn,0,0.00000000,n/a");
        }
    }
    s
}

pub fn render_tsb_candidates(
    result: &TsbScan,
    snap: &Snapshot,
    clusters: &ClusterSet,
    registry: &TagRegistry,
    schedule: &PriceSchedule,
    cluster_tol: Amount,
) -> String {
    let mut s = String::from(
        "period,cluster_id,cluster_size,matched_zat,matched_zec,window_total_zat,window_total_zec,deposit_count,max_tx_activity,top_funding,repeat_pattern,deposit_txids\n",
    );
    for c in &result.candidates {
        let d = candidate_detail(c, snap, clusters, registry, schedule, cluster_tol);
        let top = d
            .funding
            .first()
            .map(|f| f.label.clone().unwrap_or_else(|| "untagged".into()))
            .unwrap_or_default();
        let txids: Vec<String> = c.deposit_txids.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            c.period.label(),
            c.cluster_id,
            clusters.size(c.cluster_id),
            zat_zec(c.matched_amount),
            zat_zec(c.window_total),
            c.deposit_txids.len(),
            c.tx_activity_count,
            top,
            d.repeat_pattern(),
            txids.join(" ")
        );
    }
    s
}

/// Period rows by schedule amount columns, counting distinct clusters.
pub fn render_tsb_table(result: &TsbScan) -> String {
    let mut s = String::from("period");
    for a in &result.amounts {
        let _ = write!(s, ",{}", a.to_zec_string());
    }
    s.push_str(",total\n");
    for (period, counts) in &result.table {
        s.push_str(&period.label());
        for c in counts {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{}", counts.iter().sum::<u64>());
    }
    let _ = writeln!(s, "flagged_clusters{},{}", ",".repeat(result.amounts.len()), result.flagged_clusters);
    s
}

/// Runs the whole analysis over `snap` and renders the bundle. `registry`
/// gains the tags the attribution pipeline discovers.
pub fn build_report(
    snap: &Snapshot,
    registry: &mut TagRegistry,
    exclusions: &HashSet<Address>,
    schedule: Option<&PriceSchedule>,
    cfg: &ReportConfig,
) -> Result<(ReportBundle, Analysis), ReportError> {
    let Some(tip) = snap.tip() else {
        return Err(ReportError::EmptyStore);
    };
    let mut b = ReportBundle::default();

    b.add("kinds.csv", render_kinds(&kind_breakdown(snap, 0..=tip)?));
    let series = pool_series(snap)?;
    b.add("pool_series.csv", render_pool_series(&series));
    b.add("pool_totals.csv", render_pool_totals(&series));
    b.add("daily_values.csv", render_daily(&daily_series(snap)));
    b.add("address_stats.csv", render_address_stats(&address_stats(snap)));
    b.add(
        "wealth.csv",
        render_wealth(&wealth_distribution(snap, tip), tip, &cfg.wealth_top_percents),
    );
    let zz = zz_joinsplit_stats(snap);
    b.add("zz_stats.csv", render_zz(&zz));
    b.add("zz_daily.csv", render_zz_daily(&zz));
    b.add("spikes.csv", render_spikes(&spike_report(&series, cfg.spike_threshold)));

    let clusters = build_clusters(snap, cfg.use_change, exclusions)?;
    b.add("clusters.csv", render_clusters(&clusters, cfg.use_change));

    let attribution = run_pipeline(snap, registry, &cfg.pipeline)?;
    b.add("cluster_tags.csv", render_cluster_tags(registry, &clusters));
    b.add("attribution.csv", render_attribution(snap, &attribution));
    b.add("coverage.csv", render_coverage(&attribution.coverage));
    b.add("pipeline.csv", render_pipeline(&attribution));
    b.add("founders.csv", render_founders(&founder_report(snap, registry, FOUNDER_DEPOSIT)));
    b.add("intervals.csv", render_intervals(snap, cfg.interval_lo, cfg.interval_hi)?);

    let round_trips = find_round_trips(snap, cfg.max_gap);
    b.add("round_trips.csv", render_round_trips(&round_trips));
    let mut gaps = cfg.curve_gaps.clone();
    gaps.sort_unstable();
    gaps.dedup();
    let curve = linked_value_curve(snap, &gaps).expect("gaps sorted");
    b.add("linked_curve.csv", render_curve(&curve));
    b.add("value_uniqueness.csv", render_value_uniqueness(&value_uniqueness_stats(&round_trips)));
    let ar = anonymity_reduction(&attribution, &round_trips).ok();
    b.add("anonymity.csv", render_anonymity(ar.as_ref()));

    let (tsb, tsb_clusters) = match schedule {
        Some(schedule) => {
            let with_change = build_clusters(snap, true, exclusions)?;
            let result = scan(snap, &with_change, registry, schedule, &cfg.tsb)?;
            b.add(
                "tsb_candidates.csv",
                render_tsb_candidates(&result, snap, &with_change, registry, schedule, cfg.tsb.cluster_tol),
            );
            b.add("tsb_table.csv", render_tsb_table(&result));
            (Some(result), Some(with_change))
        }
        None => (None, None),
    };

    Ok((
        b,
        Analysis {
            clusters,
            attribution,
            round_trips,
            tsb,
            tsb_clusters,
        },
    ))
}
