//! `zflow`: ingest a ledger into a local store and run the pool-flow
//! analyses over it.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data or
//! integrity errors. Tables go to standard output (or `--out`), diagnostics
//! to standard error.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use zflow::amount::Amount;
use zflow::attribute::{founder_report, run_pipeline, PipelineConfig, FOUNDER_DEPOSIT};
use zflow::calendar::parse_date;
use zflow::cluster::build_clusters;
use zflow::config::{parse_bool, KvConfig};
use zflow::ingest::{import_dump, resolve_inputs, sync_from_node, HttpNode, RpcConfig};
use zflow::link::{find_round_trips, linked_value_curve};
use zflow::model::{conservation_check, Address};
use zflow::report::{self, build_report, ReportConfig};
use zflow::stats::{
    address_stats, daily_series, kind_breakdown, pool_series, spike_report, wealth_distribution, zz_joinsplit_stats,
};
use zflow::synth::{evaluate, generate, GroundTruth, ScenarioConfig};
use zflow::tags::{derive_miner_tags, TagRegistry};
use zflow::tsb::{scan, PriceSchedule, TsbConfig, Window};
use zflow::{Snapshot, Store};

#[derive(Parser, Debug)]
#[command(name = "zflow", version, about = "Shielded-pool flow analysis over a local block store")]
struct Cli {
    /// Flat `key = value` run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store directory.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// A `synth` output directory; supplies founders.txt, tags.csv,
    /// exclusions.txt and tsb_schedule.csv when present.
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,
    /// Founder address list, one per line.
    #[arg(long, global = true)]
    founders: Option<PathBuf>,
    /// Tag CSV `address,category,name,source`; repeatable.
    #[arg(long = "tags", global = true)]
    tags: Vec<PathBuf>,
    /// Addresses never used as change, one per line.
    #[arg(long, global = true)]
    exclusions: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pull blocks from a node over JSON-RPC (ZFLOW_RPC_URL, ZFLOW_RPC_USER,
    /// ZFLOW_RPC_PASSWORD or rpc_* config keys).
    Ingest {
        #[arg(long)]
        from: Option<u32>,
        #[arg(long)]
        to: Option<u32>,
    },
    /// Append a newline-delimited block dump to the store.
    Import { dump: PathBuf },
    /// Resolve inputs and print `metric,value` ingest totals.
    Resolve,
    /// Chain statistics. Columns: kinds `kind,count,percent`; pool
    /// `height,deposited_zat,deposited_zec,withdrawn_zat,withdrawn_zec,balance_zat,balance_zec`.
    Stats {
        #[arg(long, value_enum, default_value_t = StatsTable::Kinds)]
        table: StatsTable,
        /// Spike threshold in ZEC.
        #[arg(long)]
        spike_threshold: Option<String>,
        /// Wealth snapshot height (default: tip).
        #[arg(long)]
        height: Option<u32>,
    },
    /// Cluster summary `metric,value`, or `address,cluster_id` rows.
    Cluster {
        #[arg(long)]
        use_change: bool,
        #[arg(long)]
        assignments: bool,
    },
    /// Print the tag registry `address,category,name,source,round`.
    Tag {
        /// Include tags discovered by the attribution pipeline.
        #[arg(long)]
        discover: bool,
    },
    /// Attribution per transaction, or coverage / founder tables.
    Attribute {
        #[arg(long, value_enum, default_value_t = AttributeTable::Transactions)]
        table: AttributeTable,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Round-trip linking. Default output `max_gap,links,value_zat,value_zec`.
    Link {
        #[arg(long)]
        max_gap: Option<u32>,
        /// Print each linked pair instead of the summary.
        #[arg(long)]
        pairs: bool,
        /// Comma-separated gaps for the cumulative curve.
        #[arg(long, value_delimiter = ',')]
        curve: Vec<u32>,
    },
    /// Price-schedule deposit scan (clusters always use change linking).
    Tsb {
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        candidates: bool,
        #[command(flatten)]
        tsb: TsbArgs,
    },
    /// Generate a synthetic chain and its ground truth into `--out`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        blocks: Option<u32>,
    },
    /// Write the complete CSV bundle to `--out` and print its digest.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        max_gap: Option<u32>,
        #[arg(long)]
        spike_threshold: Option<String>,
        #[arg(long)]
        use_change: bool,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        tsb: TsbArgs,
    },
    /// Integrity checks; with `--manifest`, score an analysis against
    /// synthetic ground truth.
    Check {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct PipelineArgs {
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Disable the founder withdrawal-value rule.
    #[arg(long)]
    no_founder_value: bool,
    /// Disable the pool payout rule.
    #[arg(long)]
    no_pool_payout: bool,
}

#[derive(Args, Debug, Default)]
struct TsbArgs {
    /// ZEC.
    #[arg(long)]
    deposit_tol: Option<String>,
    /// ZEC.
    #[arg(long)]
    cluster_tol: Option<String>,
    #[arg(long)]
    activity_limit: Option<usize>,
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    /// Split one month into before/after at this UTC date (YYYY-MM-DD).
    #[arg(long)]
    split_date: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Calendar,
    Sliding30,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StatsTable {
    Kinds,
    Pool,
    PoolTotals,
    Daily,
    Addresses,
    Wealth,
    Zz,
    ZzDaily,
    Spikes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AttributeTable {
    Transactions,
    Coverage,
    Founders,
    Pipeline,
}

/// Error carrying its exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.into())
            }
        }
    )*};
}

data_errors!(
    zflow::attribute::AttributeError,
    zflow::cluster::ClusterError,
    zflow::ingest::IngestError,
    zflow::report::ReportError,
    zflow::tags::TagError,
    zflow::tsb::TsbError
);

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

/// Settings merged from the config file, `--bundle` and flags.
struct RunConfig {
    file: KvConfig,
    store: Option<PathBuf>,
    founders: Option<PathBuf>,
    tags: Vec<PathBuf>,
    exclusions: Option<PathBuf>,
    schedule: Option<PathBuf>,
}

const RUN_KEYS: &[&str] = &[
    "store",
    "founders",
    "tags",
    "exclusions",
    "schedule",
    "use_change",
    "founder_value",
    "pool_payout",
    "max_gap",
    "max_rounds",
    "spike_threshold_zec",
    "deposit_tol_zec",
    "cluster_tol_zec",
    "activity_limit",
    "window",
    "split_date",
    "rpc_url",
    "rpc_user",
    "rpc_password",
];

impl RunConfig {
    fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
        let file = match &cli.config {
            Some(p) => KvConfig::load(p).map_err(|e| usage(e))?,
            None => KvConfig::default(),
        };
        file.check_keys(RUN_KEYS).map_err(usage)?;
        let path = |k: &str| file.get(k).map(PathBuf::from);
        let mut rc = RunConfig {
            store: cli.store.clone().or_else(|| path("store")),
            founders: path("founders"),
            tags: file.get_all("tags").map(PathBuf::from).collect(),
            exclusions: path("exclusions"),
            schedule: path("schedule"),
            file,
        };
        if let Some(b) = &cli.bundle {
            if !b.is_dir() {
                return Err(usage(format!("bundle {} is not a directory", b.display())));
            }
            let pick = |name: &str| Some(b.join(name)).filter(|p| p.exists());
            rc.founders = pick("founders.txt").or(rc.founders);
            if let Some(t) = pick("tags.csv") {
                rc.tags.push(t);
            }
            rc.exclusions = pick("exclusions.txt").or(rc.exclusions);
            rc.schedule = pick("tsb_schedule.csv").or(rc.schedule);
        }
        if cli.founders.is_some() {
            rc.founders = cli.founders.clone();
        }
        rc.tags.extend(cli.tags.iter().cloned());
        if cli.exclusions.is_some() {
            rc.exclusions = cli.exclusions.clone();
        }
        let mut referenced: Vec<&PathBuf> = rc.tags.iter().collect();
        referenced.extend(rc.founders.iter());
        referenced.extend(rc.exclusions.iter());
        referenced.extend(rc.schedule.iter());
        for p in referenced {
            if !p.exists() {
                return Err(usage(format!("{} does not exist", p.display())));
            }
        }
        Ok(rc)
    }

    fn store(&self) -> Result<Store, Failure> {
        let dir = self
            .store
            .as_ref()
            .ok_or_else(|| usage("no store given (use --store or the `store` config key)"))?;
        Ok(Store::open(dir).with_context(|| format!("opening store {}", dir.display()))?)
    }

    fn snapshot(&self) -> Result<Snapshot, Failure> {
        let snap = self.store()?.snapshot().context("reading store")?;
        if snap.is_empty() {
            return Err(Failure::Data(anyhow!("empty store")));
        }
        Ok(snap)
    }

    fn flag(&self, key: &str, cli: bool, default: bool) -> Result<bool, Failure> {
        if cli {
            return Ok(!default);
        }
        match self.file.get(key) {
            Some(v) => parse_bool(key, v).map_err(usage),
            None => Ok(default),
        }
    }

    fn num<T: std::str::FromStr>(&self, key: &str, cli: Option<T>, default: T) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = cli {
            return Ok(v);
        }
        Ok(self.file.parse_opt(key).map_err(usage)?.unwrap_or(default))
    }

    fn zec(&self, key: &str, cli: &Option<String>, default: Amount) -> Result<Amount, Failure> {
        match cli.as_deref().or(self.file.get(key)) {
            Some(v) => v
                .parse::<Amount>()
                .map_err(|e| usage(format!("{key}: {v:?}: {e}"))),
            None => Ok(default),
        }
    }

    fn exclusion_set(&self) -> Result<HashSet<Address>, Failure> {
        let Some(p) = &self.exclusions else {
            return Ok(HashSet::new());
        };
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Address::from)
            .collect())
    }

    /// Founder and CSV tags plus coinbase-derived miners.
    fn registry(&self, snap: &Snapshot) -> Result<TagRegistry, Failure> {
        let mut reg = TagRegistry::new();
        if let Some(p) = &self.founders {
            let n = reg.load_founder_params(p)?;
            eprintln!("loaded {n} founder addresses");
        }
        for p in &self.tags {
            let import = reg.import_tags_csv(p)?;
            eprintln!("{}: {} tags", p.display(), import.inserted);
            for (row, reason) in &import.rejected {
                eprintln!("{}: row {row} rejected: {reason}", p.display());
            }
        }
        let miners = derive_miner_tags(snap, &mut reg);
        eprintln!("derived {miners} coinbase miner tags");
        Ok(reg)
    }

    fn pipeline(&self, args: &PipelineArgs) -> Result<PipelineConfig, Failure> {
        let d = PipelineConfig::default();
        Ok(PipelineConfig {
            max_rounds: self.num("max_rounds", args.max_rounds, d.max_rounds)?,
            founder_value: self.flag("founder_value", args.no_founder_value, d.founder_value)?,
            pool_payout: self.flag("pool_payout", args.no_pool_payout, d.pool_payout)?,
            ..d
        })
    }

    fn tsb(&self, args: &TsbArgs) -> Result<TsbConfig, Failure> {
        let d = TsbConfig::default();
        let window = match args.window {
            Some(WindowArg::Calendar) => Window::CalendarMonth,
            Some(WindowArg::Sliding30) => Window::Sliding30Days,
            None => match self.file.get("window") {
                None | Some("calendar") => Window::CalendarMonth,
                Some("sliding30") => Window::Sliding30Days,
                Some(other) => return Err(usage(format!("window: unknown value {other:?}"))),
            },
        };
        let split_at = match args.split_date.as_deref().or(self.file.get("split_date")) {
            Some(s) => Some(parse_date(s).ok_or_else(|| usage(format!("split_date: bad date {s:?}")))?),
            None => None,
        };
        Ok(TsbConfig {
            deposit_tol: self.zec("deposit_tol_zec", &args.deposit_tol, d.deposit_tol)?,
            cluster_tol: self.zec("cluster_tol_zec", &args.cluster_tol, d.cluster_tol)?,
            activity_limit: self.num("activity_limit", args.activity_limit, d.activity_limit)?,
            window,
            split_at,
        })
    }

    fn schedule(&self, flag: &Option<PathBuf>) -> Result<Option<PriceSchedule>, Failure> {
        let Some(p) = flag.as_ref().or(self.schedule.as_ref()) else {
            return Ok(None);
        };
        if !p.exists() {
            return Err(usage(format!("{} does not exist", p.display())));
        }
        Ok(Some(PriceSchedule::load(p)?))
    }
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).context("writing output")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Synth { out, seed, blocks } = &cli.cmd {
        return synth(cli.config.as_deref(), out, *seed, *blocks);
    }
    let rc = RunConfig::resolve(&cli)?;
    match &cli.cmd {
        Command::Ingest { from, to } => {
            let rpc = RpcConfig::resolve(&rc.file, |k| std::env::var(k).ok())
                .ok_or_else(|| usage("no node endpoint: set ZFLOW_RPC_URL or rpc_url"))?;
            let store = rc.store()?;
            let from = match from {
                Some(f) => *f,
                None => store.snapshot().context("reading store")?.tip().map_or(0, |t| t + 1),
            };
            let mut node = HttpNode::new(rpc);
            let r = sync_from_node(&store, &mut node, from, to.unwrap_or(u32::MAX))?;
            eprintln!(
                "ingested {} blocks, {} txs; {} outputs without a single address",
                r.ingest.blocks_ingested, r.ingest.txs_ingested, r.outputs_without_address
            );
            emit(&ingest_csv(&r.ingest))
        }
        Command::Import { dump } => {
            if !dump.exists() {
                return Err(usage(format!("{} does not exist", dump.display())));
            }
            let r = import_dump(&rc.store()?, dump)?;
            eprintln!("imported {} blocks, {} txs", r.blocks_ingested, r.txs_ingested);
            emit(&ingest_csv(&r))
        }
        Command::Resolve => {
            let store = rc.store()?;
            let r = resolve_inputs(&store).context("resolving inputs")?;
            if r.blocks_ingested == 0 {
                return Err(Failure::Data(anyhow!("empty store")));
            }
            emit(&ingest_csv(&r))?;
            if r.inputs_unresolvable > 0 {
                return Err(Failure::Data(anyhow!("{} inputs are unresolvable", r.inputs_unresolvable)));
            }
            Ok(())
        }
        Command::Stats {
            table,
            spike_threshold,
            height,
        } => {
            let snap = rc.snapshot()?;
            let tip = snap.tip().expect("non-empty");
            let text = match table {
                StatsTable::Kinds => report::render_kinds(&kind_breakdown(&snap, 0..=tip).context("kinds")?),
                StatsTable::Pool => report::render_pool_series(&pool_series(&snap).context("pool")?),
                StatsTable::PoolTotals => report::render_pool_totals(&pool_series(&snap).context("pool")?),
                StatsTable::Daily => report::render_daily(&daily_series(&snap)),
                StatsTable::Addresses => report::render_address_stats(&address_stats(&snap)),
                StatsTable::Wealth => {
                    let h = height.unwrap_or(tip);
                    report::render_wealth(&wealth_distribution(&snap, h), h, &[1, 10])
                }
                StatsTable::Zz => report::render_zz(&zz_joinsplit_stats(&snap)),
                StatsTable::ZzDaily => report::render_zz_daily(&zz_joinsplit_stats(&snap)),
                StatsTable::Spikes => {
                    let t = rc.zec("spike_threshold_zec", spike_threshold, Amount::from_zec(5_000))?;
                    report::render_spikes(&spike_report(&pool_series(&snap).context("pool")?, t))
                }
            };
            emit(&text)
        }
        Command::Cluster {
            use_change,
            assignments,
        } => {
            let snap = rc.snapshot()?;
            let use_change = rc.flag("use_change", *use_change, false)?;
            let clusters = build_clusters(&snap, use_change, &rc.exclusion_set()?)?;
            if *assignments {
                emit(&report::render_cluster_assignments(&snap, &clusters))
            } else {
                emit(&report::render_clusters(&clusters, use_change))
            }
        }
        Command::Tag { discover } => {
            let snap = rc.snapshot()?;
            let mut reg = rc.registry(&snap)?;
            if *discover {
                run_pipeline(&snap, &mut reg, &rc.pipeline(&PipelineArgs::default())?)?;
            }
            emit(&report::render_tags(&reg))
        }
        Command::Attribute { table, pipeline } => {
            let snap = rc.snapshot()?;
            let mut reg = rc.registry(&snap)?;
            let result = run_pipeline(&snap, &mut reg, &rc.pipeline(pipeline)?)?;
            if !result.converged {
                eprintln!("warning: pipeline stopped after {} rounds without converging", result.rounds);
            }
            for c in &result.conflicts {
                eprintln!("conflict: {c}");
            }
            for a in &result.anomalies {
                eprintln!("anomaly: {a}");
            }
            let text = match table {
                AttributeTable::Transactions => report::render_attribution(&snap, &result),
                AttributeTable::Coverage => report::render_coverage(&result.coverage),
                AttributeTable::Founders => report::render_founders(&founder_report(&snap, &reg, FOUNDER_DEPOSIT)),
                AttributeTable::Pipeline => report::render_pipeline(&result),
            };
            emit(&text)
        }
        Command::Link { max_gap, pairs, curve } => {
            let max_gap = rc.num("max_gap", *max_gap, 100)?;
            if max_gap == 0 {
                return Err(usage("max_gap must be at least 1"));
            }
            let snap = rc.snapshot()?;
            if !curve.is_empty() {
                let points = linked_value_curve(&snap, curve).map_err(usage)?;
                return emit(&report::render_curve(&points));
            }
            let trips = find_round_trips(&snap, max_gap);
            if *pairs {
                emit(&report::render_round_trips(&trips))
            } else {
                emit(&report::render_link_summary(max_gap, &trips))
            }
        }
        Command::Tsb {
            schedule,
            candidates,
            tsb,
        } => {
            let schedule = rc
                .schedule(schedule)?
                .ok_or_else(|| usage("no schedule given (use --schedule or the `schedule` config key)"))?;
            let cfg = rc.tsb(tsb)?;
            let snap = rc.snapshot()?;
            let mut reg = rc.registry(&snap)?;
            run_pipeline(&snap, &mut reg, &rc.pipeline(&PipelineArgs::default())?)?;
            let clusters = build_clusters(&snap, true, &rc.exclusion_set()?)?;
            let result = scan(&snap, &clusters, &reg, &schedule, &cfg)?;
            if *candidates {
                emit(&report::render_tsb_candidates(
                    &result,
                    &snap,
                    &clusters,
                    &reg,
                    &schedule,
                    cfg.cluster_tol,
                ))
            } else {
                emit(&report::render_tsb_table(&result))
            }
        }
        Command::Synth { .. } => unreachable!("handled before config resolution"),
        Command::Report {
            out,
            schedule,
            max_gap,
            spike_threshold,
            use_change,
            pipeline,
            tsb,
        } => {
            let d = ReportConfig::default();
            let cfg = ReportConfig {
                use_change: rc.flag("use_change", *use_change, false)?,
                max_gap: rc.num("max_gap", *max_gap, d.max_gap)?,
                spike_threshold: rc.zec("spike_threshold_zec", spike_threshold, d.spike_threshold)?,
                pipeline: rc.pipeline(pipeline)?,
                tsb: rc.tsb(tsb)?,
                ..d
            };
            let schedule = rc.schedule(schedule)?;
            let snap = rc.snapshot()?;
            let mut reg = rc.registry(&snap)?;
            let (bundle, _) = build_report(&snap, &mut reg, &rc.exclusion_set()?, schedule.as_ref(), &cfg)?;
            bundle.write(out)?;
            eprintln!("wrote {} files to {}", bundle.files.len(), out.display());
            emit(&format!("{}\n", bundle.digest()))
        }
        Command::Check { manifest } => check(&rc, manifest.as_deref()),
    }
}

/// Scenario generation reads `--config` as a scenario file rather than a
/// run configuration.
fn synth(config: Option<&Path>, out: &Path, seed: Option<u64>, blocks: Option<u32>) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => {
            let kv = KvConfig::load(p).map_err(usage)?;
            ScenarioConfig::from_kv(&kv).map_err(usage)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(b) = blocks {
        cfg.blocks = b;
    }
    cfg.validate().map_err(usage)?;
    let syn = generate(&cfg).map_err(|e| Failure::Data(e.into()))?;
    syn.write_bundle(out).map_err(|e| Failure::Data(e.into()))?;
    eprintln!(
        "wrote {} blocks, {} txs to {}",
        syn.blocks.len(),
        syn.truth.txs.len(),
        out.display()
    );
    emit(&format!("{}\n", syn.truth.digest))
}

fn ingest_csv(r: &zflow::store::IngestReport) -> String {
    format!(
        "metric,value\nblocks_ingested,{}\ntxs_ingested,{}\ninputs_resolved,{}\ninputs_unresolvable,{}\n",
        r.blocks_ingested, r.txs_ingested, r.inputs_resolved, r.inputs_unresolvable
    )
}

fn check(rc: &RunConfig, manifest: Option<&Path>) -> Result<(), Failure> {
    let snap = rc.snapshot()?;
    let mut problems = Vec::new();
    let unresolved = snap.unresolved().len();
    if unresolved > 0 {
        problems.push(format!("{unresolved} unresolved inputs"));
    }
    let mut bad_fee = 0usize;
    for tx in snap.txs() {
        if !tx.is_coinbase && conservation_check(tx).is_err() {
            bad_fee += 1;
        }
    }
    if bad_fee > 0 {
        problems.push(format!("{bad_fee} transactions fail value conservation"));
    }
    if let Err(e) = pool_series(&snap) {
        problems.push(e.to_string());
    }
    let mut s = format!(
        "check,value\ntransactions,{}\nunresolved_inputs,{unresolved}\nconservation_failures,{bad_fee}\n",
        snap.txs().len()
    );
    if let Some(path) = manifest {
        let truth = GroundTruth::load(path).map_err(|e| Failure::Data(e.into()))?;
        let mut reg = rc.registry(&snap)?;
        let exclusions = rc.exclusion_set()?;
        let max_gap = rc.num("max_gap", None, 100)?;
        let clusters = build_clusters(&snap, false, &exclusions)?;
        let attribution = run_pipeline(&snap, &mut reg, &rc.pipeline(&PipelineArgs::default())?)?;
        let trips = find_round_trips(&snap, max_gap);
        let tsb = match rc.schedule(&None)? {
            Some(schedule) => {
                let with_change = build_clusters(&snap, true, &exclusions)?;
                let scan = scan(&snap, &with_change, &reg, &schedule, &rc.tsb(&TsbArgs::default())?)?;
                Some((with_change, scan))
            }
            None => None,
        };
        let ev = evaluate(&snap, &clusters, &attribution, &trips, max_gap, None, &truth)
            .map_err(|e| Failure::Data(e.into()))?;
        let tsb_ev = match &tsb {
            Some((with_change, scan)) => Some(
                evaluate(&snap, with_change, &attribution, &trips, max_gap, Some(scan), &truth)
                    .map_err(|e| Failure::Data(e.into()))?
                    .tsb,
            ),
            None => None,
        };
        s.push_str(&format!("h1_purity_percent,{}\n", ev.h1_purity_pct()));
        for (name, c) in [("h3", ev.h3), ("h4", ev.h4), ("h5", ev.h5)].into_iter().chain(tsb_ev.map(|c| ("tsb", c))) {
            s.push_str(&format!(
                "{name}_tp,{}\n{name}_fp,{}\n{name}_fn,{}\n{name}_precision_percent,{}\n{name}_recall_percent,{}\n",
                c.tp,
                c.fp,
                c.fn_,
                c.precision_pct(),
                c.recall_pct()
            ));
        }
        s.push_str(&format!("attribution_accuracy_percent,{}\n", ev.attribution_accuracy_pct()));
    }
    emit(&s)?;
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("check failed: {p}");
        }
        bail_data(problems.len())?;
    }
    Ok(())
}

fn bail_data(n: usize) -> Result<(), Failure> {
    let e: anyhow::Result<()> = (|| bail!("{n} integrity problems"))();
    e.map_err(Failure::Data)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
