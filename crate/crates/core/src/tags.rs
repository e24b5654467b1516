//! Address labels: founders from chain parameters, pools/exchanges/services
//! from CSV files, miners from coinbase recipients, and the founder/miner
//! tags derived by the withdrawal heuristics.
//!
//! A pool tag refines a miner tag; founder and miner tags never coexist on
//! one address.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::cluster::{ClusterId, ClusterSet};
use crate::model::{Address, TxKind};
use crate::store::Snapshot;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Founder,
    Miner,
    Pool(String),
    Exchange(String),
    Service(String),
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategoryKind {
    Founder,
    Miner,
    Pool,
    Exchange,
    Service,
    User,
}

impl CategoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CategoryKind::Founder => "founder",
            CategoryKind::Miner => "miner",
            CategoryKind::Pool => "pool",
            CategoryKind::Exchange => "exchange",
            CategoryKind::Service => "service",
            CategoryKind::User => "user",
        }
    }
}

impl Category {
    pub fn kind(&self) -> CategoryKind {
        match self {
            Category::Founder => CategoryKind::Founder,
            Category::Miner => CategoryKind::Miner,
            Category::Pool(_) => CategoryKind::Pool,
            Category::Exchange(_) => CategoryKind::Exchange,
            Category::Service(_) => CategoryKind::Service,
            Category::User => CategoryKind::User,
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Category::Pool(n) | Category::Exchange(n) | Category::Service(n) => Some(n),
            _ => None,
        }
    }

    fn is_minerish(&self) -> bool {
        matches!(self, Category::Miner | Category::Pool(_))
    }

    fn conflicts_with(&self, other: &Category) -> bool {
        match (self, other) {
            (Category::Founder, o) | (o, Category::Founder) if o.is_minerish() => true,
            (Category::Pool(a), Category::Pool(b))
            | (Category::Exchange(a), Category::Exchange(b))
            | (Category::Service(a), Category::Service(b)) => a != b,
            _ => false,
        }
    }

    pub fn parse(category: &str, name: &str) -> Result<Category, String> {
        let named = |f: fn(String) -> Category| {
            if name.is_empty() {
                Err(format!("category {category} needs a name"))
            } else {
                Ok(f(name.to_string()))
            }
        };
        match category {
            "founder" => Ok(Category::Founder),
            "miner" => Ok(Category::Miner),
            "user" => Ok(Category::User),
            "pool" => named(Category::Pool),
            "exchange" => named(Category::Exchange),
            "service" => named(Category::Service),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => write!(f, "{}({n})", self.kind().as_str()),
            None => f.write_str(self.kind().as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TagSource {
    Params,
    Csv,
    Heuristic3,
    Heuristic4,
    Coingen,
}

impl TagSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TagSource::Params => "params",
            TagSource::Csv => "csv",
            TagSource::Heuristic3 => "heuristic3",
            TagSource::Heuristic4 => "heuristic4",
            TagSource::Coingen => "coingen",
        }
    }

    pub fn parse(s: &str) -> Option<TagSource> {
        Some(match s {
            "params" => TagSource::Params,
            "csv" => TagSource::Csv,
            "heuristic3" => TagSource::Heuristic3,
            "heuristic4" => TagSource::Heuristic4,
            "coingen" => TagSource::Coingen,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag {
    pub address: Address,
    pub category: Category,
    pub source: TagSource,
    /// Load phase or pipeline round that created the tag.
    pub created_at: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TagError {
    #[error("{address}: {new} conflicts with existing {existing}")]
    Conflict {
        address: Address,
        existing: Category,
        new: Category,
    },
    #[error("{address}: already tagged from source {source_name} as {existing}")]
    SameSource {
        address: Address,
        existing: Category,
        source_name: &'static str,
    },
    #[error("{path}: line {line}: {msg}")]
    Line {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagRegistry {
    by_addr: BTreeMap<Address, BTreeMap<(Category, TagSource), u32>>,
    by_kind: BTreeMap<CategoryKind, BTreeSet<Address>>,
}

/// Outcome of a CSV import.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvImport {
    pub inserted: usize,
    /// (1-based data row, reason).
    pub rejected: Vec<(usize, String)>,
}

impl TagRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tag. Returns `Ok(false)` when the identical tag exists.
    pub fn insert(&mut self, tag: Tag) -> Result<bool, TagError> {
        let entry = self.by_addr.get(&tag.address);
        if let Some(existing) = entry {
            if existing.contains_key(&(tag.category.clone(), tag.source)) {
                return Ok(false);
            }
            for (cat, src) in existing.keys() {
                if cat.conflicts_with(&tag.category) {
                    return Err(TagError::Conflict {
                        address: tag.address,
                        existing: cat.clone(),
                        new: tag.category,
                    });
                }
                if *src == tag.source {
                    return Err(TagError::SameSource {
                        address: tag.address,
                        existing: cat.clone(),
                        source_name: src.as_str(),
                    });
                }
            }
        }
        self.by_kind
            .entry(tag.category.kind())
            .or_default()
            .insert(tag.address.clone());
        self.by_addr
            .entry(tag.address)
            .or_default()
            .insert((tag.category, tag.source), tag.created_at);
        Ok(true)
    }

    pub fn tag(
        &mut self,
        address: &Address,
        category: Category,
        source: TagSource,
        created_at: u32,
    ) -> Result<bool, TagError> {
        self.insert(Tag {
            address: address.clone(),
            category,
            source,
            created_at,
        })
    }

    pub fn tags(&self, address: &Address) -> Vec<Tag> {
        self.by_addr
            .get(address)
            .map(|m| {
                m.iter()
                    .map(|((c, s), r)| Tag {
                        address: address.clone(),
                        category: c.clone(),
                        source: *s,
                        created_at: *r,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn all_tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.by_addr.keys().flat_map(|a| self.tags(a))
    }

    pub fn len(&self) -> usize {
        self.by_addr.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_addr.is_empty()
    }

    pub fn has_kind(&self, address: &Address, kind: CategoryKind) -> bool {
        self.by_kind.get(&kind).is_some_and(|s| s.contains(address))
    }

    pub fn is_founder(&self, address: &Address) -> bool {
        self.has_kind(address, CategoryKind::Founder)
    }

    /// Miner or pool.
    pub fn is_miner(&self, address: &Address) -> bool {
        self.has_kind(address, CategoryKind::Miner) || self.has_kind(address, CategoryKind::Pool)
    }

    pub fn pool_name(&self, address: &Address) -> Option<&str> {
        self.by_addr.get(address)?.keys().find_map(|(c, _)| match c {
            Category::Pool(n) => Some(n.as_str()),
            _ => None,
        })
    }

    /// First named label (pool, exchange or service) of an address.
    pub fn entity_name(&self, address: &Address) -> Option<String> {
        self.by_addr
            .get(address)?
            .keys()
            .find_map(|(c, _)| c.name().map(|n| format!("{}:{n}", c.kind().as_str())))
    }

    pub fn addresses(&self, kind: CategoryKind) -> impl Iterator<Item = &Address> {
        self.by_kind.get(&kind).into_iter().flatten()
    }

    pub fn count(&self, kind: CategoryKind) -> usize {
        self.by_kind.get(&kind).map_or(0, |s| s.len())
    }

    /// Loads founder addresses, one per line. Returns the number of distinct
    /// addresses in the file.
    pub fn load_founder_params(&mut self, path: &Path) -> Result<usize, TagError> {
        let text = std::fs::read_to_string(path).map_err(|e| TagError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        self.load_founder_params_str(&text, &path.display().to_string())
    }

    pub fn load_founder_params_str(&mut self, text: &str, origin: &str) -> Result<usize, TagError> {
        let mut distinct = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !Address::is_well_formed(line) {
                return Err(TagError::Line {
                    path: origin.to_string(),
                    line: n + 1,
                    msg: format!("malformed address {line:?}"),
                });
            }
            let a = Address::from(line);
            self.tag(&a, Category::Founder, TagSource::Params, 0)
                .map_err(|e| TagError::Line {
                    path: origin.to_string(),
                    line: n + 1,
                    msg: e.to_string(),
                })?;
            distinct.insert(a);
        }
        Ok(distinct.len())
    }

    /// Imports `address,category,name,source` rows. Conflicting rows are
    /// rejected individually; malformed files are an error.
    pub fn import_tags_csv(&mut self, path: &Path) -> Result<CsvImport, TagError> {
        let file = std::fs::File::open(path).map_err(|e| TagError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        self.import_tags_reader(file, &path.display().to_string())
    }

    pub fn import_tags_reader<R: Read>(&mut self, reader: R, origin: &str) -> Result<CsvImport, TagError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| TagError::Line {
            path: origin.to_string(),
            line: 1,
            msg: e.to_string(),
        })?;
        let expected = ["address", "category", "name", "source"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(TagError::Line {
                path: origin.to_string(),
                line: 1,
                msg: format!("expected header {}", expected.join(",")),
            });
        }
        let mut out = CsvImport::default();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| TagError::Line {
                path: origin.to_string(),
                line: i + 2,
                msg: e.to_string(),
            })?;
            let result = (|| {
                let address = &row[0];
                if address.is_empty() {
                    return Err("empty address".to_string());
                }
                let category = Category::parse(&row[1], &row[2])?;
                let source = TagSource::parse(&row[3]).unwrap_or(TagSource::Csv);
                self.tag(&Address::from(address), category, source, 0)
                    .map_err(|e| e.to_string())
            })();
            match result {
                Ok(true) => out.inserted += 1,
                Ok(false) => {}
                Err(reason) => out.rejected.push((i + 1, reason)),
            }
        }
        Ok(out)
    }
}

/// Tags every non-founder coinbase recipient as a miner. Returns the number
/// of new tags.
pub fn derive_miner_tags(snap: &Snapshot, registry: &mut TagRegistry) -> usize {
    let mut added = 0;
    for (idx, tx) in snap.txs().iter().enumerate() {
        if snap.kind(idx) != TxKind::Coingen {
            continue;
        }
        for o in &tx.vout {
            if registry.is_founder(&o.address) {
                continue;
            }
            if let Ok(true) = registry.tag(&o.address, Category::Miner, TagSource::Coingen, 0) {
                added += 1;
            }
        }
    }
    added
}

/// Per-cluster count of tagged member addresses by category kind. Untagged
/// clusters are omitted.
pub fn cluster_tags(
    registry: &TagRegistry,
    clusters: &ClusterSet,
) -> BTreeMap<ClusterId, BTreeMap<CategoryKind, u64>> {
    let mut out: BTreeMap<ClusterId, BTreeMap<CategoryKind, u64>> = BTreeMap::new();
    for (kind, addrs) in &registry.by_kind {
        for a in addrs {
            if let Ok(cid) = clusters.cluster_of(a) {
                *out.entry(cid).or_default().entry(*kind).or_default() += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Address {
        Address::from(s)
    }

    #[test]
    fn founder_and_pool_conflict() {
        let mut r = TagRegistry::new();
        assert!(r.tag(&a("tF"), Category::Founder, TagSource::Params, 0).unwrap());
        assert!(matches!(
            r.tag(&a("tF"), Category::Pool("Flypool".into()), TagSource::Csv, 0),
            Err(TagError::Conflict { .. })
        ));
        assert!(matches!(
            r.tag(&a("tF"), Category::Miner, TagSource::Coingen, 0),
            Err(TagError::Conflict { .. })
        ));
        assert!(!r.tag(&a("tF"), Category::Founder, TagSource::Params, 0).unwrap());
        assert!(r.is_founder(&a("tF")) && !r.is_miner(&a("tF")));
    }

    #[test]
    fn pool_refines_miner() {
        let mut r = TagRegistry::new();
        r.tag(&a("tP"), Category::Pool("F2Pool".into()), TagSource::Csv, 0).unwrap();
        assert!(r.tag(&a("tP"), Category::Miner, TagSource::Coingen, 0).unwrap());
        assert!(r.is_miner(&a("tP")));
        assert_eq!(r.pool_name(&a("tP")), Some("F2Pool"));
        assert!(matches!(
            r.tag(&a("tP"), Category::Pool("Other".into()), TagSource::Heuristic4, 0),
            Err(TagError::Conflict { .. })
        ));
    }

    #[test]
    fn same_source_second_category_rejected() {
        let mut r = TagRegistry::new();
        r.tag(&a("tE"), Category::Exchange("Kraken".into()), TagSource::Csv, 0).unwrap();
        assert!(matches!(
            r.tag(&a("tE"), Category::Service("x".into()), TagSource::Csv, 0),
            Err(TagError::SameSource { .. })
        ));
    }

    #[test]
    fn founder_params_count_distinct_and_validate() {
        let mut r = TagRegistry::new();
        let good = "t1Xu6pXhGjVXtCZ3ZHcGs3TCvVPtrwoU2ZQ\nt1Xu6pXhGjVXtCZ3ZHcGs3TCvVPtrwoU2ZQ\n\nt3Vz22vK5z2LcKEdg16Yv4FFneEL1zg9ojd\n";
        assert_eq!(r.load_founder_params_str(good, "p").unwrap(), 2);
        assert_eq!(r.count(CategoryKind::Founder), 2);
        assert_eq!(r.load_founder_params_str("", "p").unwrap(), 0);
        let err = r.load_founder_params_str("t1Xu6pXhGjVXtCZ3ZHcGs3TCvVPtrwoU2ZQ\nbogus\n", "p");
        assert!(matches!(err, Err(TagError::Line { line: 2, .. })));
    }

    #[test]
    fn csv_import_reports_rejected_rows() {
        let mut r = TagRegistry::new();
        r.tag(&a("tF"), Category::Founder, TagSource::Params, 0).unwrap();
        let csv = "address,category,name,source\n\
                   tP1,pool,Flypool,zchain\n\
                   tF,pool,Flypool,zchain\n\
                   tX,exchange,,manual\n\
                   tE,exchange,Bittrex,manual\n";
        let out = r.import_tags_reader(csv.as_bytes(), "t.csv").unwrap();
        assert_eq!(out.inserted, 2);
        assert_eq!(out.rejected.iter().map(|(r, _)| *r).collect::<Vec<_>>(), [2, 3]);
        let empty = r
            .import_tags_reader("address,category,name,source\n".as_bytes(), "e")
            .unwrap();
        assert_eq!(empty, CsvImport::default());
        assert!(r.import_tags_reader("a,b\n".as_bytes(), "bad").is_err());
    }

    #[test]
    fn insertion_order_does_not_change_state() {
        let tags = vec![
            (a("t1"), Category::Founder, TagSource::Params),
            (a("t2"), Category::Pool("P".into()), TagSource::Csv),
            (a("t2"), Category::Miner, TagSource::Coingen),
            (a("t3"), Category::Exchange("E".into()), TagSource::Csv),
        ];
        let mut fwd = TagRegistry::new();
        for (ad, c, s) in tags.iter().cloned() {
            fwd.tag(&ad, c, s, 0).unwrap();
        }
        let mut rev = TagRegistry::new();
        for (ad, c, s) in tags.into_iter().rev() {
            rev.tag(&ad, c, s, 0).unwrap();
        }
        assert_eq!(fwd, rev);
    }
}
