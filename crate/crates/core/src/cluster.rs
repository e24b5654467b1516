//! Transparent address clustering.
//!
//! Addresses spent together as inputs of one transaction are merged (the
//! multi-input rule, applied to every transaction kind with inputs).
//! Optionally, the lone transparent output of a transaction that also
//! touches the shielded pool is merged with its inputs (change linkage).
//! Cluster ids are assigned by descending size; ties go to the cluster that
//! appeared first on chain, then to the lexicographically smallest member.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::model::{Address, TxId};
use crate::store::{AddrId, Snapshot};

pub type ClusterId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("transaction {txid} has an unresolved input")]
    Unresolved { txid: TxId },
    #[error("address {0} not observed")]
    UnknownAddress(Address),
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }
}

/// A change link: the single transparent output of a pool-touching
/// transaction, attributed to the owner of its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeLink {
    pub txid: TxId,
    pub tx_index: usize,
    /// First input address, standing for the input cluster.
    pub input_rep: Address,
    pub linked: Address,
}

pub fn find_change_links(snap: &Snapshot, exclusions: &HashSet<Address>) -> Vec<ChangeLink> {
    let mut links = Vec::new();
    for (idx, tx) in snap.txs().iter().enumerate() {
        if tx.joinsplits.is_empty() || tx.vin.is_empty() || tx.vout.len() != 1 {
            continue;
        }
        let linked = &tx.vout[0].address;
        if exclusions.contains(linked) {
            continue;
        }
        let Some(rep) = tx.vin.iter().find_map(|i| i.address()) else {
            continue;
        };
        links.push(ChangeLink {
            txid: tx.txid.clone(),
            tx_index: idx,
            input_rep: rep.clone(),
            linked: linked.clone(),
        });
    }
    links
}

/// Partition of every observed address into clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSet {
    /// Cluster id per snapshot address id.
    by_addr: Vec<ClusterId>,
    /// Member address ids per cluster, sorted by address string.
    members: Vec<Vec<AddrId>>,
    lookup: HashMap<Address, AddrId>,
    addresses: Vec<Address>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn size(&self, id: ClusterId) -> usize {
        self.members[id as usize].len()
    }

    pub fn members(&self, id: ClusterId) -> impl Iterator<Item = &Address> + '_ {
        self.members[id as usize]
            .iter()
            .map(|a| &self.addresses[*a as usize])
    }

    pub fn member_ids(&self, id: ClusterId) -> &[AddrId] {
        &self.members[id as usize]
    }

    /// Cluster of a snapshot address id.
    pub fn cluster_of_id(&self, addr: AddrId) -> ClusterId {
        self.by_addr[addr as usize]
    }

    pub fn cluster_of(&self, address: &Address) -> Result<ClusterId, ClusterError> {
        self.lookup
            .get(address)
            .map(|id| self.by_addr[*id as usize])
            .ok_or_else(|| ClusterError::UnknownAddress(address.clone()))
    }

    pub fn multi_address_count(&self) -> usize {
        self.members.iter().filter(|m| m.len() > 1).count()
    }
}

pub fn build_clusters(
    snap: &Snapshot,
    use_change: bool,
    exclusions: &HashSet<Address>,
) -> Result<ClusterSet, ClusterError> {
    if let Some(&(tx, _)) = snap.unresolved().first() {
        return Err(ClusterError::Unresolved {
            txid: snap.tx(tx).txid.clone(),
        });
    }
    let n = snap.address_count();
    let mut dsu = DisjointSet::new(n);
    for idx in 0..snap.txs().len() {
        let ids = snap.input_ids(idx);
        if let Some((&first, rest)) = ids.split_first() {
            for &other in rest {
                dsu.union(first, other);
            }
        }
    }
    if use_change {
        for link in find_change_links(snap, exclusions) {
            let a = snap.address_id(&link.input_rep).expect("indexed");
            let b = snap.address_id(&link.linked).expect("indexed");
            dsu.union(a, b);
        }
    }

    let mut groups: HashMap<u32, Vec<AddrId>> = HashMap::new();
    for id in 0..n as u32 {
        groups.entry(dsu.find(id)).or_default().push(id);
    }
    let mut clusters: Vec<(Vec<AddrId>, u32)> = groups
        .into_values()
        .map(|mut members| {
            members.sort_by(|a, b| snap.address(*a).cmp(snap.address(*b)));
            let first = members
                .iter()
                .map(|a| snap.activity(*a).first_height)
                .min()
                .unwrap_or(0);
            (members, first)
        })
        .collect();
    clusters.sort_by(|(ma, fa), (mb, fb)| {
        mb.len()
            .cmp(&ma.len())
            .then(fa.cmp(fb))
            .then_with(|| snap.address(ma[0]).cmp(snap.address(mb[0])))
    });

    let mut by_addr = vec![0; n];
    let mut members = Vec::with_capacity(clusters.len());
    for (cid, (m, _)) in clusters.into_iter().enumerate() {
        for &a in &m {
            by_addr[a as usize] = cid as ClusterId;
        }
        members.push(m);
    }
    let addresses: Vec<Address> = (0..n as u32).map(|i| snap.address(i).clone()).collect();
    let lookup = addresses
        .iter()
        .enumerate()
        .map(|(i, a)| (a.clone(), i as AddrId))
        .collect();
    Ok(ClusterSet {
        by_addr,
        members,
        lookup,
        addresses,
    })
}
