//! Transaction-graph analysis for ledgers with a transparent side and a
//! shielded pool: kind classification, multi-input clustering, pool flow
//! attribution, round-trip linking and a price-schedule payment scan, plus a
//! deterministic synthetic chain generator with ground truth.

pub mod amount;
pub mod attribute;
pub mod calendar;
pub mod cluster;
pub mod config;
pub mod dump;
pub mod ingest;
pub mod link;
pub mod model;
pub mod report;
pub mod stats;
pub mod synth;
pub mod store;
pub mod tags;
pub mod tsb;

pub use amount::Amount;
pub use model::{Address, Transaction, TxId, TxKind};
pub use store::{Snapshot, Store};
