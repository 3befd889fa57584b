//! Book metadata reconciliation: matching, source adapters, Work clustering,
//! curation state, batch enrichment and evaluation.

pub mod batch;
pub mod cluster;
pub mod config;
pub mod eval;
pub mod extend;
pub mod hathitrust;
pub mod matching;
pub mod reconcile;
pub mod record;
pub mod session;
pub mod source;
