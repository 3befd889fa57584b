//! One query against one source: search, rank, decide, cluster.

use serde::Serialize;

use crate::cluster::{build_cluster, WorkCluster};
use crate::matching::{rank_candidates, MatchConfig, ScoredCandidate};
use crate::record::AdapterQuery;
use crate::source::{SourceError, SourceHandle};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconciliation {
    pub ranked: Vec<ScoredCandidate>,
    pub cluster: Option<WorkCluster>,
}

impl Reconciliation {
    pub fn top(&self) -> Option<&ScoredCandidate> {
        self.ranked.first()
    }

    pub fn matched(&self) -> Option<&ScoredCandidate> {
        self.top().filter(|t| t.is_match)
    }
}

pub async fn reconcile(
    source: &SourceHandle,
    query: &AdapterQuery,
    config: &MatchConfig,
    clustering: bool,
) -> Result<Reconciliation, SourceError> {
    let candidates = source.search(query).await?;
    let ranked = rank_candidates(query, candidates, config);
    let cluster = build_cluster(&ranked, config, clustering, source.capabilities().supports_work_id);
    Ok(Reconciliation { ranked, cluster })
}
