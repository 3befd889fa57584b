use std::sync::Arc;

use async_trait::async_trait;

use super::{Source, SourceError};
use crate::hathitrust::TitleIndex;
use crate::matching::{rank_candidates, MatchConfig};
use crate::record::{AdapterQuery, CandidateRecord, SourceId};

/// HathiTrust adapter over a local [`TitleIndex`]. The index over-fetches
/// `5 × limit` overlap candidates; this adapter ranks them and keeps the
/// best `limit`.
pub struct HathiTrustSource {
    index: Arc<TitleIndex>,
    config: MatchConfig,
}

impl HathiTrustSource {
    pub fn new(index: Arc<TitleIndex>, config: MatchConfig) -> Self {
        Self { index, config }
    }

    pub fn index(&self) -> &TitleIndex {
        &self.index
    }
}

#[async_trait]
impl Source for HathiTrustSource {
    fn id(&self) -> SourceId {
        SourceId::HathiTrust
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let candidates = self.index.query(query, query.limit);
        Ok(rank_candidates(query, candidates, &self.config)
            .into_iter()
            .take(query.limit)
            .map(|scored| scored.candidate)
            .collect())
    }

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        self.index
            .get(native_id)
            .map(|r| r.to_candidate())
            .ok_or_else(|| SourceError::NotFound(native_id.to_owned()))
    }
}
