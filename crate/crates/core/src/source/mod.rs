//! Adapters over the bibliographic sources.
//!
//! Each adapter maps one upstream API onto [`CandidateRecord`]s. All network
//! traffic goes through a [`Transport`] wrapped in a per-source
//! [`ResilientClient`] (token bucket plus retry with jittered backoff), so the
//! adapters themselves only shape requests and map responses.

mod fixture;
mod googlebooks;
mod hathitrust;
mod http;
mod loc;
mod oclc;
pub mod resilience;
pub mod transport;
mod viaf;
mod wikidata;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::record::{
    AdapterQuery, CandidateRecord, FieldName, GlobalId, IdentifierKind as Id, MetadataField as Md,
    SourceId,
};

pub use fixture::{load_corpus, CorpusError, FixtureSource, BUNDLED_CORPUS};
pub use googlebooks::GoogleBooksSource;
pub use hathitrust::HathiTrustSource;
pub use http::HttpClient;
pub use loc::LocSource;
pub use oclc::{OclcSource, OCLC_KEY_ENV};
pub use resilience::{RateLimit, ResilientClient, RetryPolicy, TokenBucket};
pub use transport::{HttpRequest, HttpResponse, ReqwestTransport, StaticTransport, Transport};
pub use viaf::ViafSource;
pub use wikidata::WikidataSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchLevel {
    Work,
    Manifestation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterCapabilities {
    pub supports_work_id: bool,
    pub search_level: SearchLevel,
    pub extend_fields: Vec<FieldName>,
    pub requires_key: bool,
}

impl AdapterCapabilities {
    pub fn can_extend(&self, field: FieldName) -> bool {
        self.extend_fields.contains(&field)
    }
}

/// Static description of what each source searches and returns.
pub fn default_capabilities(source: SourceId) -> AdapterCapabilities {
    use FieldName::{Identifier as I, Metadata as M};
    let (supports_work_id, search_level, extend_fields, requires_key) = match source {
        SourceId::Loc => (
            true,
            SearchLevel::Work,
            vec![I(Id::Isbn), I(Id::Lccn), I(Id::OclcNumber), I(Id::LcWorkUri), M(Md::Subjects), M(Md::Genres)],
            false,
        ),
        SourceId::GoogleBooks => (
            false,
            SearchLevel::Manifestation,
            vec![
                I(Id::Isbn),
                M(Md::Description),
                M(Md::Language),
                M(Md::PageCount),
                M(Md::Subjects),
                M(Md::ThumbnailUrl),
            ],
            false,
        ),
        SourceId::Viaf => (true, SearchLevel::Work, vec![I(Id::ViafId), I(Id::Lccn)], false),
        SourceId::Oclc => (
            true,
            SearchLevel::Manifestation,
            vec![
                I(Id::Isbn),
                I(Id::OclcNumber),
                I(Id::Lccn),
                I(Id::Ddc),
                M(Md::Subjects),
                M(Md::Genres),
                M(Md::Language),
            ],
            true,
        ),
        SourceId::Wikidata => (
            true,
            SearchLevel::Work,
            vec![
                I(Id::WikidataQid),
                I(Id::Isbn),
                I(Id::Lccn),
                I(Id::OclcNumber),
                I(Id::ViafId),
                M(Md::Description),
            ],
            false,
        ),
        SourceId::HathiTrust => (
            false,
            SearchLevel::Manifestation,
            vec![
                I(Id::Isbn),
                I(Id::OclcNumber),
                I(Id::Lccn),
                I(Id::HtVolumeId),
                M(Md::EarliestPubDate),
                M(Md::LatestPubDate),
                M(Md::ThumbnailUrl),
            ],
            false,
        ),
        SourceId::Fixture => (true, SearchLevel::Work, FieldName::all().collect(), false),
    };
    AdapterCapabilities {
        supports_work_id,
        search_level,
        extend_fields,
        requires_key,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SourceError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited by upstream")]
    RateLimited { retry_after: Option<Duration> },
    #[error("malformed response: {message} (payload starts: {snippet:?})")]
    Malformed { message: String, snippet: String },
    #[error("upstream returned HTTP {status}")]
    Http { status: u16 },
    #[error("record `{0}` not found")]
    NotFound(String),
    #[error("no API key configured for {0}")]
    MissingKey(SourceId),
    #[error("source `{0}` is not configured")]
    UnknownSource(SourceId),
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: Box<SourceError> },
}

impl SourceError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SourceError::Network(_) | SourceError::RateLimited { .. })
    }

    pub(crate) fn malformed(message: impl Into<String>, payload: &str) -> Self {
        SourceError::Malformed {
            message: message.into(),
            snippet: payload.chars().take(200).collect(),
        }
    }
}

/// One bibliographic source.
#[async_trait]
pub trait Source: Send + Sync {
    fn id(&self) -> SourceId;

    fn capabilities(&self) -> AdapterCapabilities {
        default_capabilities(self.id())
    }

    /// Candidate records for a query, unranked.
    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError>;

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError>;
}

/// A configured adapter plus the label it reports under.
///
/// The handle enforces the adapter contract: records failing validation are
/// dropped and results never exceed the query limit.
#[derive(Clone)]
pub struct SourceHandle {
    label: String,
    adapter: Arc<dyn Source>,
    max_limit: Option<usize>,
}

impl std::fmt::Debug for SourceHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceHandle")
            .field("label", &self.label)
            .field("source", &self.adapter.id())
            .finish()
    }
}

impl SourceHandle {
    pub fn new(adapter: Arc<dyn Source>) -> Self {
        Self {
            label: adapter.id().as_str().to_owned(),
            adapter,
            max_limit: None,
        }
    }

    pub fn with_label(adapter: Arc<dyn Source>, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            adapter,
            max_limit: None,
        }
    }

    /// Caps the number of candidates requested from the adapter.
    pub fn with_max_limit(mut self, max_limit: usize) -> Self {
        self.max_limit = Some(max_limit.max(1));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn id(&self) -> SourceId {
        self.adapter.id()
    }

    pub fn capabilities(&self) -> AdapterCapabilities {
        self.adapter.capabilities()
    }

    pub async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let capped;
        let query = match self.max_limit {
            Some(max) if query.limit > max => {
                capped = AdapterQuery {
                    limit: max,
                    ..query.clone()
                };
                &capped
            }
            _ => query,
        };
        let records = self.adapter.search(query).await?;
        let id = self.id();
        Ok(records
            .into_iter()
            .filter(|r| match r.validate() {
                Ok(()) if r.source == id => true,
                Ok(()) => {
                    warn!(source = %id, record = %r.native_id, "dropping record tagged with another source");
                    false
                }
                Err(err) => {
                    warn!(source = %id, %err, "dropping invalid record");
                    false
                }
            })
            .take(query.limit)
            .collect())
    }

    pub async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        let record = self.adapter.fetch_by_id(native_id).await?;
        record
            .validate()
            .map_err(|err| SourceError::malformed(err.to_string(), native_id))?;
        Ok(record)
    }
}

/// The set of enabled sources, at most one per [`SourceId`].
#[derive(Debug, Clone, Default)]
pub struct SourceRegistry {
    handles: BTreeMap<SourceId, SourceHandle>,
}

impl SourceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, handle: SourceHandle) {
        self.handles.insert(handle.id(), handle);
    }

    pub fn get(&self, source: SourceId) -> Result<&SourceHandle, SourceError> {
        self.handles.get(&source).ok_or(SourceError::UnknownSource(source))
    }

    pub fn capabilities(&self, source: SourceId) -> Result<AdapterCapabilities, SourceError> {
        self.get(source).map(SourceHandle::capabilities)
    }

    pub async fn fetch(&self, id: &GlobalId) -> Result<CandidateRecord, SourceError> {
        self.get(id.source)?.fetch_by_id(&id.native_id).await
    }

    pub fn ids(&self) -> impl Iterator<Item = SourceId> + '_ {
        self.handles.keys().copied()
    }

    pub fn handles(&self) -> impl Iterator<Item = &SourceHandle> {
        self.handles.values()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }
}
