//! Deterministic in-memory source backed by a JSON corpus.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;

use super::{default_capabilities, AdapterCapabilities, ResilientClient, RetryPolicy, Source, SourceError};
use crate::matching::normalize;
use crate::record::{AdapterQuery, CandidateRecord, SourceId};

/// The corpus shipped with the crate (about fifty records).
pub const BUNDLED_CORPUS: &str = include_str!("../../data/fixture_corpus.json");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corpus is not a JSON array of records: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("corpus record is invalid: {0}")]
    Invalid(#[from] crate::record::RecordError),
    #[error("corpus contains native id `{0}` twice")]
    DuplicateId(String),
}

pub fn load_corpus(json: &str) -> Result<Vec<CandidateRecord>, CorpusError> {
    let mut records: Vec<CandidateRecord> = serde_json::from_str(json)?;
    let mut seen = BTreeSet::new();
    for record in &mut records {
        record.source = SourceId::Fixture;
        record.validate()?;
        if !seen.insert(record.native_id.clone()) {
            return Err(CorpusError::DuplicateId(record.native_id.clone()));
        }
    }
    Ok(records)
}

/// Serves records from a corpus. A record is returned for a query when the
/// shared title tokens make up at least half of the larger token set.
///
/// Errors queued with [`FixtureSource::with_faults`] are returned by the
/// next calls, one per attempt, before normal behaviour resumes; every
/// attempt passes through the same throttle/retry path as a live adapter.
#[derive(Debug)]
pub struct FixtureSource {
    records: Vec<CandidateRecord>,
    tokens: Vec<BTreeSet<String>>,
    capabilities: AdapterCapabilities,
    faults: Mutex<VecDeque<SourceError>>,
    attempts: AtomicUsize,
    resilience: ResilientClient,
}

impl FixtureSource {
    pub fn new(records: Vec<CandidateRecord>) -> Self {
        let records: Vec<CandidateRecord> = records
            .into_iter()
            .map(|mut r| {
                r.source = SourceId::Fixture;
                r
            })
            .collect();
        let tokens = records.iter().map(|r| title_tokens(&r.title)).collect();
        Self {
            records,
            tokens,
            capabilities: default_capabilities(SourceId::Fixture),
            faults: Mutex::new(VecDeque::new()),
            attempts: AtomicUsize::new(0),
            resilience: ResilientClient::unthrottled(RetryPolicy::default()),
        }
    }

    pub fn bundled() -> Self {
        Self::new(load_corpus(BUNDLED_CORPUS).expect("bundled corpus is valid"))
    }

    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::new(load_corpus(&json)?))
    }

    pub fn with_capabilities(mut self, capabilities: AdapterCapabilities) -> Self {
        self.capabilities = capabilities;
        self
    }

    pub fn with_faults(self, faults: impl IntoIterator<Item = SourceError>) -> Self {
        self.faults.lock().expect("fault queue").extend(faults);
        self
    }

    pub fn with_resilience(mut self, resilience: ResilientClient) -> Self {
        self.resilience = resilience;
        self
    }

    pub fn records(&self) -> &[CandidateRecord] {
        &self.records
    }

    /// Number of attempts made so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    fn next_fault(&self) -> Option<SourceError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        self.faults.lock().expect("fault queue").pop_front()
    }

    fn lookup(&self, query: &AdapterQuery) -> Vec<CandidateRecord> {
        let wanted = title_tokens(&query.title);
        if wanted.is_empty() {
            return Vec::new();
        }
        self.records
            .iter()
            .zip(&self.tokens)
            .filter(|(_, tokens)| {
                let shared = wanted.intersection(tokens).count();
                shared > 0 && 2 * shared >= wanted.len().max(tokens.len())
            })
            .map(|(record, _)| record.clone())
            .take(query.limit)
            .collect()
    }
}

fn title_tokens(title: &str) -> BTreeSet<String> {
    normalize(title).tokens.into_iter().collect()
}

#[async_trait]
impl Source for FixtureSource {
    fn id(&self) -> SourceId {
        SourceId::Fixture
    }

    fn capabilities(&self) -> AdapterCapabilities {
        self.capabilities.clone()
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        self.resilience
            .run(|| async {
                match self.next_fault() {
                    Some(fault) => Err(fault),
                    None => Ok(self.lookup(query)),
                }
            })
            .await
    }

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        self.resilience
            .run(|| async {
                if let Some(fault) = self.next_fault() {
                    return Err(fault);
                }
                self.records
                    .iter()
                    .find(|r| r.native_id == native_id)
                    .cloned()
                    .ok_or_else(|| SourceError::NotFound(native_id.to_owned()))
            })
            .await
    }
}
