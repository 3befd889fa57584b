use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use bibrecon_core::cluster::WorkCluster;
use bibrecon_core::config::ServiceConfig;
use bibrecon_core::matching::MatchConfig;
use bibrecon_core::record::{CandidateRecord, GlobalId, SourceId};
use bibrecon_core::session::{CurationSession, SessionError};
use bibrecon_core::source::{SourceError, SourceHandle, SourceRegistry};
use tokio::sync::Mutex;

use crate::error::ApiError;

/// File name of the curation session inside the session directory.
pub const SESSION_FILE: &str = "session.json";

/// Shared across requests: sources, match settings, and the caches the
/// curation API reads from.
pub struct ServiceState {
    registry: SourceRegistry,
    pub(crate) matching: MatchConfig,
    pub(crate) clustering: bool,
    clusters: RwLock<BTreeMap<String, WorkCluster>>,
    records: RwLock<HashMap<GlobalId, CandidateRecord>>,
    session: Mutex<CurationSession>,
    session_path: PathBuf,
}

impl ServiceState {
    /// Loads the session at `session_path` if it exists, otherwise starts
    /// an empty one that is written on the first curation decision.
    pub fn new(
        registry: SourceRegistry,
        matching: MatchConfig,
        clustering: bool,
        session_path: impl Into<PathBuf>,
    ) -> Result<Self, SessionError> {
        let session_path = session_path.into();
        let session = if session_path.exists() {
            CurationSession::load(&session_path)?
        } else {
            CurationSession::new("default")
        };
        Ok(Self {
            registry,
            matching,
            clustering,
            clusters: RwLock::default(),
            records: RwLock::default(),
            session: Mutex::new(session),
            session_path,
        })
    }

    pub fn from_config(config: &ServiceConfig, registry: SourceRegistry) -> Result<Self, SessionError> {
        Self::new(
            registry,
            config.matching.clone(),
            config.clustering,
            config.session_dir.join(SESSION_FILE),
        )
    }

    pub fn registry(&self) -> &SourceRegistry {
        &self.registry
    }

    pub fn session_path(&self) -> &Path {
        &self.session_path
    }

    /// The handle mounted at `/api/<token>/`.
    pub(crate) fn mount(&self, token: &str) -> Result<&SourceHandle, ApiError> {
        let id: SourceId = token
            .parse()
            .map_err(|_| ApiError::NotFound(format!("no service mounted at `{token}`")))?;
        self.registry
            .get(id)
            .map_err(|_| ApiError::NotFound(format!("source `{token}` is not enabled")))
    }

    pub(crate) fn remember(&self, cluster: Option<WorkCluster>, records: impl IntoIterator<Item = CandidateRecord>) {
        if let Some(cluster) = cluster {
            self.clusters
                .write()
                .expect("cluster cache poisoned")
                .insert(cluster.cluster_id.clone(), cluster);
        }
        let mut cache = self.records.write().expect("record cache poisoned");
        for record in records {
            cache.insert(record.global_id(), record);
        }
    }

    /// The cached copy of a record when one exists, otherwise a fresh fetch.
    pub(crate) async fn record(&self, id: &GlobalId) -> Result<CandidateRecord, SourceError> {
        if let Some(record) = self.records.read().expect("record cache poisoned").get(id) {
            return Ok(record.clone());
        }
        let record = self.registry.fetch(id).await?;
        self.remember(None, [record.clone()]);
        Ok(record)
    }

    pub(crate) fn clusters(&self) -> Vec<WorkCluster> {
        self.clusters.read().expect("cluster cache poisoned").values().cloned().collect()
    }

    fn raw_cluster(&self, cluster_id: &str) -> Result<WorkCluster, ApiError> {
        self.clusters
            .read()
            .expect("cluster cache poisoned")
            .get(cluster_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown cluster `{cluster_id}`")))
    }

    /// A cached cluster with the session's decisions applied.
    pub async fn cluster(&self, cluster_id: &str) -> Result<WorkCluster, ApiError> {
        let mut cluster = self.raw_cluster(cluster_id)?;
        self.session.lock().await.apply(&mut cluster);
        Ok(cluster)
    }

    /// Records and persists one selection. The in-memory session only
    /// changes once the file write has succeeded.
    pub async fn set_member(&self, cluster_id: &str, native_id: &str, selected: bool) -> Result<WorkCluster, ApiError> {
        let mut cluster = self.raw_cluster(cluster_id)?;
        let mut session = self.session.lock().await;
        let mut next = session.clone();
        next.toggle_member(&cluster, native_id, selected).map_err(|e| match e {
            SessionError::UnknownMember { .. } => ApiError::NotFound(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        })?;
        next.persist(&self.session_path)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        *session = next;
        session.apply(&mut cluster);
        Ok(cluster)
    }
}
