//! Human include/exclude decisions on cluster members, persisted as JSON.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::cluster::WorkCluster;

pub const SESSION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub selected: bool,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurationSession {
    pub session_id: String,
    /// Keyed by `(cluster_id, native_id)`.
    pub decisions: BTreeMap<(String, String), Decision>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("`{native_id}` is not a member of cluster `{cluster_id}`")]
    UnknownMember { cluster_id: String, native_id: String },
    #[error("session file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("session file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("session schema_version {found:?} is not supported (expected {SESSION_SCHEMA_VERSION})")]
    SchemaVersion { found: Option<serde_json::Value> },
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    schema_version: u32,
    session_id: String,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    decisions: Vec<DecisionEntry>,
}

#[derive(Serialize, Deserialize)]
struct DecisionEntry {
    cluster_id: String,
    native_id: String,
    selected: bool,
    timestamp: DateTime<Utc>,
}

impl CurationSession {
    pub fn new(session_id: impl Into<String>) -> Self {
        let now = Utc::now();
        Self {
            session_id: session_id.into(),
            decisions: BTreeMap::new(),
            created_at: now,
            updated_at: now,
        }
    }

    /// Records a selection for a member of `cluster`; the latest call wins.
    pub fn toggle_member(
        &mut self,
        cluster: &WorkCluster,
        native_id: &str,
        selected: bool,
    ) -> Result<(), SessionError> {
        if cluster.member(native_id).is_none() {
            return Err(SessionError::UnknownMember {
                cluster_id: cluster.cluster_id.clone(),
                native_id: native_id.to_owned(),
            });
        }
        let timestamp = Utc::now().max(self.updated_at);
        self.decisions.insert(
            (cluster.cluster_id.clone(), native_id.to_owned()),
            Decision { selected, timestamp },
        );
        self.updated_at = timestamp;
        Ok(())
    }

    pub fn selection(&self, cluster_id: &str, native_id: &str) -> Option<bool> {
        self.decisions
            .get(&(cluster_id.to_owned(), native_id.to_owned()))
            .map(|d| d.selected)
    }

    /// Overrides member defaults with recorded decisions.
    pub fn apply(&self, cluster: &mut WorkCluster) {
        let cluster_id = cluster.cluster_id.clone();
        for member in &mut cluster.members {
            if let Some(selected) = self.selection(&cluster_id, &member.candidate.native_id) {
                member.selected = selected;
            }
        }
    }

    pub fn to_json(&self) -> Result<String, SessionError> {
        let file = SessionFile {
            schema_version: SESSION_SCHEMA_VERSION,
            session_id: self.session_id.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
            decisions: self
                .decisions
                .iter()
                .map(|((cluster_id, native_id), d)| DecisionEntry {
                    cluster_id: cluster_id.clone(),
                    native_id: native_id.clone(),
                    selected: d.selected,
                    timestamp: d.timestamp,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self, SessionError> {
        let raw: serde_json::Value = serde_json::from_str(json)?;
        let version = raw.get("schema_version");
        if version.and_then(serde_json::Value::as_u64) != Some(u64::from(SESSION_SCHEMA_VERSION)) {
            return Err(SessionError::SchemaVersion {
                found: version.cloned(),
            });
        }
        let file: SessionFile = serde_json::from_value(raw)?;
        Ok(Self {
            session_id: file.session_id,
            decisions: file
                .decisions
                .into_iter()
                .map(|d| {
                    (
                        (d.cluster_id, d.native_id),
                        Decision {
                            selected: d.selected,
                            timestamp: d.timestamp,
                        },
                    )
                })
                .collect(),
            created_at: file.created_at,
            updated_at: file.updated_at,
        })
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn persist(&self, path: &Path) -> Result<(), SessionError> {
        let io = |source| SessionError::Io {
            path: path.display().to_string(),
            source,
        };
        let json = self.to_json()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(json.as_bytes()).map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let json = std::fs::read_to_string(path).map_err(|source| SessionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }
}
