//! Cluster review endpoints for the UI.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::Json;
use bibrecon_core::cluster::WorkCluster;
use bibrecon_core::record::{CandidateRecord, GlobalId};
use bibrecon_core::source::SourceError;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::ServiceState;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Selection {
    selected: bool,
}

#[derive(Debug, Serialize)]
pub(crate) struct ClusterSummary {
    cluster_id: String,
    source: String,
    title: String,
    members: usize,
}

pub(crate) async fn list_clusters(State(state): State<Arc<ServiceState>>) -> Json<Vec<ClusterSummary>> {
    Json(
        state
            .clusters()
            .into_iter()
            .map(|c| ClusterSummary {
                source: c.source.to_string(),
                title: c.anchor.candidate.title.clone(),
                members: c.members.len(),
                cluster_id: c.cluster_id,
            })
            .collect(),
    )
}

pub(crate) async fn get_cluster(
    State(state): State<Arc<ServiceState>>,
    Path(cluster_id): Path<String>,
) -> Result<Json<WorkCluster>, ApiError> {
    state.cluster(&cluster_id).await.map(Json)
}

pub(crate) async fn set_member(
    State(state): State<Arc<ServiceState>>,
    Path((cluster_id, native_id)): Path<(String, String)>,
    body: Bytes,
) -> Result<Json<WorkCluster>, ApiError> {
    let Selection { selected } = serde_json::from_slice(&body)
        .map_err(|e| ApiError::BadRequest(format!("body must be {{\"selected\": bool}}: {e}")))?;
    state.set_member(&cluster_id, &native_id, selected).await.map(Json)
}

pub(crate) async fn get_record(
    State(state): State<Arc<ServiceState>>,
    Path(global_id): Path<String>,
) -> Result<Json<CandidateRecord>, ApiError> {
    let id: GlobalId = global_id
        .parse()
        .map_err(|e| ApiError::BadRequest(format!("{e}")))?;
    state.record(&id).await.map(Json).map_err(|e| match e {
        SourceError::NotFound(_) | SourceError::UnknownSource(_) => ApiError::NotFound(e.to_string()),
        other => ApiError::Upstream(other.to_string()),
    })
}
