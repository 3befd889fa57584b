//! Data extension: identifier and metadata columns for reconciled ids.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::FormRejection;
use axum::extract::{Path, Query, State};
use axum::{Form, Json};
use bibrecon_core::extend::PropertySettings;
use bibrecon_core::record::{CandidateRecord, FieldName, GlobalId};
use bibrecon_core::source::SourceHandle;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::warn;

use crate::error::ApiError;
use crate::manifest::TypeRef;
use crate::state::ServiceState;

const FETCH_CONCURRENCY: usize = 8;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendRequest {
    pub ids: Vec<String>,
    pub properties: Vec<PropertyRequest>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyRequest {
    pub id: String,
    #[serde(default)]
    pub settings: PropertySettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendResponse {
    pub meta: Vec<PropertyMeta>,
    /// Input id → property id → cells.
    pub rows: BTreeMap<String, BTreeMap<String, Vec<Cell>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyMeta {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub str: String,
}

#[derive(Debug, Deserialize)]
pub(crate) struct ExtendParams {
    extend: Option<String>,
}

#[derive(Debug, Deserialize)]
pub(crate) struct ProposeParams {
    #[serde(rename = "type")]
    kind: Option<String>,
}

/// Validates the request against the source's extendable fields before
/// fetching anything. Ids that fail to resolve get empty cells.
pub(crate) async fn run(state: &ServiceState, handle: &SourceHandle, raw: &str) -> Result<Json<ExtendResponse>, ApiError> {
    let request: ExtendRequest =
        serde_json::from_str(raw).map_err(|e| ApiError::BadRequest(format!("malformed extend request: {e}")))?;
    let capabilities = handle.capabilities();
    let mut fields = Vec::with_capacity(request.properties.len());
    for property in &request.properties {
        let field: FieldName = property
            .id
            .parse()
            .ok()
            .filter(|f| capabilities.can_extend(*f))
            .ok_or_else(|| ApiError::BadRequest(format!("unknown property `{}` for {}", property.id, handle.label())))?;
        property
            .settings
            .validate()
            .map_err(|e| ApiError::BadRequest(format!("property `{}`: {e}", property.id)))?;
        fields.push((field, &property.settings));
    }

    let records: Vec<(String, Option<CandidateRecord>)> = stream::iter(request.ids.iter().cloned())
        .map(|raw_id| async move {
            let record = match raw_id.parse::<GlobalId>() {
                Ok(id) if id.source == handle.id() => match state.record(&id).await {
                    Ok(record) => Some(record),
                    Err(e) => {
                        warn!(id = %raw_id, error = %e, "extend: record unavailable");
                        None
                    }
                },
                _ => {
                    warn!(id = %raw_id, source = handle.label(), "extend: id does not belong to this source");
                    None
                }
            };
            (raw_id, record)
        })
        .buffered(FETCH_CONCURRENCY)
        .collect()
        .await;

    let rows = records
        .into_iter()
        .map(|(raw_id, record)| {
            let cells = fields
                .iter()
                .map(|(field, settings)| {
                    let values = record.as_ref().map(|r| r.field_values(*field)).unwrap_or_default();
                    let cells = settings.render(values).into_iter().map(|str| Cell { str }).collect();
                    (field.as_str().to_owned(), cells)
                })
                .collect();
            (raw_id, cells)
        })
        .collect();
    let meta = fields
        .iter()
        .map(|(field, _)| PropertyMeta {
            id: field.as_str().to_owned(),
            name: field.label().to_owned(),
        })
        .collect();
    Ok(Json(ExtendResponse { meta, rows }))
}

pub(crate) async fn extend(
    State(state): State<Arc<ServiceState>>,
    Path(source): Path<String>,
    form: Result<Form<ExtendParams>, FormRejection>,
) -> Result<Json<ExtendResponse>, ApiError> {
    let handle = state.mount(&source)?;
    let Form(params) = form.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let raw = params
        .extend
        .ok_or_else(|| ApiError::BadRequest("missing `extend` parameter".into()))?;
    run(&state, handle, &raw).await
}

pub(crate) async fn propose(
    State(state): State<Arc<ServiceState>>,
    Path(source): Path<String>,
    Query(params): Query<ProposeParams>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = state.mount(&source)?;
    let kind = params.kind.unwrap_or_else(|| TypeRef::work().id);
    let properties: Vec<PropertyMeta> = handle
        .capabilities()
        .extend_fields
        .into_iter()
        .map(|f| PropertyMeta {
            id: f.as_str().to_owned(),
            name: f.label().to_owned(),
        })
        .collect();
    Ok(Json(json!({ "type": kind, "properties": properties })))
}
