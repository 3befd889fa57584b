//! Manifest and reconcile endpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use axum::extract::rejection::FormRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use axum::{Form, Json};
use bibrecon_core::reconcile::reconcile as reconcile_one;
use bibrecon_core::record::AdapterQuery;
use bibrecon_core::source::{SearchLevel, SourceHandle};
use futures::stream::{self, StreamExt};
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::error::ApiError;
use crate::extension;
use crate::manifest::{Manifest, TypeRef};
use crate::state::ServiceState;

/// Queries handled concurrently within one batch.
const BATCH_CONCURRENCY: usize = 8;

#[derive(Debug, Default, Deserialize)]
pub(crate) struct ServiceParams {
    queries: Option<String>,
    extend: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReconQuery {
    pub query: String,
    #[serde(default, rename = "type")]
    pub kind: Option<Value>,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub properties: Vec<PropertyValue>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PropertyValue {
    pub pid: String,
    pub v: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconResult {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub types: Vec<TypeRef>,
    pub score: u8,
    #[serde(rename = "match")]
    pub is_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultList {
    pub result: Vec<ReconResult>,
}

/// A keyed batch; duplicate keys are rejected rather than silently merged.
struct Batch(BTreeMap<String, ReconQuery>);

impl<'de> Deserialize<'de> for Batch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BatchVisitor;

        impl<'de> Visitor<'de> for BatchVisitor {
            type Value = Batch;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of keyed queries")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Batch, A::Error> {
                let mut out = BTreeMap::new();
                while let Some((key, query)) = map.next_entry::<String, ReconQuery>()? {
                    if out.contains_key(&key) {
                        return Err(serde::de::Error::custom(format!("duplicate query key `{key}`")));
                    }
                    out.insert(key, query);
                }
                Ok(Batch(out))
            }
        }

        deserializer.deserialize_map(BatchVisitor)
    }
}

/// Parses and validates a `queries` payload. Any invalid query rejects the
/// whole batch; unknown property ids are only logged.
pub fn parse_queries(raw: &str) -> Result<BTreeMap<String, AdapterQuery>, ApiError> {
    let Batch(batch) =
        serde_json::from_str(raw).map_err(|e| ApiError::BadRequest(format!("malformed queries: {e}")))?;
    batch
        .into_iter()
        .map(|(key, q)| {
            let query = to_adapter_query(&key, q)?;
            Ok((key, query))
        })
        .collect()
}

fn to_adapter_query(key: &str, q: ReconQuery) -> Result<AdapterQuery, ApiError> {
    let bad = |e: &dyn fmt::Display| ApiError::BadRequest(format!("query `{key}`: {e}"));
    let mut query = AdapterQuery::new(q.query).map_err(|e| bad(&e))?;
    if let Some(limit) = q.limit {
        query = query.with_limit(limit).map_err(|e| bad(&e))?;
    }
    for property in q.properties {
        let Some(value) = property_text(&property.v) else {
            warn!(key, pid = %property.pid, "ignoring property with a non-text value");
            continue;
        };
        match property.pid.as_str() {
            "contributor" => query = query.with_contributor(value),
            "date" => query = query.with_date(value),
            other => warn!(key, pid = other, "ignoring unknown property"),
        }
    }
    Ok(query)
}

/// Text of a property value: a string or number, the first of a list, or
/// the `name`/`id` of an entity reference.
fn property_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => items.iter().find_map(property_text),
        Value::Object(map) => map.get("name").or_else(|| map.get("id")).and_then(property_text),
        _ => None,
    }
}

fn result_type(handle: &SourceHandle) -> TypeRef {
    match handle.capabilities().search_level {
        SearchLevel::Work => TypeRef::work(),
        SearchLevel::Manifestation => TypeRef::manifestation(),
    }
}

/// Runs a validated batch. A failing query yields an empty list for its
/// key; the response key set always equals the request key set.
pub(crate) async fn run_batch(
    state: &ServiceState,
    handle: &SourceHandle,
    queries: BTreeMap<String, AdapterQuery>,
) -> BTreeMap<String, ResultList> {
    let kind = result_type(handle);
    stream::iter(queries)
        .map(|(key, query)| {
            let kind = kind.clone();
            async move {
                let result = match reconcile_one(handle, &query, &state.matching, state.clustering).await {
                    Ok(outcome) => {
                        let results = outcome
                            .ranked
                            .iter()
                            .take(query.limit)
                            .map(|s| ReconResult {
                                id: s.candidate.global_id().to_string(),
                                name: s.candidate.title.clone(),
                                types: vec![kind.clone()],
                                score: s.combined_score,
                                is_match: s.is_match,
                            })
                            .collect();
                        state.remember(outcome.cluster, outcome.ranked.into_iter().map(|s| s.candidate));
                        results
                    }
                    Err(e) => {
                        warn!(source = handle.label(), key, error = %e, "query failed; returning no candidates");
                        Vec::new()
                    }
                };
                (key, ResultList { result })
            }
        })
        .buffer_unordered(BATCH_CONCURRENCY)
        .collect()
        .await
}

fn base_url(headers: &HeaderMap, source: &str) -> String {
    let host = headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .unwrap_or("localhost");
    format!("http://{host}/api/{source}")
}

fn params(form: Result<Form<ServiceParams>, FormRejection>) -> Result<ServiceParams, ApiError> {
    form.map(|Form(p)| p)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

/// The service root answers with the manifest, or dispatches a `queries`
/// or `extend` parameter the way OpenRefine sends them.
pub(crate) async fn service_root(
    State(state): State<Arc<ServiceState>>,
    Path(source): Path<String>,
    headers: HeaderMap,
    form: Result<Form<ServiceParams>, FormRejection>,
) -> Result<Response, ApiError> {
    let handle = state.mount(&source)?;
    let params = params(form)?;
    if let Some(raw) = params.queries {
        let queries = parse_queries(&raw)?;
        return Ok(Json(run_batch(&state, handle, queries).await).into_response());
    }
    if let Some(raw) = params.extend {
        return extension::run(&state, handle, &raw).await.map(IntoResponse::into_response);
    }
    Ok(Json(Manifest::new(handle, &base_url(&headers, &source))).into_response())
}

pub(crate) async fn reconcile(
    State(state): State<Arc<ServiceState>>,
    Path(source): Path<String>,
    form: Result<Form<ServiceParams>, FormRejection>,
) -> Result<Json<BTreeMap<String, ResultList>>, ApiError> {
    let handle = state.mount(&source)?;
    let raw = params(form)?
        .queries
        .ok_or_else(|| ApiError::BadRequest("missing `queries` parameter".into()))?;
    let queries = parse_queries(&raw)?;
    Ok(Json(run_batch(&state, handle, queries).await))
}
