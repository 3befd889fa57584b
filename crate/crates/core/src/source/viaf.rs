//! VIAF name/title Work clusters via the SRU search endpoint.

use async_trait::async_trait;
use serde_json::Value;
use url::Url;

use super::http::json::{one_or_many, scalar, str_at};
use super::transport::HttpRequest;
use super::{HttpClient, Source, SourceError};
use crate::record::{AdapterQuery, CandidateRecord, IdentifierKind, SourceId};

pub struct ViafSource {
    http: HttpClient,
    endpoint: Url,
}

impl ViafSource {
    pub const DEFAULT_ENDPOINT: &'static str = "https://viaf.org/viaf/search";

    pub fn new(http: HttpClient, endpoint: Url) -> Self {
        Self { http, endpoint }
    }
}

pub(crate) fn map_search(payload: &Value) -> Result<Vec<CandidateRecord>, SourceError> {
    let response = payload
        .get("searchRetrieveResponse")
        .ok_or_else(|| SourceError::malformed("missing searchRetrieveResponse", &payload.to_string()))?;
    Ok(one_or_many(response.get("records"))
        .into_iter()
        .filter_map(|r| r.pointer("/record/recordData"))
        .filter_map(map_cluster)
        .collect())
}

/// Maps one cluster document (`recordData` in search results, or the body
/// of `/viaf/<id>/viaf.json`). Headings read "Name. | Title".
pub(crate) fn map_cluster(data: &Value) -> Option<CandidateRecord> {
    let viaf_id = data.get("viafID").and_then(scalar)?;
    let headings = one_or_many(data.pointer("/mainHeadings/data"));
    let heading = headings.first().and_then(|h| str_at(h, "/text"))?;
    let (name, title) = match heading.split_once('|') {
        Some((name, title)) => (Some(name.trim().trim_end_matches('.').trim()), title.trim()),
        None => (None, heading.trim()),
    };

    let provenance = format!("https://viaf.org/viaf/{viaf_id}");
    let mut record = CandidateRecord::new(SourceId::Viaf, viaf_id.clone(), title, provenance);
    record.contributors = name.filter(|n| !n.is_empty()).map(str::to_owned).into_iter().collect();
    record.work_id = Some(viaf_id.clone());
    record.add_identifier(IdentifierKind::ViafId, &viaf_id);
    for heading in headings {
        for sid in one_or_many(heading.pointer("/sources/sid")).into_iter().filter_map(scalar) {
            if let Some(lccn) = sid.strip_prefix("LC|") {
                record.add_identifier(IdentifierKind::Lccn, lccn.replace(' ', ""));
            }
        }
    }
    Some(record)
}

fn cql_phrase(term: &str) -> String {
    format!("\"{}\"", term.replace('"', " ").trim())
}

#[async_trait]
impl Source for ViafSource {
    fn id(&self) -> SourceId {
        SourceId::Viaf
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let mut cql = format!("local.uniformTitleWorks all {}", cql_phrase(&query.title));
        if let Some(name) = &query.contributor {
            cql.push_str(&format!(" and local.names all {}", cql_phrase(name)));
        }
        let mut url = self.endpoint.clone();
        url.query_pairs_mut()
            .append_pair("query", &cql)
            .append_pair("maximumRecords", &query.limit.to_string())
            .append_pair("httpAccept", "application/json");
        let payload: Value = self.http.get_json(&HttpRequest::get(url)).await?;
        map_search(&payload)
    }

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        let url = self
            .endpoint
            .join(&format!("{native_id}/viaf.json"))
            .map_err(|e| SourceError::malformed(e.to_string(), native_id))?;
        let payload: Value = self.http.get_json(&HttpRequest::get(url)).await?;
        map_cluster(&payload).ok_or_else(|| SourceError::malformed("cluster without id or heading", &payload.to_string()))
    }
}
