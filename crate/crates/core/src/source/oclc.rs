//! OCLC WorldCat Metadata API brief-bib search. Requires a bearer key.

use async_trait::async_trait;
use serde_json::Value;
use url::Url;

use super::http::json::{one_or_many, scalar, str_at, strings_at};
use super::transport::HttpRequest;
use super::{default_capabilities, AdapterCapabilities, HttpClient, Source, SourceError};
use crate::record::{AdapterQuery, CandidateRecord, IdentifierKind, MetadataField, SourceId};

pub const OCLC_KEY_ENV: &str = "OCLC_API_KEY";

pub struct OclcSource {
    http: HttpClient,
    endpoint: Url,
    key: Option<String>,
}

impl OclcSource {
    pub const DEFAULT_ENDPOINT: &'static str = "https://metadata.api.oclc.org/worldcat/search/brief-bibs";

    pub fn new(http: HttpClient, endpoint: Url, key: Option<String>) -> Self {
        let key = key.filter(|k| !k.trim().is_empty());
        Self { http, endpoint, key }
    }

    pub fn has_key(&self) -> bool {
        self.key.is_some()
    }

    fn request(&self, url: Url) -> Result<HttpRequest, SourceError> {
        let key = self.key.as_ref().ok_or(SourceError::MissingKey(SourceId::Oclc))?;
        Ok(HttpRequest::get(url)
            .header("Authorization", format!("Bearer {key}"))
            .header("Accept", "application/json"))
    }
}

pub(crate) fn map_brief_bibs(payload: &Value) -> Result<Vec<CandidateRecord>, SourceError> {
    if payload.get("numberOfRecords").is_none() {
        return Err(SourceError::malformed("missing numberOfRecords", &payload.to_string()));
    }
    Ok(one_or_many(payload.get("briefRecords"))
        .into_iter()
        .filter_map(map_brief)
        .collect())
}

pub(crate) fn map_brief(brief: &Value) -> Option<CandidateRecord> {
    let oclc = brief.get("oclcNumber").and_then(scalar)?;
    let title = str_at(brief, "/title")?;
    let provenance = format!("https://search.worldcat.org/title/{oclc}");

    let mut record = CandidateRecord::new(SourceId::Oclc, oclc.clone(), title, provenance);
    record.contributors = strings_at(brief, "/creator");
    record.work_id = brief.get("workId").and_then(scalar);
    record.add_identifier(IdentifierKind::OclcNumber, &oclc);
    let identifiers = [
        ("/mergedOclcNumbers", IdentifierKind::OclcNumber),
        ("/isbns", IdentifierKind::Isbn),
        ("/lccn", IdentifierKind::Lccn),
        ("/classification/dewey", IdentifierKind::Ddc),
    ];
    for (pointer, kind) in identifiers {
        for value in strings_at(brief, pointer) {
            record.add_identifier(kind, value);
        }
    }
    let metadata = [
        ("/language", MetadataField::Language),
        ("/date", MetadataField::EarliestPubDate),
        ("/subjects", MetadataField::Subjects),
        ("/genres", MetadataField::Genres),
    ];
    for (pointer, field) in metadata {
        for value in strings_at(brief, pointer) {
            record.add_metadata(field, value);
        }
    }
    Some(record)
}

fn phrase(term: &str) -> String {
    format!("\"{}\"", term.replace('"', " ").trim())
}

#[async_trait]
impl Source for OclcSource {
    fn id(&self) -> SourceId {
        SourceId::Oclc
    }

    fn capabilities(&self) -> AdapterCapabilities {
        default_capabilities(SourceId::Oclc)
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let mut q = format!("ti:{}", phrase(&query.title));
        if let Some(name) = &query.contributor {
            q.push_str(&format!(" AND au:{}", phrase(name)));
        }
        let mut url = self.endpoint.clone();
        url.query_pairs_mut()
            .append_pair("q", &q)
            .append_pair("limit", &query.limit.min(50).to_string());
        let payload: Value = self.http.get_json(&self.request(url)?).await?;
        map_brief_bibs(&payload)
    }

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        let mut url = self.endpoint.clone();
        url.path_segments_mut()
            .map_err(|_| SourceError::malformed("endpoint cannot be a base", self.endpoint.as_str()))?
            .push(native_id);
        let payload: Value = self.http.get_json(&self.request(url)?).await?;
        map_brief(&payload).ok_or_else(|| SourceError::malformed("brief bib without oclcNumber", &payload.to_string()))
    }
}
