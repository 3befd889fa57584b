//! Library of Congress Work search over the id.loc.gov suggest service.

use async_trait::async_trait;
use serde_json::Value;
use url::Url;

use super::http::json::{str_at, strings_at};
use super::transport::HttpRequest;
use super::{HttpClient, Source, SourceError};
use crate::record::{AdapterQuery, CandidateRecord, IdentifierKind, MetadataField, SourceId};

pub struct LocSource {
    http: HttpClient,
    endpoint: Url,
}

impl LocSource {
    pub const DEFAULT_ENDPOINT: &'static str = "https://id.loc.gov/resources/works/suggest2";

    pub fn new(http: HttpClient, endpoint: Url) -> Self {
        Self { http, endpoint }
    }

    fn request(&self, q: &str, count: usize) -> HttpRequest {
        let mut url = self.endpoint.clone();
        url.query_pairs_mut()
            .append_pair("q", q)
            .append_pair("searchtype", "keyword")
            .append_pair("count", &count.to_string());
        HttpRequest::get(url)
    }

    async fn hits(&self, q: &str, count: usize) -> Result<Vec<CandidateRecord>, SourceError> {
        let payload: Value = self.http.get_json(&self.request(q, count)).await?;
        map_suggest(&payload)
    }
}

/// Maps a suggest2 response. The heading label has the form
/// "Name. Title" (or "Name, dates Title"); the contributor prefix is
/// stripped to recover the title.
pub(crate) fn map_suggest(payload: &Value) -> Result<Vec<CandidateRecord>, SourceError> {
    let hits = payload
        .get("hits")
        .and_then(Value::as_array)
        .ok_or_else(|| SourceError::malformed("missing `hits` array", &payload.to_string()))?;
    Ok(hits.iter().filter_map(map_hit).collect())
}

fn map_hit(hit: &Value) -> Option<CandidateRecord> {
    let uri = str_at(hit, "/uri")?;
    let native_id = uri.trim_end_matches('/').rsplit('/').next()?.to_owned();
    let label = str_at(hit, "/aLabel").or_else(|| str_at(hit, "/suggestLabel"))?;
    let contributors = strings_at(hit, "/more/contributors");
    let title = strip_name_prefix(label, &contributors);

    let provenance = format!("{}.html", uri.replace("http://", "https://"));
    let mut record = CandidateRecord::new(SourceId::Loc, native_id, title, provenance);
    record.contributors = contributors;
    record.work_id = Some(uri.to_owned());
    record.add_identifier(IdentifierKind::LcWorkUri, uri);
    for (key, kind) in [
        ("isbn", IdentifierKind::Isbn),
        ("lccn", IdentifierKind::Lccn),
        ("oclcnum", IdentifierKind::OclcNumber),
    ] {
        for value in strings_at(hit, &format!("/more/identifiers/{key}")) {
            record.add_identifier(kind, value);
        }
    }
    for value in strings_at(hit, "/more/subjects") {
        record.add_metadata(MetadataField::Subjects, value);
    }
    for value in strings_at(hit, "/more/genreForms") {
        record.add_metadata(MetadataField::Genres, value);
    }
    Some(record)
}

fn strip_name_prefix(label: &str, contributors: &[String]) -> String {
    contributors
        .iter()
        .find_map(|name| label.strip_prefix(name.trim_end_matches('.')))
        .map(|rest| rest.trim_start_matches(['.', ',', ' ']))
        .filter(|rest| !rest.is_empty())
        .unwrap_or(label)
        .to_owned()
}

#[async_trait]
impl Source for LocSource {
    fn id(&self) -> SourceId {
        SourceId::Loc
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let q = match &query.contributor {
            Some(name) => format!("{} {}", query.title, name),
            None => query.title.clone(),
        };
        self.hits(&q, query.limit).await
    }

    /// Keyword search on the resource token, keeping the hit whose URI ends
    /// with it.
    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        self.hits(native_id, 10)
            .await?
            .into_iter()
            .find(|r| r.native_id == native_id)
            .ok_or_else(|| SourceError::NotFound(native_id.to_owned()))
    }
}
