//! Google Books volumes API (Manifestation-level, no Work ids).

use async_trait::async_trait;
use serde_json::Value;
use url::Url;

use super::http::json::{one_or_many, scalar, str_at, strings_at};
use super::transport::HttpRequest;
use super::{HttpClient, Source, SourceError};
use crate::record::{AdapterQuery, CandidateRecord, IdentifierKind, MetadataField, SourceId};

/// The volumes endpoint caps `maxResults` at 40.
const MAX_RESULTS: usize = 40;

pub struct GoogleBooksSource {
    http: HttpClient,
    endpoint: Url,
    key: Option<String>,
}

impl GoogleBooksSource {
    pub const DEFAULT_ENDPOINT: &'static str = "https://www.googleapis.com/books/v1/volumes";

    pub fn new(http: HttpClient, endpoint: Url, key: Option<String>) -> Self {
        Self { http, endpoint, key }
    }

    fn with_key(&self, mut url: Url) -> Url {
        if let Some(key) = &self.key {
            url.query_pairs_mut().append_pair("key", key);
        }
        url
    }
}

pub(crate) fn map_volumes(payload: &Value) -> Result<Vec<CandidateRecord>, SourceError> {
    if payload.get("kind").and_then(Value::as_str) != Some("books#volumes") {
        return Err(SourceError::malformed("not a volumes listing", &payload.to_string()));
    }
    // `items` is absent when totalItems is 0.
    Ok(one_or_many(payload.get("items"))
        .into_iter()
        .filter_map(map_volume)
        .collect())
}

pub(crate) fn map_volume(item: &Value) -> Option<CandidateRecord> {
    let id = str_at(item, "/id")?;
    let info = item.get("volumeInfo")?;
    let title = str_at(info, "/title")?;
    let provenance = str_at(info, "/canonicalVolumeLink")
        .or_else(|| str_at(info, "/infoLink"))
        .map(str::to_owned)
        .unwrap_or_else(|| format!("https://books.google.com/books?id={id}"));

    let mut record = CandidateRecord::new(SourceId::GoogleBooks, id, title, provenance);
    record.contributors = strings_at(info, "/authors");
    for ident in one_or_many(info.get("industryIdentifiers")) {
        let kind = ident.get("type").and_then(Value::as_str);
        if matches!(kind, Some("ISBN_10" | "ISBN_13")) {
            if let Some(value) = ident.get("identifier").and_then(scalar) {
                record.add_identifier(IdentifierKind::Isbn, value);
            }
        }
    }
    let fields = [
        ("/description", MetadataField::Description),
        ("/language", MetadataField::Language),
        ("/pageCount", MetadataField::PageCount),
        ("/publishedDate", MetadataField::EarliestPubDate),
        ("/imageLinks/thumbnail", MetadataField::ThumbnailUrl),
    ];
    for (pointer, field) in fields {
        for value in strings_at(info, pointer) {
            record.add_metadata(field, value);
        }
    }
    for value in strings_at(info, "/categories") {
        record.add_metadata(MetadataField::Subjects, value);
    }
    Some(record)
}

fn quote(term: &str) -> String {
    let cleaned = term.replace('"', " ");
    format!("\"{}\"", cleaned.trim())
}

#[async_trait]
impl Source for GoogleBooksSource {
    fn id(&self) -> SourceId {
        SourceId::GoogleBooks
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let mut q = format!("intitle:{}", quote(&query.title));
        if let Some(name) = &query.contributor {
            q.push_str(&format!(" inauthor:{}", quote(name)));
        }
        let mut url = self.endpoint.clone();
        url.query_pairs_mut()
            .append_pair("q", &q)
            .append_pair("maxResults", &query.limit.min(MAX_RESULTS).to_string())
            .append_pair("printType", "books");
        let payload: Value = self.http.get_json(&HttpRequest::get(self.with_key(url))).await?;
        map_volumes(&payload)
    }

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        let mut url = self.endpoint.clone();
        url.path_segments_mut()
            .map_err(|_| SourceError::malformed("endpoint cannot be a base", self.endpoint.as_str()))?
            .push(native_id);
        let payload: Value = self.http.get_json(&HttpRequest::get(self.with_key(url))).await?;
        map_volume(&payload).ok_or_else(|| SourceError::malformed("volume without id or title", &payload.to_string()))
    }
}
