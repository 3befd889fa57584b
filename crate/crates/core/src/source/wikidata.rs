//! Wikidata entity search restricted to written works, enriched with
//! external identifiers from the entity data.

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde_json::Value;
use url::Url;

use super::http::json::{one_or_many, str_at};
use super::transport::HttpRequest;
use super::{HttpClient, Source, SourceError};
use crate::record::{AdapterQuery, CandidateRecord, IdentifierKind, MetadataField, SourceId};

/// `instance of` values accepted as written works.
const WRITTEN_WORK_TYPES: &[&str] = &[
    "Q571",      // book
    "Q7725634",  // literary work
    "Q47461344", // written work
    "Q8261",     // novel
    "Q149537",   // novella
    "Q49084",    // short story
    "Q1279564",  // short story collection
    "Q5185279",  // poem
    "Q12106333", // poetry collection
    "Q35760",    // essay
];

const AUTHOR: &str = "P50";

const IDENTIFIER_PROPERTIES: &[(&str, IdentifierKind)] = &[
    ("P212", IdentifierKind::Isbn),  // ISBN-13
    ("P957", IdentifierKind::Isbn),  // ISBN-10
    ("P1144", IdentifierKind::Lccn), // Library of Congress Control Number
    ("P243", IdentifierKind::OclcNumber),
    ("P214", IdentifierKind::ViafId),
];

pub struct WikidataSource {
    http: HttpClient,
    endpoint: Url,
    language: String,
}

impl WikidataSource {
    pub const DEFAULT_ENDPOINT: &'static str = "https://www.wikidata.org/w/api.php";

    pub fn new(http: HttpClient, endpoint: Url) -> Self {
        Self {
            http,
            endpoint,
            language: "en".to_owned(),
        }
    }

    fn api(&self, params: &[(&str, &str)]) -> HttpRequest {
        let mut url = self.endpoint.clone();
        {
            let mut pairs = url.query_pairs_mut();
            for (k, v) in params {
                pairs.append_pair(k, v);
            }
            pairs.append_pair("format", "json");
        }
        HttpRequest::get(url)
    }

    async fn entities(&self, ids: &[String], props: &str) -> Result<Value, SourceError> {
        let joined = ids.join("|");
        let request = self.api(&[
            ("action", "wbgetentities"),
            ("ids", &joined),
            ("props", props),
            ("languages", &self.language),
        ]);
        let payload: Value = self.http.get_json(&request).await?;
        match payload.get("entities") {
            Some(entities @ Value::Object(_)) => Ok(entities.clone()),
            _ => Err(SourceError::malformed("missing `entities` object", &payload.to_string())),
        }
    }

    async fn author_labels(&self, entities: &[&Value]) -> Result<BTreeMap<String, String>, SourceError> {
        let mut ids: Vec<String> = entities
            .iter()
            .flat_map(|e| item_claims(e, AUTHOR))
            .collect();
        ids.sort();
        ids.dedup();
        if ids.is_empty() {
            return Ok(BTreeMap::new());
        }
        let authors = self.entities(&ids, "labels").await?;
        Ok(ids
            .into_iter()
            .filter_map(|id| {
                let label = label(&authors[&id], &self.language)?;
                Some((id, label.to_owned()))
            })
            .collect())
    }

    async fn map_entities(&self, entities: Vec<&Value>) -> Result<Vec<CandidateRecord>, SourceError> {
        let authors = self.author_labels(&entities).await?;
        Ok(entities
            .into_iter()
            .filter_map(|e| map_entity(e, &authors, &self.language))
            .collect())
    }
}

fn label<'a>(entity: &'a Value, language: &str) -> Option<&'a str> {
    str_at(entity, &format!("/labels/{language}/value"))
        .or_else(|| entity.get("labels")?.as_object()?.values().find_map(|l| str_at(l, "/value")))
}

fn claim_values<'a>(entity: &'a Value, property: &str) -> impl Iterator<Item = &'a Value> {
    one_or_many(entity.pointer(&format!("/claims/{property}")))
        .into_iter()
        .filter_map(|claim| claim.pointer("/mainsnak/datavalue/value"))
}

fn item_claims(entity: &Value, property: &str) -> Vec<String> {
    claim_values(entity, property)
        .filter_map(|v| v.get("id").and_then(Value::as_str).map(str::to_owned))
        .collect()
}

pub(crate) fn is_written_work(entity: &Value) -> bool {
    item_claims(entity, "P31")
        .iter()
        .any(|t| WRITTEN_WORK_TYPES.contains(&t.as_str()))
}

pub(crate) fn map_entity(
    entity: &Value,
    authors: &BTreeMap<String, String>,
    language: &str,
) -> Option<CandidateRecord> {
    let qid = str_at(entity, "/id")?;
    let title = label(entity, language)?;
    let provenance = format!("https://www.wikidata.org/wiki/{qid}");

    let mut record = CandidateRecord::new(SourceId::Wikidata, qid, title, provenance);
    record.work_id = Some(qid.to_owned());
    record.add_identifier(IdentifierKind::WikidataQid, qid);
    record.contributors = item_claims(entity, AUTHOR)
        .iter()
        .filter_map(|id| authors.get(id).cloned())
        .collect();
    for (property, kind) in IDENTIFIER_PROPERTIES {
        for value in claim_values(entity, property).filter_map(Value::as_str) {
            record.add_identifier(*kind, value);
        }
    }
    if let Some(description) = str_at(entity, &format!("/descriptions/{language}/value")) {
        record.add_metadata(MetadataField::Description, description);
    }
    Some(record)
}

#[async_trait]
impl Source for WikidataSource {
    fn id(&self) -> SourceId {
        SourceId::Wikidata
    }

    async fn search(&self, query: &AdapterQuery) -> Result<Vec<CandidateRecord>, SourceError> {
        let limit = query.limit.min(50).to_string();
        let request = self.api(&[
            ("action", "wbsearchentities"),
            ("search", &query.title),
            ("language", &self.language),
            ("type", "item"),
            ("limit", &limit),
        ]);
        let payload: Value = self.http.get_json(&request).await?;
        let hits = payload
            .get("search")
            .and_then(Value::as_array)
            .ok_or_else(|| SourceError::malformed("missing `search` array", &payload.to_string()))?;
        let ids: Vec<String> = hits
            .iter()
            .filter_map(|h| str_at(h, "/id").map(str::to_owned))
            .collect();
        if ids.is_empty() {
            return Ok(Vec::new());
        }

        let entities = self.entities(&ids, "labels|descriptions|claims").await?;
        let works: Vec<&Value> = ids
            .iter()
            .filter_map(|id| entities.get(id))
            .filter(|e| is_written_work(e))
            .collect();
        self.map_entities(works).await
    }

    async fn fetch_by_id(&self, native_id: &str) -> Result<CandidateRecord, SourceError> {
        let entities = self
            .entities(&[native_id.to_owned()], "labels|descriptions|claims")
            .await?;
        let entity = entities
            .get(native_id)
            .filter(|e| e.get("missing").is_none())
            .ok_or_else(|| SourceError::NotFound(native_id.to_owned()))?;
        self.map_entities(vec![entity])
            .await?
            .pop()
            .ok_or_else(|| SourceError::malformed("entity without label", &entity.to_string()))
    }
}
