//! Source-neutral bibliographic records and queries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceId {
    Loc,
    GoogleBooks,
    Viaf,
    Oclc,
    Wikidata,
    HathiTrust,
    Fixture,
}

impl SourceId {
    pub const ALL: [SourceId; 7] = [
        SourceId::Loc,
        SourceId::GoogleBooks,
        SourceId::Viaf,
        SourceId::Oclc,
        SourceId::Wikidata,
        SourceId::HathiTrust,
        SourceId::Fixture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceId::Loc => "loc",
            SourceId::GoogleBooks => "googlebooks",
            SourceId::Viaf => "viaf",
            SourceId::Oclc => "oclc",
            SourceId::Wikidata => "wikidata",
            SourceId::HathiTrust => "hathitrust",
            SourceId::Fixture => "fixture",
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown source `{0}`")]
pub struct UnknownSource(pub String);

impl FromStr for SourceId {
    type Err = UnknownSource;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| UnknownSource(s.to_owned()))
    }
}

/// Persistent identifier families carried by a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifierKind {
    Isbn,
    Lccn,
    OclcNumber,
    ViafId,
    HtVolumeId,
    LcWorkUri,
    WikidataQid,
    Ddc,
}

/// Descriptive fields beyond title and contributors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataField {
    Subjects,
    Genres,
    Description,
    Language,
    PageCount,
    EarliestPubDate,
    LatestPubDate,
    ThumbnailUrl,
}

/// Any field a data-extension request may name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldName {
    Identifier(IdentifierKind),
    Metadata(MetadataField),
}

impl IdentifierKind {
    pub const ALL: [IdentifierKind; 8] = [
        IdentifierKind::Isbn,
        IdentifierKind::Lccn,
        IdentifierKind::OclcNumber,
        IdentifierKind::ViafId,
        IdentifierKind::HtVolumeId,
        IdentifierKind::LcWorkUri,
        IdentifierKind::WikidataQid,
        IdentifierKind::Ddc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentifierKind::Isbn => "isbn",
            IdentifierKind::Lccn => "lccn",
            IdentifierKind::OclcNumber => "oclc_number",
            IdentifierKind::ViafId => "viaf_id",
            IdentifierKind::HtVolumeId => "ht_volume_id",
            IdentifierKind::LcWorkUri => "lc_work_uri",
            IdentifierKind::WikidataQid => "wikidata_qid",
            IdentifierKind::Ddc => "ddc",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IdentifierKind::Isbn => "ISBN",
            IdentifierKind::Lccn => "LCCN",
            IdentifierKind::OclcNumber => "OCLC number",
            IdentifierKind::ViafId => "VIAF ID",
            IdentifierKind::HtVolumeId => "HathiTrust volume ID",
            IdentifierKind::LcWorkUri => "LC Work URI",
            IdentifierKind::WikidataQid => "Wikidata QID",
            IdentifierKind::Ddc => "Dewey (DDC)",
        }
    }
}

impl MetadataField {
    pub const ALL: [MetadataField; 8] = [
        MetadataField::Subjects,
        MetadataField::Genres,
        MetadataField::Description,
        MetadataField::Language,
        MetadataField::PageCount,
        MetadataField::EarliestPubDate,
        MetadataField::LatestPubDate,
        MetadataField::ThumbnailUrl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetadataField::Subjects => "subjects",
            MetadataField::Genres => "genres",
            MetadataField::Description => "description",
            MetadataField::Language => "language",
            MetadataField::PageCount => "page_count",
            MetadataField::EarliestPubDate => "earliest_pub_date",
            MetadataField::LatestPubDate => "latest_pub_date",
            MetadataField::ThumbnailUrl => "thumbnail_url",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetadataField::Subjects => "Subject headings",
            MetadataField::Genres => "Genres",
            MetadataField::Description => "Description",
            MetadataField::Language => "Language",
            MetadataField::PageCount => "Page count",
            MetadataField::EarliestPubDate => "Earliest publication date",
            MetadataField::LatestPubDate => "Latest publication date",
            MetadataField::ThumbnailUrl => "Thumbnail",
        }
    }
}

impl FieldName {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldName::Identifier(kind) => kind.as_str(),
            FieldName::Metadata(field) => field.as_str(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FieldName::Identifier(kind) => kind.label(),
            FieldName::Metadata(field) => field.label(),
        }
    }

    pub fn all() -> impl Iterator<Item = FieldName> {
        IdentifierKind::ALL
            .into_iter()
            .map(FieldName::Identifier)
            .chain(MetadataField::ALL.into_iter().map(FieldName::Metadata))
    }
}

impl FromStr for FieldName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldName::all()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| s.to_owned())
    }
}

pub type Identifiers = BTreeMap<IdentifierKind, Vec<String>>;
pub type Metadata = BTreeMap<MetadataField, Vec<String>>;

/// One record as returned by a bibliographic source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub source: SourceId,
    pub native_id: String,
    pub title: String,
    #[serde(default)]
    pub contributors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_id: Option<String>,
    #[serde(default)]
    pub identifiers: Identifiers,
    #[serde(default, deserialize_with = "lenient_metadata")]
    pub metadata: Metadata,
    pub provenance_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("record has an empty native id")]
    EmptyNativeId,
    #[error("record {0} has an empty provenance url")]
    EmptyProvenance(String),
    #[error("record {id} has an empty {kind:?} value")]
    EmptyIdentifier { id: String, kind: IdentifierKind },
}

impl CandidateRecord {
    pub fn new(
        source: SourceId,
        native_id: impl Into<String>,
        title: impl Into<String>,
        provenance_url: impl Into<String>,
    ) -> Self {
        Self {
            source,
            native_id: native_id.into(),
            title: title.into(),
            contributors: Vec::new(),
            work_id: None,
            identifiers: Identifiers::new(),
            metadata: Metadata::new(),
            provenance_url: provenance_url.into(),
        }
    }

    pub fn global_id(&self) -> GlobalId {
        GlobalId::new(self.source, self.native_id.clone())
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.native_id.trim().is_empty() {
            return Err(RecordError::EmptyNativeId);
        }
        if self.provenance_url.trim().is_empty() {
            return Err(RecordError::EmptyProvenance(self.native_id.clone()));
        }
        for (kind, values) in &self.identifiers {
            if values.iter().any(|v| v.trim().is_empty()) {
                return Err(RecordError::EmptyIdentifier {
                    id: self.native_id.clone(),
                    kind: *kind,
                });
            }
        }
        Ok(())
    }

    /// Appends a trimmed identifier, skipping blanks and duplicates.
    pub fn add_identifier(&mut self, kind: IdentifierKind, value: impl AsRef<str>) {
        push_unique(self.identifiers.entry(kind).or_default(), value.as_ref());
        if self.identifiers.get(&kind).is_some_and(Vec::is_empty) {
            self.identifiers.remove(&kind);
        }
    }

    pub fn add_metadata(&mut self, field: MetadataField, value: impl AsRef<str>) {
        push_unique(self.metadata.entry(field).or_default(), value.as_ref());
        if self.metadata.get(&field).is_some_and(Vec::is_empty) {
            self.metadata.remove(&field);
        }
    }

    pub fn field_values(&self, field: FieldName) -> &[String] {
        let values = match field {
            FieldName::Identifier(kind) => self.identifiers.get(&kind),
            FieldName::Metadata(field) => self.metadata.get(&field),
        };
        values.map(Vec::as_slice).unwrap_or_default()
    }
}

fn push_unique(values: &mut Vec<String>, value: &str) {
    let value = value.trim();
    if !value.is_empty() && !values.iter().any(|v| v == value) {
        values.push(value.to_owned());
    }
}

/// Corpus files may give a metadata field as a string, a number or a list.
fn lenient_metadata<'de, D>(deserializer: D) -> Result<Metadata, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Scalar {
        Text(String),
        Number(serde_json::Number),
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<Scalar>),
        One(Scalar),
    }

    fn text(s: Scalar) -> String {
        match s {
            Scalar::Text(t) => t,
            Scalar::Number(n) => n.to_string(),
        }
    }

    let raw = BTreeMap::<MetadataField, OneOrMany>::deserialize(deserializer)?;
    Ok(raw
        .into_iter()
        .map(|(field, value)| {
            let values = match value {
                OneOrMany::One(s) => vec![text(s)],
                OneOrMany::Many(v) => v.into_iter().map(text).collect(),
            };
            (field, values)
        })
        .collect())
}

/// `"<source>:<native_id>"`, split on the first colon only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalId {
    pub source: SourceId,
    pub native_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GlobalIdError {
    #[error("id `{0}` is not of the form <source>:<native_id>")]
    Malformed(String),
    #[error(transparent)]
    UnknownSource(#[from] UnknownSource),
}

impl GlobalId {
    pub fn new(source: SourceId, native_id: impl Into<String>) -> Self {
        Self {
            source,
            native_id: native_id.into(),
        }
    }
}

impl fmt::Display for GlobalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.native_id)
    }
}

impl FromStr for GlobalId {
    type Err = GlobalIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (source, native_id) = s
            .split_once(':')
            .filter(|(_, id)| !id.is_empty())
            .ok_or_else(|| GlobalIdError::Malformed(s.to_owned()))?;
        Ok(GlobalId::new(source.parse()?, native_id))
    }
}

pub const DEFAULT_LIMIT: usize = 20;

/// A search request as handed to a source adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterQuery {
    pub title: String,
    pub contributor: Option<String>,
    pub date: Option<String>,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("query title is empty")]
    EmptyTitle,
    #[error("query limit must be at least 1")]
    ZeroLimit,
}

impl AdapterQuery {
    pub fn new(title: impl Into<String>) -> Result<Self, QueryError> {
        let title = title.into();
        if title.trim().is_empty() {
            return Err(QueryError::EmptyTitle);
        }
        Ok(Self {
            title,
            contributor: None,
            date: None,
            limit: DEFAULT_LIMIT,
        })
    }

    pub fn with_contributor(mut self, contributor: impl Into<String>) -> Self {
        let contributor = contributor.into();
        self.contributor = (!contributor.trim().is_empty()).then_some(contributor);
        self
    }

    pub fn with_date(mut self, date: impl Into<String>) -> Self {
        let date = date.into();
        self.date = (!date.trim().is_empty()).then_some(date);
        self
    }

    pub fn with_limit(mut self, limit: usize) -> Result<Self, QueryError> {
        if limit == 0 {
            return Err(QueryError::ZeroLimit);
        }
        self.limit = limit;
        Ok(self)
    }
}
