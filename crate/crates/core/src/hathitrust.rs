//! Local title index over HathiTrust tab-separated dumps.
//!
//! HathiTrust has no search API, so the adapter queries an in-memory
//! inverted index built from a dump file. Candidate generation is by
//! normalized title-token overlap; precise ranking is left to
//! [`crate::matching`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::matching::normalize;
use crate::record::{AdapterQuery, CandidateRecord, IdentifierKind, MetadataField, SourceId};

/// Field list of the public hathifiles, which ship without a header line.
pub const HATHIFILES_FIELDS: &[&str] = &[
    "htid",
    "access",
    "rights",
    "ht_bib_key",
    "description",
    "source",
    "source_bib_num",
    "oclc_num",
    "isbn",
    "issn",
    "lccn",
    "title",
    "imprint",
    "rights_reason_code",
    "rights_timestamp",
    "us_gov_doc_flag",
    "rights_date_used",
    "pub_place",
    "lang",
    "bib_fmt",
    "collection_code",
    "content_provider_code",
    "responsible_entity_code",
    "digitization_agent_code",
    "access_profile_code",
    "author",
];

/// Which dump column feeds each record field. `None` leaves the field unset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    /// Column names for files without a header line. When unset, the first
    /// line of the file is the header.
    pub header: Option<Vec<String>>,
    pub volume_id: String,
    pub title: String,
    pub contributors: Option<String>,
    pub oclc_number: Option<String>,
    pub isbn: Option<String>,
    pub lccn: Option<String>,
    pub earliest_pub_date: Option<String>,
    pub latest_pub_date: Option<String>,
    pub thumbnail_url: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            header: None,
            volume_id: "htid".into(),
            title: "title".into(),
            contributors: Some("author".into()),
            oclc_number: Some("oclc_num".into()),
            isbn: Some("isbn".into()),
            lccn: Some("lccn".into()),
            earliest_pub_date: Some("rights_date_used".into()),
            latest_pub_date: None,
            thumbnail_url: None,
        }
    }
}

impl ColumnMap {
    /// Default mapping for headerless upstream hathifiles.
    pub fn hathifiles() -> Self {
        Self {
            header: Some(HATHIFILES_FIELDS.iter().map(|f| (*f).to_owned()).collect()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub ht_volume_id: String,
    pub title: String,
    #[serde(default)]
    pub contributors: Vec<String>,
    #[serde(default)]
    pub oclc_number: Vec<String>,
    #[serde(default)]
    pub isbn: Vec<String>,
    #[serde(default)]
    pub lccn: Vec<String>,
    pub earliest_pub_date: Option<u16>,
    pub latest_pub_date: Option<u16>,
    pub thumbnail_url: Option<String>,
}

/// Catalog titles carry the statement of responsibility after " / " and
/// ISBD punctuation at the end; neither belongs in the matched title.
pub fn clean_title(raw: &str) -> &str {
    let title = raw.split(" / ").next().unwrap_or(raw);
    let trimmed = title.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '/' | ':' | ';' | ','));
    if trimmed.is_empty() {
        raw.trim()
    } else {
        trimmed
    }
}

impl DumpRecord {
    pub fn provenance_url(&self) -> String {
        format!("https://babel.hathitrust.org/cgi/pt?id={}", self.ht_volume_id)
    }

    pub fn to_candidate(&self) -> CandidateRecord {
        let mut record = CandidateRecord::new(
            SourceId::HathiTrust,
            self.ht_volume_id.clone(),
            clean_title(&self.title),
            self.provenance_url(),
        );
        record.contributors = self.contributors.clone();
        record.add_identifier(IdentifierKind::HtVolumeId, &self.ht_volume_id);
        for (kind, values) in [
            (IdentifierKind::Isbn, &self.isbn),
            (IdentifierKind::OclcNumber, &self.oclc_number),
            (IdentifierKind::Lccn, &self.lccn),
        ] {
            for value in values {
                record.add_identifier(kind, value);
            }
        }
        if let Some(year) = self.earliest_pub_date {
            record.add_metadata(MetadataField::EarliestPubDate, year.to_string());
        }
        if let Some(year) = self.latest_pub_date {
            record.add_metadata(MetadataField::LatestPubDate, year.to_string());
        }
        let thumbnail = self.thumbnail_url.clone().unwrap_or_else(|| {
            format!("https://babel.hathitrust.org/cgi/imgsrv/cover?id={}", self.ht_volume_id)
        });
        record.add_metadata(MetadataField::ThumbnailUrl, thumbnail);
        record
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("mapped column `{0}` is not in the dump header")]
    MissingColumn(String),
    #[error("dump has no header line")]
    MissingHeader,
    #[error("index artifact is invalid: {0}")]
    Artifact(#[from] serde_json::Error),
    #[error("index artifact schema_version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub records: Vec<DumpRecord>,
    pub skipped: usize,
    /// Non-blank data lines seen; always `records.len() + skipped`.
    pub data_lines: usize,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a tab-separated dump, gzip-compressed or not.
pub fn load_dump(path: &Path, columns: &ColumnMap) -> Result<LoadReport, IngestError> {
    let mut file = File::open(path).map_err(io_error(path))?;
    let mut magic = [0u8; 2];
    let sniffed = file.read(&mut magic).map_err(io_error(path))?;
    let file = File::open(path).map_err(io_error(path))?;
    let reader: Box<dyn BufRead> = if sniffed == 2 && magic == [0x1f, 0x8b] {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    read_dump(reader, columns).map_err(|e| match e {
        ReadError::Io(source) => IngestError::Io {
            path: path.display().to_string(),
            source,
        },
        ReadError::Ingest(e) => e,
    })
}

enum ReadError {
    Io(std::io::Error),
    Ingest(IngestError),
}

struct Layout {
    width: usize,
    volume_id: usize,
    title: usize,
    contributors: Option<usize>,
    oclc_number: Option<usize>,
    isbn: Option<usize>,
    lccn: Option<usize>,
    earliest: Option<usize>,
    latest: Option<usize>,
    thumbnail: Option<usize>,
}

impl Layout {
    fn resolve(header: &[String], columns: &ColumnMap) -> Result<Self, IngestError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
        };
        let optional = |name: &Option<String>| name.as_deref().map(find).transpose();
        Ok(Self {
            width: header.len(),
            volume_id: find(&columns.volume_id)?,
            title: find(&columns.title)?,
            contributors: optional(&columns.contributors)?,
            oclc_number: optional(&columns.oclc_number)?,
            isbn: optional(&columns.isbn)?,
            lccn: optional(&columns.lccn)?,
            earliest: optional(&columns.earliest_pub_date)?,
            latest: optional(&columns.latest_pub_date)?,
            thumbnail: optional(&columns.thumbnail_url)?,
        })
    }

    fn parse(&self, line: &str) -> Option<DumpRecord> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != self.width {
            return None;
        }
        let get = |i: Option<usize>| i.map(|i| fields[i].trim()).filter(|v| !v.is_empty());
        let ht_volume_id = get(Some(self.volume_id))?.to_owned();
        let title = get(Some(self.title))?.to_owned();
        if normalize(&title).tokens.is_empty() {
            return None;
        }
        Some(DumpRecord {
            ht_volume_id,
            title,
            contributors: split(get(self.contributors), &[';']),
            oclc_number: split(get(self.oclc_number), &[',', ';']),
            isbn: split(get(self.isbn), &[',', ';']),
            lccn: split(get(self.lccn), &[',', ';']),
            earliest_pub_date: year(get(self.earliest))?,
            latest_pub_date: year(get(self.latest))?,
            thumbnail_url: get(self.thumbnail).map(str::to_owned),
        })
    }
}

fn split(value: Option<&str>, separators: &[char]) -> Vec<String> {
    value
        .map(|v| {
            v.split(separators)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect()
        })
        .unwrap_or_default()
}

/// `Some(None)` for an absent year (empty, or the 9999 "unknown" marker),
/// `None` when the value is not a 4-digit year.
fn year(value: Option<&str>) -> Option<Option<u16>> {
    match value {
        None | Some("9999") => Some(None),
        Some(v) if v.len() == 4 && v.bytes().all(|b| b.is_ascii_digit()) => v.parse().ok().map(Some),
        Some(_) => None,
    }
}

fn read_dump(mut reader: Box<dyn BufRead>, columns: &ColumnMap) -> Result<LoadReport, ReadError> {
    let mut buf = Vec::new();
    let mut next_line = |reader: &mut Box<dyn BufRead>| -> Result<Option<Result<String, ()>>, ReadError> {
        buf.clear();
        if reader.read_until(b'\n', &mut buf).map_err(ReadError::Io)? == 0 {
            return Ok(None);
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        Ok(Some(String::from_utf8(buf.clone()).map_err(|_| ())))
    };

    let header: Vec<String> = match &columns.header {
        Some(header) => header.clone(),
        None => match next_line(&mut reader)? {
            Some(Ok(line)) => line.split('\t').map(str::to_owned).collect(),
            _ => return Err(ReadError::Ingest(IngestError::MissingHeader)),
        },
    };
    let layout = Layout::resolve(&header, columns).map_err(ReadError::Ingest)?;

    let mut report = LoadReport {
        records: Vec::new(),
        skipped: 0,
        data_lines: 0,
    };
    while let Some(line) = next_line(&mut reader)? {
        if matches!(&line, Ok(l) if l.trim().is_empty()) {
            continue;
        }
        report.data_lines += 1;
        match line.ok().and_then(|l| layout.parse(&l)) {
            Some(record) => report.records.push(record),
            None => report.skipped += 1,
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("volume id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("record `{0}` has no indexable title tokens")]
    NoTitleTokens(String),
}

/// Immutable inverted index from normalized title tokens to records.
/// Records are stored sorted by volume id, so posting lists (ascending
/// record positions) are also sorted by id.
#[derive(Debug, Clone, Default)]
pub struct TitleIndex {
    records: Vec<DumpRecord>,
    postings: HashMap<String, Vec<u32>>,
}

impl TitleIndex {
    pub fn build(mut records: Vec<DumpRecord>) -> Result<Self, IndexError> {
        records.sort_by(|a, b| a.ht_volume_id.cmp(&b.ht_volume_id));
        if let Some(pair) = records.windows(2).find(|w| w[0].ht_volume_id == w[1].ht_volume_id) {
            return Err(IndexError::DuplicateId(pair[0].ht_volume_id.clone()));
        }
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (position, record) in records.iter().enumerate() {
            let mut tokens = normalize(&record.title).tokens;
            if tokens.is_empty() {
                return Err(IndexError::NoTitleTokens(record.ht_volume_id.clone()));
            }
            tokens.dedup();
            for token in tokens {
                postings.entry(token).or_default().push(position as u32);
            }
        }
        Ok(Self { records, postings })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DumpRecord] {
        &self.records
    }

    pub fn get(&self, ht_volume_id: &str) -> Option<&DumpRecord> {
        self.records
            .binary_search_by(|r| r.ht_volume_id.as_str().cmp(ht_volume_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn posting(&self, token: &str) -> &[u32] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or_default()
    }

    /// Records sharing at least one title token with `title`, with the number
    /// of distinct shared tokens, ordered by overlap descending then id.
    pub fn overlapping(&self, title: &str) -> Vec<(&DumpRecord, usize)> {
        let mut tokens = normalize(title).tokens;
        tokens.dedup();
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for token in &tokens {
            for &position in self.posting(token) {
                *counts.entry(position).or_default() += 1;
            }
        }
        let mut hits: Vec<(u32, usize)> = counts.into_iter().collect();
        // Position order is id order.
        hits.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.into_iter()
            .map(|(position, overlap)| (&self.records[position as usize], overlap))
            .collect()
    }

    /// Up to `5 × limit` candidates for the match-core ranking.
    pub fn query(&self, query: &AdapterQuery, limit: usize) -> Vec<CandidateRecord> {
        self.overlapping(&query.title)
            .into_iter()
            .take(limit.saturating_mul(5))
            .map(|(record, _)| record.to_candidate())
            .collect()
    }
}

const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Artifact {
    schema_version: u32,
    records: Vec<DumpRecord>,
}

/// Writes loaded records as a JSON artifact that later runs can index
/// without re-parsing the dump.
pub fn save_artifact(records: &[DumpRecord], path: &Path) -> Result<(), IngestError> {
    let artifact = Artifact {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        records: records.to_vec(),
    };
    let file = File::create(path).map_err(io_error(path))?;
    serde_json::to_writer(std::io::BufWriter::new(file), &artifact)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<Vec<DumpRecord>, IngestError> {
    let file = File::open(path).map_err(io_error(path))?;
    let artifact: Artifact = serde_json::from_reader(BufReader::new(file))?;
    if artifact.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(IngestError::SchemaVersion {
            found: artifact.schema_version,
            expected: ARTIFACT_SCHEMA_VERSION,
        });
    }
    Ok(artifact.records)
}
