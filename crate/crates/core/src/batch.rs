//! CSV batch enrichment against one or more sources.

use std::fmt;
use std::io::{Read, Write};

use futures::stream::{self, StreamExt};
use serde::Serialize;
use tracing::warn;

use crate::cluster::{merge_identifiers, WorkCluster};
use crate::extend::{join_values, EmptyDelimiter, ExtendMode, PropertySettings};
use crate::matching::MatchConfig;
use crate::reconcile::reconcile;
use crate::record::{AdapterQuery, IdentifierKind, Identifiers, DEFAULT_LIMIT};
use crate::session::CurationSession;
use crate::source::SourceHandle;

pub const DEFAULT_CONCURRENCY: usize = 4;

/// Per-source output columns, suffixed to the source label.
pub const SOURCE_COLUMNS: [&str; 6] = [
    "match_id",
    "match_name",
    "match_score",
    "match_flag",
    "work_cluster_id",
    "member_count",
];

pub const ERRORS_COLUMN: &str = "errors";

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub title_column: String,
    pub author_column: Option<String>,
    pub date_column: Option<String>,
    pub settings: PropertySettings,
    pub concurrency: usize,
    pub clustering: bool,
    pub limit: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            title_column: "title".to_owned(),
            author_column: None,
            date_column: None,
            settings: PropertySettings::default(),
            concurrency: DEFAULT_CONCURRENCY,
            clustering: true,
            limit: DEFAULT_LIMIT,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("input has no column named `{0}`")]
    MissingColumn(String),
    #[error("no sources to reconcile against")]
    NoSources,
    #[error(transparent)]
    Settings(#[from] EmptyDelimiter),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceTally {
    pub label: String,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchReport {
    pub input_rows: usize,
    pub output_rows: usize,
    pub sources: Vec<SourceTally>,
    /// Rows matched by at least one source.
    pub union_matched: usize,
}

impl fmt::Display for BatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sources {
            writeln!(f, "{}: {}/{} matched", s.label, s.matched, self.input_rows)?;
        }
        write!(f, "union: {}/{} matched", self.union_matched, self.input_rows)
    }
}

#[derive(Debug, Default)]
struct SourceCells {
    cells: [String; 6],
    matched: bool,
}

#[derive(Debug)]
struct RowOutcome {
    per_source: Vec<SourceCells>,
    merged: Identifiers,
    errors: Vec<String>,
}

struct Columns {
    title: usize,
    author: Option<usize>,
    date: Option<usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, BatchError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| BatchError::MissingColumn(name.to_owned()))
}

pub fn output_headers(input: &csv::StringRecord, sources: &[SourceHandle]) -> Vec<String> {
    let mut headers: Vec<String> = input.iter().map(str::to_owned).collect();
    for source in sources {
        headers.extend(SOURCE_COLUMNS.iter().map(|c| format!("{}_{c}", source.label())));
    }
    headers.extend(IdentifierKind::ALL.iter().map(|k| k.as_str().to_owned()));
    headers.push(ERRORS_COLUMN.to_owned());
    headers
}

async fn reconcile_row(
    row: &csv::StringRecord,
    columns: &Columns,
    sources: &[SourceHandle],
    config: &MatchConfig,
    options: &BatchOptions,
    session: Option<&CurationSession>,
) -> RowOutcome {
    let field = |i: Option<usize>| i.and_then(|i| row.get(i)).unwrap_or("");
    let query = AdapterQuery::new(field(Some(columns.title))).and_then(|q| {
        q.with_contributor(field(columns.author))
            .with_date(field(columns.date))
            .with_limit(options.limit)
    });
    let query = match query {
        Ok(q) => q,
        Err(err) => {
            return RowOutcome {
                per_source: sources.iter().map(|_| SourceCells::default()).collect(),
                merged: Identifiers::new(),
                errors: vec![err.to_string()],
            }
        }
    };

    let results = futures::future::join_all(
        sources
            .iter()
            .map(|s| reconcile(s, &query, config, options.clustering)),
    )
    .await;

    let mut per_source = Vec::with_capacity(sources.len());
    let mut clusters: Vec<WorkCluster> = Vec::new();
    let mut errors = Vec::new();
    for (source, result) in sources.iter().zip(results) {
        let mut cells = SourceCells::default();
        match result {
            Ok(recon) => {
                if let Some(top) = recon.top() {
                    cells.cells[0] = top.candidate.global_id().to_string();
                    cells.cells[1] = top.candidate.title.clone();
                    cells.cells[2] = top.combined_score.to_string();
                    cells.cells[3] = top.is_match.to_string();
                    cells.matched = top.is_match;
                } else {
                    cells.cells[3] = "false".to_owned();
                }
                if let Some(mut cluster) = recon.cluster {
                    if let Some(session) = session {
                        session.apply(&mut cluster);
                    }
                    cells.cells[4] = cluster.cluster_id.clone();
                    cells.cells[5] = cluster.members.len().to_string();
                    clusters.push(cluster);
                }
            }
            Err(err) => {
                warn!(source = source.label(), title = %query.title, %err, "row failed");
                errors.push(format!("{}: {err}", source.label()));
            }
        }
        per_source.push(cells);
    }

    RowOutcome {
        per_source,
        merged: merge_identifiers(&clusters),
        errors,
    }
}

fn output_rows(
    input: &csv::StringRecord,
    outcome: &RowOutcome,
    settings: &PropertySettings,
) -> Vec<Vec<String>> {
    let mut base: Vec<String> = input.iter().map(str::to_owned).collect();
    for cells in &outcome.per_source {
        base.extend(cells.cells.iter().cloned());
    }
    let values = |kind: &IdentifierKind| outcome.merged.get(kind).map(Vec::as_slice).unwrap_or(&[]);
    let errors = outcome.errors.join("; ");

    match settings.mode {
        ExtendMode::Join => {
            let mut row = base;
            row.extend(IdentifierKind::ALL.iter().map(|k| join_values(values(k), &settings.delimiter)));
            row.push(errors);
            vec![row]
        }
        ExtendMode::Explode => {
            let height = IdentifierKind::ALL.iter().map(|k| values(k).len()).max().unwrap_or(0).max(1);
            (0..height)
                .map(|i| {
                    let mut row = base.clone();
                    row.extend(
                        IdentifierKind::ALL
                            .iter()
                            .map(|k| values(k).get(i).cloned().unwrap_or_default()),
                    );
                    row.push(errors.clone());
                    row
                })
                .collect()
        }
    }
}

/// Reconciles every row of `input` against every source and writes the
/// enriched CSV to `output` in input order.
pub async fn reconcile_csv<R: Read, W: Write>(
    input: R,
    output: W,
    sources: &[SourceHandle],
    config: &MatchConfig,
    options: &BatchOptions,
    session: Option<&CurationSession>,
) -> Result<BatchReport, BatchError> {
    if sources.is_empty() {
        return Err(BatchError::NoSources);
    }
    options.settings.validate()?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let columns = Columns {
        title: column(&headers, &options.title_column)?,
        author: options.author_column.as_deref().map(|c| column(&headers, c)).transpose()?,
        date: options.date_column.as_deref().map(|c| column(&headers, c)).transpose()?,
    };
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;

    let outcomes: Vec<RowOutcome> = stream::iter(rows.iter())
        .map(|row| reconcile_row(row, &columns, sources, config, options, session))
        .buffered(options.concurrency.max(1))
        .collect()
        .await;

    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(output_headers(&headers, sources))?;
    let mut report = BatchReport {
        input_rows: rows.len(),
        output_rows: 0,
        sources: sources
            .iter()
            .map(|s| SourceTally {
                label: s.label().to_owned(),
                matched: 0,
            })
            .collect(),
        union_matched: 0,
    };
    for (row, outcome) in rows.iter().zip(&outcomes) {
        for (tally, cells) in report.sources.iter_mut().zip(&outcome.per_source) {
            tally.matched += usize::from(cells.matched);
        }
        report.union_matched += usize::from(outcome.per_source.iter().any(|c| c.matched));
        for out in output_rows(row, outcome, &options.settings) {
            writer.write_record(&out)?;
            report.output_rows += 1;
        }
    }
    writer.flush()?;
    Ok(report)
}
