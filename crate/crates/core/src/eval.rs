//! Accuracy of sources against a gold-labelled set of books.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::batch::DEFAULT_CONCURRENCY;
use crate::matching::{percent_half_up, MatchConfig};
use crate::reconcile::reconcile;
use crate::record::{AdapterQuery, GlobalId};
use crate::source::SourceHandle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRow {
    pub title: String,
    /// Full name as a cataloguer would type it, not normalized.
    pub author: String,
    pub accepted_ids: BTreeSet<GlobalId>,
    pub tags: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold row {row}: {message}")]
    Gold { row: usize, message: String },
    #[error("gold csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("accuracy over zero rows is undefined")]
    EmptyTotal,
    #[error("no sources to evaluate")]
    NoSources,
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').map(str::trim).filter(|x| !x.is_empty())
}

/// Reads gold rows. `author` and `tags` columns are optional, and rows may
/// omit trailing empty fields.
pub fn read_gold<R: Read>(input: R) -> Result<Vec<GoldRow>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| EvalError::Gold {
        row: 0,
        message: format!("missing `{name}` column"),
    };
    let title_c = col("title").ok_or_else(|| missing("title"))?;
    let ids_c = col("accepted_ids").ok_or_else(|| missing("accepted_ids"))?;
    let (author_c, tags_c) = (col("author"), col("tags"));

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let gold = |message: String| EvalError::Gold { row, message };
        let field = |c: Option<usize>| c.and_then(|c| record.get(c)).unwrap_or("");
        let title = field(Some(title_c));
        if title.trim().is_empty() {
            return Err(gold("title is empty".into()));
        }
        let accepted_ids = split_list(field(Some(ids_c)))
            .map(|id| id.parse::<GlobalId>().map_err(|e| gold(e.to_string())))
            .collect::<Result<BTreeSet<_>, _>>()?;
        if accepted_ids.is_empty() {
            return Err(gold("accepted_ids is empty".into()));
        }
        rows.push(GoldRow {
            title: title.to_owned(),
            author: field(author_c).to_owned(),
            accepted_ids,
            tags: split_list(field(tags_c)).map(str::to_owned).collect(),
        });
    }
    Ok(rows)
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldRow>, EvalError> {
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_gold(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    /// Whole percent, halves rounded up.
    pub percent: u8,
}

pub fn accuracy(correct: usize, total: usize) -> Result<Accuracy, EvalError> {
    if total == 0 {
        return Err(EvalError::EmptyTotal);
    }
    assert!(correct <= total, "correct {correct} exceeds total {total}");
    Ok(Accuracy {
        correct,
        total,
        percent: percent_half_up(correct as u64, total as u64),
    })
}

impl Accuracy {
    pub fn ratio(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({}%)", self.correct, self.total, self.percent)
    }
}

/// One gold row against one source, as written to the raw outcome log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub row: usize,
    pub title: String,
    pub source: String,
    pub top_id: String,
    pub matched: bool,
    pub correct: bool,
    pub error: String,
    pub tags: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceAccuracy {
    pub source: String,
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TagFilter {
    With,
    Without,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    pub sources: Vec<SourceAccuracy>,
    /// Correct for at least one source.
    pub union: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subset {
    pub tag: String,
    pub filter: TagFilter,
    #[serde(flatten)]
    pub breakdown: Breakdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Breakdown,
    pub subsets: Vec<Subset>,
}

fn breakdown(labels: &[String], rows: &[usize], outcomes: &[Outcome]) -> Result<Breakdown, EvalError> {
    let wanted: BTreeSet<usize> = rows.iter().copied().collect();
    let relevant: Vec<&Outcome> = outcomes.iter().filter(|o| wanted.contains(&o.row)).collect();
    let sources = labels
        .iter()
        .map(|label| {
            let correct = relevant.iter().filter(|o| &o.source == label && o.correct).count();
            Ok(SourceAccuracy {
                source: label.clone(),
                accuracy: accuracy(correct, rows.len())?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let union_rows: BTreeSet<usize> = relevant.iter().filter(|o| o.correct).map(|o| o.row).collect();
    Ok(Breakdown {
        sources,
        union: accuracy(union_rows.len(), rows.len())?,
    })
}

/// Aggregates outcomes into overall, union and per-tag accuracies. Tag
/// subsets with no rows are omitted.
pub fn build_report(gold: &[GoldRow], labels: &[String], outcomes: &[Outcome]) -> Result<EvalReport, EvalError> {
    let all: Vec<usize> = (1..=gold.len()).collect();
    let overall = breakdown(labels, &all, outcomes)?;
    let tags: BTreeSet<&str> = gold.iter().flat_map(|g| g.tags.iter().map(String::as_str)).collect();
    let mut subsets = Vec::new();
    for tag in tags {
        for filter in [TagFilter::With, TagFilter::Without] {
            let rows: Vec<usize> = gold
                .iter()
                .enumerate()
                .filter(|(_, g)| g.tags.iter().any(|t| t == tag) == (filter == TagFilter::With))
                .map(|(i, _)| i + 1)
                .collect();
            if rows.is_empty() {
                continue;
            }
            subsets.push(Subset {
                tag: tag.to_owned(),
                filter,
                breakdown: breakdown(labels, &rows, outcomes)?,
            });
        }
    }
    Ok(EvalReport { overall, subsets })
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub outcomes: Vec<Outcome>,
}

async fn evaluate_row(index: usize, gold: &GoldRow, sources: &[SourceHandle], config: &MatchConfig) -> Vec<Outcome> {
    let query = AdapterQuery::new(gold.title.clone()).map(|q| q.with_contributor(gold.author.clone()));
    let mut outcomes = Vec::with_capacity(sources.len());
    for source in sources {
        let mut outcome = Outcome {
            row: index + 1,
            title: gold.title.clone(),
            source: source.label().to_owned(),
            top_id: String::new(),
            matched: false,
            correct: false,
            error: String::new(),
            tags: gold.tags.join(";"),
        };
        let result = match &query {
            Ok(q) => reconcile(source, q, config, false).await.map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        match result {
            Ok(recon) => {
                if let Some(top) = recon.top() {
                    let id = top.candidate.global_id();
                    outcome.matched = top.is_match;
                    outcome.correct = top.is_match && gold.accepted_ids.contains(&id);
                    outcome.top_id = id.to_string();
                }
            }
            Err(e) => outcome.error = e,
        }
        outcomes.push(outcome);
    }
    outcomes
}

/// Reconciles every gold row against every source. Adapter failures count
/// as incorrect for that source.
pub async fn run_eval(gold: &[GoldRow], sources: &[SourceHandle], config: &MatchConfig) -> Result<EvalRun, EvalError> {
    if sources.is_empty() {
        return Err(EvalError::NoSources);
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyTotal);
    }
    let outcomes: Vec<Outcome> = stream::iter(gold.iter().enumerate())
        .map(|(i, row)| evaluate_row(i, row, sources, config))
        .buffered(DEFAULT_CONCURRENCY)
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .flatten()
        .collect();
    let labels: Vec<String> = sources.iter().map(|s| s.label().to_owned()).collect();
    let report = build_report(gold, &labels, &outcomes)?;
    Ok(EvalRun { report, outcomes })
}

pub fn write_outcomes<W: Write>(output: W, outcomes: &[Outcome]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(output);
    for outcome in outcomes {
        writer.serialize(outcome)?;
    }
    writer.flush()?;
    Ok(())
}

impl fmt::Display for Breakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.sources.iter().map(|s| s.source.len()).max().unwrap_or(0).max(5);
        for s in &self.sources {
            writeln!(f, "  {:<width$}  {}", s.source, s.accuracy)?;
        }
        writeln!(f, "  {:<width$}  {}", "union", self.union)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "all rows")?;
        write!(f, "{}", self.overall)?;
        for subset in &self.subsets {
            let which = match subset.filter {
                TagFilter::With => "with",
                TagFilter::Without => "without",
            };
            writeln!(f, "{which} {}", subset.tag)?;
            write!(f, "{}", subset.breakdown)?;
        }
        Ok(())
    }
}
