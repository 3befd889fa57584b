//! Text normalization and similarity scoring.
//!
//! Everything here is pure. Titles and names are compared on their
//! token-sorted canonical form so that "Truong, Monique" and
//! "Monique Truong" normalize to the same string.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::record::{AdapterQuery, CandidateRecord};

/// Lowercased, diacritic-folded tokens of a string plus their sorted join.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NormalizedText {
    pub tokens: Vec<String>,
    pub canonical: String,
}

pub fn normalize(text: &str) -> NormalizedText {
    // NFKD twice: lowercasing a compatibility-decomposed string can yield
    // characters that decompose again (titlecase digraphs and the like).
    let folded: String = text
        .nfkd()
        .flat_map(char::to_lowercase)
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();

    let mut tokens: Vec<String> = folded.split_whitespace().map(str::to_owned).collect();
    tokens.sort_unstable();
    let canonical = tokens.join(" ");
    NormalizedText { tokens, canonical }
}

/// Character-level edit distance (insertions, deletions, substitutions).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(lc != sc);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[short.len()]
}

/// Integer `round(100 * num / den)` with halves rounded up.
pub(crate) fn percent_half_up(num: u64, den: u64) -> u8 {
    debug_assert!(den > 0 && num <= den);
    ((200 * num + den) / (2 * den)) as u8
}

/// Similarity of two raw strings on the 0–100 scale, computed on their
/// token-sorted canonical forms.
pub fn token_sort_ratio(a: &str, b: &str) -> u8 {
    let a: Vec<char> = normalize(a).canonical.chars().collect();
    let b: Vec<char> = normalize(b).canonical.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 100;
    }
    let distance = levenshtein_chars(&a, &b);
    percent_half_up((longest - distance) as u64, longest as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Minimum combined score for an automatic match.
    pub threshold: u8,
    /// Contributor scores below this reject the candidate outright.
    pub contributor_gate: u8,
    pub title_weight: f64,
    /// Required lead of the top candidate over the best competing Work.
    pub tie_margin: u8,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            threshold: 80,
            contributor_gate: 50,
            title_weight: 0.75,
            tie_margin: 1,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be within 0..=100, got {value}")]
    ScoreOutOfRange { field: &'static str, value: u8 },
    #[error("title_weight must be within [0, 1], got {0}")]
    WeightOutOfRange(f64),
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("threshold", self.threshold),
            ("contributor_gate", self.contributor_gate),
        ] {
            if value > 100 {
                return Err(ConfigError::ScoreOutOfRange { field, value });
            }
        }
        if !(0.0..=1.0).contains(&self.title_weight) {
            return Err(ConfigError::WeightOutOfRange(self.title_weight));
        }
        Ok(())
    }
}

pub fn combine_scores(title_score: u8, contributor_score: Option<u8>, config: &MatchConfig) -> u8 {
    let Some(contributor) = contributor_score else {
        return title_score;
    };
    if contributor < config.contributor_gate {
        return 0;
    }
    let w = config.title_weight;
    let blended = w * f64::from(title_score) + (1.0 - w) * f64::from(contributor);
    // Epsilon absorbs binary representation error at exact halves.
    (blended + 0.5 + 1e-9).floor().clamp(0.0, 100.0) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: CandidateRecord,
    pub title_score: u8,
    pub contributor_score: Option<u8>,
    pub combined_score: u8,
    #[serde(rename = "match")]
    pub is_match: bool,
}

/// Best similarity between the query contributor and any of the record's
/// contributors. `None` when either side has nothing to compare.
fn contributor_score(query: &AdapterQuery, record: &CandidateRecord) -> Option<u8> {
    let wanted = query.contributor.as_deref().filter(|c| !c.trim().is_empty())?;
    record
        .contributors
        .iter()
        .map(|name| token_sort_ratio(wanted, name))
        .max()
}

pub fn score_candidate(
    query: &AdapterQuery,
    record: CandidateRecord,
    config: &MatchConfig,
) -> ScoredCandidate {
    let title_score = token_sort_ratio(&query.title, &record.title);
    let contributor_score = contributor_score(query, &record);
    let combined_score = combine_scores(title_score, contributor_score, config);
    ScoredCandidate {
        candidate: record,
        title_score,
        contributor_score,
        combined_score,
        is_match: false,
    }
}

fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.combined_score
        .cmp(&a.combined_score)
        .then_with(|| a.candidate.native_id.cmp(&b.candidate.native_id))
}

/// Scores every candidate, sorts best-first and flags the match.
pub fn rank_candidates(
    query: &AdapterQuery,
    candidates: Vec<CandidateRecord>,
    config: &MatchConfig,
) -> Vec<ScoredCandidate> {
    let mut scored: Vec<ScoredCandidate> = candidates
        .into_iter()
        .map(|record| score_candidate(query, record, config))
        .collect();
    scored.sort_by(rank_order);
    decide_match(scored, config)
}

fn same_work(a: &CandidateRecord, b: &CandidateRecord) -> bool {
    matches!((&a.work_id, &b.work_id), (Some(x), Some(y)) if x == y)
}

/// Sets `is_match` on the top candidate when it clears the threshold and
/// leads the best candidate of a different Work by at least `tie_margin`.
/// Candidates that share the top candidate's Work id do not compete with it.
pub fn decide_match(mut ranked: Vec<ScoredCandidate>, config: &MatchConfig) -> Vec<ScoredCandidate> {
    for candidate in &mut ranked {
        candidate.is_match = false;
    }
    let Some((top, rest)) = ranked.split_first_mut() else {
        return ranked;
    };
    let runner_up = rest
        .iter()
        .find(|other| !same_work(&top.candidate, &other.candidate))
        .map(|other| other.combined_score);
    let clear_lead = match runner_up {
        None => true,
        Some(second) => top.combined_score.saturating_sub(second) >= config.tie_margin,
    };
    top.is_match = top.combined_score >= config.threshold && clear_lead;
    ranked
}
