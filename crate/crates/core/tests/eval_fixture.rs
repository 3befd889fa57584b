use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use bibrecon_core::eval::{accuracy, load_gold, run_eval, write_outcomes, TagFilter};
use bibrecon_core::matching::MatchConfig;
use bibrecon_core::record::CandidateRecord;
use bibrecon_core::source::{FixtureSource, SourceHandle};

fn testdata(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

fn fixture() -> Vec<SourceHandle> {
    vec![SourceHandle::new(Arc::new(FixtureSource::bundled()))]
}

/// Recomputes per-source and union accuracy from the raw log in one pass,
/// reading only the header names it needs.
fn oracle(log: &str) -> (BTreeMap<String, (usize, usize)>, (usize, usize)) {
    let mut reader = csv::Reader::from_reader(log.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (row_c, source_c, correct_c) = (col("row"), col("source"), col("correct"));
    let mut per_source: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut rows = BTreeSet::new();
    let mut union = BTreeSet::new();
    for record in reader.records() {
        let record = record.unwrap();
        let entry = per_source.entry(record[source_c].to_owned()).or_default();
        entry.1 += 1;
        rows.insert(record[row_c].to_owned());
        if &record[correct_c] == "true" {
            entry.0 += 1;
            union.insert(record[row_c].to_owned());
        }
    }
    (per_source, (union.len(), rows.len()))
}

#[tokio::test]
async fn seeded_gold_set_scores_85_percent() {
    let gold = load_gold(&testdata("gold_fixture.csv")).unwrap();
    assert_eq!(gold.len(), 20);
    let run = run_eval(&gold, &fixture(), &MatchConfig::default()).await.unwrap();
    let overall = &run.report.overall;
    assert_eq!(overall.sources[0].accuracy, accuracy(17, 20).unwrap());
    assert_eq!(overall.sources[0].accuracy.percent, 85);

    let mut log = Vec::new();
    write_outcomes(&mut log, &run.outcomes).unwrap();
    let (per_source, union) = oracle(&String::from_utf8(log).unwrap());
    assert_eq!(per_source["fixture"], (17, 20));
    assert_eq!(union, (overall.union.correct, overall.union.total));

    let misses: Vec<&str> = run.outcomes.iter().filter(|o| !o.correct).map(|o| o.title.as_str()).collect();
    assert_eq!(misses, ["The Nickel Boys", "Ironweed", "Selected Poems"]);
    let ironweed = run.outcomes.iter().find(|o| o.title == "Ironweed").unwrap();
    assert!(ironweed.matched, "a confident match outside accepted_ids still counts as wrong");
}

#[tokio::test]
async fn tag_subsets_equal_physical_subsets() {
    let gold = load_gold(&testdata("gold_fixture.csv")).unwrap();
    let sources = fixture();
    let run = run_eval(&gold, &sources, &MatchConfig::default()).await.unwrap();
    for subset in &run.report.subsets {
        let physical: Vec<_> = gold
            .iter()
            .filter(|g| g.tags.contains(&subset.tag) == (subset.filter == TagFilter::With))
            .cloned()
            .collect();
        let rerun = run_eval(&physical, &sources, &MatchConfig::default()).await.unwrap();
        assert_eq!(rerun.report.overall, subset.breakdown, "{} {:?}", subset.tag, subset.filter);
    }
    let without_poetry = run
        .report
        .subsets
        .iter()
        .find(|s| s.tag == "poetry" && s.filter == TagFilter::Without)
        .unwrap();
    assert_eq!(without_poetry.breakdown.union, accuracy(16, 18).unwrap());
}

#[tokio::test]
async fn absent_ids_score_zero() {
    let gold = load_gold(&testdata("gold_absent.csv")).unwrap();
    let run = run_eval(&gold, &fixture(), &MatchConfig::default()).await.unwrap();
    assert_eq!(run.report.overall.sources[0].accuracy.percent, 0);
    assert_eq!(run.report.overall.union.percent, 0);
}

fn half(records: &[CandidateRecord], keep: &BTreeSet<&str>) -> Vec<CandidateRecord> {
    records
        .iter()
        .filter(|r| keep.contains(r.work_id.as_deref().unwrap_or("")))
        .cloned()
        .collect()
}

#[tokio::test]
async fn disjoint_halves_union_to_full_coverage() {
    let gold = load_gold(&testdata("gold_fixture.csv")).unwrap();
    // Only the 17 rows the bundled corpus can answer, split by Work.
    let answerable: Vec<_> = gold
        .into_iter()
        .filter(|g| !["The Nickel Boys", "Ironweed", "Selected Poems"].contains(&g.title.as_str()))
        .take(16)
        .collect();
    let corpus = FixtureSource::bundled().records().to_vec();
    let work_of = |g: &bibrecon_core::eval::GoldRow| {
        let id = g.accepted_ids.iter().next().unwrap();
        corpus
            .iter()
            .find(|r| r.native_id == id.native_id)
            .and_then(|r| r.work_id.as_deref())
            .unwrap()
            .to_owned()
    };
    let works: Vec<String> = answerable.iter().map(work_of).collect();
    let a: BTreeSet<&str> = works[..8].iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = works[8..].iter().map(String::as_str).collect();
    let sources = vec![
        SourceHandle::with_label(Arc::new(FixtureSource::new(half(&corpus, &a))), "fixture-a"),
        SourceHandle::with_label(Arc::new(FixtureSource::new(half(&corpus, &b))), "fixture-b"),
    ];
    let run = run_eval(&answerable, &sources, &MatchConfig::default()).await.unwrap();
    let overall = &run.report.overall;
    assert_eq!(overall.sources[0].accuracy.percent, 50);
    assert_eq!(overall.sources[1].accuracy.percent, 50);
    assert_eq!(overall.union.percent, 100);
}
