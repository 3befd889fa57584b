//! Work clusters built around the matched candidate of a result set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::matching::{MatchConfig, ScoredCandidate};
use crate::record::{CandidateRecord, Identifiers, SourceId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub candidate: CandidateRecord,
    pub selected: bool,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkCluster {
    pub cluster_id: String,
    pub source: SourceId,
    pub anchor: ScoredCandidate,
    pub members: Vec<ClusterMember>,
}

impl WorkCluster {
    pub fn member(&self, native_id: &str) -> Option<&ClusterMember> {
        self.members.iter().find(|m| m.candidate.native_id == native_id)
    }

    pub fn member_mut(&mut self, native_id: &str) -> Option<&mut ClusterMember> {
        self.members.iter_mut().find(|m| m.candidate.native_id == native_id)
    }

    pub fn selected(&self) -> impl Iterator<Item = &ClusterMember> {
        self.members.iter().filter(|m| m.selected)
    }
}

/// `"<source>:<work id>"`, or a hash of the anchor's native id when the
/// anchor carries no Work id.
pub fn cluster_id(anchor: &CandidateRecord) -> String {
    match &anchor.work_id {
        Some(work) => format!("{}:{}", anchor.source, work),
        None => {
            let digest = Sha256::digest(anchor.native_id.as_bytes());
            let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
            format!("{}:h{}", anchor.source, hex)
        }
    }
}

/// Groups the result set around its matched top candidate.
///
/// With Work ids available the cluster is every candidate sharing the
/// anchor's Work id; otherwise it is every candidate at or above the match
/// threshold. Returns `None` when nothing matched.
pub fn build_cluster(
    ranked: &[ScoredCandidate],
    config: &MatchConfig,
    clustering_enabled: bool,
    supports_work_id: bool,
) -> Option<WorkCluster> {
    let anchor = ranked.first().filter(|top| top.is_match)?;
    let anchor_work = anchor.candidate.work_id.as_deref();

    let belongs = |c: &ScoredCandidate| -> bool {
        if !clustering_enabled {
            return false;
        }
        match (supports_work_id, anchor_work) {
            (true, Some(work)) => c.candidate.work_id.as_deref() == Some(work),
            // A Work-id source whose anchor lacks an id: fall back to the
            // score rule among id-less candidates only.
            (true, None) => c.candidate.work_id.is_none() && c.combined_score >= config.threshold,
            (false, _) => c.combined_score >= config.threshold,
        }
    };

    let mut seen = BTreeSet::new();
    seen.insert(anchor.candidate.native_id.as_str());
    let mut members = vec![ClusterMember {
        candidate: anchor.candidate.clone(),
        selected: true,
        score: anchor.combined_score,
    }];
    for candidate in &ranked[1..] {
        if belongs(candidate) && seen.insert(candidate.candidate.native_id.as_str()) {
            members.push(ClusterMember {
                candidate: candidate.candidate.clone(),
                selected: true,
                score: candidate.combined_score,
            });
        }
    }

    Some(WorkCluster {
        cluster_id: cluster_id(&anchor.candidate),
        source: anchor.candidate.source,
        anchor: anchor.clone(),
        members,
    })
}

/// Union of identifiers over the selected members of all clusters, values
/// de-duplicated in first-seen order.
pub fn merge_identifiers<'a>(clusters: impl IntoIterator<Item = &'a WorkCluster>) -> Identifiers {
    let mut merged = Identifiers::new();
    for member in clusters.into_iter().flat_map(WorkCluster::selected) {
        for (kind, values) in &member.candidate.identifiers {
            let target = merged.entry(*kind).or_default();
            for value in values {
                if !target.contains(value) {
                    target.push(value.clone());
                }
            }
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::IdentifierKind;

    fn scored(id: &str, work: Option<&str>, score: u8) -> ScoredCandidate {
        let mut c = CandidateRecord::new(SourceId::Fixture, id, "t", "u");
        c.work_id = work.map(str::to_owned);
        ScoredCandidate {
            candidate: c,
            title_score: score,
            contributor_score: None,
            combined_score: score,
            is_match: false,
        }
    }

    fn matched(mut list: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
        list[0].is_match = true;
        list
    }

    fn ids(cluster: &WorkCluster) -> Vec<&str> {
        cluster.members.iter().map(|m| m.candidate.native_id.as_str()).collect()
    }

    #[test]
    fn same_work_members_only() {
        let ranked = matched(vec![
            scored("a", Some("W1"), 95),
            scored("b", Some("W1"), 60),
            scored("c", Some("W2"), 90),
            scored("d", Some("W1"), 40),
        ]);
        let cluster = build_cluster(&ranked, &MatchConfig::default(), true, true).unwrap();
        assert_eq!(ids(&cluster), ["a", "b", "d"]);
        assert_eq!(cluster.cluster_id, "fixture:W1");
        assert!(cluster.members.iter().all(|m| m.selected));
        assert_eq!(cluster.members[1].score, 60);
    }

    #[test]
    fn clustering_disabled_keeps_anchor_only() {
        let ranked = matched(vec![scored("a", Some("W1"), 95), scored("b", Some("W1"), 90)]);
        let cluster = build_cluster(&ranked, &MatchConfig::default(), false, true).unwrap();
        assert_eq!(ids(&cluster), ["a"]);
    }

    #[test]
    fn no_match_no_cluster() {
        let ranked = vec![scored("a", Some("W1"), 79)];
        assert!(build_cluster(&ranked, &MatchConfig::default(), true, true).is_none());
        assert!(build_cluster(&[], &MatchConfig::default(), true, true).is_none());
    }

    #[test]
    fn score_fallback_without_work_ids() {
        let ranked = matched(vec![scored("a", None, 95), scored("b", None, 80), scored("c", None, 79)]);
        let cluster = build_cluster(&ranked, &MatchConfig::default(), true, false).unwrap();
        assert_eq!(ids(&cluster), ["a", "b"]);
        assert!(cluster.cluster_id.starts_with("fixture:h"));
        assert_eq!(cluster.cluster_id, cluster_id(&ranked[0].candidate));
    }

    #[test]
    fn anchor_appears_once_even_if_duplicated() {
        let ranked = matched(vec![scored("a", Some("W1"), 95), scored("a", Some("W1"), 95)]);
        let cluster = build_cluster(&ranked, &MatchConfig::default(), true, true).unwrap();
        assert_eq!(ids(&cluster), ["a"]);
    }

    fn cluster_with(isbns: &[&[&str]]) -> WorkCluster {
        let members = isbns
            .iter()
            .enumerate()
            .map(|(i, values)| {
                let mut c = CandidateRecord::new(SourceId::Fixture, format!("m{i}"), "t", "u");
                for v in *values {
                    c.add_identifier(IdentifierKind::Isbn, v);
                }
                ClusterMember {
                    candidate: c,
                    selected: true,
                    score: 90,
                }
            })
            .collect::<Vec<_>>();
        WorkCluster {
            cluster_id: "x".into(),
            source: SourceId::Fixture,
            anchor: scored("m0", None, 90),
            members,
        }
    }

    #[test]
    fn merge_first_seen_union() {
        let merged = merge_identifiers([&cluster_with(&[&["a"]]), &cluster_with(&[&["a", "b"]])]);
        assert_eq!(merged[&IdentifierKind::Isbn], ["a", "b"]);
        assert!(merge_identifiers([]).is_empty());
    }

    #[test]
    fn merge_skips_deselected() {
        let mut c = cluster_with(&[&["a"], &["z"]]);
        c.members[1].selected = false;
        assert_eq!(merge_identifiers([&c])[&IdentifierKind::Isbn], ["a"]);
    }
}
