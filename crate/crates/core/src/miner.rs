//! Position-agnostic frequent-pattern mining over preprocessed lines.
//!
//! Three passes: count the lines each token occurs in, keep tokens whose
//! count reaches the threshold, then group lines by the exact set of frequent
//! tokens they contain. Groups whose support reaches the threshold are the
//! clusters; the top `expected_kpi_count` by support are kept.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenSequence;

/// How a candidate's support is counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// Lines whose frequent-token subset equals the candidate.
    #[default]
    Exact,
    /// Lines whose token set contains every candidate token.
    Containment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub threshold: usize,
    pub expected_kpi_count: usize,
    #[serde(default)]
    pub support_mode: SupportMode,
}

impl MiningConfig {
    pub fn new(threshold: usize, expected_kpi_count: usize) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::Config("threshold must be at least 1".into()));
        }
        if expected_kpi_count == 0 {
            return Err(Error::Config("expected_kpi_count must be at least 1".into()));
        }
        Ok(Self {
            threshold,
            expected_kpi_count,
            support_mode: SupportMode::Exact,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCluster {
    pub tokens: BTreeSet<String>,
    pub support: usize,
}

impl PatternCluster {
    /// Space-joined sorted tokens; used for tie-breaking and display.
    pub fn render(&self) -> String {
        self.tokens.iter().map(String::as_str).collect::<Vec<_>>().join(" ")
    }

    pub fn matches(&self, line: &TokenSequence) -> bool {
        let set: BTreeSet<&str> = line.tokens.iter().map(String::as_str).collect();
        self.tokens.iter().all(|t| set.contains(t.as_str()))
    }
}

impl std::fmt::Display for PatternCluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] support={}", self.render(), self.support)
    }
}

/// Result of [`reduce_to_kpi_clusters`]; `shortfall` is set when fewer
/// clusters than requested were available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedClusters {
    pub clusters: Vec<PatternCluster>,
    pub requested: usize,
    pub shortfall: bool,
}

/// Number of lines each token appears in (at least once).
pub fn count_token_frequencies(corpus: &[TokenSequence]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for line in corpus {
        let distinct: BTreeSet<&String> = line.tokens.iter().collect();
        for token in distinct {
            *counts.entry(token.clone()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn find_frequent_tokens(freqs: &BTreeMap<String, usize>, threshold: usize) -> BTreeSet<String> {
    freqs
        .iter()
        .filter(|(_, &c)| c >= threshold)
        .map(|(t, _)| t.clone())
        .collect()
}

fn frequent_subset(line: &TokenSequence, frequent: &BTreeSet<String>) -> BTreeSet<String> {
    line.tokens
        .iter()
        .filter(|t| frequent.contains(*t))
        .cloned()
        .collect()
}

/// One candidate per distinct non-empty frequent-token subset of a line.
pub fn build_cluster_candidates(
    corpus: &[TokenSequence],
    frequent: &BTreeSet<String>,
    mode: SupportMode,
) -> Vec<PatternCluster> {
    let mut groups: BTreeMap<BTreeSet<String>, usize> = BTreeMap::new();
    for line in corpus {
        let subset = frequent_subset(line, frequent);
        if !subset.is_empty() {
            *groups.entry(subset).or_insert(0) += 1;
        }
    }
    match mode {
        SupportMode::Exact => groups
            .into_iter()
            .map(|(tokens, support)| PatternCluster { tokens, support })
            .collect(),
        SupportMode::Containment => {
            let line_sets: Vec<BTreeSet<&str>> = corpus
                .iter()
                .map(|l| l.tokens.iter().map(String::as_str).collect())
                .collect();
            groups
                .into_keys()
                .map(|tokens| {
                    let support = line_sets
                        .iter()
                        .filter(|set| tokens.iter().all(|t| set.contains(t.as_str())))
                        .count();
                    PatternCluster { tokens, support }
                })
                .collect()
        }
    }
}

/// Candidates with support >= threshold, by support descending then rendering.
pub fn select_clusters(candidates: &[PatternCluster], threshold: usize) -> Vec<PatternCluster> {
    let mut selected: Vec<PatternCluster> = candidates
        .iter()
        .filter(|c| c.support >= threshold)
        .cloned()
        .collect();
    selected.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.render().cmp(&b.render())));
    selected
}

/// Keep the `expected_kpi_count` highest-support clusters. `clusters` must
/// already be ordered as [`select_clusters`] returns them.
pub fn reduce_to_kpi_clusters(clusters: &[PatternCluster], expected_kpi_count: usize) -> ReducedClusters {
    let kept: Vec<PatternCluster> = clusters.iter().take(expected_kpi_count).cloned().collect();
    ReducedClusters {
        shortfall: kept.len() < expected_kpi_count,
        requested: expected_kpi_count,
        clusters: kept,
    }
}

/// Everything the mining run produced, for inspection.
#[derive(Debug, Clone)]
pub struct MiningResult {
    pub frequencies: BTreeMap<String, usize>,
    pub frequent: BTreeSet<String>,
    pub selected: Vec<PatternCluster>,
    pub reduced: ReducedClusters,
}

pub fn mine(corpus: &[TokenSequence], config: &MiningConfig) -> MiningResult {
    let frequencies = count_token_frequencies(corpus);
    let frequent = find_frequent_tokens(&frequencies, config.threshold);
    let candidates = build_cluster_candidates(corpus, &frequent, config.support_mode);
    let selected = select_clusters(&candidates, config.threshold);
    let reduced = reduce_to_kpi_clusters(&selected, config.expected_kpi_count);
    MiningResult {
        frequencies,
        frequent,
        selected,
        reduced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, toks: &str) -> TokenSequence {
        TokenSequence::new(id, toks.split_whitespace().map(String::from).collect())
    }

    fn set(toks: &str) -> BTreeSet<String> {
        toks.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn counts_lines_not_occurrences() {
        let corpus = vec![
            line("1", "ctdi 1.00 ctdi"),
            line("2", "scan"),
            line("3", "ctdi 2.00"),
        ];
        let f = count_token_frequencies(&corpus);
        assert_eq!(f["ctdi"], 2);
        assert_eq!(f["scan"], 1);
        assert!(count_token_frequencies(&[]).is_empty());
    }

    #[test]
    fn frequent_threshold() {
        let freqs: BTreeMap<String, usize> = [("a".to_string(), 5), ("b".to_string(), 2)].into();
        assert_eq!(find_frequent_tokens(&freqs, 3), set("a"));
        assert_eq!(find_frequent_tokens(&freqs, 1), set("a b"));
    }

    #[test]
    fn identical_subsets_merge() {
        let corpus = vec![line("1", "a b x"), line("2", "b a y"), line("3", "z")];
        let c = build_cluster_candidates(&corpus, &set("a b"), SupportMode::Exact);
        assert_eq!(c, vec![PatternCluster { tokens: set("a b"), support: 2 }]);
    }

    #[test]
    fn containment_mode_counts_supersets() {
        let corpus = vec![line("1", "a b"), line("2", "a")];
        let c = build_cluster_candidates(&corpus, &set("a b"), SupportMode::Containment);
        let a = c.iter().find(|c| c.tokens == set("a")).unwrap();
        assert_eq!(a.support, 2);
        let exact = build_cluster_candidates(&corpus, &set("a b"), SupportMode::Exact);
        assert_eq!(exact.iter().find(|c| c.tokens == set("a")).unwrap().support, 1);
    }

    #[test]
    fn selection_and_reduction() {
        let c = vec![
            PatternCluster { tokens: set("x"), support: 19 },
            PatternCluster { tokens: set("y"), support: 25 },
        ];
        let s = select_clusters(&c, 20);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].support, 25);
        assert!(select_clusters(&c, 30).is_empty());

        let three = vec![
            PatternCluster { tokens: set("a"), support: 9 },
            PatternCluster { tokens: set("b"), support: 5 },
            PatternCluster { tokens: set("c"), support: 3 },
        ];
        let r = reduce_to_kpi_clusters(&three, 1);
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].tokens, set("a"));
        assert!(!r.shortfall);

        let empty = reduce_to_kpi_clusters(&[], 1);
        assert!(empty.clusters.is_empty());
        assert!(empty.shortfall);
    }

    #[test]
    fn ties_break_on_rendering() {
        let c = vec![
            PatternCluster { tokens: set("b c"), support: 4 },
            PatternCluster { tokens: set("a z"), support: 4 },
        ];
        let s = select_clusters(&c, 1);
        assert_eq!(s[0].tokens, set("a z"));
    }

    #[test]
    fn ctdi_cluster_beats_decoy() {
        let mut corpus = Vec::new();
        for i in 0..20 {
            corpus.push(line(&format!("s{i}"), &format!("load scan ctdi {i}.00")));
        }
        for i in 0..10 {
            corpus.push(line(&format!("d{i}"), "table status move"));
        }
        let cfg = MiningConfig::new(10, 1).unwrap();
        let r = mine(&corpus, &cfg);
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r.reduced.clusters.len(), 1);
        assert_eq!(r.reduced.clusters[0].tokens, set("ctdi load scan"));
        assert_eq!(r.reduced.clusters[0].support, 20);
    }

    #[test]
    fn config_validation() {
        assert!(MiningConfig::new(0, 1).is_err());
        assert!(MiningConfig::new(1, 0).is_err());
    }
}
