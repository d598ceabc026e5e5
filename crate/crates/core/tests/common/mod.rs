#![allow(dead_code)]

use hmmparse::corpus::{generate_corpus, GeneratedCorpus, GeneratorConfig};
use hmmparse::hmm::Hmm;
use hmmparse::miner::{count_token_frequencies, PatternCluster};
use hmmparse::parser::KpiTable;
use hmmparse::preprocess::{preprocess_corpus, Stopwords, TokenSequence};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// log(sum(exp(v))) computed independently of the library.
pub fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn all_paths(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

/// Joint log-probability of a path, from the raw parameter matrices.
pub fn joint(m: &Hmm, path: &[usize], obs: &[usize]) -> f64 {
    let mut lp = m.start()[path[0]].ln() + m.emission()[path[0]][obs[0]].ln();
    for t in 1..path.len() {
        lp += m.transition()[path[t - 1]][path[t]].ln() + m.emission()[path[t]][obs[t]].ln();
    }
    lp
}

/// (log of total probability, max joint log-probability) by enumeration.
pub fn brute_force(m: &Hmm, obs: &[usize]) -> (f64, f64) {
    let scores: Vec<f64> = all_paths(m.n_states(), obs.len())
        .iter()
        .map(|p| joint(m, p, obs))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lse(&scores), max)
}

fn random_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Hmm {
    Hmm::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        (0..m).map(|k| format!("e{k}")).collect(),
        random_row(rng, n),
        (0..n).map(|_| random_row(rng, n)).collect(),
        (0..n).map(|_| random_row(rng, m)).collect(),
    )
    .unwrap()
}

pub fn random_obs(rng: &mut ChaCha8Rng, m: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..m)).collect()
}

/// Support of a candidate recounted from scratch: number of lines whose set
/// of frequent tokens equals the candidate exactly.
pub fn recount_exact(corpus: &[TokenSequence], threshold: usize, cluster: &PatternCluster) -> usize {
    let freqs = count_token_frequencies(corpus);
    corpus
        .iter()
        .filter(|l| {
            let subset: std::collections::BTreeSet<String> = l
                .tokens
                .iter()
                .filter(|t| freqs.get(*t).copied().unwrap_or(0) >= threshold)
                .cloned()
                .collect();
            subset == cluster.tokens
        })
        .count()
}

/// Support recounted as the number of lines containing every candidate token.
pub fn recount_containment(corpus: &[TokenSequence], cluster: &PatternCluster) -> usize {
    corpus
        .iter()
        .filter(|l| cluster.tokens.iter().all(|t| l.tokens.contains(t)))
        .count()
}

pub struct Scenario {
    pub gen: GeneratedCorpus,
    pub lines: Vec<TokenSequence>,
}

pub fn scenario(cfg: &GeneratorConfig) -> Scenario {
    let gen = generate_corpus(cfg).unwrap();
    let lines = preprocess_corpus(&gen.events, &Stopwords::english());
    Scenario { gen, lines }
}

/// (true positives, false positives) of `parsed` against `truth`, exact values.
pub fn tp_fp(parsed: &KpiTable, truth: &KpiTable) -> (usize, usize) {
    let t: std::collections::HashMap<&str, &str> = truth
        .rows
        .iter()
        .map(|r| (r.event_id.as_str(), r.value.as_str()))
        .collect();
    let tp = parsed
        .rows
        .iter()
        .filter(|r| t.get(r.event_id.as_str()) == Some(&r.value.as_str()))
        .count();
    (tp, parsed.len() - tp)
}
