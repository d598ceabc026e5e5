//! Adapting a trained model and pattern to logs from a drifted system.
//!
//! Two strategies with opposite effects on the pattern:
//! * Baum-Welch refits the model on the new lines, then drops states whose
//!   expected usage falls below a fraction of the mean. The pattern gets
//!   shorter and more permissive.
//! * Viterbi decodes the new lines with the unchanged model and adds tokens
//!   that are consistently aligned to confidently decoded states. The
//!   pattern gets longer and more restrictive.
//!
//! Both rules anchor on the line's own tokens: a state only counts where its
//! token actually occurs. States are unlabelled to the refit, so a state
//! whose token vanished would otherwise be free to absorb unrelated positions.
//!
//! The input model is never modified.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{baum_welch_fit, find_trigger_state, state_observations, FitConfig, Hmm, StateObservation};
use crate::parser::ParsingPattern;
use crate::preprocess::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    BaumWelch,
    Viterbi,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::BaumWelch => "baum_welch",
            Strategy::Viterbi => "viterbi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    /// Emissions are held fixed by default: with free emissions the refit
    /// reassigns states that the new data no longer uses.
    pub fit: FitConfig,
    /// Baum-Welch: states below this fraction of the mean occupancy are dropped.
    pub occupancy_floor: f64,
    /// Viterbi: fraction of lines in which a token must be aligned to be added.
    pub consensus: f64,
    /// Viterbi: an alignment counts only where the decoded state is the state
    /// whose token sits at that position and its posterior reaches this value.
    pub min_confidence: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                max_iterations: 20,
                update_emissions: false,
                ..FitConfig::default()
            },
            occupancy_floor: 0.1,
            consensus: 0.8,
            min_confidence: 0.25,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if !(self.occupancy_floor >= 0.0) {
            return Err(Error::Config("occupancy_floor must be non-negative".into()));
        }
        if !(self.consensus > 0.0 && self.consensus <= 1.0) {
            return Err(Error::Config("consensus must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config("min_confidence must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub strategy: Strategy,
    pub pattern_before: ParsingPattern,
    pub pattern_after: ParsingPattern,
    /// Per-iteration total log-likelihood; empty unless Baum-Welch.
    pub loglik_trace: Vec<f64>,
    pub lines_used: usize,
    pub dropped_tokens: Vec<String>,
    pub added_tokens: Vec<String>,
    /// Baum-Welch: anchored occupancy per state under the refitted model.
    /// Viterbi: number of lines each added token was aligned in.
    pub evidence: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct Adapted {
    pub model: Hmm,
    pub pattern: ParsingPattern,
    pub report: AdaptReport,
}

/// Lines carrying the trigger (or an alias) and the observations they emit.
fn trigger_lines<'a>(model: &Hmm, pattern: &ParsingPattern, corpus: &'a [TokenSequence]) -> Vec<(&'a TokenSequence, Vec<StateObservation>)> {
    let states: BTreeSet<String> = model.states().iter().cloned().collect();
    corpus
        .iter()
        .filter(|l| l.tokens.iter().any(|t| pattern.trigger_aliases.contains(t)))
        .map(|l| (l, state_observations(&states, l)))
        .filter(|(_, obs)| !obs.is_empty())
        .collect()
}

fn symbols(obs: &[StateObservation]) -> Vec<String> {
    obs.iter().map(|o| o.symbol.clone()).collect()
}

fn report(strategy: Strategy, before: &ParsingPattern, after: &ParsingPattern, lines_used: usize) -> AdaptReport {
    AdaptReport {
        strategy,
        pattern_before: before.clone(),
        pattern_after: after.clone(),
        loglik_trace: Vec::new(),
        lines_used,
        dropped_tokens: before.required_tokens.difference(&after.required_tokens).cloned().collect(),
        added_tokens: after.required_tokens.difference(&before.required_tokens).cloned().collect(),
        evidence: BTreeMap::new(),
    }
}

/// No-op adaptation, for a uniform report across strategies.
pub fn adapt_none(model: &Hmm, pattern: &ParsingPattern) -> Adapted {
    Adapted {
        model: model.clone(),
        pattern: pattern.clone(),
        report: report(Strategy::None, pattern, pattern, 0),
    }
}

pub fn adapt_baum_welch(model: &Hmm, pattern: &ParsingPattern, new_corpus: &[TokenSequence], config: &AdaptConfig) -> Result<Adapted> {
    config.validate()?;
    if new_corpus.is_empty() {
        return Err(Error::Adapt("new corpus is empty".into()));
    }
    let lines = trigger_lines(model, pattern, new_corpus);
    if lines.is_empty() {
        return Err(Error::Adapt("no line of the new corpus contains the trigger".into()));
    }
    let seqs: Vec<Vec<String>> = lines.iter().map(|(_, o)| symbols(o)).collect();
    let fit = baum_welch_fit(model, &seqs, &config.fit)?;
    // Anchored occupancy: at each occurrence of a state token, the refitted
    // model's posterior that this very state produced it. A state whose token
    // no longer occurs in the new lines cannot accumulate any.
    let mut occupancy = vec![0.0; fit.model.n_states()];
    for ((_, obs), seq) in lines.iter().zip(&seqs) {
        let post = fit.model.posteriors_indices(&fit.model.encode(seq)?)?;
        for (t, o) in obs.iter().enumerate() {
            let i = fit.model.state_index(&o.state_token).expect("observation of a model state");
            occupancy[i] += post[t][i];
        }
    }
    let mean = occupancy.iter().sum::<f64>() / occupancy.len() as f64;
    let keep: Vec<usize> = (0..fit.model.n_states())
        .filter(|&i| occupancy[i] >= config.occupancy_floor * mean)
        .collect();
    if keep.is_empty() {
        return Err(Error::Adapt("no state stays above the occupancy floor".into()));
    }
    let adapted = fit.model.restrict_states(&keep)?;
    let mut after = pattern.with_required(adapted.states().iter().cloned().collect());
    if !after.required_tokens.contains(&pattern.trigger) {
        let matching: Vec<TokenSequence> = lines.iter().map(|(l, _)| (*l).clone()).collect();
        let t = find_trigger_state(&adapted, &matching)
            .map_err(|_| Error::Adapt("trigger dropped and no surviving state emits numbers".into()))?;
        after.trigger = adapted.states()[t].clone();
        after.trigger_aliases = vec![after.trigger.clone()];
    }

    let mut rep = report(Strategy::BaumWelch, pattern, &after, lines.len());
    rep.loglik_trace = fit.loglik_trace;
    rep.evidence = fit
        .model
        .states()
        .iter()
        .cloned()
        .zip(occupancy.iter().copied())
        .collect();
    Ok(Adapted {
        model: adapted,
        pattern: after,
        report: rep,
    })
}

pub fn adapt_viterbi(model: &Hmm, pattern: &ParsingPattern, new_corpus: &[TokenSequence], config: &AdaptConfig) -> Result<Adapted> {
    config.validate()?;
    if new_corpus.is_empty() {
        return Err(Error::Adapt("new corpus is empty".into()));
    }
    let lines = trigger_lines(model, pattern, new_corpus);
    if lines.is_empty() {
        return Err(Error::Adapt("no line of the new corpus could be decoded".into()));
    }

    let n = model.n_states();
    let mut aligned_in: BTreeMap<String, usize> = BTreeMap::new();
    let mut paths = Vec::with_capacity(lines.len());
    for (_, obs) in &lines {
        let enc = model.encode(&symbols(obs))?;
        let (path, _) = model.viterbi_indices(&enc)?;
        let post = model.posteriors_indices(&enc)?;
        let confident: BTreeSet<&String> = obs
            .iter()
            .enumerate()
            .filter(|(t, o)| {
                let anchored = model.states()[path[*t]] == o.state_token;
                o.is_value() && anchored && post[*t][path[*t]] >= config.min_confidence
            })
            .map(|(_, o)| &o.symbol)
            .collect();
        for sym in confident {
            *aligned_in.entry(sym.clone()).or_insert(0) += 1;
        }
        paths.push(path);
    }
    if paths.is_empty() {
        return Err(Error::Adapt("empty decode results".into()));
    }

    let needed = config.consensus * lines.len() as f64;
    let added: BTreeMap<String, usize> = aligned_in
        .into_iter()
        .filter(|(tok, c)| *c as f64 >= needed && !pattern.required_tokens.contains(tok))
        .collect();
    let mut required = pattern.required_tokens.clone();
    required.extend(added.keys().cloned());
    let after = pattern.with_required(required);

    // Re-estimate from the hard alignments over the extended alphabet.
    let alphabet: BTreeSet<String> = lines.iter().flat_map(|(_, o)| symbols(o)).collect();
    let eps = config.fit.smoothing_epsilon;
    let extended = model.with_extended_alphabet(&alphabet, eps);
    let m = extended.n_emissions();
    let mut start = vec![0.0; n];
    let mut trans = vec![vec![0.0; n]; n];
    let mut emit = vec![vec![0.0; m]; n];
    for ((_, obs), path) in lines.iter().zip(&paths) {
        let enc = extended.encode(&symbols(obs))?;
        start[path[0]] += 1.0;
        for t in 0..path.len() {
            emit[path[t]][enc[t]] += 1.0;
            if t + 1 < path.len() {
                trans[path[t]][path[t + 1]] += 1.0;
            }
        }
    }
    let refit = Hmm::from_counts(
        extended.states().to_vec(),
        extended.emissions().to_vec(),
        &start,
        &trans,
        &emit,
        eps,
    )?;

    let mut rep = report(Strategy::Viterbi, pattern, &after, lines.len());
    rep.evidence = added.into_iter().map(|(k, c)| (k, c as f64)).collect();
    Ok(Adapted {
        model: refit,
        pattern: after,
        report: rep,
    })
}

pub fn adapt(
    strategy: Strategy,
    model: &Hmm,
    pattern: &ParsingPattern,
    new_corpus: &[TokenSequence],
    config: &AdaptConfig,
) -> Result<Adapted> {
    match strategy {
        Strategy::None => Ok(adapt_none(model, pattern)),
        Strategy::BaumWelch => adapt_baum_welch(model, pattern, new_corpus, config),
        Strategy::Viterbi => adapt_viterbi(model, pattern, new_corpus, config),
    }
}
