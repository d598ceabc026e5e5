//! Discrete-observation hidden Markov model.
//!
//! Hidden states are pattern tokens; each occurrence of a state token in a
//! line emits the token that follows it, whether that follower is a value or
//! another pattern token. A state token at the end of the line emits the
//! reserved [`NO_EMISSION`] symbol. Every state occurrence thus yields exactly
//! one observation, and the emitted followers keep states distinguishable
//! when a model is refitted on new data. Symbols never seen in training map
//! to the reserved [`OOV`] column at inference time.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::miner::PatternCluster;
use crate::preprocess::{is_number_token, TokenSequence};

/// Emitted by a state token that ends the line.
pub const NO_EMISSION: &str = "<none>";
/// Out-of-vocabulary column; holds only smoothing mass after construction.
pub const OOV: &str = "<oov>";

/// Row sums must be within this of 1.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigramMode {
    /// Consecutive state tokens form a bigram even when value tokens sit between them.
    #[default]
    SkipNonState,
    /// Only directly adjacent state tokens form a bigram.
    StrictAdjacency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub smoothing_epsilon: f64,
    pub bigram_mode: BigramMode,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            smoothing_epsilon: 1e-6,
            bigram_mode: BigramMode::SkipNonState,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub loglik_tolerance: f64,
    pub smoothing_epsilon: f64,
    /// When false only start and transition probabilities are re-estimated.
    #[serde(default = "default_true")]
    pub update_emissions: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            loglik_tolerance: 1e-4,
            smoothing_epsilon: 1e-6,
            update_emissions: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.loglik_tolerance > 0.0) {
            return Err(Error::Config("loglik_tolerance must be positive".into()));
        }
        if !(self.smoothing_epsilon > 0.0) {
            return Err(Error::Config("smoothing_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    states: Vec<String>,
    emissions: Vec<String>,
    start: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
}

fn check_distribution(label: &str, row: &[f64]) -> Result<()> {
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidModel(format!("{label} has invalid probability {p}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(Error::InvalidModel(format!("{label} sums to {sum}, expected 1")));
    }
    Ok(())
}

fn check_distinct(label: &str, items: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item) {
            return Err(Error::InvalidModel(format!("duplicate {label} `{item}`")));
        }
    }
    Ok(())
}

fn normalize_with(counts: &[f64], epsilon: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + epsilon * counts.len() as f64;
    counts.iter().map(|c| (c + epsilon) / total).collect()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Flat copies of the transition and (transposed) emission matrices for the
/// scaled forward-backward sweeps.
struct Dense {
    n: usize,
    a: Vec<f64>,
    /// `bt[k * n + j]` = P(symbol k | state j).
    bt: Vec<f64>,
}

impl Dense {
    fn new(model: &Hmm) -> Self {
        let n = model.n_states();
        let m = model.n_emissions();
        let a = model.transition.iter().flatten().copied().collect();
        let mut bt = vec![0.0; m * n];
        for (j, row) in model.emission.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                bt[k * n + j] = *p;
            }
        }
        Self { n, a, bt }
    }

    fn b(&self, k: usize) -> &[f64] {
        &self.bt[k * self.n..(k + 1) * self.n]
    }

    /// Scaled forward pass followed by a backward pass. Calls `on_gamma` with
    /// the posterior state marginals at each position (last to first) and,
    /// when given, adds sum_t alpha_t(i) * b_j(o_t+1) * beta_t+1(j) / c_t+1 into
    /// `xi` (the transition expectation before multiplying by a_ij).
    /// Returns the sequence log-likelihood.
    fn sweep(&self, start: &[f64], obs: &[usize], mut on_gamma: impl FnMut(usize, &[f64]), mut xi: Option<&mut [f64]>) -> f64 {
        let n = self.n;
        let t_len = obs.len();
        let mut alpha = vec![0.0; t_len * n];
        let mut scale = vec![0.0; t_len];

        let b0 = self.b(obs[0]);
        for j in 0..n {
            alpha[j] = start[j] * b0[j];
        }
        for t in 0..t_len {
            let (prev, cur) = alpha.split_at_mut(t * n);
            let cur = &mut cur[..n];
            if t > 0 {
                let prev = &prev[(t - 1) * n..];
                for (i, &p) in prev.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let row = &self.a[i * n..(i + 1) * n];
                    for (c, &x) in cur.iter_mut().zip(row) {
                        *c += p * x;
                    }
                }
                for (c, &e) in cur.iter_mut().zip(self.b(obs[t])) {
                    *c *= e;
                }
            }
            let s: f64 = cur.iter().sum();
            scale[t] = s;
            let inv = 1.0 / s;
            cur.iter_mut().for_each(|c| *c *= inv);
        }

        let mut beta = vec![1.0; n];
        let mut w = vec![0.0; n];
        let mut gamma = vec![0.0; n];
        for t in (0..t_len).rev() {
            let at = &alpha[t * n..(t + 1) * n];
            let mut gs = 0.0;
            for i in 0..n {
                gamma[i] = at[i] * beta[i];
                gs += gamma[i];
            }
            let inv = 1.0 / gs;
            gamma.iter_mut().for_each(|g| *g *= inv);
            on_gamma(t, &gamma);
            if t == 0 {
                break;
            }
            let inv_c = 1.0 / scale[t];
            for ((wj, &e), &bj) in w.iter_mut().zip(self.b(obs[t])).zip(&beta) {
                *wj = e * bj * inv_c;
            }
            if let Some(xi) = xi.as_deref_mut() {
                let prev = &alpha[(t - 1) * n..t * n];
                for (i, &p) in prev.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (x, &wj) in xi[i * n..(i + 1) * n].iter_mut().zip(&w) {
                        *x += p * wj;
                    }
                }
            }
            for (i, bi) in beta.iter_mut().enumerate() {
                *bi = self.a[i * n..(i + 1) * n].iter().zip(&w).map(|(x, y)| x * y).sum();
            }
        }
        scale.iter().map(|s| s.ln()).sum()
    }
}

impl Hmm {
    pub fn new(
        states: Vec<String>,
        emissions: Vec<String>,
        start: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let model = Self {
            states,
            emissions,
            start,
            transition,
            emission,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks shapes, distinctness and row-stochasticity.
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let m = self.emissions.len();
        if n == 0 {
            return Err(Error::InvalidModel("model has no states".into()));
        }
        if m == 0 {
            return Err(Error::InvalidModel("model has no emissions".into()));
        }
        check_distinct("state", &self.states)?;
        check_distinct("emission", &self.emissions)?;
        if self.start.len() != n {
            return Err(Error::InvalidModel(format!(
                "start vector has {} entries for {n} states",
                self.start.len()
            )));
        }
        check_distribution("start vector", &self.start)?;
        if self.transition.len() != n {
            return Err(Error::InvalidModel("transition matrix row count mismatch".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("transition row {i} has wrong length")));
            }
            check_distribution(&format!("transition row {i} ({})", self.states[i]), row)?;
        }
        if self.emission.len() != n {
            return Err(Error::InvalidModel("emission matrix row count mismatch".into()));
        }
        for (i, row) in self.emission.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidModel(format!("emission row {i} has wrong length")));
            }
            check_distribution(&format!("emission row {i} ({})", self.states[i]), row)?;
        }
        Ok(())
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }
    pub fn emissions(&self) -> &[String] {
        &self.emissions
    }
    pub fn start(&self) -> &[f64] {
        &self.start
    }
    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }
    pub fn emission(&self) -> &[Vec<f64>] {
        &self.emission
    }
    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn n_emissions(&self) -> usize {
        self.emissions.len()
    }

    pub fn state_index(&self, token: &str) -> Option<usize> {
        self.states.iter().position(|s| s == token)
    }

    pub fn emission_index(&self, symbol: &str) -> Option<usize> {
        self.emissions.iter().position(|e| e == symbol)
    }

    /// Maps symbols to emission columns; unknown symbols go to [`OOV`] when
    /// the model has that column.
    pub fn encode<S: AsRef<str>>(&self, observations: &[S]) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self
            .emissions
            .iter()
            .enumerate()
            .map(|(k, e)| (e.as_str(), k))
            .collect();
        let oov = index.get(OOV).copied();
        observations
            .iter()
            .map(|o| {
                let o = o.as_ref();
                index
                    .get(o)
                    .copied()
                    .or(oov)
                    .ok_or_else(|| Error::UnknownSymbol(o.to_string()))
            })
            .collect()
    }

    fn check_indices(&self, obs: &[usize]) -> Result<()> {
        if obs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&k) = obs.iter().find(|&&k| k >= self.emissions.len()) {
            return Err(Error::UnknownSymbol(format!("#{k}")));
        }
        Ok(())
    }

    /// Log-space forward algorithm over encoded observations.
    pub fn loglikelihood_indices(&self, obs: &[usize]) -> Result<f64> {
        self.check_indices(obs)?;
        let n = self.n_states();
        let log_a: Vec<Vec<f64>> = self
            .transition
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        let mut alpha: Vec<f64> = (0..n)
            .map(|i| self.start[i].ln() + self.emission[i][obs[0]].ln())
            .collect();
        for &o in &obs[1..] {
            alpha = (0..n)
                .map(|j| {
                    log_sum_exp((0..n).map(|i| alpha[i] + log_a[i][j])) + self.emission[j][o].ln()
                })
                .collect();
        }
        Ok(log_sum_exp(alpha.into_iter()))
    }

    /// Log-space Viterbi (max-plus). Ties resolve to the lowest state index.
    pub fn viterbi_indices(&self, obs: &[usize]) -> Result<(Vec<usize>, f64)> {
        self.check_indices(obs)?;
        let n = self.n_states();
        let t_len = obs.len();
        let log_a: Vec<Vec<f64>> = self
            .transition
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        let mut delta: Vec<f64> = (0..n)
            .map(|i| self.start[i].ln() + self.emission[i][obs[0]].ln())
            .collect();
        let mut back = vec![vec![0usize; n]; t_len];
        for t in 1..t_len {
            let mut next = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for i in 0..n {
                    let v = delta[i] + log_a[i][j];
                    if v > best {
                        best = v;
                        arg = i;
                    }
                }
                next[j] = best + self.emission[j][obs[t]].ln();
                back[t][j] = arg;
            }
            delta = next;
        }
        let mut last = 0;
        for i in 1..n {
            if delta[i] > delta[last] {
                last = i;
            }
        }
        let score = delta[last];
        let mut path = vec![0; t_len];
        path[t_len - 1] = last;
        for t in (1..t_len).rev() {
            path[t - 1] = back[t][path[t]];
        }
        Ok((path, score))
    }

    /// Joint log-probability of a given state path and observation sequence.
    pub fn path_logprob(&self, path: &[usize], obs: &[usize]) -> f64 {
        let mut lp = self.start[path[0]].ln() + self.emission[path[0]][obs[0]].ln();
        for t in 1..path.len() {
            lp += self.transition[path[t - 1]][path[t]].ln() + self.emission[path[t]][obs[t]].ln();
        }
        lp
    }

    /// Posterior state marginals for each position.
    pub fn posteriors_indices(&self, obs: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_indices(obs)?;
        let mut out = vec![Vec::new(); obs.len()];
        Dense::new(self).sweep(&self.start, obs, |t, g| out[t] = g.to_vec(), None);
        Ok(out)
    }

    /// Copy of the model whose alphabet also contains `symbols`; new columns
    /// get `epsilon` in every row before renormalization. Reserved symbols stay last.
    pub fn with_extended_alphabet(&self, symbols: &BTreeSet<String>, epsilon: f64) -> Hmm {
        let known: BTreeSet<&str> = self.emissions.iter().map(String::as_str).collect();
        let new: Vec<&String> = symbols
            .iter()
            .filter(|s| !known.contains(s.as_str()))
            .collect();
        if new.is_empty() {
            return self.clone();
        }
        let is_reserved = |e: &str| e == NO_EMISSION || e == OOV;
        let mut order: Vec<usize> = (0..self.emissions.len())
            .filter(|&k| !is_reserved(&self.emissions[k]))
            .collect();
        let reserved: Vec<usize> = (0..self.emissions.len())
            .filter(|&k| is_reserved(&self.emissions[k]))
            .collect();
        let mut emissions: Vec<String> = order.iter().map(|&k| self.emissions[k].clone()).collect();
        emissions.extend(new.iter().map(|s| (*s).clone()));
        emissions.extend(reserved.iter().map(|&k| self.emissions[k].clone()));
        order.extend(reserved.iter().copied());

        let emission = self
            .emission
            .iter()
            .map(|row| {
                let real = order.len() - reserved.len();
                let mut out: Vec<f64> = order[..real].iter().map(|&k| row[k]).collect();
                out.extend(std::iter::repeat_n(epsilon, new.len()));
                out.extend(reserved.iter().map(|&k| row[k]));
                let s: f64 = out.iter().sum();
                out.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Hmm {
            states: self.states.clone(),
            emissions,
            start: self.start.clone(),
            transition: self.transition.clone(),
            emission,
        }
    }

    /// Expected number of visits to each state over the given sequences.
    pub fn occupancy(&self, sequences: &[Vec<usize>]) -> Result<Vec<f64>> {
        let mut occ = vec![0.0; self.n_states()];
        let dense = Dense::new(self);
        for seq in sequences.iter().filter(|s| !s.is_empty()) {
            self.check_indices(seq)?;
            dense.sweep(
                &self.start,
                seq,
                |_, g| occ.iter_mut().zip(g).for_each(|(o, x)| *o += x),
                None,
            );
        }
        Ok(occ)
    }
}

impl Hmm {
    /// Model from raw counts, each additively smoothed by `epsilon` and row-normalized.
    pub fn from_counts(
        states: Vec<String>,
        emissions: Vec<String>,
        start: &[f64],
        transition: &[Vec<f64>],
        emission: &[Vec<f64>],
        epsilon: f64,
    ) -> Result<Hmm> {
        Hmm::new(
            states,
            emissions,
            normalize_with(start, epsilon),
            transition.iter().map(|r| normalize_with(r, epsilon)).collect(),
            emission.iter().map(|r| normalize_with(r, epsilon)).collect(),
        )
    }

    /// Sub-model over the given states (in the given order); start and
    /// transition rows are renormalized, emission rows are kept.
    pub fn restrict_states(&self, keep: &[usize]) -> Result<Hmm> {
        if keep.is_empty() {
            return Err(Error::InvalidModel("cannot restrict to zero states".into()));
        }
        let renorm = |v: Vec<f64>| {
            let s: f64 = v.iter().sum();
            if s > 0.0 {
                v.into_iter().map(|x| x / s).collect()
            } else {
                vec![1.0 / keep.len() as f64; keep.len()]
            }
        };
        Hmm::new(
            keep.iter().map(|&i| self.states[i].clone()).collect(),
            self.emissions.clone(),
            renorm(keep.iter().map(|&i| self.start[i]).collect()),
            keep.iter()
                .map(|&i| renorm(keep.iter().map(|&j| self.transition[i][j]).collect()))
                .collect(),
            keep.iter().map(|&i| self.emission[i].clone()).collect(),
        )
    }
}

/// Observation emitted at one state-token occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateObservation {
    /// Index of the state token in the line.
    pub position: usize,
    /// The state token found there.
    pub state_token: String,
    /// Follower token, or [`NO_EMISSION`].
    pub symbol: String,
    /// The follower is itself a state token.
    pub follower_is_state: bool,
}

impl StateObservation {
    /// The follower is a value token (present and not a state token).
    pub fn is_value(&self) -> bool {
        !self.follower_is_state && self.symbol != NO_EMISSION
    }
}

/// Walks a line and emits one observation per occurrence of a state token.
pub fn state_observations(states: &BTreeSet<String>, line: &TokenSequence) -> Vec<StateObservation> {
    let toks = &line.tokens;
    toks.iter()
        .enumerate()
        .filter(|(_, t)| states.contains(*t))
        .map(|(p, t)| {
            let next = toks.get(p + 1);
            StateObservation {
                position: p,
                state_token: t.clone(),
                symbol: next.cloned().unwrap_or_else(|| NO_EMISSION.to_string()),
                follower_is_state: next.is_some_and(|n| states.contains(n)),
            }
        })
        .collect()
}

/// Constructs the model from lines that contain every cluster token.
///
/// Start, transition and emission counts are all additively smoothed by
/// `config.smoothing_epsilon` and row-normalized.
pub fn build_hmm(matching_lines: &[TokenSequence], cluster: &PatternCluster, config: &BuildConfig) -> Result<Hmm> {
    if matching_lines.is_empty() {
        return Err(Error::NoMatchingLines);
    }
    if cluster.tokens.is_empty() {
        return Err(Error::InvalidModel("cluster has no tokens".into()));
    }
    if !(config.smoothing_epsilon > 0.0) {
        return Err(Error::Config("smoothing_epsilon must be positive".into()));
    }
    let states: Vec<String> = cluster.tokens.iter().cloned().collect();
    let sidx: HashMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let n = states.len();

    let observed: Vec<Vec<StateObservation>> = matching_lines
        .iter()
        .map(|l| state_observations(&cluster.tokens, l))
        .collect();
    let alphabet: BTreeSet<&str> = observed
        .iter()
        .flatten()
        .map(|o| o.symbol.as_str())
        .filter(|s| *s != NO_EMISSION)
        .collect();
    let mut emissions: Vec<String> = alphabet.into_iter().map(String::from).collect();
    emissions.push(NO_EMISSION.to_string());
    emissions.push(OOV.to_string());
    let eidx: HashMap<&str, usize> = emissions.iter().enumerate().map(|(k, e)| (e.as_str(), k)).collect();
    let m = emissions.len();

    let mut start = vec![0.0; n];
    let mut trans = vec![vec![0.0; n]; n];
    let mut emit = vec![vec![0.0; m]; n];
    for obs in &observed {
        for (k, o) in obs.iter().enumerate() {
            let i = sidx[o.state_token.as_str()];
            start[i] += 1.0;
            emit[i][eidx[o.symbol.as_str()]] += 1.0;
            if let Some(next) = obs.get(k + 1) {
                let adjacent = next.position == o.position + 1;
                if config.bigram_mode == BigramMode::SkipNonState || adjacent {
                    trans[i][sidx[next.state_token.as_str()]] += 1.0;
                }
            }
        }
    }
    let eps = config.smoothing_epsilon;
    Hmm::new(
        states,
        emissions,
        normalize_with(&start, eps),
        trans.iter().map(|r| normalize_with(r, eps)).collect(),
        emit.iter().map(|r| normalize_with(r, eps)).collect(),
    )
}

pub fn sequence_loglikelihood<S: AsRef<str>>(model: &Hmm, observations: &[S]) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::EmptySequence);
    }
    model.loglikelihood_indices(&model.encode(observations)?)
}

pub fn viterbi_decode<S: AsRef<str>>(model: &Hmm, observations: &[S]) -> Result<(Vec<usize>, f64)> {
    if observations.is_empty() {
        return Err(Error::EmptySequence);
    }
    model.viterbi_indices(&model.encode(observations)?)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Hmm,
    /// Total log-likelihood of each successive model, starting with the input model.
    pub loglik_trace: Vec<f64>,
    /// Number of re-estimation steps performed.
    pub iterations: usize,
}

/// Baum-Welch re-estimation over several sequences (expected counts are
/// summed across sequences before each M-step). Symbols absent from the
/// model's alphabet are added first at the smoothing floor.
pub fn baum_welch_fit<S: AsRef<str>>(model: &Hmm, training_sequences: &[Vec<S>], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let non_empty: Vec<&Vec<S>> = training_sequences.iter().filter(|s| !s.is_empty()).collect();
    if non_empty.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let symbols: BTreeSet<String> = non_empty
        .iter()
        .flat_map(|s| s.iter().map(|o| o.as_ref().to_string()))
        .collect();
    let mut current = model.with_extended_alphabet(&symbols, config.smoothing_epsilon);
    let encoded: Vec<Vec<usize>> = non_empty
        .iter()
        .map(|s| current.encode(s))
        .collect::<Result<_>>()?;
    baum_welch_indices(&mut current, &encoded, config)
}

/// Baum-Welch on pre-encoded sequences against `model`'s alphabet.
pub fn baum_welch_indices(model: &mut Hmm, sequences: &[Vec<usize>], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let seqs: Vec<&Vec<usize>> = sequences.iter().filter(|s| !s.is_empty()).collect();
    if seqs.is_empty() {
        return Err(Error::NoTrainingData);
    }
    for s in &seqs {
        model.check_indices(s)?;
    }
    let n = model.n_states();
    let m = model.n_emissions();
    let eps = config.smoothing_epsilon;

    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let dense = Dense::new(model);
        let mut start_acc = vec![0.0; n];
        let mut xi_acc = vec![0.0; n * n];
        let mut emit_acc = vec![0.0; n * m];
        let mut total = 0.0;
        for obs in &seqs {
            total += dense.sweep(
                &model.start,
                obs,
                |t, g| {
                    if t == 0 {
                        start_acc.iter_mut().zip(g).for_each(|(s, x)| *s += x);
                    }
                    let k = obs[t];
                    for (i, x) in g.iter().enumerate() {
                        emit_acc[i * m + k] += x;
                    }
                },
                Some(&mut xi_acc),
            );
        }

        trace.push(total);
        let converged = trace.len() >= 2 && total - trace[trace.len() - 2] < config.loglik_tolerance;
        if converged || iterations == config.max_iterations {
            break;
        }

        model.start = normalize_with(&start_acc, eps);
        for i in 0..n {
            let counts: Vec<f64> = (0..n).map(|j| dense.a[i * n + j] * xi_acc[i * n + j]).collect();
            model.transition[i] = normalize_with(&counts, eps);
        }
        if config.update_emissions {
            for i in 0..n {
                model.emission[i] = normalize_with(&emit_acc[i * m..(i + 1) * m], eps);
            }
        }
        iterations += 1;
    }
    Ok(FitResult {
        model: model.clone(),
        loglik_trace: trace,
        iterations,
    })
}

/// Index of the state followed by a numeric emission in the most lines.
/// Ties go to the lexicographically smallest state token.
pub fn find_trigger_state(model: &Hmm, training_lines: &[TokenSequence]) -> Result<usize> {
    let states: BTreeSet<String> = model.states().iter().cloned().collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for line in training_lines {
        let hits: BTreeSet<&str> = state_observations(&states, line)
            .into_iter()
            .filter(|o| o.is_value() && is_number_token(&o.symbol))
            .map(|o| model.states()[model.state_index(&o.state_token).unwrap()].as_str())
            .collect();
        for s in hits {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .ok_or(Error::NoTrigger)?;
    Ok(model.state_index(best.0).expect("counted state exists"))
}
