//! Scoring parsed KPI tables against ground truth.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::{KpiRow, KpiTable};
use crate::preprocess::{is_decimal, normalize_number, EventRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTolerance {
    /// Values must be byte-identical strings.
    Exact,
    /// Values are compared after rounding both to two decimals.
    #[default]
    Round2,
}

impl ValueTolerance {
    fn matches(self, a: &str, b: &str) -> bool {
        match self {
            ValueTolerance::Exact => a == b,
            ValueTolerance::Round2 => {
                let canon = |v: &str| if is_decimal(v) { normalize_number(v) } else { v.to_string() };
                canon(a) == canon(b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub value_tolerance: ValueTolerance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::Metric("accuracy of an empty matrix".into()));
    }
    Ok((cm.tp + cm.tn) as f64 / cm.total() as f64)
}

/// Also reported as the hit rate.
pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.tp + cm.fn_ == 0 {
        return Err(Error::Metric("sensitivity with no positive truth rows".into()));
    }
    Ok(cm.tp as f64 / (cm.tp + cm.fn_) as f64)
}

/// A parsed row with the wrong value counts once as FP and once as FN.
/// TN is whatever remains of `universe_size`.
pub fn confusion(parsed: &KpiTable, truth: &KpiTable, universe_size: u64, config: &EvalConfig) -> Result<ConfusionMatrix> {
    let key = |r: &KpiRow| (r.event_id.clone(), r.kpi.clone());
    let truth_map: HashMap<(String, String), &str> = truth.rows.iter().map(|r| (key(r), r.value.as_str())).collect();
    let parsed_map: HashMap<(String, String), &str> = parsed.rows.iter().map(|r| (key(r), r.value.as_str())).collect();
    let tol = config.value_tolerance;

    let mut cm = ConfusionMatrix::default();
    for (k, v) in &parsed_map {
        match truth_map.get(k) {
            Some(t) if tol.matches(v, t) => cm.tp += 1,
            _ => cm.fp += 1,
        }
    }
    for (k, t) in &truth_map {
        match parsed_map.get(k) {
            Some(v) if tol.matches(v, t) => {}
            _ => cm.fn_ += 1,
        }
    }
    let used = cm.tp + cm.fp + cm.fn_;
    if used > universe_size {
        return Err(Error::UniverseTooSmall {
            universe: universe_size,
            used,
        });
    }
    cm.tn = universe_size - used;
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
}

impl EvalReport {
    pub fn new(confusion: ConfusionMatrix) -> Self {
        Self {
            accuracy: accuracy(&confusion).ok(),
            sensitivity: sensitivity(&confusion).ok(),
            confusion,
        }
    }

    /// Confusion matrix laid out with parser output as rows and truth as columns.
    pub fn to_text(&self) -> String {
        let cm = &self.confusion;
        let pct = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{:.1}%", x * 100.0));
        let w = [cm.tp, cm.fp, cm.fn_, cm.tn, 8].iter().map(|v| v.to_string().len()).max().unwrap();
        let mut s = String::new();
        let _ = writeln!(s, "                          True Parsing");
        let _ = writeln!(s, "                      {:>w$}  {:>w$}", "Positive", "Negative");
        let _ = writeln!(s, "HMM Parsing  Positive  {:>w$}  {:>w$}", cm.tp, cm.fp);
        let _ = writeln!(s, "             Negative  {:>w$}  {:>w$}", cm.fn_, cm.tn);
        let _ = writeln!(s);
        let _ = writeln!(s, "accuracy:    {}", pct(self.accuracy));
        let _ = writeln!(s, "sensitivity: {}", pct(self.sensitivity));
        s
    }

    pub fn to_csv(&self) -> String {
        let cm = &self.confusion;
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        format!(
            "tp,fp,fn,tn,accuracy,sensitivity\n{},{},{},{},{},{}\n",
            cm.tp,
            cm.fp,
            cm.fn_,
            cm.tn,
            f(self.accuracy),
            f(self.sensitivity)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPart {
    pub events: Vec<EventRecord>,
    pub truth: KpiTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: SplitPart,
    pub test: SplitPart,
}

/// Splits events with and without a truth row independently, each at
/// `round(train_fraction * stratum size)`. Original order is kept in both parts.
pub fn stratified_split(corpus: &[EventRecord], truth: &KpiTable, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    let ids = truth.event_ids();
    let (with, without): (Vec<usize>, Vec<usize>) =
        (0..corpus.len()).partition(|&i| ids.contains(corpus[i].event_id.as_str()));
    if with.is_empty() {
        return Err(Error::EmptyStratum("kpi-bearing"));
    }
    if without.is_empty() {
        return Err(Error::EmptyStratum("non-kpi"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = BTreeSet::new();
    for mut stratum in [with, without] {
        let k = (train_fraction * stratum.len() as f64).round() as usize;
        stratum.shuffle(&mut rng);
        train_idx.extend(stratum.into_iter().take(k));
    }

    let mut train_events = Vec::new();
    let mut test_events = Vec::new();
    for (i, e) in corpus.iter().enumerate() {
        if train_idx.contains(&i) {
            train_events.push(e.clone());
        } else {
            test_events.push(e.clone());
        }
    }
    let part = |events: Vec<EventRecord>| -> Result<SplitPart> {
        let keep: BTreeSet<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
        let rows = truth.rows.iter().filter(|r| keep.contains(r.event_id.as_str())).cloned().collect();
        Ok(SplitPart {
            truth: KpiTable::new(rows)?,
            events,
        })
    };
    Ok(Split {
        train: part(train_events)?,
        test: part(test_events)?,
    })
}
