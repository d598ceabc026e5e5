//! Executable parsing patterns and KPI tables.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::preprocess::{is_decimal, is_number_token, normalize_number, TokenSequence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsingPattern {
    pub required_tokens: BTreeSet<String>,
    pub trigger: String,
    pub kpi_name: String,
    /// Tokens accepted in place of the trigger; always starts with the trigger.
    pub trigger_aliases: Vec<String>,
}

impl ParsingPattern {
    pub fn validate(&self) -> Result<()> {
        if !self.required_tokens.contains(&self.trigger) {
            return Err(Error::InvalidModel(format!(
                "trigger `{}` is not a required token",
                self.trigger
            )));
        }
        if self.trigger_aliases.is_empty() {
            return Err(Error::InvalidModel("pattern has no trigger aliases".into()));
        }
        Ok(())
    }

    /// Same pattern with a different required token set; the trigger is kept.
    pub fn with_required(&self, required_tokens: BTreeSet<String>) -> Self {
        Self {
            required_tokens,
            ..self.clone()
        }
    }
}

pub fn compile_pattern(model: &Hmm, trigger_state: usize, kpi_name: &str, aliases: &[String]) -> Result<ParsingPattern> {
    let trigger = model
        .states()
        .get(trigger_state)
        .ok_or_else(|| Error::InvalidModel(format!("trigger state {trigger_state} out of range")))?
        .clone();
    let mut trigger_aliases = vec![trigger.clone()];
    for a in aliases {
        if !trigger_aliases.contains(a) {
            trigger_aliases.push(a.clone());
        }
    }
    Ok(ParsingPattern {
        required_tokens: model.states().iter().cloned().collect(),
        trigger,
        kpi_name: kpi_name.to_string(),
        trigger_aliases,
    })
}

/// Value emitted after the trigger, when the line satisfies the pattern.
///
/// Any alias satisfies the trigger's own containment requirement. The value
/// must sit directly after the alias; the first such occurrence wins.
pub fn parse_event(pattern: &ParsingPattern, line: &TokenSequence) -> Option<String> {
    let set: HashSet<&str> = line.tokens.iter().map(String::as_str).collect();
    let others_present = pattern
        .required_tokens
        .iter()
        .filter(|t| **t != pattern.trigger)
        .all(|t| set.contains(t.as_str()));
    if !others_present {
        return None;
    }
    line.tokens.windows(2).find_map(|w| {
        (pattern.trigger_aliases.contains(&w[0]) && is_number_token(&w[1])).then(|| w[1].clone())
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiRow {
    pub event_id: String,
    pub kpi: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KpiTable {
    pub rows: Vec<KpiRow>,
}

impl KpiTable {
    pub fn new(rows: Vec<KpiRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert((r.event_id.as_str(), r.kpi.as_str())) {
                return Err(Error::DuplicateKpiRow {
                    event_id: r.event_id.clone(),
                    kpi: r.kpi.clone(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn event_ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.event_id.as_str()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["event_id", "kpi", "value"])?;
        for r in &self.rows {
            w.write_record([&r.event_id, &r.kpi, &r.value])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// Reads `event_id,kpi,value`; values are canonicalized to two decimals.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header != ["event_id", "kpi", "value"] {
            return Err(Error::KpiHeader(header.join(",")));
        }
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let value = record[2].trim();
            if !is_decimal(value) {
                return Err(Error::KpiValue(value.to_string()));
            }
            rows.push(KpiRow {
                event_id: record[0].to_string(),
                kpi: record[1].to_string(),
                value: normalize_number(value),
            });
        }
        Self::new(rows)
    }
}

pub fn parse_corpus(pattern: &ParsingPattern, corpus: &[TokenSequence]) -> KpiTable {
    let rows = corpus
        .iter()
        .filter_map(|line| {
            parse_event(pattern, line).map(|value| KpiRow {
                event_id: line.event_id.clone(),
                kpi: pattern.kpi_name.clone(),
                value,
            })
        })
        .collect();
    // Event ids are unique per corpus, so rows are unique per (event, kpi).
    KpiTable { rows }
}

pub fn load_kpi_table(path: &Path) -> Result<KpiTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    KpiTable::read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{build_hmm, BuildConfig};
    use crate::miner::PatternCluster;

    fn seq(toks: &str) -> TokenSequence {
        TokenSequence::new("e1", toks.split_whitespace().map(String::from).collect())
    }

    fn pattern(req: &str, trigger: &str, aliases: &[&str]) -> ParsingPattern {
        ParsingPattern {
            required_tokens: req.split_whitespace().map(String::from).collect(),
            trigger: trigger.into(),
            kpi_name: "ctdi".into(),
            trigger_aliases: aliases.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn compile_uses_all_states() {
        let cluster = PatternCluster {
            tokens: ["ctdi".to_string()].into(),
            support: 1,
        };
        let m = build_hmm(&[seq("ctdi 1.00")], &cluster, &BuildConfig::default()).unwrap();
        let p = compile_pattern(&m, 0, "ctdi", &[]).unwrap();
        assert_eq!(p.required_tokens.len(), 1);
        assert_eq!(p.trigger, "ctdi");
        assert_eq!(p.trigger_aliases, vec!["ctdi"]);
        p.validate().unwrap();
        assert!(compile_pattern(&m, 3, "ctdi", &[]).is_err());
    }

    #[test]
    fn parse_rules() {
        let p = pattern("load scan ctdi", "ctdi", &["ctdi"]);
        assert_eq!(parse_event(&p, &seq("load scan ctdi 16.66")), Some("16.66".into()));
        assert_eq!(parse_event(&p, &seq("load ctdi 16.66")), None);
        assert_eq!(parse_event(&p, &seq("load scan ctdi word 1.00")), None);
        assert_eq!(
            parse_event(&p, &seq("ctdi x load scan ctdi 2.00 ctdi 3.00")),
            Some("2.00".into())
        );
    }

    #[test]
    fn alias_matches() {
        let p = pattern("load ctdi", "ctdi", &["ctdi", "ctdivol"]);
        assert_eq!(parse_event(&p, &seq("load ctdivol 4.50")), Some("4.50".into()));
        let strict = pattern("load ctdi", "ctdi", &["ctdi"]);
        assert_eq!(parse_event(&strict, &seq("load ctdivol 4.50")), None);
    }

    #[test]
    fn csv_round_trip() {
        let t = KpiTable::new(vec![KpiRow {
            event_id: "7".into(),
            kpi: "ctdi".into(),
            value: "1.50".into(),
        }])
        .unwrap();
        let s = t.to_csv_string();
        assert_eq!(s, "event_id,kpi,value\n7,ctdi,1.50\n");
        assert_eq!(KpiTable::read_csv(s.as_bytes()).unwrap(), t);
    }

    #[test]
    fn csv_normalizes_and_rejects() {
        let t = KpiTable::read_csv("event_id,kpi,value\n1,ctdi,16.660\n".as_bytes()).unwrap();
        assert_eq!(t.rows[0].value, "16.66");
        assert!(matches!(
            KpiTable::read_csv("id,kpi,value\n".as_bytes()),
            Err(Error::KpiHeader(_))
        ));
        assert!(matches!(
            KpiTable::read_csv("event_id,kpi,value\n1,ctdi,1\n1,ctdi,2\n".as_bytes()),
            Err(Error::DuplicateKpiRow { .. })
        ));
        assert!(matches!(
            KpiTable::read_csv("event_id,kpi,value\n1,ctdi,abc\n".as_bytes()),
            Err(Error::KpiValue(_))
        ));
    }

    #[test]
    fn empty_corpus_empty_table() {
        let p = pattern("ctdi", "ctdi", &["ctdi"]);
        assert!(parse_corpus(&p, &[]).is_empty());
    }
}
