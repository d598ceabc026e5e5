//! Versioned JSON model bundles.
//!
//! Probabilities are stored as decimal strings with 17 significant digits,
//! enough to reproduce every `f64` exactly. Field order is fixed by the
//! struct definitions and sets are sorted, so saving the same bundle twice
//! yields identical bytes.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::miner::MiningConfig;
use crate::parser::ParsingPattern;

pub const FORMAT_VERSION: u32 = 1;

/// Where the model came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the training log file, hex encoded.
    pub training_log_sha256: String,
    /// SHA-256 of the training truth table, hex encoded.
    pub training_truth_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub hmm: Hmm,
    pub pattern: ParsingPattern,
    pub mining_config: MiningConfig,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Prob(f64);

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.16e}", self.0))
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<f64>()
            .map(Prob)
            .map_err(|_| serde::de::Error::custom(format!("`{s}` is not a decimal probability")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmmDoc {
    states: Vec<String>,
    emissions: Vec<String>,
    start: Vec<Prob>,
    transition: Vec<Vec<Prob>>,
    emission: Vec<Vec<Prob>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDoc {
    format_version: u32,
    hmm: HmmDoc,
    pattern: ParsingPattern,
    mining_config: MiningConfig,
    provenance: Provenance,
}

fn probs(v: &[f64]) -> Vec<Prob> {
    v.iter().copied().map(Prob).collect()
}

fn unprobs(v: Vec<Prob>) -> Vec<f64> {
    v.into_iter().map(|p| p.0).collect()
}

impl ModelBundle {
    pub fn to_json(&self) -> String {
        let doc = BundleDoc {
            format_version: FORMAT_VERSION,
            hmm: HmmDoc {
                states: self.hmm.states().to_vec(),
                emissions: self.hmm.emissions().to_vec(),
                start: probs(self.hmm.start()),
                transition: self.hmm.transition().iter().map(|r| probs(r)).collect(),
                emission: self.hmm.emission().iter().map(|r| probs(r)).collect(),
            },
            pattern: self.pattern.clone(),
            mining_config: self.mining_config.clone(),
            provenance: self.provenance.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a bundle document.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::BundleParse {
            path: ".".into(),
            message: e.to_string(),
        })?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::FormatVersion {
                    found: u32::try_from(v).unwrap_or(u32::MAX),
                    expected: FORMAT_VERSION,
                })
            }
            None => {
                return Err(Error::BundleParse {
                    path: "format_version".into(),
                    message: "missing or not an unsigned integer".into(),
                })
            }
        }
        let doc: BundleDoc = serde_path_to_error::deserialize(value).map_err(|e| Error::BundleParse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let h = doc.hmm;
        let hmm = Hmm::new(
            h.states,
            h.emissions,
            unprobs(h.start),
            h.transition.into_iter().map(unprobs).collect(),
            h.emission.into_iter().map(unprobs).collect(),
        )?;
        doc.pattern.validate()?;
        Ok(Self {
            hmm,
            pattern: doc.pattern,
            mining_config: doc.mining_config,
            provenance: doc.provenance,
        })
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    write_atomic(path, bundle.to_json().as_bytes())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_json(&text)
}
