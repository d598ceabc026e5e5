//! Log loading/writing and the seeded synthetic CT log generator.
//!
//! Log format: one event per line, `<timestamp>\t<event_type>\t<event_id>\t<text>`,
//! LF-terminated, UTF-8.
//!
//! Generated corpora contain three kinds of events:
//! * scan-protocol events carrying a CTDI value (one truth row each),
//! * cancelled scan-protocol events: the same text without the scan UID and
//!   mAs fields, still printing a CTDI, but with no truth row,
//! * unrelated status events without any CTDI.
//!
//! Value distributions (documented here as the single source of truth):
//! * CTDI: system A uniform in [2.500, 30.000], system B uniform in
//!   [0.020, 2.499], three decimals. Neither range overlaps the template's
//!   constant numerics (0.6, 1, 60, 120, 360, ...), so the CTDI value is
//!   never mined as a pattern token.
//! * mAs: integer in [50, 400]; CurrentPeak repeats it.
//! * kV: one of 80, 100, 120, 140.
//! * DLP: CTDI times a scan length drawn from [2.0, 40.0] cm.
//! * CARE Dose / AEC / CBC: all `On` with probability
//!   `switch_on_fraction`, otherwise all `Off`.
//! * Every other field is fixed to its template value.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::{KpiRow, KpiTable};
use crate::preprocess::{normalize_number, EventRecord};

pub use crate::parser::load_kpi_table;

/// A line that could not be turned into an [`EventRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based line number.
    pub line_no: usize,
    pub reason: String,
    pub line: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedLog {
    pub records: Vec<EventRecord>,
    pub rejects: Vec<Reject>,
}

/// Parses log text; malformed lines are reported, not dropped silently.
pub fn parse_log(text: &str) -> LoadedLog {
    let mut out = LoadedLog::default();
    let mut seen = HashSet::new();
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() && text.len() <= 1 {
        return out;
    }
    for (i, line) in body.split('\n').enumerate() {
        let reject = |reason: &str| Reject {
            line_no: i + 1,
            reason: reason.to_string(),
            line: line.to_string(),
        };
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() < 4 {
            out.rejects.push(reject(&format!("expected 4 tab-separated fields, found {}", fields.len())));
            continue;
        }
        if fields[2].is_empty() {
            out.rejects.push(reject("empty event id"));
            continue;
        }
        if fields[3].is_empty() {
            out.rejects.push(reject("empty event text"));
            continue;
        }
        if !seen.insert(fields[2].to_string()) {
            out.rejects.push(reject(&format!("duplicate event id `{}`", fields[2])));
            continue;
        }
        out.records.push(EventRecord {
            timestamp: fields[0].to_string(),
            event_type: fields[1].to_string(),
            event_id: fields[2].to_string(),
            text: fields[3].to_string(),
        });
    }
    out
}

pub fn load_log(path: &Path) -> Result<LoadedLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_log(&text))
}

pub fn render_log(records: &[EventRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", r.timestamp, r.event_type, r.event_id, r.text);
    }
    s
}

pub fn write_log(records: &[EventRecord], path: &Path) -> Result<()> {
    crate::serialization::write_atomic(path, render_log(records).as_bytes())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftProfile {
    #[default]
    None,
    SystemB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Probability that CARE Dose, AEC and CBC read `On` in a scan event.
    pub switch_on_fraction: f64,
    /// Fraction of scan events that receive the system-B substitutions
    /// (only used with [`DriftProfile::SystemB`]).
    pub drift_fraction: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            switch_on_fraction: 0.0,
            drift_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_events: usize,
    pub kpi_line_fraction: f64,
    /// Fraction of events that are cancelled scans (CTDI printed, no truth row).
    pub decoy_fraction: f64,
    pub drift_profile: DriftProfile,
    pub noise: NoiseProfile,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_events: 1000,
            kpi_line_fraction: 0.6,
            decoy_fraction: 0.1,
            drift_profile: DriftProfile::None,
            noise: NoiseProfile::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::Config("n_events must be positive".into()));
        }
        if !(self.kpi_line_fraction > 0.0 && self.kpi_line_fraction <= 1.0) {
            return Err(Error::Config("kpi_line_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.decoy_fraction) || self.kpi_line_fraction + self.decoy_fraction > 1.0 {
            return Err(Error::Config("decoy_fraction must lie in [0, 1 - kpi_line_fraction]".into()));
        }
        for (name, v) in [
            ("switch_on_fraction", self.noise.switch_on_fraction),
            ("drift_fraction", self.noise.drift_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Field values of one scan-protocol event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanValues {
    pub patient_loid: String,
    pub scan_uid: String,
    pub kv: String,
    pub mas: String,
    pub switch: &'static str,
    pub ctdi: String,
    pub dlp: String,
    /// System-B spelling of the drifted keys.
    pub system_b: bool,
    /// Cancelled scan: no UID and no mAs field.
    pub cancelled: bool,
}

impl ScanValues {
    /// Field values of the reference scan event used in the golden fixture.
    pub fn reference() -> Self {
        Self {
            patient_loid: "2.0.123456".into(),
            scan_uid: "1.3.12.2.1107.5.1.4.83004.1234567890".into(),
            kv: "120".into(),
            mas: "250".into(),
            switch: "Off",
            ctdi: "16.660".into(),
            dlp: "59.975".into(),
            system_b: false,
            cancelled: false,
        }
    }
}

/// Renders a scan-protocol event text.
pub fn render_scan_event(v: &ScanValues) -> String {
    let mut s = String::with_capacity(1400);
    s.push_str("&Load scan protocol&,");
    let _ = write!(s, "@Patient LOID@=#{}#,@Scan@=#1#,", v.patient_loid);
    if !v.cancelled {
        let key = if v.system_b { "StudyLOID" } else { "ScanUID" };
        let _ = write!(s, "@{key}@=#{}#,", v.scan_uid);
    }
    let organ = if v.system_b { "MlOrgCharHead" } else { "MlOrgCharAbdomen" };
    let _ = write!(
        s,
        "@Scan protocol name@=#rot00#,@Organ characteristics@=#{organ}#,@Body size original@=#MlAdult#,\
         @Scan entry name@=#rot00#,@Kind@=#MlRot#,@Entry Mode@=#standard#,@AutoRange@=#Cont#,@kV@=#{}#,",
        v.kv
    );
    if !v.cancelled {
        let key = if v.system_b { "mA" } else { "mAs" };
        let _ = write!(s, "@{key}@=#{}#,", v.mas);
    }
    let sw = v.switch;
    let _ = write!(
        s,
        "@CARE Dose@=#{sw}#,@AEC@=#{sw}#,@CTDI@=#{}#,@DLP@=#{}#,@Slice@=#0.6#,@ Scan start@=#MlRangeStartAuto#,\
         @Slice Width Collimated@=#60#,@No Of Acquisition Slices@=#60#,@CBC@=#{sw}#,\
         @Scan trigger@=#MlScanTriggerAuto#,@No of scans@=#1#,@Examination time@=#0.500000#,\
         @ScanTime@=#1.000#,@RotTime@=#0.500#,@RotKind@=#Normal# ,@CurrentPeak@=#{}#,\
         @DoseModulationType@=#MlNoModulation#,@Focus@=#MlSmallFocus#,@Anodespeed A@=#120#,\
         @StartDelay@=#2.000#,@NoOfClustersPerRange@=#1#,@RevolAngle@=#360 #,@Contrast@=#false#,\
         @Begin Pos@=#517.000#,@Readings A@=#2304#,@Scandirection@=#cr-ca#,@MasterXray@=#On#,\
         @Service@=#On#,@CycleTime@=#0.00#,@ZigZagReconVolume@=#0.00#,@ZigZagScanTime@=#0.00#,\
         @EndPos@=#517#,@SpecialMeas@=#None#",
        v.ctdi, v.dlp, v.mas
    );
    s
}

fn thousandths(x: u32) -> String {
    format!("{}.{:03}", x / 1000, x % 1000)
}

fn other_event(rng: &mut ChaCha8Rng) -> (&'static str, String) {
    match rng.gen_range(0..3) {
        0 => (
            "TableMove",
            format!(
                "&Table move&,@Position@=#{}#,@Speed@=#{}#,@Direction@=#{}#",
                rng.gen_range(0..2000),
                rng.gen_range(1..60),
                ["In", "Out"].choose(rng).unwrap()
            ),
        ),
        1 => (
            "TubeStatus",
            format!(
                "&Tube status&,@Temperature@=#{}#,@Status@=#{}#",
                rng.gen_range(20..90),
                ["Ready", "Warmup", "Cooling"].choose(rng).unwrap()
            ),
        ),
        _ => (
            "UserAction",
            format!(
                "&User action&,@Action@=#{}#,@Station@=#Console{}#",
                ["Login", "Logout", "SelectPatient", "OpenViewer"].choose(rng).unwrap(),
                rng.gen_range(1..5)
            ),
        ),
    }
}

fn format_timestamp(secs: u64) -> String {
    let secs = i64::try_from(secs).expect("generator timestamps fit in i64");
    chrono::DateTime::from_timestamp(secs, 0)
        .expect("generator timestamps are in range")
        .format("%Y-%m-%dT%H:%M:%S")
        .to_string()
}

/// 2019-01-01T00:00:00Z
const EPOCH_START: u64 = 1_546_300_800;

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub events: Vec<EventRecord>,
    pub truth: KpiTable,
    /// Event ids of cancelled scans (CTDI printed without a truth row).
    pub decoy_ids: Vec<String>,
    /// Event ids of scan events that received the system-B substitutions.
    pub drifted_ids: Vec<String>,
}

/// Deterministic given `config.seed`.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<GeneratedCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_events;
    let n_kpi = ((n as f64 * config.kpi_line_fraction).round() as usize).clamp(1, n);
    let n_decoy = ((n as f64 * config.decoy_fraction).round() as usize).min(n - n_kpi);

    #[derive(Clone, Copy)]
    enum Kind {
        Kpi,
        Decoy,
        Other,
    }
    let mut kinds: Vec<Kind> = std::iter::repeat_n(Kind::Kpi, n_kpi)
        .chain(std::iter::repeat_n(Kind::Decoy, n_decoy))
        .chain(std::iter::repeat_n(Kind::Other, n - n_kpi - n_decoy))
        .collect();
    kinds.shuffle(&mut rng);

    let system_b = config.drift_profile == DriftProfile::SystemB;
    let mut events = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n_kpi);
    let mut decoy_ids = Vec::new();
    let mut drifted_ids = Vec::new();
    let mut clock = EPOCH_START + rng.gen_range(0..86_400);

    for (i, kind) in kinds.into_iter().enumerate() {
        clock += rng.gen_range(1..600);
        let event_id = format!("ev{:06}", i + 1);
        let (event_type, text) = match kind {
            Kind::Other => other_event(&mut rng),
            Kind::Kpi | Kind::Decoy => {
                let drifted = system_b && rng.gen_bool(config.noise.drift_fraction);
                let ctdi_milli = if drifted {
                    rng.gen_range(20..=2499)
                } else {
                    rng.gen_range(2500..=30_000)
                };
                let length_tenths: u32 = rng.gen_range(20..=400);
                let dlp_milli = (u64::from(ctdi_milli) * u64::from(length_tenths) + 5) / 10;
                let mas: u32 = rng.gen_range(50..=400);
                let switch = if rng.gen_bool(config.noise.switch_on_fraction) { "On" } else { "Off" };
                let values = ScanValues {
                    patient_loid: format!("2.0.{}", rng.gen_range(100_000..1_000_000)),
                    scan_uid: format!("1.3.12.2.1107.5.1.4.83004.{}", rng.gen_range(1_000_000_000u64..10_000_000_000)),
                    kv: ["80", "100", "120", "140"].choose(&mut rng).unwrap().to_string(),
                    mas: mas.to_string(),
                    switch,
                    ctdi: thousandths(ctdi_milli),
                    dlp: thousandths(dlp_milli as u32),
                    system_b: drifted,
                    cancelled: matches!(kind, Kind::Decoy),
                };
                if drifted {
                    drifted_ids.push(event_id.clone());
                }
                match kind {
                    Kind::Kpi => rows.push(KpiRow {
                        event_id: event_id.clone(),
                        kpi: "ctdi".into(),
                        value: normalize_number(&values.ctdi),
                    }),
                    _ => decoy_ids.push(event_id.clone()),
                }
                ("ScanProtocol", render_scan_event(&values))
            }
        };
        events.push(EventRecord {
            timestamp: format_timestamp(clock),
            event_type: event_type.to_string(),
            event_id,
            text,
        });
    }
    Ok(GeneratedCorpus {
        events,
        truth: KpiTable::new(rows)?,
        decoy_ids,
        drifted_ids,
    })
}

/// Record of a generator run, written next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub config: GeneratorConfig,
    pub n_events: usize,
    pub n_truth_rows: usize,
    pub n_decoys: usize,
    pub n_drifted: usize,
    pub events_sha256: String,
    pub truth_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(config: &GeneratorConfig, corpus: &GeneratedCorpus) -> Self {
        Self {
            generator: concat!("hmmparse ", env!("CARGO_PKG_VERSION")).to_string(),
            config: config.clone(),
            n_events: corpus.events.len(),
            n_truth_rows: corpus.truth.len(),
            n_decoys: corpus.decoy_ids.len(),
            n_drifted: corpus.drifted_ids.len(),
            events_sha256: sha256_hex(render_log(&corpus.events).as_bytes()),
            truth_sha256: sha256_hex(corpus.truth.to_csv_string().as_bytes()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
