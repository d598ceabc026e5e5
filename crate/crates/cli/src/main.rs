use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hmmparse::adapt::{adapt, AdaptConfig, Strategy};
use hmmparse::corpus::{generate_corpus, load_log, render_log, sha256_hex, DriftProfile, GeneratorConfig, LoadedLog, Manifest, NoiseProfile};
use hmmparse::eval::{confusion, EvalConfig, EvalReport, ValueTolerance};
use hmmparse::miner::{mine, MiningConfig, SupportMode};
use hmmparse::parser::{load_kpi_table, parse_corpus, KpiTable};
use hmmparse::pipeline::{train, TrainConfig};
use hmmparse::preprocess::{preprocess_corpus, Stopwords, TokenSequence};
use hmmparse::serialization::{load_bundle, save_bundle, write_atomic, ModelBundle, Provenance};

#[derive(Parser)]
#[command(name = "hmmparse", version, about = "Learn, apply and adapt HMM parsing patterns for KPI values in event logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus: events.log, truth.csv and manifest.json.
    Gen(GenArgs),
    /// Learn a parsing pattern from a log and its KPI truth table.
    Train(TrainArgs),
    /// Extract KPI values from a log with a trained bundle.
    Parse(ParseArgs),
    /// Refit a bundle to a drifted log.
    Adapt(AdaptArgs),
    /// Compare parsed values against a truth table.
    Eval(EvalArgs),
    /// Show mined clusters for a log, or summarize a bundle.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Drift {
    None,
    #[value(name = "system_b")]
    SystemB,
}

#[derive(Clone, Copy, ValueEnum)]
enum Support {
    Exact,
    Containment,
}

impl From<Support> for SupportMode {
    fn from(s: Support) -> Self {
        match s {
            Support::Exact => SupportMode::Exact,
            Support::Containment => SupportMode::Containment,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AdaptStrategy {
    BaumWelch,
    Viterbi,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tolerance {
    Exact,
    Round2,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct StopwordArgs {
    /// Newline-delimited stopword list replacing the built-in English one.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

impl StopwordArgs {
    fn load(&self) -> Result<Stopwords> {
        match &self.stopwords {
            Some(p) => Ok(Stopwords::from_file(p)?),
            None => Ok(Stopwords::english()),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    events: usize,
    #[arg(long, value_enum, default_value_t = Drift::None)]
    drift: Drift,
    /// Fraction of scan events whose switch field reads On instead of Off.
    #[arg(long, default_value_t = 0.0)]
    switch_on_fraction: f64,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "ctdi")]
    kpi: String,
    /// Mining support threshold; defaults to the number of truth rows.
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, value_enum, default_value_t = Support::Exact)]
    support: Support,
    /// Extra token accepted in place of the trigger (repeatable).
    #[arg(long = "alias")]
    aliases: Vec<String>,
    #[command(flatten)]
    stopwords: StopwordArgs,
    /// Bundle path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    stopwords: StopwordArgs,
    /// KPI table (CSV) path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum)]
    strategy: AdaptStrategy,
    #[command(flatten)]
    stopwords: StopwordArgs,
    /// Adapted bundle path; the report goes next to it as <stem>.report.json.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("size").required(true).args(["universe", "log"])))]
struct EvalArgs {
    #[arg(long)]
    parsed: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Number of events the parser was run over.
    #[arg(long)]
    universe: Option<u64>,
    /// Take the universe size from the record count of this log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Tolerance::Round2)]
    tolerance: Tolerance,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["model", "log"])))]
struct InspectArgs {
    /// Summarize this bundle.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Mine clusters from this log (needs --truth or --threshold).
    #[arg(long, requires = "basis")]
    log: Option<PathBuf>,
    #[arg(long, group = "basis")]
    truth: Option<PathBuf>,
    #[arg(long, group = "basis")]
    threshold: Option<usize>,
    #[arg(long, value_enum, default_value_t = Support::Exact)]
    support: Support,
    /// Number of clusters to list.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[command(flatten)]
    stopwords: StopwordArgs,
    /// Also write the clusters as JSON.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn read_log(path: &Path) -> Result<LoadedLog> {
    let log = load_log(path)?;
    if !log.rejects.is_empty() {
        eprintln!(
            "warning: skipped {} malformed line(s) in {}; first at line {}: {}",
            log.rejects.len(),
            path.display(),
            log.rejects[0].line_no,
            log.rejects[0].reason
        );
    }
    Ok(log)
}

fn tokenized(path: &Path, stopwords: &StopwordArgs) -> Result<Vec<TokenSequence>> {
    let log = read_log(path)?;
    Ok(preprocess_corpus(&log.records, &stopwords.load()?))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        seed: a.seed,
        n_events: a.events,
        drift_profile: match a.drift {
            Drift::None => DriftProfile::None,
            Drift::SystemB => DriftProfile::SystemB,
        },
        noise: NoiseProfile {
            switch_on_fraction: a.switch_on_fraction,
            ..NoiseProfile::default()
        },
        ..GeneratorConfig::default()
    };
    let corpus = generate_corpus(&cfg)?;
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    write_atomic(&a.output.join("events.log"), render_log(&corpus.events).as_bytes())?;
    write_atomic(&a.output.join("truth.csv"), corpus.truth.to_csv_string().as_bytes())?;
    write_atomic(&a.output.join("manifest.json"), Manifest::new(&cfg, &corpus).to_json().as_bytes())?;
    println!(
        "wrote {} events ({} with a truth row, {} decoys, {} drifted) to {}",
        corpus.events.len(),
        corpus.truth.len(),
        corpus.decoy_ids.len(),
        corpus.drifted_ids.len(),
        a.output.display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let lines = tokenized(&a.log, &a.stopwords)?;
    let truth = load_kpi_table(&a.truth)?;
    let cfg = TrainConfig {
        kpi_name: a.kpi.clone(),
        threshold: a.threshold,
        support_mode: a.support.into(),
        aliases: a.aliases.clone(),
        ..TrainConfig::default()
    };
    let t = train(&lines, &truth, &cfg)?;
    let bundle = ModelBundle {
        hmm: t.model,
        pattern: t.pattern,
        mining_config: t.mining_config,
        provenance: Provenance {
            training_log_sha256: file_sha256(&a.log)?,
            training_truth_sha256: file_sha256(&a.truth)?,
        },
    };
    save_bundle(&bundle, &a.output)?;
    println!("cluster: {} (support {})", t.cluster.render(), t.cluster.support);
    println!("trigger: {}", bundle.pattern.trigger);
    println!(
        "states: {}, emissions: {}, matching lines: {}",
        bundle.hmm.n_states(),
        bundle.hmm.n_emissions(),
        t.matching_lines
    );
    println!("wrote {}", a.output.display());
    Ok(())
}

fn cmd_parse(a: &ParseArgs) -> Result<()> {
    let bundle = load_bundle(&a.model)?;
    let lines = tokenized(&a.log, &a.stopwords)?;
    let table = parse_corpus(&bundle.pattern, &lines);
    write_atomic(&a.output, table.to_csv_string().as_bytes())?;
    println!("parsed {} rows from {} lines", table.len(), lines.len());
    Ok(())
}

fn report_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bundle".into());
    output.with_file_name(format!("{stem}.report.json"))
}

fn cmd_adapt(a: &AdaptArgs) -> Result<()> {
    let bundle = load_bundle(&a.model)?;
    let lines = tokenized(&a.log, &a.stopwords)?;
    let strategy = match a.strategy {
        AdaptStrategy::BaumWelch => Strategy::BaumWelch,
        AdaptStrategy::Viterbi => Strategy::Viterbi,
    };
    let adapted = adapt(strategy, &bundle.hmm, &bundle.pattern, &lines, &AdaptConfig::default())?;
    let out = ModelBundle {
        hmm: adapted.model,
        pattern: adapted.pattern,
        ..bundle
    };
    save_bundle(&out, &a.output)?;
    let mut report = serde_json::to_string_pretty(&adapted.report)?;
    report.push('\n');
    let rp = report_path(&a.output);
    write_atomic(&rp, report.as_bytes())?;
    let r = &adapted.report;
    let list = |v: &[String]| if v.is_empty() { "-".to_string() } else { v.join(" ") };
    println!("strategy: {}", r.strategy);
    println!("lines used: {}", r.lines_used);
    println!("dropped: {}", list(&r.dropped_tokens));
    println!("added: {}", list(&r.added_tokens));
    if let (Some(first), Some(last)) = (r.loglik_trace.first(), r.loglik_trace.last()) {
        println!("log-likelihood: {first:.4} -> {last:.4} over {} iterations", r.loglik_trace.len() - 1);
    }
    println!("wrote {} and {}", a.output.display(), rp.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let parsed: KpiTable = load_kpi_table(&a.parsed)?;
    let truth = load_kpi_table(&a.truth)?;
    let universe = match (a.universe, &a.log) {
        (Some(u), _) => u,
        (None, Some(log)) => read_log(log)?.records.len() as u64,
        (None, None) => bail!("pass --universe or --log"),
    };
    let cfg = EvalConfig {
        value_tolerance: match a.tolerance {
            Tolerance::Exact => ValueTolerance::Exact,
            Tolerance::Round2 => ValueTolerance::Round2,
        },
    };
    let report = EvalReport::new(confusion(&parsed, &truth, universe, &cfg)?);
    match a.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct ClusterDump<'a> {
    threshold: usize,
    frequent_tokens: Vec<&'a str>,
    clusters: &'a [hmmparse::miner::PatternCluster],
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    if let Some(model) = &a.model {
        let b = load_bundle(model)?;
        let p = &b.pattern;
        println!("kpi: {}", p.kpi_name);
        println!("trigger: {} (aliases: {})", p.trigger, p.trigger_aliases.join(" "));
        println!("required tokens: {}", p.required_tokens.iter().cloned().collect::<Vec<_>>().join(" "));
        println!("states: {}, emissions: {}", b.hmm.n_states(), b.hmm.n_emissions());
        println!("mining threshold: {}", b.mining_config.threshold);
        println!("training log sha256: {}", b.provenance.training_log_sha256);
        return Ok(());
    }
    let log = a.log.as_ref().expect("clap enforces --model or --log");
    let lines = tokenized(log, &a.stopwords)?;
    let threshold = match (a.threshold, &a.truth) {
        (Some(t), _) => t,
        (None, Some(truth)) => load_kpi_table(truth)?.len(),
        (None, None) => bail!("pass --truth or --threshold"),
    };
    let mut cfg = MiningConfig::new(threshold, a.top.max(1))?;
    cfg.support_mode = a.support.into();
    let result = mine(&lines, &cfg);
    println!(
        "threshold {threshold}: {} frequent tokens, {} clusters",
        result.frequent.len(),
        result.selected.len()
    );
    for c in result.selected.iter().take(a.top) {
        println!("{:>8}  {}", c.support, c.render());
    }
    if let Some(out) = &a.output {
        let dump = ClusterDump {
            threshold,
            frequent_tokens: result.frequent.iter().map(String::as_str).collect(),
            clusters: &result.selected,
        };
        let mut json = serde_json::to_string_pretty(&dump)?;
        json.push('\n');
        write_atomic(out, json.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Parse(a) => cmd_parse(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Joins the error chain, skipping causes a parent message already quotes.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}
