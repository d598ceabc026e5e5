use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hmmparse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error:"), "stderr lacks prefix: {err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Data {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn gen_a(&self) -> PathBuf {
        let out = self.p("A");
        ok(&["gen", "--seed", "42", "--events", "1000", "--drift", "none", "-o", s(&out)]);
        out
    }

    fn gen_b(&self) -> PathBuf {
        let out = self.p("B");
        ok(&["gen", "--seed", "7", "--events", "300", "--drift", "system_b", "-o", s(&out)]);
        out
    }

    fn train_a(&self, a: &Path) -> PathBuf {
        let model = self.p("model.json");
        ok(&[
            "train", "--log", s(&a.join("events.log")), "--truth", s(&a.join("truth.csv")), "--kpi", "ctdi", "-o", s(&model),
        ]);
        model
    }
}

#[test]
fn gen_writes_corpus_and_is_deterministic() {
    let d = Data::new();
    let a = d.gen_a();
    for f in ["events.log", "truth.csv", "manifest.json"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    let again = d.p("A2");
    ok(&["gen", "--seed", "42", "--events", "1000", "-o", s(&again)]);
    for f in ["events.log", "truth.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f} differs");
    }
    let truth = std::fs::read_to_string(a.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 601);
}

#[test]
fn gen_system_b_uses_drifted_keys() {
    let d = Data::new();
    let b = d.gen_b();
    let log = std::fs::read_to_string(b.join("events.log")).unwrap();
    assert!(log.contains("MlOrgCharHead"));
    let a = d.gen_a();
    let log_a = std::fs::read_to_string(a.join("events.log")).unwrap();
    assert!(!log_a.contains("MlOrgCharHead"));
}

#[test]
fn gen_without_output_is_a_usage_error() {
    fails(&["gen", "--seed", "1"]);
}

#[test]
fn train_finds_ctdi_and_is_byte_deterministic() {
    let d = Data::new();
    let a = d.gen_a();
    let model = d.train_a(&a);
    let bundle: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(bundle["pattern"]["trigger"], "ctdi");
    assert_eq!(bundle["format_version"], 1);

    let second = d.p("model2.json");
    let out = ok(&[
        "train", "--log", s(&a.join("events.log")), "--truth", s(&a.join("truth.csv")), "-o", s(&second),
    ]);
    assert!(out.contains("trigger: ctdi"));
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn train_with_empty_truth_explains_threshold() {
    let d = Data::new();
    let a = d.gen_a();
    let empty = d.p("empty.csv");
    std::fs::write(&empty, "event_id,kpi,value\n").unwrap();
    let err = fails(&["train", "--log", s(&a.join("events.log")), "--truth", s(&empty), "-o", s(&d.p("m.json"))]);
    assert!(err.contains("threshold would be zero"), "{err}");
}

#[test]
fn train_with_unreachable_threshold_reports_no_cluster() {
    let d = Data::new();
    let a = d.gen_a();
    let err = fails(&[
        "train", "--log", s(&a.join("events.log")), "--truth", s(&a.join("truth.csv")), "--threshold", "5000", "-o",
        s(&d.p("m.json")),
    ]);
    assert!(err.contains("no cluster"), "{err}");
}

#[test]
fn parse_and_eval_on_training_data() {
    let d = Data::new();
    let a = d.gen_a();
    let model = d.train_a(&a);
    let parsed = d.p("parsed.csv");
    let out = ok(&["parse", "--model", s(&model), "--log", s(&a.join("events.log")), "-o", s(&parsed)]);
    assert!(out.contains("parsed 600 rows from 1000 lines"), "{out}");
    let report = ok(&[
        "eval", "--parsed", s(&parsed), "--truth", s(&a.join("truth.csv")), "--log", s(&a.join("events.log")),
    ]);
    assert!(report.contains("accuracy:    100.0%"), "{report}");
    assert!(report.contains("sensitivity: 100.0%"), "{report}");
    let exact = ok(&[
        "eval", "--parsed", s(&parsed), "--truth", s(&a.join("truth.csv")), "--universe", "1000", "--tolerance", "exact",
        "--format", "csv",
    ]);
    assert_eq!(exact, "tp,fp,fn,tn,accuracy,sensitivity\n600,0,0,400,1.000000,1.000000\n");
}

#[test]
fn eval_needs_a_universe() {
    let d = Data::new();
    let t = d.p("t.csv");
    std::fs::write(&t, "event_id,kpi,value\n").unwrap();
    fails(&["eval", "--parsed", s(&t), "--truth", s(&t)]);
}

#[test]
fn adapt_recovers_drifted_lines() {
    let d = Data::new();
    let a = d.gen_a();
    let b = d.gen_b();
    let model = d.train_a(&a);
    let blog = b.join("events.log");
    let before = ok(&["parse", "--model", s(&model), "--log", s(&blog), "-o", s(&d.p("p0.csv"))]);

    let adapted = d.p("bw.json");
    let out = ok(&["adapt", "--model", s(&model), "--log", s(&blog), "--strategy", "baum-welch", "-o", s(&adapted)]);
    assert!(out.contains("strategy: baum_welch"), "{out}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.p("bw.report.json")).unwrap()).unwrap();
    assert!(!report["dropped_tokens"].as_array().unwrap().is_empty());
    let after = ok(&["parse", "--model", s(&adapted), "--log", s(&blog), "-o", s(&d.p("p1.csv"))]);

    let rows = |out: &str| -> usize { out.split_whitespace().nth(1).unwrap().parse().unwrap() };
    assert!(rows(&after) > rows(&before), "{before} vs {after}");
    let report = ok(&["eval", "--parsed", s(&d.p("p1.csv")), "--truth", s(&b.join("truth.csv")), "--log", s(&blog)]);
    assert!(report.contains("sensitivity: 100.0%"), "{report}");

    let vit = d.p("vit.json");
    ok(&["adapt", "--model", s(&model), "--log", s(&blog), "--strategy", "viterbi", "-o", s(&vit)]);
    assert!(d.p("vit.report.json").is_file());
}

#[test]
fn inspect_lists_clusters_and_bundles() {
    let d = Data::new();
    let a = d.gen_a();
    let dump = d.p("clusters.json");
    let out = ok(&[
        "inspect", "--log", s(&a.join("events.log")), "--truth", s(&a.join("truth.csv")), "--top", "3", "-o", s(&dump),
    ]);
    assert!(out.starts_with("threshold 600:"), "{out}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&dump).unwrap()).unwrap();
    assert_eq!(json["clusters"][0]["support"], 600);
    let model = d.train_a(&a);
    let out = ok(&["inspect", "--model", s(&model)]);
    assert!(out.contains("trigger: ctdi"), "{out}");
    fails(&["inspect", "--log", s(&a.join("events.log"))]);
}

#[test]
fn corrupted_bundle_names_the_field() {
    let d = Data::new();
    let a = d.gen_a();
    let model = d.train_a(&a);
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    v["hmm"]["start"][0] = serde_json::Value::from(7);
    std::fs::write(&model, v.to_string()).unwrap();
    let err = fails(&["parse", "--model", s(&model), "--log", s(&a.join("events.log")), "-o", s(&d.p("x.csv"))]);
    assert!(err.contains("hmm.start[0]"), "{err}");
}

/// Writes parsed/truth tables realizing a confusion matrix and a universe size.
fn table_fixture(dir: &Path, tp: u64, fp: u64, fn_: u64) -> (PathBuf, PathBuf) {
    let (mut parsed, mut truth) = (String::from("event_id,kpi,value\n"), String::from("event_id,kpi,value\n"));
    for i in 0..tp {
        let _ = writeln!(parsed, "tp{i},ctdi,1.00");
        let _ = writeln!(truth, "tp{i},ctdi,1.00");
    }
    for i in 0..fp {
        let _ = writeln!(parsed, "fp{i},ctdi,2.00");
    }
    for i in 0..fn_ {
        let _ = writeln!(truth, "fn{i},ctdi,3.00");
    }
    let (p, t) = (dir.join("parsed.csv"), dir.join("truth.csv"));
    std::fs::write(&p, parsed).unwrap();
    std::fs::write(&t, truth).unwrap();
    (p, t)
}

#[test]
fn reference_tables_replay() {
    // (tp, fp, fn, tn, accuracy line, sensitivity line)
    let tables = [
        (3293, 0, 2972, 856393, "99.7%", "52.6%"),
        (2113, 814, 673, 570663, "99.7%", "75.8%"),
        (673, 3355, 0, 575558, "99.4%", "100.0%"),
        // The reference accuracy for this matrix is 99.8%, which its own
        // counts do not support: 578290 / 585104 rounds to 98.8%.
        (0, 4028, 2786, 578290, "98.8%", "0.0%"),
    ];
    for (tp, fp, fn_, tn, acc, sens) in tables {
        let d = Data::new();
        let (p, t) = table_fixture(&d.root, tp, fp, fn_);
        let universe = (tp + fp + fn_ + tn).to_string();
        let out = ok(&["eval", "--parsed", s(&p), "--truth", s(&t), "--universe", &universe]);
        assert!(out.contains(&format!("Positive  {tp:>6}  {fp:>6}")), "{out}");
        assert!(out.contains(&format!("accuracy:    {acc}")), "{out}");
        assert!(out.contains(&format!("sensitivity: {sens}")), "{out}");
    }
}
