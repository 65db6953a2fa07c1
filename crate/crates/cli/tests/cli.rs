use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn trilstm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trilstm"))
}

fn run(args: &[&str]) -> Output {
    trilstm().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().expect("tempdir"),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Small synthetic column corpus.
    fn corpus(&self, sentences: usize) -> PathBuf {
        let path = self.path("corpus.bio");
        let n = sentences.to_string();
        ok(&[
            "synth",
            "--sentences",
            &n,
            "--seed",
            "3",
            "--output",
            s(&path),
        ]);
        path
    }

    /// TRI+BLSTM training; `extra` may override the default two epochs.
    fn train(&self, corpus: &Path, model: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "train",
            "--corpus",
            s(corpus),
            "--encoder",
            "TRI",
            "--network",
            "BLSTM",
            "--seed",
            "9",
            "--model",
            s(model),
        ];
        if !extra.contains(&"--epochs") {
            args.extend_from_slice(&["--epochs", "2"]);
        }
        args.extend_from_slice(extra);
        run(&args)
    }
}

fn error_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_string()
}

#[test]
fn train_writes_a_loadable_model_and_log() {
    let fx = Fixture::new();
    let corpus = fx.corpus(30);
    let model = fx.path("m.bin");
    let out = fx.train(&corpus, &model, &[]);
    assert!(out.status.success(), "{}", error_line(&out));

    let loaded = trilstm::TaggerModel::load(&model).expect("model loads");
    assert_eq!(loaded.provenance["run"]["command"], "train");
    assert_eq!(loaded.provenance["run"]["seed"], 9);
    assert_eq!(loaded.provenance["run"]["encoder"], "TRI");

    let log = fs::read_to_string(fx.path("m.bin.log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["run"]["epochs"], 2);
    assert_eq!(lines[2]["epoch"], 2);
    assert!(lines[2]["elapsed"].as_f64().unwrap() >= 0.0);
    assert!(lines[2]["mean_loss"].as_f64().unwrap() > 0.0);
}

#[test]
fn identical_training_runs_give_identical_model_files() {
    let fx = Fixture::new();
    let corpus = fx.corpus(20);
    let (a, b) = (fx.path("a.bin"), fx.path("b.bin"));
    for m in [&a, &b] {
        // same file name in provenance: train into place, then move
        let target = fx.path("m.bin");
        let out = fx.train(&corpus, &target, &["--train-size", "15"]);
        assert!(out.status.success(), "{}", error_line(&out));
        fs::rename(&target, m).unwrap();
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn emb_without_embeddings_is_a_usage_error() {
    let fx = Fixture::new();
    let out = run(&[
        "train",
        "--corpus",
        "/nonexistent.bio",
        "--encoder",
        "EMB",
        "--model",
        s(&fx.path("m.bin")),
    ]);
    assert!(!out.status.success());
    let line = error_line(&out);
    assert!(line.starts_with("error[usage]:"), "{line}");
    assert_eq!(line.lines().count(), 1);
    assert!(!fx.path("m.bin").exists());
}

#[test]
fn emb_training_with_synthetic_vectors() {
    let fx = Fixture::new();
    let corpus = fx.path("c.bio");
    let vectors = fx.path("v.txt");
    ok(&[
        "synth",
        "--sentences",
        "20",
        "--output",
        s(&corpus),
        "--embeddings",
        s(&vectors),
        "--dim",
        "8",
    ]);
    let model = fx.path("m.bin");
    ok(&[
        "train",
        "--corpus",
        s(&corpus),
        "--encoder",
        "EMB",
        "--network",
        "FF",
        "--epochs",
        "1",
        "--embeddings",
        s(&vectors),
        "--model",
        s(&model),
    ]);
    let loaded = trilstm::TaggerModel::load(&model).unwrap();
    assert_eq!(loaded.encoder.dim(), 8 + 4);
}

#[test]
fn missing_files_report_io_errors() {
    let fx = Fixture::new();
    let out = run(&[
        "train",
        "--corpus",
        "/nonexistent.bio",
        "--model",
        s(&fx.path("m.bin")),
    ]);
    assert!(
        error_line(&out).starts_with("error[io]:"),
        "{}",
        error_line(&out)
    );
    assert!(error_line(&out).contains("/nonexistent.bio"));

    let out = run(&[
        "annotate",
        "--model",
        "/nonexistent.bin",
        "--input",
        "/dev/null",
    ]);
    assert!(error_line(&out).starts_with("error[io]:"));
}

#[test]
fn malformed_corpus_reports_parse_error_with_line() {
    let fx = Fixture::new();
    let bad = fx.path("bad.bio");
    fs::write(&bad, "Aspirin\tB\nhas\tX\n").unwrap();
    let out = run(&[
        "train",
        "--corpus",
        s(&bad),
        "--model",
        s(&fx.path("m.bin")),
    ]);
    let line = error_line(&out);
    assert!(
        line.starts_with("error[parse]:") && line.contains("line 2"),
        "{line}"
    );
}

#[test]
fn corrupted_model_reports_model_error() {
    let fx = Fixture::new();
    let corpus = fx.corpus(10);
    let model = fx.path("m.bin");
    assert!(fx
        .train(&corpus, &model, &["--epochs", "1"])
        .status
        .success());
    let mut bytes = fs::read(&model).unwrap();
    bytes.truncate(bytes.len() - 10);
    fs::write(&model, bytes).unwrap();
    let out = run(&["annotate", "--model", s(&model), "--input", "/dev/null"]);
    assert!(
        error_line(&out).starts_with("error[model]:"),
        "{}",
        error_line(&out)
    );
}

fn annotate_stdin(model: &Path, input: &str, extra: &[&str]) -> String {
    use std::io::Write;
    let mut child = trilstm()
        .args(["annotate", "--model", s(model)])
        .args(extra)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", error_line(&out));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn annotate_output_is_bounded_and_reparseable() {
    let fx = Fixture::new();
    let corpus = fx.corpus(40);
    let model = fx.path("m.bin");
    assert!(fx
        .train(&corpus, &model, &["--epochs", "3"])
        .status
        .success());

    assert_eq!(annotate_stdin(&model, "", &[]), "");
    assert_eq!(annotate_stdin(&model, "\n  \n", &[]), "");

    let text = "Zorvex regulates Quinmox kinase in the cells.\nWe found that Tralkly activates the receptor.\n";
    let out = annotate_stdin(&model, text, &[]);
    let records: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    for (r, line) in records.iter().zip(text.lines()) {
        assert_eq!(r["text"], line);
        assert_eq!(r["run"]["command"], "annotate");
        let n = line.chars().count() as u64;
        for m in r["mentions"].as_array().unwrap() {
            let (b, e) = (m["begin"].as_u64().unwrap(), m["end"].as_u64().unwrap());
            assert!(b < e && e <= n);
            let surface: String = line
                .chars()
                .skip(b as usize)
                .take((e - b) as usize)
                .collect();
            assert_eq!(m["surface"], surface.as_str());
        }
    }
    let reparsed = trilstm::corpus::parse_standoff(&out).expect("standoff");
    assert_eq!(reparsed.documents.len(), 2);
    assert_eq!(reparsed.documents[0].doc_id, "line1");

    // standoff input keeps ids and texts
    let again = annotate_stdin(&model, &out, &["--standoff"]);
    let twice = trilstm::corpus::parse_standoff(&again).unwrap();
    assert_eq!(twice.documents[1].text, reparsed.documents[1].text);
    assert_eq!(twice.documents[1].doc_id, "line2");
}

const GOLD: &str = r#"{"doc_id": "a", "text": "Aspirin has an antiplatelet effect.", "mentions": [{"begin": 0, "end": 7}, {"begin": 15, "end": 34}]}
{"doc_id": "b", "text": "We gave Ibuprofen today. It helped.", "mentions": [{"begin": 8, "end": 17}]}
"#;

fn report_values(prefix: &Path) -> (String, Vec<serde_json::Value>) {
    let txt = fs::read_to_string(prefix.with_extension("txt")).unwrap();
    let jsonl = fs::read_to_string(prefix.with_extension("jsonl")).unwrap();
    (
        txt,
        jsonl
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect(),
    )
}

#[test]
fn evaluate_perfect_annotations() {
    let fx = Fixture::new();
    let gold = fx.path("gold.jsonl");
    fs::write(&gold, GOLD).unwrap();
    let report = fx.path("report");
    ok(&[
        "evaluate",
        "--corpus",
        s(&gold),
        "--format",
        "standoff",
        "--annotations",
        s(&gold),
        "--report",
        s(&report),
    ]);
    let (txt, records) = report_values(&report);
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r["ner"]["f1"], 1.0);
    assert_eq!(r["bio"]["macro_f1"], 1.0);
    assert_eq!(r["descriptor"]["run"]["command"], "evaluate");
    assert_eq!(r["descriptor"]["run"]["mode"], "both");
    assert!(txt.lines().nth(1).unwrap().starts_with("gold"));
    assert!(txt.contains("1.0000"));
}

#[test]
fn evaluate_partial_annotations_agree_across_formats() {
    let fx = Fixture::new();
    let gold = fx.path("gold.jsonl");
    fs::write(&gold, GOLD).unwrap();
    let pred = fx.path("pred.jsonl");
    fs::write(
        &pred,
        concat!(
            r#"{"doc_id": "a", "text": "Aspirin has an antiplatelet effect.", "mentions": [{"begin": 0, "end": 3, "surface": "Asp"}, {"begin": 8, "end": 10}]}"#,
            "\n",
            r#"{"doc_id": "b", "text": "We gave Ibuprofen today. It helped.", "mentions": []}"#,
            "\n"
        ),
    )
    .unwrap();
    let report = fx.path("report");
    ok(&[
        "evaluate",
        "--corpus",
        s(&gold),
        "--format",
        "standoff",
        "--annotations",
        s(&pred),
        "--mode",
        "span",
        "--report",
        s(&report),
    ]);
    let (txt, records) = report_values(&report);
    let ner = &records[0]["ner"];
    assert_eq!(ner["precision"], 0.5);
    assert!((ner["recall"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(records[0]["bio"].is_null());
    let row: Vec<&str> = txt.lines().nth(1).unwrap().split_whitespace().collect();
    for (cell, key) in row[1..4].iter().zip(["precision", "recall", "f1"]) {
        let v: f64 = cell.parse().unwrap();
        assert!((v - ner[key].as_f64().unwrap()).abs() < 5e-5, "{key}");
    }
    assert_eq!(row[4], "-");
}

#[test]
fn evaluate_requires_gold() {
    let fx = Fixture::new();
    let unlabeled = fx.path("u.jsonl");
    fs::write(&unlabeled, r#"{"doc_id": "a", "text": "Aspirin helps."}"#).unwrap();
    let out = run(&[
        "evaluate",
        "--corpus",
        s(&unlabeled),
        "--format",
        "standoff",
        "--annotations",
        s(&unlabeled),
        "--report",
        s(&fx.path("r")),
    ]);
    assert!(!out.status.success());
    assert!(
        error_line(&out).starts_with("error[validation]:"),
        "{}",
        error_line(&out)
    );
}

#[test]
fn evaluate_a_model_on_a_sample() {
    let fx = Fixture::new();
    let corpus = fx.corpus(30);
    let model = fx.path("m.bin");
    assert!(fx
        .train(&corpus, &model, &["--epochs", "1"])
        .status
        .success());
    let report = fx.path("eval");
    ok(&[
        "evaluate",
        "--corpus",
        s(&corpus),
        "--model",
        s(&model),
        "--test-size",
        "10",
        "--report",
        s(&report),
    ]);
    let (txt, records) = report_values(&report);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0]["documents"], 10);
    assert_eq!(records[0]["descriptor"]["model"]["run"]["command"], "train");
    assert!(txt.lines().nth(1).unwrap().starts_with("TRI+BLSTM"));
}

#[test]
fn compare_configs_grid_has_nine_rows() {
    let fx = Fixture::new();
    let corpus = fx.path("c.bio");
    let vectors = fx.path("v.txt");
    ok(&[
        "synth",
        "--sentences",
        "30",
        "--output",
        s(&corpus),
        "--embeddings",
        s(&vectors),
        "--dim",
        "4",
    ]);
    let report = fx.path("grid");
    let args = [
        "compare-configs",
        "--corpus",
        s(&corpus),
        "--embeddings",
        s(&vectors),
        "--epochs",
        "1",
        "--train-size",
        "20",
        "--test-size",
        "10",
        "--seed",
        "4",
        "--report",
        s(&report),
    ];
    ok(&args);
    let (txt, records) = report_values(&report);
    assert_eq!(records.len(), 9);
    assert_eq!(txt.lines().count(), 10);
    assert!(records.iter().all(|r| r["row"]["error"].is_null()));
    assert_eq!(records[0]["run"]["seed"], 4);

    let first = fs::read_to_string(report.with_extension("jsonl")).unwrap();
    ok(&args);
    assert_eq!(
        fs::read_to_string(report.with_extension("jsonl")).unwrap(),
        first
    );
}

#[test]
fn compare_configs_reports_failing_rows() {
    let fx = Fixture::new();
    let corpus = fx.corpus(30);
    let report = fx.path("grid");
    let out = run(&[
        "compare-configs",
        "--corpus",
        s(&corpus),
        "--epochs",
        "1",
        "--train-size",
        "20",
        "--test-size",
        "10",
        "--report",
        s(&report),
    ]);
    assert!(!out.status.success());
    assert!(
        error_line(&out).contains("3 of 9 configurations failed"),
        "{}",
        error_line(&out)
    );
    let (_, records) = report_values(&report);
    assert_eq!(records.len(), 9);
    assert_eq!(
        records
            .iter()
            .filter(|r| !r["row"]["error"].is_null())
            .count(),
        3
    );
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let fx = Fixture::new();
    let report = fx.path("gc.jsonl");
    let out = ok(&["gradcheck", "--report", s(&report)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("PASS").count(), 3);
    assert!(stdout.contains("blstm.bwd.W_fh"));
    let records: Vec<serde_json::Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 3);
    for r in &records {
        assert!(r["report"]["blocks"]
            .as_array()
            .unwrap()
            .iter()
            .all(|b| b["max_rel_error"].as_f64().unwrap() < 1e-4));
    }

    let out = run(&["gradcheck", "--network", "LSTM", "--corrupt", "0.1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(error_line(&out).starts_with("error[gradcheck]:"));
}

#[test]
fn synth_is_seeded_and_records_provenance() {
    let fx = Fixture::new();
    let (a, b) = (fx.path("a.bio"), fx.path("b.bio"));
    for p in [&a, &b] {
        ok(&[
            "synth",
            "--sentences",
            "25",
            "--seed",
            "5",
            "--misspell-rate",
            "0.2",
            "--output",
            s(p),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let corpus = trilstm::corpus::read_bio_column_file(&a).unwrap();
    assert_eq!(corpus.sentence_count(), 25);
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.path("a.bio.run.json")).unwrap()).unwrap();
    assert_eq!(run["extra"]["synth"]["misspell_rate"], 0.2);

    let out = run_bad_rate(&fx);
    assert!(error_line(&out).starts_with("error[config]:"));
}

fn run_bad_rate(fx: &Fixture) -> Output {
    run(&[
        "synth",
        "--misspell-rate",
        "2",
        "--output",
        s(&fx.path("x.bio")),
    ])
}
