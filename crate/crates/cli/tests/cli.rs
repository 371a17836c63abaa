use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn triage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn triage")
}

fn ok(args: &[&str]) -> String {
    let out = triage(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_run_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let results = dir.path().join("results");
    ok(&["synth", "--out", p(&data), "--patents", "80", "--seed", "3"]);
    for f in ["D1.jsonl", "D2.jsonl", "suite.json", "tokenizer/vocab.txt", "tokenizer/merges.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let stdout = ok(&["run", "--config", p(&data.join("suite.json")), "--out", p(&results)]);
    assert!(stdout.starts_with("| Model | R | P | % | M | F1 |"));

    let md = fs::read_to_string(results.join("report.md")).unwrap();
    assert_eq!(md, stdout);
    assert_eq!(ok(&["report", "--in", p(&results), "--format", "markdown"]), md);
    let csv = ok(&["report", "--in", p(&results), "--format", "csv"]);
    assert_eq!(csv, fs::read_to_string(results.join("report.csv")).unwrap());
    assert!(csv.starts_with("experiment,model,recall,precision,percent,score_m,f1\n"));
    // 4 experiments, 2 scorers plus MEAN and MEDIAN each
    assert_eq!(csv.lines().count(), 1 + 4 * 4);

    let results_json: serde_json::Value = serde_json::from_str(&fs::read_to_string(results.join("results.json")).unwrap()).unwrap();
    assert_eq!(results_json["table"]["sections"].as_array().unwrap().len(), 4);
    assert_eq!(results_json["experiments"][3]["chunked"], true);
    let timings: serde_json::Value = serde_json::from_str(&fs::read_to_string(results.join("timings.json")).unwrap()).unwrap();
    assert_eq!(timings.as_array().unwrap().len(), 4);

    let out_file = dir.path().join("table.csv");
    ok(&["report", "--in", p(&results), "--format", "csv", "--out", p(&out_file)]);
    assert_eq!(fs::read_to_string(out_file).unwrap(), csv);

    // a second run gives the same bytes
    let again = dir.path().join("again");
    ok(&["run", "--config", p(&data.join("suite.json")), "--out", p(&again)]);
    for f in ["results.json", "report.md", "report.csv"] {
        assert_eq!(fs::read(results.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn weight_flags_change_score_m() {
    let out = ok(&["metrics", "--tp", "9", "--fp", "3", "--tn", "87", "--fn", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["score_m"].as_f64().unwrap() - (4.0 * 0.9 + 0.75 + 0.97) / 6.0).abs() < 1e-12);
    let out = ok(&["metrics", "--tp", "9", "--fp", "3", "--tn", "87", "--fn", "1", "--w-recall", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["score_m"].as_f64().unwrap() - (0.9 + 0.75 + 0.97) / 3.0).abs() < 1e-12);

    let bad = triage(&["metrics", "--tp", "1", "--fp", "0", "--tn", "1", "--fn", "0", "--w-precision", "-1"]);
    assert!(!bad.status.success());
}

#[test]
fn run_applies_weight_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--patents", "60"]);
    let plain = dir.path().join("plain");
    let equal = dir.path().join("equal");
    ok(&["run", "--config", p(&data.join("suite.json")), "--out", p(&plain)]);
    ok(&[
        "run", "--config", p(&data.join("suite.json")), "--out", p(&equal),
        "--w-recall", "1", "--w-precision", "1", "--w-patents-left", "1",
    ]);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(equal.join("results.json")).unwrap()).unwrap();
    for section in table["table"]["sections"].as_array().unwrap() {
        for row in section["rows"].as_array().unwrap() {
            let r = &row["report"];
            let f = |k: &str| r[k].as_f64().unwrap();
            assert!((f("score_m") - (f("recall") + f("precision") + f("patents_left")) / 3.0).abs() < 1e-12);
        }
    }
    assert_ne!(fs::read(plain.join("report.csv")).unwrap(), fs::read(equal.join("report.csv")).unwrap());
}

#[test]
fn failed_experiment_is_reported_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--patents", "40"]);
    let suite_path = data.join("suite.json");
    let mut suite: serde_json::Value = serde_json::from_str(&fs::read_to_string(&suite_path).unwrap()).unwrap();
    suite["experiments"] = serde_json::json!(["D1_D2", "D1_D9"]);
    fs::write(&suite_path, suite.to_string()).unwrap();

    let results = dir.path().join("results");
    let out = triage(&["run", "--config", p(&suite_path), "--out", p(&results)]);
    assert!(!out.status.success());
    let md = fs::read_to_string(results.join("report.md")).unwrap();
    assert!(md.contains("**(2) D1_D9**"));
    assert!(md.contains("failed"));
    let csv = fs::read_to_string(results.join("report.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("D1_D2,")));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = triage(&["report", "--in", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("results.json"));

    let cfg = dir.path().join("suite.json");
    fs::write(&cfg, "{\"datasets\": {}}").unwrap();
    let out = triage(&["run", "--config", p(&cfg), "--out", p(&dir.path().join("r"))]);
    assert!(!out.status.success());

    let out = triage(&["report", "--in", p(dir.path()), "--format", "html"]);
    assert!(!out.status.success());
}

#[test]
fn prune_vocab_shrinks_the_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", p(&data), "--patents", "30"]);
    let vocab = data.join("tokenizer/vocab.txt");
    let merges = data.join("tokenizer/merges.txt");

    let pruned = dir.path().join("pruned");
    let stats = ok(&[
        "prune-vocab", "--vocab", p(&vocab), "--merges", p(&merges), "--corpus", p(&data.join("D1.jsonl")), "--out", p(&pruned),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert!(stats["pruned_vocab"].as_u64() < stats["original_vocab"].as_u64());
    let lines = fs::read_to_string(pruned.join("vocab.txt")).unwrap().lines().count();
    assert_eq!(lines as u64, stats["pruned_vocab"].as_u64().unwrap());

    // plain text corpus: one document per line
    let text = dir.path().join("docs.txt");
    fs::write(&text, "geophone\n\nseismic geophone\n").unwrap();
    let tiny = dir.path().join("tiny");
    let stats = ok(&["prune-vocab", "--vocab", p(&vocab), "--merges", p(&merges), "--corpus", p(&text), "--out", p(&tiny)]);
    let stats: serde_json::Value = serde_json::from_str(&stats).unwrap();
    let kept: Vec<String> = fs::read_to_string(tiny.join("vocab.txt")).unwrap().lines().map(String::from).collect();
    assert!(kept.contains(&"geophone".to_string()) && kept.contains(&"seismic".to_string()));
    assert!(stats["pruned_vocab"].as_u64().unwrap() < 40);
}
