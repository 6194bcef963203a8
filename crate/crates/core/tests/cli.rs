use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kbqa(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbqa")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = kbqa(args, dir);
    assert!(out.status.success(), "kbqa {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name).display().to_string()
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn stepwise_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["generate", "--preset", "source", "--n", "80", "--seed", "1", "--out", "src.jsonl", "--gazetteer-out", "src.tsv"], d);
    ok(&["generate", "--preset", "target", "--n", "60", "--seed", "2", "--out", "tgt.jsonl", "--gazetteer-out", "tgt.tsv"], d);
    ok(&["tag", "src.jsonl", "--gazetteer", "src.tsv", "--out", "src-det.jsonl"], d);
    ok(&["tag", "tgt.jsonl", "--gazetteer", "tgt.tsv", "--out", "tgt-det.jsonl"], d);
    let ingest = ok(&["ingest", "tgt-det.jsonl", "--split", "0.6,0.1,0.3", "--seed", "4", "--out-dir", "tgt"], d);
    assert!(ingest.contains("60 valid samples"), "{ingest}");
    ok(&["augment", "tgt/train.jsonl", "--out", "tgt/train-da.jsonl"], d);
    ok(&["build-kb", "src-det.jsonl", "--name", "src", "--out", "src-kb.json"], d);
    ok(&["build-kb", "tgt-det.jsonl", "--name", "tgt", "--out", "tgt-kb.json"], d);
    ok(&["train-retrieval", "--train", "src-det.jsonl", "--kb", "src-kb.json", "--epochs", "2", "--out", "pre.json"], d);
    ok(&["transfer", "--pretrained", "pre.json", "--train", "tgt/train-da.jsonl", "--kb", "tgt-kb.json", "--epochs", "2", "--out", "ft.json"], d);

    let scorer: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ft.json")).unwrap()).unwrap();
    assert_eq!(scorer["metadata"]["trained_on"], serde_json::json!(["src-det", "train-da"]));
    assert_eq!(scorer["metadata"]["epochs"], 4);

    ok(&["rank", "tgt/test.jsonl", "--scorer", "ft.json", "--kb", "tgt-kb.json", "--top", "5", "--out", "ranks.jsonl"], d);
    let ranks = std::fs::read_to_string(d.join("ranks.jsonl")).unwrap();
    assert_eq!(ranks.lines().count(), 18);
    let metrics: serde_json::Value = serde_json::from_str(&ok(&["eval-retrieval", "--rankings", "ranks.jsonl"], d)).unwrap();
    assert_eq!(metrics["n_queries"], 18);
    assert!(metrics["mr"].as_u64().unwrap() >= 1);

    ok(&["train-reasoning", "--train", "tgt/train.jsonl", "--kb", "tgt-kb.json", "--knowledge", "gt", "--out", "reasoner.json"], d);
    let acc: serde_json::Value = serde_json::from_str(&ok(
        &["eval-reasoning", "tgt/test.jsonl", "--reasoner", "reasoner.json", "--kb", "tgt-kb.json", "--scorer", "ft.json", "--k", "3"],
        d,
    ))
    .unwrap();
    let a = acc["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&a));
    assert_eq!(acc["n"], 18);

    let stats = ok(&["stats", "tgt.jsonl", "--json"], d);
    let stats: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(stats["n_samples"], 60);
}

#[test]
fn run_with_visual_features_writes_workdir() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let table = ok(&["run", "--config", &data("sample_experiment.toml"), "--out", "report.json", "--workdir", "work"], d);
    assert!(table.starts_with("| Vision ") && table.lines().next().unwrap().contains("| Accuracy |"), "{table}");
    for f in ["config.toml", "target-kb.json", "scorer.json", "reasoner.json", "target-train-da.jsonl", "report.json"] {
        assert!(d.join("work").join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["vision"], "all");
    assert_eq!(report["fingerprint"].as_str().unwrap().len(), 16);
}

#[test]
fn reasoning_table_matches_golden() {
    let dir = golden("reports");
    let got = ok(
        &[
            "report",
            dir.join("reasoning-sample.json").to_str().unwrap(),
            dir.join("reasoning-separable.json").to_str().unwrap(),
            "--layout",
            "reasoning",
        ],
        Path::new("."),
    );
    assert_eq!(got, std::fs::read_to_string(golden("reasoning_table.txt")).unwrap());
}

#[test]
fn report_rejects_mixed_and_missing_accuracy() {
    let dir = golden("reports");
    let retrieval = dir.join("retrieval-direct.json");
    let reasoning = dir.join("reasoning-sample.json");
    let mixed = kbqa(&["report", retrieval.to_str().unwrap(), reasoning.to_str().unwrap()], Path::new("."));
    assert_eq!(mixed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mixed.stderr).contains("mix"));
    let no_acc = kbqa(&["report", retrieval.to_str().unwrap(), "--layout", "reasoning"], Path::new("."));
    assert_eq!(no_acc.status.code(), Some(1));
    // Reasoning runs still have retrieval metrics.
    ok(&["report", reasoning.to_str().unwrap(), "--layout", "retrieval"], Path::new("."));
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.jsonl"), "{\"sample_id\": \"x\"}\n").unwrap();
    let out = kbqa(&["ingest", "bad.jsonl"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(d.join("bad.toml"), "name = \"x\"\nlearning = \"sideways\"\n[target]\nsynthetic = \"target\"\n").unwrap();
    assert_eq!(kbqa(&["run", "--config", "bad.toml"], d).status.code(), Some(1));
    assert_eq!(kbqa(&["generate", "--preset", "nope", "--out", "x.jsonl"], d).status.code(), Some(1));
    assert_eq!(kbqa(&["ingest", &data("sample.jsonl"), "--split", "0.5,0.5"], d).status.code(), Some(1));
}

#[test]
fn n_answers_is_enforced() {
    let out = kbqa(&["--n-answers", "5", "ingest", &data("sample.jsonl")], Path::new("."));
    assert_eq!(out.status.code(), Some(1));
}
