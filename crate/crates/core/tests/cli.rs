use std::path::Path;
use std::process::{Command, Output};

fn pxtrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pxtrank"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) {
    let o = pxtrank(
        dir,
        &["synth", "--out-dir", ".", "--topics", "6", "--providers", "12", "--dim", "8"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pxtrank(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = pxtrank(
        dir.path(),
        &[
            "--config", "config.toml", "train", "--slates", "nowhere.jsonl", "--snapshots",
            "snapshots.jsonl", "--embeddings", "embeddings.jsonl", "--out", "m.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn config_and_argument_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = pxtrank(dir.path(), &["--set", "colour=red", "consensus", "--judgments", "j", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));

    let o = pxtrank(dir.path(), &["weak-rank", "--snapshots", "snapshots.jsonl"]);
    assert_eq!(o.status.code(), Some(1));

    // Ten to fifteen negatives per topic.
    let rank = pxtrank(
        dir.path(),
        &[
            "--config", "config.toml", "weak-rank", "--snapshots", "snapshots.jsonl",
            "--embeddings", "embeddings.jsonl", "--out", "weak.jsonl",
        ],
    );
    assert!(rank.status.success(), "{}", stderr(&rank));
    let o = pxtrank(
        dir.path(),
        &["sample-candidates", "--rankings", "weak.jsonl", "--out", "c.jsonl", "--negatives", "20"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn validate_reports_violations_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let ok = pxtrank(
        dir.path(),
        &[
            "--config", "config.toml", "validate", "--snapshots", "snapshots.jsonl",
            "--embeddings", "embeddings.jsonl",
        ],
    );
    assert!(ok.status.success(), "{}", stderr(&ok));

    // Duplicate the first snapshot row.
    let path = dir.path().join("snapshots.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let first = text.lines().next().unwrap().to_string();
    std::fs::write(&path, format!("{text}{first}\n")).unwrap();
    let bad = pxtrank(
        dir.path(),
        &[
            "--config", "config.toml", "validate", "--snapshots", "snapshots.jsonl",
            "--embeddings", "embeddings.jsonl", "--out", "report.json",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let violations = report["violations"].as_array().unwrap();
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0]["kind"], "duplicate_snapshot");
}

#[test]
fn weak_rank_sample_label_consensus_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "config.toml"];
        full.extend_from_slice(args);
        let o = pxtrank(d, &full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["weak-rank", "--snapshots", "snapshots.jsonl", "--embeddings", "embeddings.jsonl", "--out", "weak.jsonl"]);
    run(&["sample-candidates", "--rankings", "weak.jsonl", "--out", "cands.jsonl", "--positives", "2", "--negatives", "10"]);
    let sets: Vec<serde_json::Value> = std::fs::read_to_string(d.join("cands.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(sets.len(), 6);

    // Canned labeler: ranks the two positives. Annotators agree on them.
    std::fs::create_dir(d.join("mock")).unwrap();
    let mut judgments = String::new();
    for s in &sets {
        let topic = s["topic"].as_str().unwrap();
        let pos: Vec<&str> = s["positives"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
        std::fs::write(d.join("mock").join(format!("{topic}.json")), serde_json::to_string(&pos).unwrap())
            .unwrap();
        for p in &pos {
            for a in ["a1", "a2", "a3"] {
                judgments.push_str(&format!(
                    "{{\"topic\":\"{topic}\",\"locale\":\"en-US\",\"provider\":\"{p}\",\"annotator\":\"{a}\",\"selected\":{}}}\n",
                    a != "a3"
                ));
            }
        }
    }
    std::fs::write(d.join("judgments.jsonl"), judgments).unwrap();
    run(&["label", "--candidates", "cands.jsonl", "--mock-dir", "mock", "--out", "labels2.jsonl"]);
    run(&["consensus", "--judgments", "judgments.jsonl", "--out", "decisions.jsonl"]);
    let o = run(&["agreement", "--labels", "labels2.jsonl", "--decisions", "decisions.jsonl", "--out", "agree.json"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    run(&["build-slates", "--labels", "labels2.jsonl", "--candidates", "cands.jsonl", "--out", "slates2.jsonl"]);
    let first: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(d.join("slates2.jsonl")).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    let grades: Vec<u64> = first["items"].as_array().unwrap().iter().map(|i| i["relevance"].as_u64().unwrap()).collect();
    assert_eq!(&grades[..2], &[2, 1]);
    assert!(grades[2..].iter().all(|&g| g == 0));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("slates2.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "build-slates");
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 1);
    assert!(manifest["inputs"].as_object().unwrap().contains_key("cands.jsonl"));
}

#[test]
fn mock_labeler_without_response_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = pxtrank(
        dir.path(),
        &["label", "--candidates", "candidates.jsonl", "--mock-dir", "empty", "--out", "l.jsonl"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no canned response"));
}
