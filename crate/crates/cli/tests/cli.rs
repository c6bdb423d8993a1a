use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn taxon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxon")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let gold = fixture("wordnet-sample/task.json");
    let report = tmp.path().join("eval.json");
    let out = taxon(&["eval", "--pred", path(&gold), "--gold", path(&gold), "--out", path(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for key in ["P_a", "R_a", "F1_a", "P_e", "R_e", "F1_e"] {
        assert!(stdout.contains(&format!("{key} 100.00")), "{stdout}");
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["averaging"], "micro");
}

#[test]
fn eval_with_different_node_sets_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    std::fs::write(&edges, "dog\tanimal\ncat\tanimal\n").unwrap();
    let pred = tmp.path().join("pred.json");
    assert!(taxon(&["convert", "--edges", path(&edges), "--out", path(&pred)]).status.success());

    let out = taxon(&["eval", "--pred", path(&pred), "--gold", path(&fixture("wordnet-sample/task.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convert_terms_and_relations() {
    let tmp = tempfile::tempdir().unwrap();
    let (terms, rels, out) = (tmp.path().join("terms.tsv"), tmp.path().join("rels.tsv"), tmp.path().join("task.json"));
    std::fs::write(&terms, "# name\tdefinition\nanimal\ta living organism\ndog\ncat\ta small feline\n").unwrap();
    std::fs::write(&rels, "dog\tanimal\n\ncat\tanimal\n").unwrap();
    let res = taxon(&["convert", "--terms", path(&terms), "--relations", path(&rels), "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(json["root"], "animal");
    assert_eq!(json["gold_edges"].as_array().unwrap().len(), 2);
}

#[test]
fn convert_rejects_a_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    std::fs::write(&edges, "a\tb\nb\ta\n").unwrap();
    let out = taxon(&["convert", "--edges", path(&edges), "--out", path(&tmp.path().join("t.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_miss_exits_3_and_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = taxon(&[
        "run",
        "--task",
        path(&fixture("wordnet-sample/task.json")),
        "--transcript",
        path(&fixture("wordnet-sample/transcript.jsonl")),
        "--definitions",
        "skip",
        "--k2",
        "2",
        "--out-dir",
        path(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage "));
}

#[test]
fn no_lscsf_leaves_out_the_calibration_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let snapshot = format!("snapshot:{}", fixture("wordnet-sample/snapshot.json").display());
    let out = taxon(&[
        "run",
        "--task",
        path(&fixture("wordnet-sample/task.json")),
        "--transcript",
        path(&fixture("wordnet-sample/transcript.jsonl")),
        "--definitions",
        &snapshot,
        "--no-lscsf",
        "--out-dir",
        path(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("calibrated.jsonl").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["ablation"]["enable_lscsf"], false);
}
