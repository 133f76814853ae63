use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ctg(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ctg")).args(args).output().expect("spawn ctg");
    assert!(
        out.status.success(),
        "ctg {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn synth(dir: &Path) -> (PathBuf, PathBuf) {
    let (g, s) = (dir.join("g.json"), dir.join("scm.json"));
    ctg(&["synth", "--graph", p(&g), "--scm", p(&s), "--nodes", "40", "--worlds", "8", "--seed", "11"]);
    (g, s)
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn stats_json_counts_match_the_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let (g, _) = synth(dir.path());
    let graph: Value = serde_json::from_str(&std::fs::read_to_string(&g).unwrap()).unwrap();
    let stats: Value = serde_json::from_slice(&ctg(&["stats", p(&g), "--json"]).stdout).unwrap();

    let nodes = graph["nodes"].as_array().unwrap().len();
    let edges = graph["edges"].as_array().unwrap().len();
    assert_eq!(stats["node_count"], nodes);
    assert_eq!(stats["edge_count"], edges);
    // component histogram maps size to count
    let covered: u64 = stats["weakly_connected_components"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(size, count)| size.parse::<u64>().unwrap() * count.as_u64().unwrap())
        .sum();
    assert_eq!(covered as usize, nodes);
}

#[test]
fn dataset_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (g, _) = synth(dir.path());
    let (a, b, c) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"), dir.path().join("c.jsonl"));
    ctg(&["gen-dataset", p(&g), "--n", "30", "--seed", "5", "-o", p(&a)]);
    ctg(&["gen-dataset", p(&g), "--n", "30", "--seed", "5", "-o", p(&b)]);
    ctg(&["gen-dataset", p(&g), "--n", "30", "--seed", "6", "-o", p(&c)]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn deterministic_inference_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (g, s) = synth(dir.path());
    let d = dir.path().join("d.jsonl");
    let r = dir.path().join("r.jsonl");
    let t = dir.path().join("t.jsonl");
    let rep = dir.path().join("report.json");
    ctg(&["gen-dataset", p(&g), "--n", "20", "--seed", "2", "-o", p(&d)]);
    ctg(&["infer", p(&d), "--graph", p(&g), "--reasoner", "det", "--scm", p(&s), "-o", p(&r), "--traces", p(&t)]);

    let queries = lines(&d);
    let results = lines(&r);
    assert_eq!(queries.len(), results.len());
    // the mechanisms generated the ground truth, so every answer must equal it
    for (q, res) in queries.iter().zip(&results) {
        assert_eq!(q["id"], res["query_id"]);
        assert!(res.get("error").is_none_or(Value::is_null), "{res}");
        assert_eq!(q["ground_truth"].as_str().unwrap(), res["target_value"].as_str().unwrap());
    }
    let traces = lines(&t);
    assert!(traces.iter().all(|t| t["trace"]["entries"].as_array().is_some_and(|s| !s.is_empty())));

    ctg(&["eval", p(&r), p(&d), "--report", p(&rep)]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    let overall = &report["report"]["overall"];
    assert_eq!(overall["count"], queries.len());
    assert_eq!(overall["failed"], 0);
    assert_eq!(overall["numeric"]["outlier_count"], 0);
}

#[test]
fn det_reasoner_requires_an_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let (g, _) = synth(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_ctg"))
        .args(["infer", "missing.jsonl", "--graph", p(&g), "--reasoner", "det", "-o", "x.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scm"));
}

#[test]
fn ingest_with_recorded_transcript_builds_the_world() {
    let dir = tempfile::tempdir().unwrap();
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(fixture("air_pollution_doc.json")).unwrap()).unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(&docs, format!("{doc}\n")).unwrap();
    let g = dir.path().join("g.json");
    let tr = dir.path().join("tr.jsonl");
    let backend = format!("mock:{}", p(&fixture("air_pollution.jsonl")));
    ctg(&["ingest", p(&docs), "--graph", p(&g), "--backend", &backend, "--transcripts", p(&tr)]);

    let stats: Value = serde_json::from_slice(&ctg(&["stats", p(&g), "--json"]).stdout).unwrap();
    assert_eq!(stats["node_count"], 5);
    assert_eq!(stats["edge_count"], 4);
    assert_eq!(stats["world_count"], 1);
    let records = lines(&tr);
    assert_eq!(records.len(), 1);
    assert!(records[0].get("error").is_none_or(Value::is_null));
}

#[test]
fn retrieve_prints_k_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let (g, _) = synth(dir.path());
    let text = dir.path().join("doc.txt");
    std::fs::write(&text, "a background factor drives a mechanized variable").unwrap();
    let out = ctg(&["retrieve", p(&g), "--text-file", p(&text), "--k", "4", "--p", "1"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("seed ")).count(), 4);
}
