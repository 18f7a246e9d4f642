use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn embcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embcomp")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn planted(dir: &Path) {
    let o = embcomp(&[
        "synth",
        "--out",
        s(dir),
        "--seed",
        "3",
        "--dim",
        "16",
        "--clusters",
        "4",
        "--count",
        "1500",
        "--planted-queries",
        "12",
        "--relevant-per-query",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn run_args<'a>(dir: &'a Path, out: &'a Path, codecs: &'a str) -> Vec<&'a str> {
    vec!["run", "--corpus", s(dir), "--queries", "", "--qrels", "", "--output-dir", s(out), "--codecs", codecs]
}

fn run_cmd(dir: &Path, out: &Path, codecs: &str, extra: &[&str]) -> Output {
    let corpus = dir.join("corpus.cemb");
    let queries = dir.join("queries.cemb");
    let qrels = dir.join("qrels.txt");
    let mut args = run_args(dir, out, codecs);
    args[2] = s(&corpus);
    args[4] = s(&queries);
    args[6] = s(&qrels);
    args.extend_from_slice(extra);
    embcomp(&args)
}

const CODECS: &str = r#"[{"method":"identity"},
 {"method":"binary","params":{"threshold":"zero"}},
 {"method":"scalar_quant","params":{"bits":4,"binning":"percentile"}}]"#;

#[test]
fn synth_writes_matrix_and_ids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.cemb");
    let o = embcomp(&["synth", "--out", s(&out), "--dim", "8", "--count", "50", "--seed", "1"]);
    assert!(o.status.success());
    let m = embcomp::embed_store::read_matrix(&out).unwrap();
    assert_eq!((m.len(), m.dim()), (50, 8));
    assert_eq!(m.ids()[0], "doc0");
}

#[test]
fn run_then_report_pareto_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    planted(root);
    let out = root.join("out");
    let o = run_cmd(root, &out, CODECS, &["--batch-size", "400", "--ks", "10,100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failures"], 0);
    assert_eq!(summary["cells"].as_array().unwrap().len(), 3);

    let results = out.join("results");
    let csv = root.join("table.csv");
    let o = embcomp(&["report", "--results", s(&results), "--metric", "recall@100", "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    assert!(table.starts_with("| codec | ratio |"));
    assert!(table.contains("| identity | 1 |"));
    assert!(table.contains("binary-zero"));
    let csv = fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("codec,compression_ratio,corpus_size,value,display,best,second_best,significant\n"));
    assert_eq!(csv.lines().count(), 4);

    let o = embcomp(&["pareto", "--results", s(&results), "--metric", "ndcg@10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "codec,compression_ratio,ndcg@10,n_results");
    assert!(lines[1].starts_with("identity,1,"));
    assert!(lines[3].starts_with("binary-zero,32,"));

    // A single size cannot show scaling.
    let o = embcomp(&["scaling", "--results", s(&results)]);
    assert_eq!(o.status.code(), Some(2));

    let o = embcomp(&["report", "--results", s(&results), "--metric", "map@5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("recall@100"));
}

#[test]
fn sizes_from_manifest_feed_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    planted(root);
    // Runs that rank relevant docs first, then background docs.
    let mut runs = String::new();
    for tag in ["a", "b", "c"] {
        for q in 0..12 {
            let mut docs: Vec<String> = (0..5).map(|j| format!("rel{q}_{j}")).collect();
            docs.extend((0..30).map(|i| format!("doc{}", (i * 37 + q * 11 + tag.len()) % 1500)));
            for (r, d) in docs.iter().enumerate() {
                runs.push_str(&format!("q{q} Q0 {d} {} {} {tag}\n", r + 1, 100 - r));
            }
        }
    }
    fs::write(root.join("runs.txt"), runs).unwrap();
    let corpus = embcomp::embed_store::read_matrix(&root.join("corpus.cemb")).unwrap();
    fs::write(root.join("universe.txt"), corpus.ids().join("\n")).unwrap();
    let manifest = root.join("manifest.json");
    let o = embcomp(&[
        "subsample",
        "--runs",
        s(&root.join("runs.txt")),
        "--qrels",
        s(&root.join("qrels.txt")),
        "--universe",
        s(&root.join("universe.txt")),
        "--sizes",
        "400,800,1560",
        "--distractors",
        "5",
        "--seed",
        "2",
        "--out",
        s(&manifest),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("manifest.400.ids").is_file());
    let ids400 = fs::read_to_string(root.join("manifest.400.ids")).unwrap();
    let ids800 = fs::read_to_string(root.join("manifest.800.ids")).unwrap();
    let small: std::collections::HashSet<&str> = ids400.lines().collect();
    let large: std::collections::HashSet<&str> = ids800.lines().collect();
    assert_eq!(small.len(), 400);
    assert!(small.is_subset(&large));
    assert!(small.contains("rel0_0"));

    let out = root.join("out");
    let o = run_cmd(root, &out, CODECS, &["--manifest", s(&manifest)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = embcomp(&["scaling", "--results", s(&out.join("results")), "--metric", "recall@10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("codec,corpus_size,recall@10,significant"));
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    let o = embcomp(&["report", "--results", s(&out.join("results")), "--metric", "recall@10"]);
    assert!(stdout(&o).starts_with("| codec | ratio | 400 | 800 | 1560 |"));
}

#[test]
fn failed_cell_exits_one_and_keeps_others() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    planted(root);
    let out = root.join("out");
    let codecs = r#"[{"method":"identity"},{"method":"pq","params":{"n_subvectors":2,"code_bits":12}}]"#;
    let o = run_cmd(root, &out, codecs, &["--calibration-rows", "100"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed"));
    assert!(out.join("results").read_dir().unwrap().next().is_some());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failures"], 1);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    planted(root);
    let out = root.join("out");
    let o = run_cmd(root, &out, r#"[{"method":"binary","params":{"threshold":"zero"}}]"#, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("identity"));

    let o = embcomp(&["run", "--config", s(&root.join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = root.join("bad.json");
    fs::write(&cfg, r#"{"corpus_path": "x", "unknown_field": 1}"#).unwrap();
    let o = embcomp(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    planted(root);
    let cfg = serde_json::json!({
        "corpus_path": root.join("corpus.cemb"),
        "query_path": root.join("queries.cemb"),
        "qrels_path": root.join("qrels.txt"),
        "codecs": [{"method": "identity"}, {"method": "float_cast", "params": {"format": "fp16"}}],
        "ks": [5],
        "output_dir": root.join("ignored"),
    });
    fs::write(root.join("exp.json"), cfg.to_string()).unwrap();
    let out = root.join("out");
    let o = embcomp(&["run", "--config", s(&root.join("exp.json")), "--output-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!root.join("ignored").exists());
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("results/1560/fp16.json")).unwrap()).unwrap();
    assert_eq!(r["metadata"]["compression_ratio"], 2.0);
    assert!(r["aggregate"]["recall@5"].is_number());
}
