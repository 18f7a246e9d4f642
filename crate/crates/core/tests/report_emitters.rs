use std::collections::BTreeMap;

use embcomp::codecs::{compression_ratio, CodecConfig, Method, Threshold};
use embcomp::ir_metrics::Gain;
use embcomp::pipeline::{EvalResult, ResultMetadata, Timestamps};
use embcomp::report::{load_results, pareto_csv, report_table, scaling_csv, ReportError};
use embcomp::stats::{Alternative, TestMethod, TestResult};
use embcomp::codecs::Binning;

fn result(dataset: &str, codec: CodecConfig, size: usize, recall: f64, significant: bool) -> EvalResult {
    EvalResult {
        metadata: ResultMetadata {
            config_hash: "h".into(),
            dataset: dataset.into(),
            codec,
            label: codec.label(),
            codec_id: "0".into(),
            compression_ratio: compression_ratio(&codec, 1024, 32),
            bits_per_vector: codec.stored_bits_per_vector(1024),
            native_bits: 32,
            corpus_size: size,
            n_docs: size,
            n_queries: 1,
            nested: true,
            ks: vec![100],
            gain: Gain::Linear,
            min_grade: 1,
            significance_metric: "recall@100".into(),
            alpha: 0.05,
            zero_method: "wilcox".into(),
            skipped_queries: vec![],
            timestamps: Timestamps { started_unix_ms: 0, finished_unix_ms: 0 },
        },
        per_query: BTreeMap::new(),
        aggregate: [("recall@100".to_string(), recall)].into(),
        significance: (!codec.is_identity()).then(|| TestResult {
            statistic: 0.0,
            n_effective: 10,
            p_value: if significant { 0.01 } else { 0.5 },
            method: TestMethod::Exact,
            significant,
            alternative: Alternative::VariantLess,
            alpha: 0.05,
            zero_method: "wilcox".into(),
        }),
    }
}

fn binary() -> CodecConfig {
    Method::Binary { threshold: Threshold::Zero }.into()
}

fn sq8_512() -> CodecConfig {
    CodecConfig::from(Method::ScalarQuant { bits: 8, binning: Binning::EqualDistance }).with_pre_truncate(512)
}

#[test]
fn table_formatting_flags_and_stars() {
    let rs = vec![
        result("d", CodecConfig::identity(), 10_000, 0.8385, false),
        result("d", binary(), 10_000, 0.8385, true),
        result("d", sq8_512(), 10_000, 0.80, false),
        result("d", CodecConfig::identity(), 100_000, 0.7, false),
        result("d", binary(), 100_000, 0.6, true),
    ];
    let t = report_table(&rs[..1], "recall@100").unwrap();
    assert_eq!(t.rows[0].cells[0].as_ref().unwrap().display(), "83.85");
    let t = report_table(&rs, "recall@100").unwrap();
    assert_eq!(t.sizes, vec![10_000, 100_000]);
    assert_eq!(t.rows[0].label, "identity");
    let id = t.rows[0].cells[0].as_ref().unwrap();
    let bin_row = t.rows.iter().find(|r| r.label == "binary-zero").unwrap();
    let bin = bin_row.cells[0].as_ref().unwrap();
    assert!(id.best && bin.best);
    assert_eq!(bin.display(), "83.85*");
    let sq = t.rows.iter().find(|r| r.label == "truncate512+sq8-equal_distance").unwrap();
    assert!(sq.cells[0].as_ref().unwrap().second);
    assert!(sq.cells[1].is_none());
    let text = t.render_text();
    assert!(text.contains("**83.85***"));
    assert!(text.contains("<u>80.00</u>"));
    assert!(t.render_csv().lines().count() == 6);
}

#[test]
fn missing_metric_lists_available() {
    let rs = vec![result("d", CodecConfig::identity(), 10, 0.5, false)];
    let e = report_table(&rs, "ndcg@10").unwrap_err();
    assert!(matches!(e, ReportError::NoMetric { .. }));
    assert!(e.to_string().contains("recall@100"));
}

#[test]
fn pareto_rows_and_averaging() {
    let rs = vec![
        result("a", CodecConfig::identity(), 10, 0.9, false),
        result("a", sq8_512(), 10, 0.6, false),
        result("b", sq8_512(), 10, 0.8, false),
        result("a", binary(), 10, 0.5, true),
    ];
    let csv = pareto_csv(&rs, "recall@100").unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "codec,compression_ratio,recall@100,n_results");
    assert_eq!(lines[1], "identity,1,0.9,1");
    let sq: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(sq[0..2], ["truncate512+sq8-equal_distance", "8"]);
    assert!((sq[2].parse::<f64>().unwrap() - 0.7).abs() < 1e-12);
    assert!(lines[3].starts_with("binary-zero,32,"));
}

#[test]
fn scaling_rows() {
    let rs = vec![
        result("d", binary(), 1_000_000, 0.4, true),
        result("d", CodecConfig::identity(), 1_000_000, 0.6, false),
        result("d", CodecConfig::identity(), 10_000, 0.9, false),
        result("d", binary(), 10_000, 0.8, false),
    ];
    let csv = scaling_csv(&rs, "recall@100").unwrap();
    assert_eq!(
        csv,
        "codec,corpus_size,recall@100,significant\n\
         binary-zero,10000,0.8,false\n\
         binary-zero,1000000,0.4,true\n\
         identity,10000,0.9,false\n\
         identity,1000000,0.6,false\n"
    );
    assert!(matches!(scaling_csv(&rs[..2], "recall@100"), Err(ReportError::TooFewSizes(_))));
}

#[test]
fn loader_skips_non_results() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("results/10");
    std::fs::create_dir_all(&sub).unwrap();
    let r = result("d", binary(), 10, 0.5, false);
    std::fs::write(sub.join("binary-zero.json"), serde_json::to_string(&r).unwrap()).unwrap();
    std::fs::write(dir.path().join("summary.json"), "{\"cells\": []}").unwrap();
    let loaded = load_results(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(loaded, vec![r]);
    assert!(matches!(load_results(&[sub.join("missing")]), Err(ReportError::Walk { .. })));
}
