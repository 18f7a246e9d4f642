//! NDCG, Recall and MRR at cutoffs against graded relevance judgments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::searcher::RankedList;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("qrels line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("query {0:?} has no judgments")]
    Unjudged(String),
    #[error("query {0:?} has no document at or above the relevance threshold")]
    NoRelevant(String),
    #[error("no query of the run is judged")]
    NoOverlap,
    #[error("at least one cutoff is required")]
    NoCutoffs,
    #[error("cutoffs must be positive")]
    ZeroCutoff,
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Graded judgments: query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels(pub BTreeMap<String, BTreeMap<String, u32>>);

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) {
        self.0.entry(query.into()).or_default().insert(doc.into(), grade);
    }

    pub fn judgments(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.0.get(query)
    }

    pub fn grade(&self, query: &str, doc: &str) -> Option<u32> {
        self.0.get(query).and_then(|m| m.get(doc)).copied()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Docs with grade `>= min_grade` for `query`.
    pub fn relevant<'a>(&'a self, query: &str, min_grade: u32) -> impl Iterator<Item = &'a str> + 'a {
        self.0
            .get(query)
            .into_iter()
            .flat_map(move |m| m.iter().filter(move |(_, &g)| g >= min_grade).map(|(d, _)| d.as_str()))
    }

    /// Parses TREC qrels: `qid iter docid grade`, `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut q = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(MetricError::Parse { line: i + 1, reason: format!("expected 4 fields, found {}", f.len()) });
            }
            let grade: i64 = f[3]
                .parse()
                .map_err(|_| MetricError::Parse { line: i + 1, reason: format!("bad grade {:?}", f[3]) })?;
            if grade < 0 {
                return Err(MetricError::Parse { line: i + 1, reason: format!("negative grade {grade}") });
            }
            q.insert(f[0], f[2], grade as u32);
        }
        Ok(q)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| MetricError::Io { path: path.display().to_string(), source: e })?;
        let mut text = String::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| MetricError::Io { path: path.display().to_string(), source: e })?;
            text.push_str(&line);
            text.push('\n');
        }
        Self::parse(&text)
    }

    /// TREC qrels text, sorted by query then doc.
    pub fn to_trec(&self) -> String {
        let mut s = String::new();
        for (q, docs) in &self.0 {
            for (d, g) in docs {
                s.push_str(&format!("{q} 0 {d} {g}\n"));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `g(rel) = rel`
    #[default]
    Linear,
    /// `g(rel) = 2^rel - 1`
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

fn judged<'a>(ranked: &RankedList, qrels: &'a Qrels) -> Result<&'a BTreeMap<String, u32>> {
    qrels.judgments(&ranked.query_id).ok_or_else(|| MetricError::Unjudged(ranked.query_id.clone()))
}

/// Fraction of relevant documents retrieved in the top `k`.
pub fn recall_at_k(ranked: &RankedList, qrels: &Qrels, k: usize, min_grade: u32) -> Result<f64> {
    let j = judged(ranked, qrels)?;
    let total = j.values().filter(|&&g| g >= min_grade).count();
    if total == 0 {
        return Err(MetricError::NoRelevant(ranked.query_id.clone()));
    }
    let hit = ranked
        .doc_ids()
        .take(k)
        .filter(|d| j.get(*d).is_some_and(|&g| g >= min_grade))
        .count();
    Ok(hit as f64 / total as f64)
}

/// DCG@k over IDCG@k with discount `log2(rank + 1)`. Unjudged docs gain 0.
pub fn ndcg_at_k(ranked: &RankedList, qrels: &Qrels, k: usize, gain: Gain) -> Result<f64> {
    let j = judged(ranked, qrels)?;
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .doc_ids()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.apply(j.get(d).copied().unwrap_or(0)) / discount(i))
        .sum();
    let mut ideal: Vec<u32> = j.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| gain.apply(g) / discount(i)).sum();
    Ok(if idcg == 0.0 { 0.0 } else { dcg / idcg })
}

/// Reciprocal rank of the first relevant doc within the top `k`, else 0.
pub fn mrr_at_k(ranked: &RankedList, qrels: &Qrels, k: usize, min_grade: u32) -> Result<f64> {
    let j = judged(ranked, qrels)?;
    if !j.values().any(|&g| g >= min_grade) {
        return Err(MetricError::NoRelevant(ranked.query_id.clone()));
    }
    Ok(ranked
        .doc_ids()
        .take(k)
        .position(|d| j.get(d).is_some_and(|&g| g >= min_grade))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub gain: Gain,
    /// Relevance threshold for recall and MRR.
    pub min_grade: u32,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { gain: Gain::Linear, min_grade: 1 }
    }
}

/// Per-query and mean-aggregated metric values. Keys look like `ndcg@10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregate: BTreeMap<String, f64>,
    /// Run queries without judgments, excluded from the means.
    pub skipped_queries: Vec<String>,
    pub options: MetricOptions,
}

impl MetricReport {
    /// Per-query values of one metric, for queries where it is defined.
    pub fn metric_values(&self, name: &str) -> BTreeMap<&str, f64> {
        self.per_query
            .iter()
            .filter_map(|(q, m)| m.get(name).map(|&v| (q.as_str(), v)))
            .collect()
    }
}

pub fn metric_key(name: &str, k: usize) -> String {
    format!("{name}@{k}")
}

/// All three metrics at every cutoff, per query and averaged in query-id
/// order. A metric undefined for a query (no relevant docs) is left out for
/// that query rather than counted as 0.
pub fn evaluate(run: &[RankedList], qrels: &Qrels, ks: &[usize], options: MetricOptions) -> Result<MetricReport> {
    if ks.is_empty() {
        return Err(MetricError::NoCutoffs);
    }
    if ks.contains(&0) {
        return Err(MetricError::ZeroCutoff);
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    for list in run {
        if qrels.judgments(&list.query_id).is_none() {
            skipped.push(list.query_id.clone());
            continue;
        }
        let mut m = BTreeMap::new();
        for &k in ks {
            m.insert(metric_key("ndcg", k), ndcg_at_k(list, qrels, k, options.gain)?);
            match recall_at_k(list, qrels, k, options.min_grade) {
                Ok(v) => {
                    m.insert(metric_key("recall", k), v);
                }
                Err(MetricError::NoRelevant(_)) => {}
                Err(e) => return Err(e),
            }
            if let Ok(v) = mrr_at_k(list, qrels, k, options.min_grade) {
                m.insert(metric_key("mrr", k), v);
            }
        }
        per_query.insert(list.query_id.clone(), m);
    }
    if per_query.is_empty() {
        return Err(MetricError::NoOverlap);
    }
    skipped.sort();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in per_query.values() {
        for (name, &v) in m {
            let e = sums.entry(name.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let aggregate = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    Ok(MetricReport { per_query, aggregate, skipped_queries: skipped, options })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searcher::Hit;

    fn list(q: &str, docs: &[&str]) -> RankedList {
        RankedList {
            query_id: q.into(),
            entries: docs
                .iter()
                .enumerate()
                .map(|(i, d)| Hit { doc_id: d.to_string(), score: 1.0 - i as f64 * 0.01 })
                .collect(),
        }
    }

    fn ten_relevant() -> Qrels {
        let mut q = Qrels::new();
        for i in 0..10 {
            q.insert("q", format!("r{i}"), 1);
        }
        q.insert("q", "n0", 0);
        q
    }

    #[test]
    fn recall_examples() {
        let q = ten_relevant();
        let mut docs: Vec<String> = (0..10).map(|i| format!("r{i}")).collect();
        docs.extend((0..90).map(|i| format!("x{i}")));
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        assert_eq!(recall_at_k(&list("q", &refs), &q, 100, 1).unwrap(), 1.0);
        let none: Vec<String> = (0..100).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = none.iter().map(String::as_str).collect();
        assert_eq!(recall_at_k(&list("q", &refs), &q, 100, 1).unwrap(), 0.0);
        let mut seven: Vec<String> = (0..7).map(|i| format!("r{i}")).collect();
        seven.extend((0..93).map(|i| format!("x{i}")));
        let refs: Vec<&str> = seven.iter().map(String::as_str).collect();
        assert!((recall_at_k(&list("q", &refs), &q, 100, 1).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ndcg_examples() {
        let mut q = Qrels::new();
        q.insert("a", "rel", 1);
        let v = ndcg_at_k(&list("a", &["x", "rel"]), &q, 10, Gain::Linear).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);

        let mut q = Qrels::new();
        q.insert("b", "d0", 0);
        q.insert("b", "d3", 3);
        q.insert("b", "d2", 2);
        let v = ndcg_at_k(&list("b", &["d0", "d3", "d2"]), &q, 3, Gain::Linear).unwrap();
        let dcg = 3.0 / 3f64.log2() + 2.0 / 2.0;
        let idcg = 3.0 + 2.0 / 3f64.log2();
        assert!((dcg - 2.892789).abs() < 1e-6 && (idcg - 4.261860).abs() < 1e-6);
        assert!((v - 0.6787622294601761).abs() < 1e-12);
        assert!((v - dcg / idcg).abs() < 1e-15);
        let ideal = ndcg_at_k(&list("b", &["d3", "d2", "d0"]), &q, 3, Gain::Exponential).unwrap();
        assert!((ideal - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ndcg_zero_when_nothing_relevant() {
        let mut q = Qrels::new();
        q.insert("z", "d", 0);
        assert_eq!(ndcg_at_k(&list("z", &["d"]), &q, 5, Gain::Linear).unwrap(), 0.0);
    }

    #[test]
    fn mrr_examples() {
        let mut q = Qrels::new();
        q.insert("m", "r", 2);
        assert_eq!(mrr_at_k(&list("m", &["r", "a"]), &q, 10, 1).unwrap(), 1.0);
        assert_eq!(mrr_at_k(&list("m", &["a", "b", "c", "r"]), &q, 10, 1).unwrap(), 0.25);
        assert_eq!(mrr_at_k(&list("m", &["a", "b", "c", "r"]), &q, 3, 1).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_perfect_and_mean() {
        let mut q = Qrels::new();
        q.insert("1", "a", 1);
        q.insert("2", "b", 1);
        let r = evaluate(&[list("1", &["a"])], &q, &[1, 10], MetricOptions::default()).unwrap();
        assert!(r.aggregate.values().all(|&v| v == 1.0));
        assert_eq!(r.aggregate.len(), 6);

        let r = evaluate(&[list("1", &["a"]), list("2", &["x"]), list("3", &["a"])], &q, &[5], MetricOptions::default())
            .unwrap();
        assert_eq!(r.aggregate["recall@5"], 0.5);
        assert_eq!(r.skipped_queries, vec!["3"]);
        assert!(matches!(evaluate(&[list("9", &["a"])], &q, &[5], MetricOptions::default()), Err(MetricError::NoOverlap)));
        assert!(matches!(evaluate(&[list("1", &["a"])], &q, &[], MetricOptions::default()), Err(MetricError::NoCutoffs)));
    }

    #[test]
    fn empty_relevant_set_is_excluded_not_nan() {
        let mut q = Qrels::new();
        q.insert("1", "a", 1);
        q.insert("2", "b", 0);
        let r = evaluate(&[list("1", &["a"]), list("2", &["b"])], &q, &[5], MetricOptions::default()).unwrap();
        assert!(!r.per_query["2"].contains_key("recall@5"));
        assert_eq!(r.per_query["2"]["ndcg@5"], 0.0);
        assert_eq!(r.aggregate["recall@5"], 1.0);
        assert!(r.aggregate.values().all(|v| v.is_finite()));
    }

    #[test]
    fn qrels_parsing() {
        let q = Qrels::parse("# header\n1 0 docA 2\n1 0 docB 0\n\n2 Q0 docC 1\n").unwrap();
        assert_eq!(q.grade("1", "docA"), Some(2));
        assert_eq!(q.grade("2", "docC"), Some(1));
        assert_eq!(q.relevant("1", 1).collect::<Vec<_>>(), vec!["docA"]);
        let err = Qrels::parse("1 0 docA\n").unwrap_err();
        assert_eq!(err.to_string(), "qrels line 1: expected 4 fields, found 3");
        assert!(Qrels::parse("1 0 d -1\n").is_err());
        assert_eq!(Qrels::parse(&q.to_trec()).unwrap(), q);
    }
}
