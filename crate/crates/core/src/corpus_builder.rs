//! Builds nested evaluation corpora from pooled TREC runs: run parsing,
//! effectiveness filtering, reciprocal rank fusion, distractor mining and
//! seeded random fill.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir_metrics::{ndcg_at_k, Gain, Qrels};
use crate::searcher::{Hit, RankedList};

pub const DEFAULT_K_RRF: f64 = 60.0;
pub const DEFAULT_DISTRACTORS: usize = 100;
pub const DEFAULT_DROP_FRACTION: f64 = 0.2;
/// Cutoff of the NDCG used to rank runs.
pub const FILTER_CUTOFF: usize = 10;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected 6 fields, found {found}")]
    Fields { line: usize, found: usize },
    #[error("line {line}: bad {field} {value:?}")]
    BadField { line: usize, field: &'static str, value: String },
    #[error("line {line}: duplicate document {doc:?} for query {query:?} in run {run:?}")]
    DuplicateDoc { line: usize, query: String, doc: String, run: String },
    #[error("line {line}: duplicate rank {rank} for query {query:?} in run {run:?}")]
    DuplicateRank { line: usize, query: String, rank: u64, run: String },
    #[error("run {0:?} appears in more than one input")]
    DuplicateRun(String),
    #[error("drop fraction must be in [0, 1), got {0}")]
    DropFraction(f64),
    #[error("run pool is empty")]
    EmptyPool,
    #[error("query {query}: only {found} distractor candidates")]
    TooFewCandidates { query: String, found: usize },
    #[error("sizes must be non-empty and strictly ascending")]
    Sizes,
    #[error("smallest size {size} is below the {mandatory} mandatory documents")]
    SizeBelowMandatory { size: usize, mandatory: usize },
    #[error("universe too small: largest size {size} needs {needed} fill documents, {available} available")]
    UniverseTooSmall { size: usize, needed: usize, available: usize },
    #[error("mandatory document {0:?} is not in the universe")]
    NotInUniverse(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BuildError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BuildError + '_ {
    move |e| BuildError::Io { path: path.display().to_string(), source: e }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: u64,
    pub score: f64,
}

/// run tag -> query id -> entries in rank order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunPool(pub BTreeMap<String, BTreeMap<String, Vec<RunEntry>>>);

impl RunPool {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Adds every run of `other`; a tag present in both is an error.
    pub fn merge(&mut self, other: RunPool) -> Result<()> {
        for (tag, run) in other.0 {
            if self.0.contains_key(&tag) {
                return Err(BuildError::DuplicateRun(tag));
            }
            self.0.insert(tag, run);
        }
        Ok(())
    }

    /// One run as ranked lists, in query-id order.
    pub fn ranked_lists(&self, tag: &str) -> Vec<RankedList> {
        self.0
            .get(tag)
            .map(|run| {
                run.iter()
                    .map(|(q, entries)| RankedList {
                        query_id: q.clone(),
                        entries: entries.iter().map(|e| Hit { doc_id: e.doc_id.clone(), score: e.score }).collect(),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Parses TREC run text: `qid Q0 docid rank score tag` per line. Lines of
/// one query are reordered by rank; rank gaps are allowed.
pub fn parse_run_str(text: &str) -> Result<RunPool> {
    let mut pool: BTreeMap<String, BTreeMap<String, Vec<(RunEntry, usize)>>> = BTreeMap::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(BuildError::Fields { line: line_no, found: f.len() });
        }
        let rank: u64 = f[3]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| BuildError::BadField { line: line_no, field: "rank", value: f[3].into() })?;
        let score: f64 = f[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| BuildError::BadField { line: line_no, field: "score", value: f[4].into() })?;
        let (q, doc, tag) = (f[0].to_string(), f[2].to_string(), f[5].to_string());
        if !seen.insert((tag.clone(), q.clone(), doc.clone())) {
            return Err(BuildError::DuplicateDoc { line: line_no, query: q, doc, run: tag });
        }
        pool.entry(tag).or_default().entry(q).or_default().push((RunEntry { doc_id: doc, rank, score }, line_no));
    }
    let mut out = RunPool::default();
    for (tag, run) in pool {
        let mut queries = BTreeMap::new();
        for (q, mut entries) in run {
            entries.sort_by_key(|(e, _)| e.rank);
            if let Some(w) = entries.windows(2).find(|w| w[0].0.rank == w[1].0.rank) {
                return Err(BuildError::DuplicateRank { line: w[1].1, query: q, rank: w[1].0.rank, run: tag });
            }
            queries.insert(q, entries.into_iter().map(|(e, _)| e).collect());
        }
        out.0.insert(tag, queries);
    }
    Ok(out)
}

pub fn parse_run(path: &Path) -> Result<RunPool> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_run_str(&text)
}

/// Parses and merges several run files.
pub fn parse_runs(paths: &[PathBuf]) -> Result<RunPool> {
    let mut pool = RunPool::default();
    for p in paths {
        pool.merge(parse_run(p)?)?;
    }
    Ok(pool)
}

/// Mean NDCG@10 of a run over the judged queries it answers; 0 if none.
pub fn run_effectiveness(pool: &RunPool, tag: &str, qrels: &Qrels) -> f64 {
    let scores: Vec<f64> = pool
        .ranked_lists(tag)
        .iter()
        .filter_map(|l| ndcg_at_k(l, qrels, FILTER_CUTOFF, Gain::Linear).ok())
        .collect();
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Drops the `floor(drop_fraction * runs)` least effective runs. Among runs
/// with equal effectiveness the one with the smaller tag goes first.
pub fn filter_runs(pool: &RunPool, qrels: &Qrels, drop_fraction: f64) -> Result<RunPool> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(BuildError::DropFraction(drop_fraction));
    }
    let n_drop = (drop_fraction * pool.len() as f64).floor() as usize;
    let mut scored: Vec<(f64, &str)> = pool.tags().map(|t| (run_effectiveness(pool, t, qrels), t)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    let dropped: HashSet<&str> = scored.iter().take(n_drop).map(|(_, t)| *t).collect();
    Ok(RunPool(pool.0.iter().filter(|(t, _)| !dropped.contains(t.as_str())).map(|(t, r)| (t.clone(), r.clone())).collect()))
}

pub type FusedLists = BTreeMap<String, Vec<(String, f64)>>;

/// Reciprocal rank fusion: `sum 1 / (k_rrf + rank)` over the runs that
/// retrieved the doc. Sorted by score descending, then doc id.
pub fn rrf_fuse(pool: &RunPool, k_rrf: f64) -> Result<FusedLists> {
    if pool.is_empty() {
        return Err(BuildError::EmptyPool);
    }
    let mut acc: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for run in pool.0.values() {
        for (q, entries) in run {
            let m = acc.entry(q).or_default();
            for e in entries {
                *m.entry(&e.doc_id).or_insert(0.0) += 1.0 / (k_rrf + e.rank as f64);
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(q, m)| {
            let mut v: Vec<(String, f64)> = m.into_iter().map(|(d, s)| (d.to_string(), s)).collect();
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            (q.to_string(), v)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorSet {
    pub n_distractors: usize,
    pub per_query: BTreeMap<String, Vec<String>>,
}

impl DistractorSet {
    pub fn all_docs(&self) -> BTreeSet<&str> {
        self.per_query.values().flatten().map(String::as_str).collect()
    }
}

/// For every judged query, the first `n_distractors` fused docs that are
/// unjudged or graded 0 for that query.
pub fn mine_distractors(fused: &FusedLists, qrels: &Qrels, n_distractors: usize) -> Result<DistractorSet> {
    let mut per_query = BTreeMap::new();
    for q in qrels.queries() {
        let candidates: Vec<String> = fused
            .get(q)
            .into_iter()
            .flatten()
            .filter(|(d, _)| qrels.grade(q, d).unwrap_or(0) == 0)
            .take(n_distractors)
            .map(|(d, _)| d.clone())
            .collect();
        if candidates.len() < n_distractors {
            return Err(BuildError::TooFewCandidates { query: q.into(), found: candidates.len() });
        }
        per_query.insert(q.to_string(), candidates);
    }
    Ok(DistractorSet { n_distractors, per_query })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub n_queries: usize,
    pub n_relevant: usize,
    pub n_distractors: usize,
    pub n_mandatory: usize,
    pub universe_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Each size is a superset of the previous one.
    pub nested: bool,
    pub counts: BTreeMap<usize, usize>,
    pub doc_ids: BTreeMap<usize, Vec<String>>,
    pub stats: SourceStats,
}

impl CorpusManifest {
    pub fn ids(&self, size: usize) -> Option<&[String]> {
        self.doc_ids.get(&size).map(Vec::as_slice)
    }

    pub fn id_set(&self, size: usize) -> Option<HashSet<&str>> {
        self.doc_ids.get(&size).map(|v| v.iter().map(String::as_str).collect())
    }

    /// Writes the manifest JSON and one `<stem>.<size>.ids` file per size
    /// next to it.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(io_err(path))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("manifest");
        let mut written = vec![path.to_path_buf()];
        for (size, ids) in &self.doc_ids {
            let p = path.with_file_name(format!("{stem}.{size}.ids"));
            fs::write(&p, ids.join("\n") + "\n").map_err(io_err(&p))?;
            written.push(p);
        }
        Ok(written)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self = serde_json::from_str(&text)?;
        for s in &m.sizes {
            match m.doc_ids.get(s) {
                Some(ids) if ids.len() == *s => {}
                _ => return Err(BuildError::Manifest(format!("size {s} has no matching id list"))),
            }
        }
        Ok(m)
    }
}

/// Reads a newline-delimited id file, skipping blank lines.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Every size holds all relevant docs and all distractors, then a prefix of
/// one seeded shuffle of the remaining universe, so the sizes nest.
pub fn assemble(
    qrels: &Qrels,
    distractors: &DistractorSet,
    universe: &[String],
    sizes: &[usize],
    seed: u64,
) -> Result<CorpusManifest> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BuildError::Sizes);
    }
    let relevant: BTreeSet<&str> = qrels.queries().flat_map(|q| qrels.relevant(q, 1)).collect();
    let distractor_docs = distractors.all_docs();
    let mandatory: BTreeSet<&str> = relevant.union(&distractor_docs).copied().collect();

    let mut seen = HashSet::new();
    let unique: Vec<&str> = universe.iter().map(String::as_str).filter(|d| seen.insert(*d)).collect();
    if let Some(d) = mandatory.iter().find(|d| !seen.contains(*d)) {
        return Err(BuildError::NotInUniverse(d.to_string()));
    }
    let mut fill: Vec<&str> = unique.iter().copied().filter(|d| !mandatory.contains(d)).collect();

    let smallest = sizes[0];
    if smallest < mandatory.len() {
        return Err(BuildError::SizeBelowMandatory { size: smallest, mandatory: mandatory.len() });
    }
    let largest = *sizes.last().unwrap();
    if largest - mandatory.len() > fill.len() {
        return Err(BuildError::UniverseTooSmall {
            size: largest,
            needed: largest - mandatory.len(),
            available: fill.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill.shuffle(&mut rng);

    let mut doc_ids = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for &size in sizes {
        let mut ids: Vec<String> = mandatory.iter().chain(&fill[..size - mandatory.len()]).map(|s| s.to_string()).collect();
        ids.sort();
        counts.insert(size, ids.len());
        doc_ids.insert(size, ids);
    }
    Ok(CorpusManifest {
        sizes: sizes.to_vec(),
        seed,
        nested: true,
        counts,
        doc_ids,
        stats: SourceStats {
            n_queries: qrels.queries().count(),
            n_relevant: relevant.len(),
            n_distractors: distractor_docs.len(),
            n_mandatory: mandatory.len(),
            universe_size: unique.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_run_line() {
        let p = parse_run_str("1 Q0 docA 1 12.5 sys1\n").unwrap();
        assert_eq!(p.0["sys1"]["1"], vec![RunEntry { doc_id: "docA".into(), rank: 1, score: 12.5 }]);
    }

    #[test]
    fn rank_gaps_and_reordering() {
        let p = parse_run_str("1 Q0 b 3 1.0 s\n1 Q0 a 1 2.0 s\n").unwrap();
        let docs: Vec<&str> = p.0["s"]["1"].iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(docs, vec!["a", "b"]);
    }

    #[test]
    fn malformed_lines() {
        let e = parse_run_str("1 Q0 a 1 2.0 s\n1 Q0 docA 1 12.5\n").unwrap_err();
        assert_eq!(e.to_string(), "line 2: expected 6 fields, found 5");
        assert!(matches!(parse_run_str("1 Q0 a 1 2 s\n1 Q0 a 2 1 s\n"), Err(BuildError::DuplicateDoc { line: 2, .. })));
        assert!(matches!(parse_run_str("1 Q0 a 1 2 s\n1 Q0 b 1 1 s\n"), Err(BuildError::DuplicateRank { .. })));
        assert!(matches!(parse_run_str("1 Q0 a 0 2 s\n"), Err(BuildError::BadField { field: "rank", .. })));
    }

    #[test]
    fn rrf_two_runs() {
        let p = parse_run_str("1 Q0 x 1 9 a\n1 Q0 y 2 8 a\n1 Q0 y 1 9 b\n1 Q0 x 3 7 b\n1 Q0 z 2 8 b\n").unwrap();
        let f = rrf_fuse(&p, 60.0).unwrap();
        let x = f["1"].iter().find(|(d, _)| d == "x").unwrap().1;
        assert!((x - (1.0 / 61.0 + 1.0 / 63.0)).abs() < 1e-12);
        assert!((x - 0.032266).abs() < 1e-6);
        let order: Vec<&str> = f["1"].iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(order, vec!["y", "x", "z"]);
    }

    #[test]
    fn rrf_single_run_preserves_order() {
        let p = parse_run_str("q Q0 c 1 3 a\nq Q0 a 2 2 a\nq Q0 b 3 1 a\n").unwrap();
        let order: Vec<String> = rrf_fuse(&p, 60.0).unwrap()["q"].iter().map(|(d, _)| d.clone()).collect();
        assert_eq!(order, vec!["c", "a", "b"]);
    }

    #[test]
    fn filtering_drops_weak_run() {
        let mut q = Qrels::new();
        q.insert("1", "r", 1);
        let p = parse_run_str("1 Q0 r 1 1 A\n1 Q0 n 2 0 A\n1 Q0 n 1 1 B\n1 Q0 m 2 0 B\n").unwrap();
        let kept = filter_runs(&p, &q, 0.5).unwrap();
        assert_eq!(kept.tags().collect::<Vec<_>>(), vec!["A"]);
        assert_eq!(filter_runs(&p, &q, 0.0).unwrap(), p);
        assert!(filter_runs(&p, &q, 1.0).is_err());
    }

    #[test]
    fn distractors_skip_relevant() {
        let mut q = Qrels::new();
        for d in ["r1", "r2", "r3"] {
            q.insert("1", d, 1);
        }
        q.insert("1", "z", 0);
        let fused: FusedLists = [(
            "1".to_string(),
            ["r1", "r2", "r3", "a", "z", "b"].iter().enumerate().map(|(i, d)| (d.to_string(), 1.0 / (i + 1) as f64)).collect(),
        )]
        .into();
        let ds = mine_distractors(&fused, &q, 3).unwrap();
        assert_eq!(ds.per_query["1"], vec!["a", "z", "b"]);
        let e = mine_distractors(&fused, &q, 4).unwrap_err();
        assert_eq!(e.to_string(), "query 1: only 3 distractor candidates");
    }

    #[test]
    fn assemble_nests_and_is_deterministic() {
        let mut q = Qrels::new();
        q.insert("1", "r", 2);
        let ds = DistractorSet { n_distractors: 1, per_query: [("1".to_string(), vec!["d".to_string()])].into() };
        let universe: Vec<String> = (0..50).map(|i| format!("u{i}")).chain(["r".into(), "d".into()]).collect();
        let m = assemble(&q, &ds, &universe, &[5, 20, 52], 3).unwrap();
        let small = m.id_set(5).unwrap();
        let mid = m.id_set(20).unwrap();
        assert!(small.is_subset(&mid) && small.contains("r") && small.contains("d"));
        assert_eq!(m.counts[&52], 52);
        assert_eq!(assemble(&q, &ds, &universe, &[5, 20, 52], 3).unwrap(), m);
        assert_ne!(assemble(&q, &ds, &universe, &[5, 20], 4).unwrap().doc_ids[&5], m.doc_ids[&5]);
        assert!(matches!(assemble(&q, &ds, &universe, &[5, 53], 3), Err(BuildError::UniverseTooSmall { .. })));
        assert!(matches!(assemble(&q, &ds, &universe, &[1], 3), Err(BuildError::SizeBelowMandatory { .. })));
        assert!(matches!(assemble(&q, &ds, &universe, &[20, 5], 3), Err(BuildError::Sizes)));
    }
}
