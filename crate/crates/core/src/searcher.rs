//! Exact brute-force top-k retrieval under cosine similarity.
//!
//! Ranking order is total: higher score first, then lexicographically smaller
//! doc id. Because every (query, doc) score is computed independently, the
//! result does not depend on how the corpus is split into batches or shards,
//! nor on thread scheduling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed_store::{Matrix, StoreError};
use crate::scalar::{dot, norm_sq, Scalar};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("dimension mismatch: queries have {queries}, corpus has {corpus}")]
    DimMismatch { queries: usize, corpus: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("doc {doc:?} appears in more than one shard")]
    DuplicateDoc { doc: String },
    #[error("shard for query {got:?} mixed into merge of {expected:?}")]
    QueryMismatch { expected: String, got: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Cosine similarity with `f64` accumulation. A zero vector scores 0
/// against everything.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<f64, SearchError> {
    if u.len() != v.len() {
        return Err(SearchError::DimMismatch { queries: u.len(), corpus: v.len() });
    }
    Ok(cosine_with_norms(u, v, norm_sq(u).sqrt(), norm_sq(v).sqrt()))
}

#[inline]
fn cosine_with_norms<T: Scalar>(u: &[T], v: &[T], nu: f64, nv: f64) -> f64 {
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot(u, v) / (nu * nv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// `a` ranks before `b`.
fn rank_cmp(a_score: f64, a_doc: &str, b_score: f64, b_doc: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_doc.cmp(b_doc))
}

impl Hit {
    fn rank_cmp(&self, other: &Self) -> Ordering {
        rank_cmp(self.score, &self.doc_id, other.score, &other.doc_id)
    }
}

/// Ranked results for one query, best first, at most k entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<Hit>,
}

impl RankedList {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|h| h.doc_id.as_str())
    }

    /// Checks the list invariants: sorted by the ranking order, unique docs.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = HashSet::new();
        self.entries.iter().all(|h| seen.insert(h.doc_id.as_str()))
            && self.entries.windows(2).all(|w| w[0].rank_cmp(&w[1]) != Ordering::Greater)
    }
}

/// Part of a ranked list computed over one shard of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardResult {
    pub query_id: String,
    pub shard: String,
    pub entries: Vec<Hit>,
}

/// Heap entry ordered so the worst retained hit sits on top.
#[derive(Debug)]
struct Worst(Hit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Bounded accumulator of the best k hits.
#[derive(Debug)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    fn admits(&self, score: f64, doc: &str) -> bool {
        if self.heap.len() < self.k {
            return true;
        }
        let worst = &self.heap.peek().expect("k >= 1").0;
        rank_cmp(score, doc, worst.score, &worst.doc_id) == Ordering::Less
    }

    pub fn push(&mut self, score: f64, doc: &str) {
        if self.admits(score, doc) {
            self.heap.push(Worst(Hit { doc_id: doc.to_string(), score }));
            if self.heap.len() > self.k {
                self.heap.pop();
            }
        }
    }

    pub fn into_sorted(self) -> Vec<Hit> {
        let mut v: Vec<Hit> = self.heap.into_iter().map(|w| w.0).collect();
        v.sort_by(Hit::rank_cmp);
        v
    }
}

/// Incremental top-k search: feed corpus batches, then finish.
pub struct Searcher<'q, T> {
    queries: &'q Matrix<T>,
    query_norms: Vec<f64>,
    heaps: Vec<TopK>,
}

impl<'q, T: Scalar> Searcher<'q, T> {
    pub fn new(queries: &'q Matrix<T>, k: usize) -> Result<Self, SearchError> {
        if k == 0 {
            return Err(SearchError::ZeroK);
        }
        Ok(Self {
            queries,
            query_norms: queries.rows().map(|r| norm_sq(r).sqrt()).collect(),
            heaps: (0..queries.len()).map(|_| TopK::new(k)).collect(),
        })
    }

    /// Scores every query against one batch of documents.
    pub fn add_batch(&mut self, batch: &Matrix<T>) -> Result<(), SearchError> {
        let queries = self.queries;
        let norms = std::mem::take(&mut self.query_norms);
        let r = self.score_batch(queries, &norms, batch);
        self.query_norms = norms;
        r
    }

    /// Scores a batch with substitute query vectors (same query ids, in the
    /// same order), e.g. queries encoded by a codec fitted on this batch.
    pub fn add_batch_with_queries(&mut self, queries: &Matrix<T>, batch: &Matrix<T>) -> Result<(), SearchError> {
        if queries.ids() != self.queries.ids() {
            let got = queries.ids().first().cloned().unwrap_or_default();
            let expected = self.queries.ids().first().cloned().unwrap_or_default();
            return Err(SearchError::QueryMismatch { expected, got });
        }
        let norms: Vec<f64> = queries.rows().map(|r| norm_sq(r).sqrt()).collect();
        self.score_batch(queries, &norms, batch)
    }

    fn score_batch(&mut self, queries: &Matrix<T>, query_norms: &[f64], batch: &Matrix<T>) -> Result<(), SearchError> {
        if batch.dim() != queries.dim() {
            return Err(SearchError::DimMismatch { queries: queries.dim(), corpus: batch.dim() });
        }
        if batch.is_empty() || queries.is_empty() {
            return Ok(());
        }
        let doc_norms: Vec<f64> = batch.rows().map(|r| norm_sq(r).sqrt()).collect();
        self.heaps
            .par_iter_mut()
            .zip(queries.values().par_chunks_exact(queries.dim()))
            .zip(query_norms.par_iter())
            .for_each(|((heap, q), &qn)| {
                for ((row, id), &dn) in batch.rows().zip(batch.ids()).zip(&doc_norms) {
                    heap.push(cosine_with_norms(q, row, qn, dn), id);
                }
            });
        Ok(())
    }

    pub fn finish(self) -> Vec<RankedList> {
        self.queries
            .ids()
            .iter()
            .zip(self.heaps)
            .map(|(qid, h)| RankedList { query_id: qid.clone(), entries: h.into_sorted() })
            .collect()
    }
}

/// Top-`k` documents per query over a stream of corpus batches.
pub fn top_k<T, I, E>(queries: &Matrix<T>, corpus_batches: I, k: usize) -> Result<Vec<RankedList>, SearchError>
where
    T: Scalar,
    I: IntoIterator<Item = Result<Matrix<T>, E>>,
    SearchError: From<E>,
{
    let mut s = Searcher::new(queries, k)?;
    for b in corpus_batches {
        s.add_batch(&b?)?;
    }
    Ok(s.finish())
}

/// Convenience form of [`top_k`] over an in-memory corpus.
pub fn top_k_matrix<T: Scalar>(queries: &Matrix<T>, corpus: &Matrix<T>, k: usize) -> Result<Vec<RankedList>, SearchError> {
    let mut s = Searcher::new(queries, k)?;
    s.add_batch(corpus)?;
    Ok(s.finish())
}

/// Merges per-shard partial lists of one query into its global top-k.
pub fn merge_shards(parts: &[ShardResult], k: usize) -> Result<RankedList, SearchError> {
    if k == 0 {
        return Err(SearchError::ZeroK);
    }
    let query_id = parts.first().map(|p| p.query_id.clone()).unwrap_or_default();
    let mut seen = HashSet::new();
    let mut heap = TopK::new(k);
    for p in parts {
        if p.query_id != query_id {
            return Err(SearchError::QueryMismatch { expected: query_id, got: p.query_id.clone() });
        }
        for h in &p.entries {
            if !seen.insert(h.doc_id.as_str()) {
                return Err(SearchError::DuplicateDoc { doc: h.doc_id.clone() });
            }
            heap.push(h.score, &h.doc_id);
        }
    }
    Ok(RankedList { query_id, entries: heap.into_sorted() })
}

/// Writes lists in TREC run format: `qid Q0 docid rank score tag`.
pub fn write_trec_run(w: &mut impl Write, lists: &[RankedList], tag: &str) -> io::Result<()> {
    for l in lists {
        for (i, h) in l.entries.iter().enumerate() {
            writeln!(w, "{} Q0 {} {} {} {}", l.query_id, h.doc_id, i + 1, h.score, tag)?;
        }
    }
    Ok(())
}
