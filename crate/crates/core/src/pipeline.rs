//! Experiment orchestration: for every corpus size and codec, fit, encode
//! and decode the corpus batch by batch, retrieve, evaluate and test against
//! the identity baseline. Each cell is written to its own JSON file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codecs::{self, compression_ratio, CodecConfig, CodecError, FitScope, FittedCodec};
use crate::corpus_builder::{BuildError, CorpusManifest};
use crate::embed_store::{self, Matrix, StoreError};
use crate::ir_metrics::{evaluate, Gain, MetricError, MetricOptions, Qrels};
use crate::searcher::{SearchError, Searcher};
use crate::stats::{wilcoxon_one_sided, Alternative, PairedSample, StatsError, TestResult, DEFAULT_ALPHA};

pub const DEFAULT_BATCH_SIZE: usize = 10_000;
pub const DEFAULT_CALIBRATION_ROWS: usize = 100_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("codec {codec}, size {size}: {source}")]
    Cell { codec: String, size: usize, source: Box<PipelineError> },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io { path: path.display().to_string(), source: e }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKeyword {
    #[serde(rename = "builtin_grid")]
    BuiltinGrid,
}

/// Either an explicit list of configurations or `"builtin_grid"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodecList {
    Grid(GridKeyword),
    List(Vec<CodecConfig>),
}

impl Default for CodecList {
    fn default() -> Self {
        CodecList::Grid(GridKeyword::BuiltinGrid)
    }
}

impl CodecList {
    /// Concrete configurations for a model of dimension `dim`. Grid entries
    /// take the experiment seed.
    pub fn resolve(&self, dim: usize, seed: u64) -> Vec<CodecConfig> {
        match self {
            CodecList::Grid(_) => codecs::builtin_grid(dim).into_iter().map(|c| c.with_seed(seed)).collect(),
            CodecList::List(v) => v.clone(),
        }
    }
}

fn default_ks() -> Vec<usize> {
    vec![10, 100]
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_native_bits() -> u32 {
    codecs::grid::DEFAULT_NATIVE_BITS
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_min_grade() -> u32 {
    1
}
fn default_calibration_rows() -> usize {
    DEFAULT_CALIBRATION_ROWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name recorded in results; defaults to the corpus file stem.
    #[serde(default)]
    pub dataset: Option<String>,
    pub corpus_path: PathBuf,
    pub query_path: PathBuf,
    pub qrels_path: PathBuf,
    #[serde(default)]
    pub corpus_manifest: Option<PathBuf>,
    /// Subset of the manifest sizes to evaluate; all when absent.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub codecs: CodecList,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_native_bits")]
    pub native_bits: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub gain: Gain,
    #[serde(default = "default_min_grade")]
    pub min_grade: u32,
    /// Metric the significance test runs on; `recall@<max k>` when absent.
    #[serde(default)]
    pub significance_metric: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Rows of the (size-sliced) corpus used to fit global-scope codecs.
    #[serde(default = "default_calibration_rows")]
    pub calibration_rows: usize,
}

impl ExperimentConfig {
    pub fn minimal(corpus: impl Into<PathBuf>, queries: impl Into<PathBuf>, qrels: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            dataset: None,
            corpus_path: corpus.into(),
            query_path: queries.into(),
            qrels_path: qrels.into(),
            corpus_manifest: None,
            sizes: None,
            codecs: CodecList::default(),
            ks: default_ks(),
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            native_bits: default_native_bits(),
            output_dir: out.into(),
            gain: Gain::Linear,
            min_grade: 1,
            significance_metric: None,
            alpha: DEFAULT_ALPHA,
            calibration_rows: DEFAULT_CALIBRATION_ROWS,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.corpus_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string()
        })
    }

    pub fn max_k(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(0)
    }

    pub fn significance_metric(&self) -> String {
        self.significance_metric.clone().unwrap_or_else(|| format!("recall@{}", self.max_k()))
    }

    /// SHA-256 over the config JSON with the output directory blanked, so
    /// the same experiment hashes equally wherever it writes.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks paths, cutoffs and codecs; returns the resolved codec list.
    pub fn validate(&self, dim: usize) -> Result<Vec<CodecConfig>> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for p in [&self.corpus_path, &self.query_path, &self.qrels_path].into_iter().chain(&self.corpus_manifest) {
            if !p.exists() {
                return bad(format!("path {} does not exist", p.display()));
            }
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be non-empty and positive".into());
        }
        if self.batch_size == 0 || self.calibration_rows == 0 {
            return bad("batch_size and calibration_rows must be positive".into());
        }
        if self.native_bits == 0 {
            return bad("native_bits must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        let codecs = self.codecs.resolve(dim, self.seed);
        let n_identity = codecs.iter().filter(|c| c.is_identity()).count();
        if n_identity != 1 {
            return bad(format!("codec list must contain the identity baseline exactly once, found {n_identity}"));
        }
        let mut labels = HashSet::new();
        for c in &codecs {
            c.validate(dim)?;
            if !labels.insert(c.label()) {
                return bad(format!("duplicate codec {}", c.label()));
            }
        }
        Ok(codecs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    pub config_hash: String,
    pub dataset: String,
    pub codec: CodecConfig,
    pub label: String,
    pub codec_id: String,
    pub compression_ratio: f64,
    pub bits_per_vector: usize,
    pub native_bits: u32,
    /// Target size of the slice (manifest size, or the full corpus count).
    pub corpus_size: usize,
    /// Documents actually scored.
    pub n_docs: usize,
    pub n_queries: usize,
    pub nested: bool,
    pub ks: Vec<usize>,
    pub gain: Gain,
    pub min_grade: u32,
    pub significance_metric: String,
    pub alpha: f64,
    pub zero_method: String,
    pub skipped_queries: Vec<String>,
    pub timestamps: Timestamps,
}

/// One (dataset, size, codec) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metadata: ResultMetadata,
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregate: BTreeMap<String, f64>,
    /// Test against the identity cell of the same size; absent for identity.
    pub significance: Option<TestResult>,
}

impl EvalResult {
    pub fn is_baseline(&self) -> bool {
        self.metadata.codec.is_identity()
    }

    pub fn significant(&self) -> bool {
        self.significance.as_ref().is_some_and(|s| s.significant)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStatus {
    pub size: usize,
    pub label: String,
    pub ok: bool,
    /// Result file, relative to the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub dataset: String,
    pub sizes: Vec<usize>,
    pub cells: Vec<CellStatus>,
    pub failures: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub results: Vec<EvalResult>,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn all_ok(&self) -> bool {
        self.summary.failures == 0
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Writes via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn result_path(output_dir: &Path, size: usize, label: &str) -> PathBuf {
    output_dir.join("results").join(size.to_string()).join(format!("{label}.json"))
}

/// Corpus rows restricted to one size slice, streamed in batches.
struct Slice<'a> {
    path: &'a Path,
    batch_size: usize,
    keep: Option<&'a HashSet<&'a str>>,
}

impl Slice<'_> {
    fn batches(&self) -> Result<impl Iterator<Item = Result<Matrix<f32>>> + '_> {
        let reader = embed_store::read_batches(self.path, self.batch_size)?;
        Ok(reader
            .map(move |b| {
                let b = b?;
                Ok(match self.keep {
                    Some(set) => b.filter_ids(|id| set.contains(id)),
                    None => b,
                })
            })
            .filter(|b| !matches!(b, Ok(m) if m.is_empty())))
    }

    fn count(&self) -> Result<usize> {
        let mut n = 0;
        for b in self.batches()? {
            n += b?.len();
        }
        Ok(n)
    }

    /// The first `rows` rows of the slice.
    fn head(&self, rows: usize, dim: usize) -> Result<Matrix<f32>> {
        let mut out = Matrix::empty(dim);
        for b in self.batches()? {
            let b = b?;
            let take = (rows - out.len()).min(b.len());
            out.append(&b.slice_rows(0, take))?;
            if out.len() == rows {
                break;
            }
        }
        Ok(out)
    }
}

struct CellInput<'a> {
    slice: &'a Slice<'a>,
    queries: &'a Matrix<f32>,
    qrels: &'a Qrels,
    calibration: &'a Matrix<f32>,
    k: usize,
    options: MetricOptions,
    ks: &'a [usize],
}

/// Encodes and decodes every batch, retrieves and evaluates one codec.
fn run_cell(config: &CodecConfig, input: &CellInput) -> Result<(crate::ir_metrics::MetricReport, Option<FittedCodec>)> {
    let mut searcher = Searcher::new(input.queries, input.k)?;
    let mut fitted_global = None;
    match config.fit_scope {
        FitScope::Global => {
            let fitted = codecs::fit(config, input.calibration)?;
            let q = fitted.prepare_queries(input.queries)?;
            for b in input.slice.batches()? {
                let decoded = codecs::reconstruct(&fitted, &b?)?;
                searcher.add_batch_with_queries(&q, &decoded)?;
            }
            fitted_global = Some(fitted);
        }
        FitScope::PerBatch => {
            // Each batch is encoded with its own codec; queries always use
            // the codec of the first batch.
            let mut q = None;
            for b in input.slice.batches()? {
                let b = b?;
                let fitted = codecs::fit(config, &b)?;
                if q.is_none() {
                    q = Some(fitted.prepare_queries(input.queries)?);
                }
                let decoded = codecs::reconstruct(&fitted, &b)?;
                searcher.add_batch_with_queries(q.as_ref().expect("set above"), &decoded)?;
            }
        }
    }
    let lists = searcher.finish();
    let report = evaluate(&lists, input.qrels, input.ks, input.options)?;
    Ok((report, fitted_global))
}

/// Runs the whole grid. Per-cell failures are recorded in the summary and
/// do not stop the run; configuration and input errors do.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let header = embed_store::read_batches(&config.corpus_path, 1)?;
    let dim = header.dim();
    let total = header.total_rows() as usize;
    drop(header);
    let codec_list = config.validate(dim)?;
    let queries = embed_store::read_matrix(&config.query_path)?;
    if queries.dim() != dim {
        return Err(PipelineError::Config(format!("queries have dim {}, corpus has {dim}", queries.dim())));
    }
    let qrels = Qrels::from_path(&config.qrels_path)?;
    let manifest = config.corpus_manifest.as_deref().map(CorpusManifest::read).transpose()?;
    let sizes: Vec<usize> = match (&manifest, &config.sizes) {
        (Some(m), Some(s)) => {
            if let Some(bad) = s.iter().find(|x| !m.sizes.contains(x)) {
                return Err(PipelineError::Config(format!("size {bad} not in manifest {:?}", m.sizes)));
            }
            s.clone()
        }
        (Some(m), None) => m.sizes.clone(),
        (None, _) => vec![total],
    };

    let dataset = config.dataset_name();
    let hash = config.config_hash();
    let metric = config.significance_metric();
    let options = MetricOptions { gain: config.gain, min_grade: config.min_grade };
    let mut results = Vec::new();
    let mut cells = Vec::new();

    for &size in &sizes {
        let id_set: Option<HashSet<&str>> = manifest.as_ref().map(|m| m.id_set(size).expect("size checked"));
        let slice = Slice { path: &config.corpus_path, batch_size: config.batch_size, keep: id_set.as_ref() };
        let prepared = slice.count().and_then(|n| {
            if manifest.is_some() && n != size {
                return Err(PipelineError::Config(format!("manifest size {size}: only {n} of its ids are in the corpus")));
            }
            Ok((n, slice.head(config.calibration_rows.min(n), dim)?))
        });
        let (n_docs, calibration) = match prepared {
            Ok(v) => v,
            Err(e) => {
                for c in &codec_list {
                    cells.push(CellStatus { size, label: c.label(), ok: false, path: None, error: Some(e.to_string()) });
                }
                continue;
            }
        };
        let input = CellInput {
            slice: &slice,
            queries: &queries,
            qrels: &qrels,
            calibration: &calibration,
            k: config.max_k(),
            options,
            ks: &config.ks,
        };
        // Baseline first so every other cell can be tested against it.
        let mut ordered: Vec<&CodecConfig> = codec_list.iter().filter(|c| c.is_identity()).collect();
        ordered.extend(codec_list.iter().filter(|c| !c.is_identity()));
        let mut baseline: Option<BTreeMap<String, f64>> = None;
        for codec in ordered {
            let label = codec.label();
            let started = now_ms();
            let outcome = run_cell(codec, &input).and_then(|(report, fitted)| {
                let significance = if codec.is_identity() {
                    baseline = Some(report.metric_values(&metric).into_iter().map(|(q, v)| (q.to_string(), v)).collect());
                    None
                } else {
                    match &baseline {
                        Some(b) => {
                            let b: BTreeMap<&str, f64> = b.iter().map(|(q, v)| (q.as_str(), *v)).collect();
                            let sample = PairedSample::from_maps(&b, &report.metric_values(&metric))?;
                            Some(wilcoxon_one_sided(&sample, Alternative::VariantLess, config.alpha))
                        }
                        None => None,
                    }
                };
                let codec_id = fitted.map(|f| format!("{:016x}", f.codec_id)).unwrap_or_else(|| "per_batch".into());
                let result = EvalResult {
                    metadata: ResultMetadata {
                        config_hash: hash.clone(),
                        dataset: dataset.clone(),
                        codec: *codec,
                        label: label.clone(),
                        codec_id,
                        compression_ratio: compression_ratio(codec, dim, config.native_bits),
                        bits_per_vector: codec.stored_bits_per_vector(dim),
                        native_bits: config.native_bits,
                        corpus_size: size,
                        n_docs,
                        n_queries: report.per_query.len(),
                        nested: manifest.as_ref().is_some_and(|m| m.nested),
                        ks: config.ks.clone(),
                        gain: config.gain,
                        min_grade: config.min_grade,
                        significance_metric: metric.clone(),
                        alpha: config.alpha,
                        zero_method: "wilcox".into(),
                        skipped_queries: report.skipped_queries.clone(),
                        timestamps: Timestamps { started_unix_ms: started, finished_unix_ms: now_ms() },
                    },
                    per_query: report.per_query,
                    aggregate: report.aggregate,
                    significance,
                };
                let path = result_path(&config.output_dir, size, &label);
                write_atomic(&path, (serde_json::to_string_pretty(&result)? + "\n").as_bytes())?;
                Ok((result, path))
            });
            match outcome {
                Ok((r, path)) => {
                    let rel = path.strip_prefix(&config.output_dir).unwrap_or(&path);
                    cells.push(CellStatus { size, label, ok: true, path: Some(rel.display().to_string()), error: None });
                    results.push(r);
                }
                Err(e) => {
                    let e = PipelineError::Cell { codec: label.clone(), size, source: Box::new(e) };
                    cells.push(CellStatus { size, label, ok: false, path: None, error: Some(e.to_string()) });
                }
            }
        }
    }
    let failures = cells.iter().filter(|c| !c.ok).count();
    let summary = RunSummary { config_hash: hash, dataset, sizes, cells, failures };
    write_atomic(
        &config.output_dir.join("summary.json"),
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    Ok(RunOutcome { results, summary })
}

/// Distinct sizes present in a set of results, ascending.
pub fn sizes_of(results: &[EvalResult]) -> Vec<usize> {
    results.iter().map(|r| r.metadata.corpus_size).collect::<BTreeSet<_>>().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::{Method, Threshold};

    #[test]
    fn codec_list_forms() {
        let g: CodecList = serde_json::from_str("\"builtin_grid\"").unwrap();
        assert_eq!(g, CodecList::Grid(GridKeyword::BuiltinGrid));
        let l: CodecList = serde_json::from_str(r#"[{"method":"identity"},{"method":"binary","params":{"threshold":"zero"}}]"#).unwrap();
        let CodecList::List(v) = &l else { panic!() };
        assert_eq!(v[1].method, Method::Binary { threshold: Threshold::Zero });
        assert!(serde_json::from_str::<CodecList>("\"grid\"").is_err());
    }

    #[test]
    fn config_defaults_and_hash() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"corpus_path":"c.cemb","query_path":"q.cemb","qrels_path":"q.txt","output_dir":"out"}"#,
        )
        .unwrap();
        assert_eq!(c.ks, vec![10, 100]);
        assert_eq!(c.significance_metric(), "recall@100");
        assert_eq!(c.dataset_name(), "c");
        let mut d = c.clone();
        d.output_dir = "elsewhere".into();
        assert_eq!(c.config_hash(), d.config_hash());
        d.seed = 1;
        assert_ne!(c.config_hash(), d.config_hash());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"corpus_path":"c","query_path":"q","qrels_path":"r","output_dir":"o","bogus":1}"#).is_err());
    }
}
