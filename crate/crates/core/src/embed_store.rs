//! Embedding matrices and their on-disk format.
//!
//! A stored matrix is two files. The payload file starts with a 24-byte
//! little-endian header
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CEMB"
//!      4     4  version (u32, = 1)
//!      8     4  dtype_code (u32, 0 = float32, 1 = packed codes)
//!     12     4  dim (u32)
//!     16     8  count (u64)
//! ```
//!
//! followed by `count * dim` little-endian `f32` values, row-major. The ids
//! live in the sidecar `<path>.ids`, one UTF-8 id per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"CEMB";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
pub const DTYPE_PACKED: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("bad magic: expected \"CEMB\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("unsupported dtype code {0}")]
    BadDtype(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes after payload: expected {expected} bytes, found {found}")]
    Trailing { expected: u64, found: u64 },
    #[error("id count mismatch: header says {expected}, sidecar has {found}")]
    IdCount { expected: u64, found: u64 },
    #[error("invalid id at line {line}: {reason}")]
    BadId { line: usize, reason: &'static str },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(&'static str),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Dense row-major matrix with one external id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    ids: Vec<String>,
    dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix, checking shape, id uniqueness and finiteness.
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<T>) -> Result<Self> {
        let m = Self::new_unchecked_values(ids, dim, values)?;
        m.check_finite()?;
        Ok(m)
    }

    /// Like [`Matrix::new`] but skips the finiteness scan.
    pub(crate) fn new_unchecked_values(ids: Vec<String>, dim: usize, values: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(StoreError::Shape("dim must be positive".into()));
        }
        if values.len() != ids.len() * dim {
            return Err(StoreError::Shape(format!(
                "{} values for {} ids of dim {dim}",
                values.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, dim, values })
    }

    /// Zero-row matrix of the given width.
    pub fn empty(dim: usize) -> Self {
        Self { ids: Vec::new(), dim, values: Vec::new() }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(StoreError::NonFinite { row: i / self.dim, col: i % self.dim }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn into_parts(self) -> (Vec<String>, usize, Vec<T>) {
        (self.ids, self.dim, self.values)
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            ids: self.ids[start..end].to_vec(),
            dim: self.dim,
            values: self.values[start * self.dim..end * self.dim].to_vec(),
        }
    }

    /// Rows selected by a predicate on the id, order preserved.
    pub fn filter_ids(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (id, row) in self.ids.iter().zip(self.rows()) {
            if keep(id) {
                ids.push(id.clone());
                values.extend_from_slice(row);
            }
        }
        Self { ids, dim: self.dim, values }
    }

    /// First `keep` coordinates of every row.
    pub fn truncate_dims(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.dim {
            return Err(StoreError::Shape(format!("cannot keep {keep} of {} dims", self.dim)));
        }
        let mut values = Vec::with_capacity(self.len() * keep);
        for row in self.rows() {
            values.extend_from_slice(&row[..keep]);
        }
        Ok(Self { ids: self.ids.clone(), dim: keep, values })
    }

    /// Appends the rows of `other`. Ids must stay unique.
    pub fn append(&mut self, other: &Self) -> Result<()> {
        if other.dim != self.dim {
            return Err(StoreError::Shape(format!("dim {} vs {}", self.dim, other.dim)));
        }
        let seen: HashSet<&str> = self.ids.iter().map(String::as_str).collect();
        if let Some(dup) = other.ids.iter().find(|id| seen.contains(id.as_str())) {
            return Err(StoreError::DuplicateId(dup.clone()));
        }
        self.ids.extend(other.ids.iter().cloned());
        self.values.extend_from_slice(&other.values);
        Ok(())
    }

    /// Concatenates batches in order.
    pub fn concat<I: IntoIterator<Item = Self>>(dim: usize, parts: I) -> Result<Self> {
        let mut out = Self::empty(dim);
        for p in parts {
            out.append(&p)?;
        }
        Ok(out)
    }

    /// Element-wise precision change.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            ids: self.ids.clone(),
            dim: self.dim,
            values: self.values.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

/// Sidecar path holding the ids of `path`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn write_header(w: &mut impl Write, dtype: u32, dim: u32, count: u64) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dtype.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())
}

/// Parsed fixed header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub dtype_code: u32,
    pub dim: u32,
    pub count: u64,
}

pub(crate) fn read_header(r: &mut impl Read, path: &Path) -> Result<Header> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            StoreError::Truncated { expected: HEADER_LEN as u64, found: 0 }
        } else {
            StoreError::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    if &buf[0..4] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(StoreError::BadVersion(version));
    }
    Ok(Header {
        dtype_code: u32_at(8),
        dim: u32_at(12),
        count: u64::from_le_bytes(buf[16..24].try_into().unwrap()),
    })
}

pub(crate) fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    for (i, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Err(StoreError::BadId { line: i + 1, reason: "empty id" });
        }
        if id.contains(['\n', '\r']) {
            return Err(StoreError::BadId { line: i + 1, reason: "id contains a line break" });
        }
    }
    let ip = ids_path(path);
    let f = File::create(&ip).map_err(io_err(&ip))?;
    let mut w = BufWriter::new(f);
    for id in ids {
        w.write_all(id.as_bytes()).map_err(io_err(&ip))?;
        w.write_all(b"\n").map_err(io_err(&ip))?;
    }
    w.flush().map_err(io_err(&ip))
}

pub(crate) fn read_ids(path: &Path, expected: u64) -> Result<Vec<String>> {
    let ip = ids_path(path);
    let f = File::open(&ip).map_err(io_err(&ip))?;
    let mut ids = Vec::with_capacity(expected.min(1 << 24) as usize);
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(&ip))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            return Err(StoreError::BadId { line: i + 1, reason: "blank line" });
        }
        ids.push(line.to_string());
    }
    if ids.len() as u64 != expected {
        return Err(StoreError::IdCount { expected, found: ids.len() as u64 });
    }
    Ok(ids)
}

/// Writes `matrix` to `path` plus its `.ids` sidecar.
pub fn write_matrix(matrix: &Matrix<f32>, path: &Path) -> Result<()> {
    matrix.check_finite()?;
    let dim = u32::try_from(matrix.dim()).map_err(|_| StoreError::Shape("dim exceeds u32".into()))?;
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    write_header(&mut w, DTYPE_F32, dim, matrix.len() as u64).map_err(io_err(path))?;
    for v in matrix.values() {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    write_ids(path, matrix.ids())
}

/// Streaming reader over a stored matrix.
pub struct BatchReader {
    path: PathBuf,
    reader: BufReader<File>,
    ids: std::vec::IntoIter<String>,
    dim: usize,
    count: u64,
    remaining: u64,
    batch_size: usize,
}

impl BatchReader {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_rows(&self) -> u64 {
        self.count
    }

    fn next_batch(&mut self) -> Result<Matrix<f32>> {
        let n = (self.batch_size as u64).min(self.remaining) as usize;
        let mut bytes = vec![0u8; n * self.dim * 4];
        self.reader.read_exact(&mut bytes).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                StoreError::Truncated { expected: 0, found: 0 }
            } else {
                StoreError::Io { path: self.path.clone(), source: e }
            }
        })?;
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let ids: Vec<String> = self.ids.by_ref().take(n).collect();
        let row0 = (self.count - self.remaining) as usize;
        self.remaining -= n as u64;
        let m = Matrix::new_unchecked_values(ids, self.dim, values)?;
        m.check_finite().map_err(|e| match e {
            StoreError::NonFinite { row, col } => StoreError::NonFinite { row: row + row0, col },
            other => other,
        })?;
        Ok(m)
    }
}

impl Iterator for BatchReader {
    type Item = Result<Matrix<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let r = self.next_batch();
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }
}

/// Opens `path` for streaming in batches of `batch_size` rows.
///
/// The header, payload length and sidecar id count are validated up front,
/// so a truncated file fails before the first batch is produced.
pub fn read_batches(path: &Path, batch_size: usize) -> Result<BatchReader> {
    if batch_size == 0 {
        return Err(StoreError::Shape("batch_size must be at least 1".into()));
    }
    let f = File::open(path).map_err(io_err(path))?;
    let file_len = f.metadata().map_err(io_err(path))?.len();
    let mut reader = BufReader::with_capacity(1 << 20, f);
    let header = read_header(&mut reader, path)?;
    if header.dtype_code != DTYPE_F32 {
        return Err(StoreError::BadDtype(header.dtype_code));
    }
    if header.dim == 0 {
        return Err(StoreError::Shape("dim must be positive".into()));
    }
    let expected = HEADER_LEN as u64 + header.count * header.dim as u64 * 4;
    if file_len < expected {
        return Err(StoreError::Truncated { expected, found: file_len });
    }
    if file_len > expected {
        return Err(StoreError::Trailing { expected, found: file_len });
    }
    let ids = read_ids(path, header.count)?;
    let mut seen = HashSet::with_capacity(ids.len());
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(StoreError::DuplicateId(id.clone()));
        }
    }
    Ok(BatchReader {
        path: path.to_path_buf(),
        reader,
        ids: ids.into_iter(),
        dim: header.dim as usize,
        count: header.count,
        remaining: header.count,
        batch_size,
    })
}

/// Reads a whole stored matrix.
pub fn read_matrix(path: &Path) -> Result<Matrix<f32>> {
    let reader = read_batches(path, usize::MAX)?;
    let dim = reader.dim();
    let mut out = Matrix::empty(dim);
    for b in reader {
        let b = b?;
        if out.is_empty() {
            out = b;
        } else {
            out.append(&b)?;
        }
    }
    Ok(out)
}

/// Parameters of the clustered Gaussian generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub dim: usize,
    pub n_clusters: usize,
    /// Per-coordinate noise standard deviation.
    pub cluster_spread: f64,
    pub count: usize,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(StoreError::BadSpec("dim must be positive"));
        }
        if self.n_clusters == 0 {
            return Err(StoreError::BadSpec("n_clusters must be positive"));
        }
        if self.count == 0 {
            return Err(StoreError::BadSpec("count must be positive"));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread >= 0.0) {
            return Err(StoreError::BadSpec("cluster_spread must be finite and non-negative"));
        }
        Ok(())
    }
}

pub(crate) fn unit_gaussian_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Cluster centers and generated rows. Row `i` belongs to cluster
/// `i % n_clusters`.
pub fn generate_synthetic_with_centers(spec: &SyntheticSpec) -> Result<(Matrix<f32>, Vec<Vec<f64>>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.n_clusters)
        .map(|_| unit_gaussian_vector(&mut rng, spec.dim))
        .collect();
    let mut values = Vec::with_capacity(spec.count * spec.dim);
    for i in 0..spec.count {
        let c = &centers[i % spec.n_clusters];
        for &x in c {
            let noise: f64 = rng.sample(StandardNormal);
            values.push((x + spec.cluster_spread * noise) as f32);
        }
    }
    let ids = (0..spec.count).map(|i| format!("doc{i}")).collect();
    Ok((Matrix::new(ids, spec.dim, values)?, centers))
}

/// Clustered Gaussian embeddings: centers uniform on the unit sphere, rows
/// are center plus isotropic noise. Deterministic in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Matrix<f32>> {
    generate_synthetic_with_centers(spec).map(|(m, _)| m)
}

/// A synthetic retrieval task: a clustered background corpus plus queries,
/// each with a fixed number of planted relevant documents near it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub background: SyntheticSpec,
    pub n_queries: usize,
    pub relevant_per_query: usize,
    /// Noise std-dev (per coordinate) of a query around its cluster center.
    pub query_spread: f64,
    /// Noise std-dev (per coordinate) of a relevant doc around its query.
    pub relevant_spread: f64,
}

/// Output of [`generate_planted`].
#[derive(Debug, Clone)]
pub struct PlantedTask {
    /// Relevant docs first (`rel{q}_{j}`), then background (`doc{i}`).
    pub corpus: Matrix<f32>,
    pub queries: Matrix<f32>,
    /// `(query_id, doc_id)` pairs, each with grade 1.
    pub judgments: Vec<(String, String)>,
}

pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedTask> {
    spec.background.validate()?;
    if spec.n_queries == 0 {
        return Err(StoreError::BadSpec("n_queries must be positive"));
    }
    if !(spec.query_spread >= 0.0 && spec.relevant_spread >= 0.0) {
        return Err(StoreError::BadSpec("spreads must be non-negative"));
    }
    let dim = spec.background.dim;
    let (background, centers) = generate_synthetic_with_centers(&spec.background)?;
    // Independent stream so the background does not depend on the query count.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.background.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut q_ids = Vec::with_capacity(spec.n_queries);
    let mut q_vals = Vec::with_capacity(spec.n_queries * dim);
    let mut rel_ids = Vec::new();
    let mut rel_vals = Vec::new();
    let mut judgments = Vec::new();
    for q in 0..spec.n_queries {
        let c = &centers[rng.random_range(0..centers.len())];
        let qv: Vec<f64> = c
            .iter()
            .map(|&x| x + spec.query_spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let qid = format!("q{q}");
        for j in 0..spec.relevant_per_query {
            let did = format!("rel{q}_{j}");
            for &x in &qv {
                let noise: f64 = rng.sample(StandardNormal);
                rel_vals.push((x + spec.relevant_spread * noise) as f32);
            }
            judgments.push((qid.clone(), did.clone()));
            rel_ids.push(did);
        }
        q_vals.extend(qv.iter().map(|&x| x as f32));
        q_ids.push(qid);
    }
    let mut corpus = Matrix::new(rel_ids, dim, rel_vals)?;
    corpus.append(&background)?;
    Ok(PlantedTask { corpus, queries: Matrix::new(q_ids, dim, q_vals)?, judgments })
}
