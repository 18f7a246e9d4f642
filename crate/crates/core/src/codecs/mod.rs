//! Compression codecs behind a uniform fit / encode / decode interface.
//!
//! A [`CodecConfig`] names one method plus an optional leading truncation.
//! [`fit`] learns the method's parameters from a calibration matrix,
//! [`encode`] packs rows into a byte code, and [`decode`] reconstructs the
//! float vectors that retrieval scores against.
//!
//! | method         | stored bits per vector | decoded dim  |
//! |----------------|------------------------|--------------|
//! | identity       | 32 d                   | d            |
//! | float_cast     | 16 d or 8 d            | d            |
//! | scalar_quant   | bits * d               | d            |
//! | binary         | d                      | d (+1 / -1)  |
//! | truncate       | 32 keep                | keep         |
//! | pca            | 32 out                 | out          |
//! | lsh            | n_bits                 | n_bits (+-1) |
//! | pq             | m * code_bits          | d            |
//!
//! where `d` is the input dimension after the optional `pre_truncate`.

pub mod bits;
pub mod float_cast;
pub mod grid;
pub mod kmeans;
pub mod pca;
pub mod scalar_quant;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed_store::{self, Matrix, StoreError};
use crate::scalar::dot;

pub use float_cast::FloatFormat;
pub use grid::{builtin_grid, compression_ratio, nominal_bits_per_vector};
pub use pca::PcaModel;
pub use scalar_quant::Binning;

use kmeans::{kmeans, nearest, KMeansError};
use pca::{pca_fit, PcaError};
use scalar_quant::{sorted_columns, EqualDistance, PercentileBins};

/// PQ training uses at most this many calibration points per centroid.
pub const MAX_POINTS_PER_CENTROID: usize = 256;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid codec config: {0}")]
    Config(String),
    #[error("dimension mismatch: codec expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("calibration matrix is empty")]
    EmptyCalibration,
    #[error("pq needs at least {needed} calibration points per subspace, got {got}")]
    PqCalibration { needed: usize, got: usize },
    #[error("codec id mismatch: encoded with {encoded:016x}, decoding with {codec:016x}")]
    CodecMismatch { encoded: u64, codec: u64 },
    #[error("corrupt code length: expected {expected} bytes, found {found}")]
    CorruptCodes { expected: usize, found: usize },
    #[error("asymmetric queries are not supported for {0}: its reconstruction lives in another space")]
    AsymmetricUnsupported(String),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Zero,
    Median,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// Fit once on a calibration sample, apply everywhere.
    #[default]
    Global,
    /// Refit on every document batch.
    PerBatch,
}

/// How query vectors are prepared for scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Queries go through the same encode/decode as documents.
    #[default]
    Symmetric,
    /// Queries keep full precision (after `pre_truncate`); only documents
    /// are reconstructed.
    Asymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum Method {
    Identity,
    FloatCast { format: FloatFormat },
    ScalarQuant { bits: u32, binning: Binning },
    Binary { threshold: Threshold },
    Truncate { keep_dims: usize },
    Pca { out_dims: usize },
    Lsh { n_bits: usize },
    Pq { n_subvectors: usize, code_bits: u32 },
}

/// One compression configuration, serialized as
/// `{"method": .., "params": {..}, "pre_truncate": .., "fit_scope": .., "seed": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecConfig {
    #[serde(flatten)]
    pub method: Method,
    #[serde(default)]
    pub pre_truncate: Option<usize>,
    #[serde(default)]
    pub fit_scope: FitScope,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_symmetric")]
    pub query_mode: QueryMode,
}

fn is_symmetric(m: &QueryMode) -> bool {
    *m == QueryMode::Symmetric
}

impl From<Method> for CodecConfig {
    fn from(method: Method) -> Self {
        Self { method, pre_truncate: None, fit_scope: FitScope::Global, seed: 0, query_mode: QueryMode::Symmetric }
    }
}

impl CodecConfig {
    pub fn identity() -> Self {
        Method::Identity.into()
    }

    pub fn with_pre_truncate(mut self, keep: usize) -> Self {
        self.pre_truncate = Some(keep);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scope(mut self, scope: FitScope) -> Self {
        self.fit_scope = scope;
        self
    }

    pub fn with_query_mode(mut self, mode: QueryMode) -> Self {
        self.query_mode = mode;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.method == Method::Identity && self.pre_truncate.is_none()
    }

    /// Dimension the method sees once `pre_truncate` is applied.
    pub fn method_input_dim(&self, dim: usize) -> usize {
        self.pre_truncate.unwrap_or(dim)
    }

    /// Dimension of decoded vectors.
    pub fn output_dim(&self, dim: usize) -> usize {
        let d = self.method_input_dim(dim);
        match self.method {
            Method::Truncate { keep_dims } => keep_dims,
            Method::Pca { out_dims } => out_dims,
            Method::Lsh { n_bits } => n_bits,
            _ => d,
        }
    }

    /// Width of one packed code element and the number of elements per row.
    fn code_layout(&self, dim: usize) -> (u32, usize) {
        let d = self.method_input_dim(dim);
        match self.method {
            Method::Identity => (32, d),
            Method::FloatCast { format } => (format.bits(), d),
            Method::ScalarQuant { bits, .. } => (bits, d),
            Method::Binary { .. } => (1, d),
            Method::Truncate { keep_dims } => (32, keep_dims),
            Method::Pca { out_dims } => (32, out_dims),
            Method::Lsh { n_bits } => (1, n_bits),
            Method::Pq { n_subvectors, code_bits } => (code_bits, n_subvectors),
        }
    }

    /// Stored bits per encoded row.
    pub fn stored_bits_per_vector(&self, dim: usize) -> usize {
        let (w, n) = self.code_layout(dim);
        w as usize * n
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(CodecError::Config(msg));
        if dim == 0 {
            return bad("input dim must be positive".into());
        }
        if let Some(k) = self.pre_truncate {
            if k == 0 || k > dim {
                return bad(format!("pre_truncate {k} outside [1, {dim}]"));
            }
        }
        let d = self.method_input_dim(dim);
        match self.method {
            Method::ScalarQuant { bits, .. } if ![8, 4, 2].contains(&bits) => {
                bad(format!("scalar_quant bits must be 8, 4 or 2, got {bits}"))
            }
            Method::Truncate { keep_dims } if keep_dims == 0 || keep_dims > d => {
                bad(format!("keep_dims {keep_dims} outside [1, {d}]"))
            }
            Method::Pca { out_dims } if out_dims == 0 || out_dims > d => {
                bad(format!("out_dims {out_dims} outside [1, {d}]"))
            }
            Method::Lsh { n_bits: 0 } => bad("lsh n_bits must be at least 1".into()),
            Method::Pq { n_subvectors, code_bits } => {
                if n_subvectors == 0 || !d.is_multiple_of(n_subvectors) {
                    bad(format!("pq n_subvectors {n_subvectors} must divide dim {d}"))
                } else if !(1..=16).contains(&code_bits) {
                    bad(format!("pq code_bits {code_bits} outside [1, 16]"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }?;
        if self.query_mode == QueryMode::Asymmetric
            && matches!(self.method, Method::Truncate { .. } | Method::Pca { .. } | Method::Lsh { .. })
        {
            return Err(CodecError::AsymmetricUnsupported(self.label()));
        }
        Ok(())
    }

    /// Short unique name, used for file names and table rows.
    pub fn label(&self) -> String {
        let base = match self.method {
            Method::Identity => "identity".to_string(),
            Method::FloatCast { format } => format.name().to_string(),
            Method::ScalarQuant { bits, binning } => format!(
                "sq{bits}-{}",
                match binning {
                    Binning::EqualDistance => "equal_distance",
                    Binning::Percentile => "percentile",
                }
            ),
            Method::Binary { threshold: Threshold::Zero } => "binary-zero".into(),
            Method::Binary { threshold: Threshold::Median } => "binary-median".into(),
            Method::Truncate { keep_dims } => format!("truncate{keep_dims}"),
            Method::Pca { out_dims } => format!("pca{out_dims}"),
            Method::Lsh { n_bits } => format!("lsh{n_bits}"),
            Method::Pq { n_subvectors, code_bits } => format!("pq{n_subvectors}x{code_bits}"),
        };
        let mut s = match self.pre_truncate {
            Some(k) => format!("truncate{k}+{base}"),
            None => base,
        };
        if self.fit_scope == FitScope::PerBatch {
            s.push_str("@per_batch");
        }
        if self.query_mode == QueryMode::Asymmetric {
            s.push_str("@asym");
        }
        if self.seed != 0 {
            s.push_str(&format!("@seed{}", self.seed));
        }
        s
    }
}

/// Learned parameters; only the variant for the configured method exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodecParams {
    Stateless,
    EqualDistance(EqualDistance),
    Percentile(PercentileBins),
    Median { thresholds: Vec<f32> },
    Pca(PcaModel),
    Lsh { planes: Vec<f32> },
    /// One `2^code_bits x subdim` row-major codebook per subspace.
    Pq { subdim: usize, codebooks: Vec<Vec<f32>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCodec {
    pub config: CodecConfig,
    pub input_dim: usize,
    pub params: CodecParams,
    pub codec_id: u64,
}

fn hash_codec(config: &CodecConfig, input_dim: usize, params: &CodecParams) -> u64 {
    let bytes = serde_json::to_vec(&(config, input_dim, params)).expect("codec serializes");
    let digest = Sha256::digest(&bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Learns the parameters of `config` from `calibration`.
pub fn fit(config: &CodecConfig, calibration: &Matrix<f32>) -> Result<FittedCodec> {
    config.validate(calibration.dim())?;
    if calibration.is_empty() {
        return Err(CodecError::EmptyCalibration);
    }
    let input_dim = calibration.dim();
    let cal = match config.pre_truncate {
        Some(k) => calibration.truncate_dims(k)?,
        None => calibration.clone(),
    };
    let d = cal.dim();
    let params = match config.method {
        Method::Identity | Method::FloatCast { .. } | Method::Truncate { .. } => CodecParams::Stateless,
        Method::Binary { threshold: Threshold::Zero } => CodecParams::Stateless,
        Method::Binary { threshold: Threshold::Median } => {
            let cols = sorted_columns(cal.values(), d);
            CodecParams::Median {
                thresholds: cols.iter().map(|c| crate::scalar::percentile_sorted(c, 0.5) as f32).collect(),
            }
        }
        Method::ScalarQuant { bits, binning } => {
            let cols = sorted_columns(cal.values(), d);
            match binning {
                Binning::EqualDistance => CodecParams::EqualDistance(EqualDistance::fit(&cols, bits)),
                Binning::Percentile => CodecParams::Percentile(PercentileBins::fit(&cols, bits)),
            }
        }
        Method::Pca { out_dims } => CodecParams::Pca(pca_fit(&cal, out_dims)?),
        Method::Lsh { n_bits } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let planes = (0..n_bits * d).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
            CodecParams::Lsh { planes }
        }
        Method::Pq { n_subvectors, code_bits } => fit_pq(&cal, n_subvectors, code_bits, config.seed)?,
    };
    let codec_id = hash_codec(config, input_dim, &params);
    Ok(FittedCodec { config: *config, input_dim, params, codec_id })
}

fn fit_pq(cal: &Matrix<f32>, m: usize, code_bits: u32, seed: u64) -> Result<CodecParams> {
    let k = 1usize << code_bits;
    let n = cal.len();
    if n < k {
        return Err(CodecError::PqCalibration { needed: k, got: n });
    }
    let subdim = cal.dim() / m;
    let cap = MAX_POINTS_PER_CENTROID.saturating_mul(k);
    let rows: Vec<usize> = if n > cap {
        let mut idx: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(cap);
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let codebooks = (0..m)
        .into_par_iter()
        .map(|s| {
            let pts: Vec<f32> = rows
                .iter()
                .flat_map(|&i| cal.row(i)[s * subdim..(s + 1) * subdim].iter().copied())
                .collect();
            kmeans(&pts, subdim, k, kmeans::DEFAULT_ITERS, seed.wrapping_add(s as u64))
                .map(|r| r.centroids)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(CodecParams::Pq { subdim, codebooks })
}

/// Packed codes for a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub codec_id: u64,
    pub ids: Vec<String>,
    pub count: usize,
    /// Dimension of the decoded vectors.
    pub dim_effective: usize,
    pub bits_per_vector: usize,
    /// `count` rows of `ceil(bits_per_vector / 8)` bytes.
    pub codes: Vec<u8>,
}

impl EncodedMatrix {
    pub fn row_bytes(&self) -> usize {
        self.bits_per_vector.div_ceil(8)
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.codes[i * rb..(i + 1) * rb]
    }
}

fn write_f32s(vals: impl IntoIterator<Item = f32>, out: &mut [u8]) {
    for (chunk, v) in out.chunks_exact_mut(4).zip(vals) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
}

fn read_f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()))
}

impl FittedCodec {
    /// Decoded dimension.
    pub fn output_dim(&self) -> usize {
        self.config.output_dim(self.input_dim)
    }

    pub fn bits_per_vector(&self) -> usize {
        self.config.stored_bits_per_vector(self.input_dim)
    }

    fn method_dim(&self) -> usize {
        self.config.method_input_dim(self.input_dim)
    }

    /// Encodes one (already pre-truncated) row into `out`, which is zeroed.
    fn encode_row(&self, row: &[f32], out: &mut [u8]) {
        match (&self.config.method, &self.params) {
            (Method::Identity, _) => write_f32s(row.iter().copied(), out),
            (Method::FloatCast { format }, _) => {
                bits::pack_into(row.iter().map(|&v| format.encode(v) as u32), format.bits(), out)
            }
            (Method::ScalarQuant { bits, .. }, CodecParams::EqualDistance(ed)) => {
                bits::pack_into(row.iter().enumerate().map(|(j, &v)| ed.encode(j, v)), *bits, out)
            }
            (Method::ScalarQuant { bits, .. }, CodecParams::Percentile(pb)) => {
                bits::pack_into(row.iter().enumerate().map(|(j, &v)| pb.encode(j, v)), *bits, out)
            }
            (Method::Binary { .. }, CodecParams::Median { thresholds }) => {
                bits::pack_into(row.iter().zip(thresholds).map(|(&v, &t)| (v > t) as u32), 1, out)
            }
            (Method::Binary { .. }, _) => bits::pack_into(row.iter().map(|&v| (v > 0.0) as u32), 1, out),
            (Method::Truncate { keep_dims }, _) => write_f32s(row[..*keep_dims].iter().copied(), out),
            (Method::Pca { .. }, CodecParams::Pca(model)) => write_f32s(model.project(row), out),
            (Method::Lsh { .. }, CodecParams::Lsh { planes }) => {
                let d = row.len();
                bits::pack_into(planes.chunks_exact(d).map(|p| (dot(p, row) > 0.0) as u32), 1, out)
            }
            (Method::Pq { code_bits, .. }, CodecParams::Pq { subdim, codebooks }) => bits::pack_into(
                codebooks
                    .iter()
                    .zip(row.chunks_exact(*subdim))
                    .map(|(cb, sub)| nearest(sub, cb, *subdim).0 as u32),
                *code_bits,
                out,
            ),
            (m, p) => unreachable!("params {p:?} do not belong to method {m:?}"),
        }
    }

    fn decode_row(&self, code: &[u8], out: &mut Vec<f32>) {
        let (width, n) = self.config.code_layout(self.input_dim);
        match (&self.config.method, &self.params) {
            (Method::Identity | Method::Truncate { .. } | Method::Pca { .. }, _) => {
                out.extend(read_f32s(&code[..n * 4]))
            }
            (Method::FloatCast { format }, _) => {
                out.extend(bits::unpack(code, width, n).map(|c| format.decode(c as u16)))
            }
            (Method::ScalarQuant { .. }, CodecParams::EqualDistance(ed)) => {
                out.extend(bits::unpack(code, width, n).enumerate().map(|(j, c)| ed.decode(j, c)))
            }
            (Method::ScalarQuant { .. }, CodecParams::Percentile(pb)) => {
                out.extend(bits::unpack(code, width, n).enumerate().map(|(j, c)| pb.decode(j, c)))
            }
            (Method::Binary { .. } | Method::Lsh { .. }, _) => {
                out.extend(bits::unpack(code, 1, n).map(|b| if b == 1 { 1.0 } else { -1.0 }))
            }
            (Method::Pq { .. }, CodecParams::Pq { subdim, codebooks }) => {
                for (cb, c) in codebooks.iter().zip(bits::unpack(code, width, n)) {
                    let c = c as usize;
                    out.extend_from_slice(&cb[c * subdim..(c + 1) * subdim]);
                }
            }
            (m, p) => unreachable!("params {p:?} do not belong to method {m:?}"),
        }
    }

    /// Full-precision view of queries for asymmetric scoring.
    pub fn asymmetric_queries(&self, queries: &Matrix<f32>) -> Result<Matrix<f32>> {
        self.check_dim(queries.dim())?;
        Ok(match self.config.pre_truncate {
            Some(k) => queries.truncate_dims(k)?,
            None => queries.clone(),
        })
    }

    /// The vectors queries are scored with under the configured query mode.
    pub fn prepare_queries(&self, queries: &Matrix<f32>) -> Result<Matrix<f32>> {
        match self.config.query_mode {
            QueryMode::Symmetric => reconstruct(self, queries),
            QueryMode::Asymmetric => self.asymmetric_queries(queries),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.input_dim {
            return Err(CodecError::DimMismatch { expected: self.input_dim, got });
        }
        Ok(())
    }
}

/// Packs every row of `matrix` with `codec`.
pub fn encode(codec: &FittedCodec, matrix: &Matrix<f32>) -> Result<EncodedMatrix> {
    codec.check_dim(matrix.dim())?;
    let bpv = codec.bits_per_vector();
    let rb = bpv.div_ceil(8);
    let md = codec.method_dim();
    let mut codes = vec![0u8; matrix.len() * rb];
    codes
        .par_chunks_mut(rb)
        .zip(matrix.values().par_chunks_exact(matrix.dim()))
        .for_each(|(out, row)| codec.encode_row(&row[..md], out));
    Ok(EncodedMatrix {
        codec_id: codec.codec_id,
        ids: matrix.ids().to_vec(),
        count: matrix.len(),
        dim_effective: codec.output_dim(),
        bits_per_vector: bpv,
        codes,
    })
}

/// Reconstructs float vectors from packed codes.
pub fn decode(codec: &FittedCodec, encoded: &EncodedMatrix) -> Result<Matrix<f32>> {
    if encoded.codec_id != codec.codec_id {
        return Err(CodecError::CodecMismatch { encoded: encoded.codec_id, codec: codec.codec_id });
    }
    let rb = codec.bits_per_vector().div_ceil(8);
    let expected = encoded.count * rb;
    if encoded.codes.len() != expected || encoded.ids.len() != encoded.count {
        return Err(CodecError::CorruptCodes { expected, found: encoded.codes.len() });
    }
    let out_dim = codec.output_dim();
    let values: Vec<f32> = if rb == 0 {
        Vec::new()
    } else {
        encoded
            .codes
            .par_chunks_exact(rb)
            .flat_map_iter(|code| {
                let mut v = Vec::with_capacity(out_dim);
                codec.decode_row(code, &mut v);
                v
            })
            .collect()
    };
    Ok(Matrix::new(encoded.ids.clone(), out_dim, values)?)
}

/// `decode(encode(matrix))`.
pub fn reconstruct(codec: &FittedCodec, matrix: &Matrix<f32>) -> Result<Matrix<f32>> {
    decode(codec, &encode(codec, matrix)?)
}

/// Writes an encoded matrix in the CEMB layout with dtype code 1: the
/// 24-byte header (dim = decoded dim), then `bits_per_vector` (u32 LE),
/// `codec_id` (u64 LE) and the packed codes. Ids go to the `.ids` sidecar.
pub fn write_encoded(enc: &EncodedMatrix, path: &Path) -> Result<()> {
    let io = |e| StoreError::Io { path: path.to_path_buf(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    embed_store::write_header(&mut w, embed_store::DTYPE_PACKED, enc.dim_effective as u32, enc.count as u64)
        .map_err(io)?;
    w.write_all(&(enc.bits_per_vector as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&enc.codec_id.to_le_bytes()).map_err(io)?;
    w.write_all(&enc.codes).map_err(io)?;
    w.flush().map_err(io)?;
    embed_store::write_ids(path, &enc.ids)?;
    Ok(())
}

pub fn read_encoded(path: &Path) -> Result<EncodedMatrix> {
    let io = |e| StoreError::Io { path: path.to_path_buf(), source: e };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let header = embed_store::read_header(&mut r, path)?;
    if header.dtype_code != embed_store::DTYPE_PACKED {
        return Err(StoreError::BadDtype(header.dtype_code).into());
    }
    let mut buf = [0u8; 12];
    r.read_exact(&mut buf).map_err(io)?;
    let bits_per_vector = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    let codec_id = u64::from_le_bytes(buf[4..].try_into().unwrap());
    let mut codes = Vec::new();
    r.read_to_end(&mut codes).map_err(io)?;
    let count = header.count as usize;
    let expected = count * bits_per_vector.div_ceil(8);
    if codes.len() != expected {
        return Err(CodecError::CorruptCodes { expected, found: codes.len() });
    }
    let ids = embed_store::read_ids(path, header.count)?;
    Ok(EncodedMatrix { codec_id, ids, count, dim_effective: header.dim as usize, bits_per_vector, codes })
}

#[cfg(test)]
mod tests;
