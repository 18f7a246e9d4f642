//! Compression-ratio accounting and the built-in evaluation grid.

use super::{Binning, CodecConfig, FloatFormat, Method, Threshold};

pub const DEFAULT_NATIVE_BITS: u32 = 32;

/// Target ratios for hashing and product quantization.
pub const TARGET_RATIOS: [usize; 4] = [4, 8, 16, 32];

/// Bits per vector used for ratio accounting. Float rows (identity,
/// truncation, PCA output) count at the native precision.
pub fn nominal_bits_per_vector(config: &CodecConfig, dim: usize, native_bits: u32) -> f64 {
    let d = config.method_input_dim(dim) as f64;
    let native = native_bits as f64;
    match config.method {
        Method::Identity => native * d,
        Method::FloatCast { format } => format.bits() as f64 * d,
        Method::ScalarQuant { bits, .. } => bits as f64 * d,
        Method::Binary { .. } => d,
        Method::Truncate { keep_dims } => native * keep_dims as f64,
        Method::Pca { out_dims } => native * out_dims as f64,
        Method::Lsh { n_bits } => n_bits as f64,
        Method::Pq { n_subvectors, code_bits } => (n_subvectors * code_bits as usize) as f64,
    }
}

/// `native_bits * dim / bits_per_vector`.
pub fn compression_ratio(config: &CodecConfig, dim: usize, native_bits: u32) -> f64 {
    native_bits as f64 * dim as f64 / nominal_bits_per_vector(config, dim, native_bits)
}

/// Truncation (and PCA) cutoffs for a model dimension.
pub fn truncation_cutoffs(dim: usize) -> Vec<usize> {
    match dim {
        1024 => vec![32, 64, 128, 256, 512, 768],
        768 => vec![24, 48, 96, 192, 384],
        _ => {
            let mut v: Vec<usize> = (1..=5).map(|s| dim >> s).filter(|&c| c >= 1).collect();
            v.reverse();
            v.dedup();
            v
        }
    }
}

/// Six `(n_subvectors, code_bits)` pairs landing on ratios 4, 8, 16, 16,
/// 32, 32 at 32-bit native precision. Pairs whose subvector count does not
/// divide `dim` are skipped.
pub fn pq_pairs(dim: usize) -> Vec<(usize, u32)> {
    let native = DEFAULT_NATIVE_BITS as usize;
    let mut out = Vec::new();
    for &r in &TARGET_RATIOS {
        let budget = native * dim / r;
        out.push((budget / 8, 8));
        if r >= 16 {
            out.push((budget / 4, 4));
        }
    }
    out.retain(|&(m, _)| m >= 1 && dim.is_multiple_of(m));
    out
}

/// Every configuration evaluated for a model of dimension `dim`, identity
/// first.
pub fn builtin_grid(dim: usize) -> Vec<CodecConfig> {
    let native = DEFAULT_NATIVE_BITS as usize;
    let mut g: Vec<CodecConfig> = vec![CodecConfig::identity()];
    let casts = FloatFormat::ALL.map(|format| Method::FloatCast { format });
    g.extend(casts.iter().map(|&m| CodecConfig::from(m)));
    let quant: Vec<Method> = [8u32, 4, 2]
        .iter()
        .flat_map(|&bits| {
            [Binning::EqualDistance, Binning::Percentile].map(|binning| Method::ScalarQuant { bits, binning })
        })
        .collect();
    g.extend(quant.iter().map(|&m| CodecConfig::from(m)));
    let binaries = [Threshold::Zero, Threshold::Median].map(|threshold| Method::Binary { threshold });
    g.extend(binaries.iter().map(|&m| CodecConfig::from(m)));

    let cutoffs = truncation_cutoffs(dim);
    g.extend(cutoffs.iter().map(|&keep_dims| CodecConfig::from(Method::Truncate { keep_dims })));
    g.extend(cutoffs.iter().map(|&out_dims| CodecConfig::from(Method::Pca { out_dims })));
    for &r in &TARGET_RATIOS {
        let n_bits = native * dim / r;
        if n_bits >= 1 {
            g.push(Method::Lsh { n_bits }.into());
        }
    }
    for (n_subvectors, code_bits) in pq_pairs(dim) {
        g.push(Method::Pq { n_subvectors, code_bits }.into());
    }
    // Truncation to the two largest cutoffs, then cast or quantize.
    let mut largest: Vec<usize> = cutoffs.iter().rev().copied().filter(|&c| c * 2 <= dim).take(2).collect();
    largest.sort_unstable_by(|a, b| b.cmp(a));
    for keep in largest {
        for &m in casts.iter().chain(&quant).chain(&binaries) {
            g.push(CodecConfig::from(m).with_pre_truncate(keep));
        }
    }
    g
}
