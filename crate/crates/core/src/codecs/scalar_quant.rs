//! Per-dimension scalar quantization to 2, 4 or 8 bits.

use serde::{Deserialize, Serialize};

use crate::scalar::percentile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Uniform bins between the 2.5th and 97.5th percentile.
    EqualDistance,
    /// Bins bounded by data quantiles, roughly equal population.
    Percentile,
}

pub const CLIP_LOW: f64 = 0.025;
pub const CLIP_HIGH: f64 = 0.975;

/// Sorted copy of each column of a row-major `n x dim` slice.
pub(crate) fn sorted_columns(values: &[f32], dim: usize) -> Vec<Vec<f32>> {
    let n = values.len() / dim;
    (0..dim)
        .map(|j| {
            let mut col: Vec<f32> = (0..n).map(|i| values[i * dim + j]).collect();
            col.sort_by(f32::total_cmp);
            col
        })
        .collect()
}

/// Clip bounds per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualDistance {
    pub bits: u32,
    pub lo: Vec<f32>,
    pub hi: Vec<f32>,
}

impl EqualDistance {
    pub fn fit(columns: &[Vec<f32>], bits: u32) -> Self {
        let lo = columns.iter().map(|c| percentile_sorted(c, CLIP_LOW) as f32).collect();
        let hi = columns.iter().map(|c| percentile_sorted(c, CLIP_HIGH) as f32).collect();
        Self { bits, lo, hi }
    }

    fn levels(&self) -> f64 {
        (1u64 << self.bits) as f64
    }

    /// Bin width of dimension `j`.
    pub fn step(&self, j: usize) -> f64 {
        (self.hi[j] as f64 - self.lo[j] as f64) / self.levels()
    }

    pub fn encode(&self, j: usize, v: f32) -> u32 {
        let (lo, hi) = (self.lo[j] as f64, self.hi[j] as f64);
        if hi <= lo {
            return 0;
        }
        let max = (1u32 << self.bits) - 1;
        let clipped = (v as f64).clamp(lo, hi);
        let idx = ((clipped - lo) / self.step(j)).floor();
        (idx.max(0.0) as u32).min(max)
    }

    /// Bin center `lo + (idx + 0.5) * step`.
    pub fn decode(&self, j: usize, idx: u32) -> f32 {
        let (lo, hi) = (self.lo[j] as f64, self.hi[j] as f64);
        if hi <= lo {
            return self.lo[j];
        }
        (lo + (idx as f64 + 0.5) * self.step(j)) as f32
    }
}

/// Quantile edges and reconstruction levels per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileBins {
    pub bits: u32,
    /// `2^bits + 1` strictly increasing edges per dimension.
    pub boundaries: Vec<Vec<f32>>,
    /// `2^bits` levels per dimension, the calibration quantile at the bin's
    /// mid-probability.
    pub reconstruct: Vec<Vec<f32>>,
}

impl PercentileBins {
    pub fn fit(columns: &[Vec<f32>], bits: u32) -> Self {
        let k = 1usize << bits;
        let mut boundaries = Vec::with_capacity(columns.len());
        let mut reconstruct = Vec::with_capacity(columns.len());
        for col in columns {
            let mut edges: Vec<f32> =
                (0..=k).map(|i| percentile_sorted(col, i as f64 / k as f64) as f32).collect();
            // Repeated quantiles (constant-heavy columns) are nudged up by one
            // representable step so bin lookup stays well defined.
            for i in 1..edges.len() {
                if edges[i] <= edges[i - 1] {
                    edges[i] = edges[i - 1].next_up();
                }
            }
            boundaries.push(edges);
            reconstruct.push(
                (0..k).map(|i| percentile_sorted(col, (i as f64 + 0.5) / k as f64) as f32).collect(),
            );
        }
        Self { bits, boundaries, reconstruct }
    }

    /// Rightmost bin whose left edge is `<= v`; values below the first edge
    /// land in bin 0.
    pub fn encode(&self, j: usize, v: f32) -> u32 {
        let k = 1usize << self.bits;
        let left = &self.boundaries[j][..k];
        left.partition_point(|&e| e <= v).saturating_sub(1) as u32
    }

    pub fn decode(&self, j: usize, idx: u32) -> f32 {
        self.reconstruct[j][idx as usize]
    }
}
