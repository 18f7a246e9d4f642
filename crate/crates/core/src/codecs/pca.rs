//! Principal component analysis via eigendecomposition of the sample
//! covariance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed_store::Matrix;
use crate::linalg::{symmetric_eigen, EigenError};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("PCA needs at least 2 calibration rows, got {0}")]
    TooFewRows(usize),
    #[error("out_dims = {out} must be in [1, {dim}]")]
    BadOutDims { out: usize, dim: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// Fitted projection. Parameters are kept in `f64` so the basis stays
/// orthonormal to working precision whatever the input type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub dim: usize,
    pub out_dims: usize,
    pub mean: Vec<f64>,
    /// `out_dims` rows of `dim` values, descending eigenvalue order.
    pub basis: Vec<f64>,
    /// All `dim` covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn component(&self, i: usize) -> &[f64] {
        &self.basis[i * self.dim..(i + 1) * self.dim]
    }

    /// Projects one centered row onto the basis.
    pub fn project<T: Scalar>(&self, row: &[T]) -> Vec<T> {
        (0..self.out_dims)
            .map(|i| {
                let s: f64 = self
                    .component(i)
                    .iter()
                    .zip(row)
                    .zip(&self.mean)
                    .map(|((b, x), m)| b * (x.to_f64_lossy() - m))
                    .sum();
                T::from_f64_lossy(s)
            })
            .collect()
    }

    pub fn transform<T: Scalar>(&self, m: &Matrix<T>) -> Matrix<T> {
        let values: Vec<T> = m.rows().flat_map(|r| self.project(r)).collect();
        Matrix::new_unchecked_values(m.ids().to_vec(), self.out_dims, values)
            .expect("projection preserves ids")
    }
}

/// Sample covariance (divisor n - 1) of the rows, accumulated in `f64`.
pub fn covariance<T: Scalar>(m: &Matrix<T>) -> (Vec<f64>, Vec<f64>) {
    let n = m.len();
    let d = m.dim();
    let mut mean = vec![0.0f64; d];
    for r in m.rows() {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v.to_f64_lossy();
        }
    }
    for x in &mut mean {
        *x /= n as f64;
    }
    // Fixed chunking and a sequential reduction keep the sum order, and so
    // the result, independent of the thread count.
    const CHUNK: usize = 512;
    let rows: Vec<&[T]> = m.rows().collect();
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0f64; d * d];
            let mut c = vec![0.0f64; d];
            for r in chunk {
                for (ci, (v, mu)) in c.iter_mut().zip(r.iter().zip(&mean)) {
                    *ci = v.to_f64_lossy() - mu;
                }
                for i in 0..d {
                    let ci = c[i];
                    let row = &mut acc[i * d..i * d + i + 1];
                    for (a, cj) in row.iter_mut().zip(&c[..=i]) {
                        *a += ci * cj;
                    }
                }
            }
            acc
        })
        .collect();
    let mut cov = vec![0.0f64; d * d];
    for p in partials {
        for (a, b) in cov.iter_mut().zip(p) {
            *a += b;
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

/// Fits the top-`out_dims` principal directions.
///
/// Each basis row is flipped so its largest-magnitude coordinate (first one
/// on ties) is positive. Directions beyond the numerical rank come out of the
/// eigensolver already completed to an orthonormal set with eigenvalue ~0.
pub fn pca_fit<T: Scalar>(calibration: &Matrix<T>, out_dims: usize) -> Result<PcaModel, PcaError> {
    let n = calibration.len();
    let d = calibration.dim();
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    if out_dims == 0 || out_dims > d {
        return Err(PcaError::BadOutDims { out: out_dims, dim: d });
    }
    let (mean, cov) = covariance(calibration);
    let eig = symmetric_eigen(&cov, d)?;
    let mut basis = Vec::with_capacity(out_dims * d);
    for v in eig.vectors.iter().take(out_dims) {
        let mut pivot = 0;
        for (j, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let s = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.extend(v.iter().map(|x| s * x));
    }
    Ok(PcaModel { dim: d, out_dims, mean, basis, eigenvalues: eig.values })
}
