//! Sparse random projections for the first, data-independent reduction stage.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::math;

/// Sparsity scheme for the projection entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DensityMode {
    /// Entries `±sqrt(3/n)` with probability 1/6 each, zero otherwise.
    #[default]
    Achlioptas,
    /// Nonzero with probability `1/sqrt(d)`, entries `±sqrt(sqrt(d)/n)`.
    VerySparse,
}

impl DensityMode {
    fn nonzero_probability(self, d: usize) -> f64 {
        match self {
            DensityMode::Achlioptas => 1.0 / 3.0,
            DensityMode::VerySparse => 1.0 / math::sqrt(d as f64),
        }
    }

    fn scale(self, d: usize, n: usize) -> f64 {
        match self {
            DensityMode::Achlioptas => math::sqrt(3.0 / n as f64),
            DensityMode::VerySparse => math::sqrt(math::sqrt(d as f64) / n as f64),
        }
    }
}

/// A fixed `d x n` sign matrix `P`; `project` computes `Pᵀx`.
///
/// Stored row by row (one row per input coordinate) as column indices with a
/// sign bit. The matrix is a pure function of `(d, n, seed, mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseProjection {
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    mode: DensityMode,
    scale: f64,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    negative: Vec<bool>,
}

impl SparseProjection {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64, mode: DensityMode) -> Result<Self> {
        if output_dim == 0 {
            return Err(Error::invalid("projection output dimension must be positive"));
        }
        if output_dim > input_dim {
            return Err(Error::invalid(alloc::format!(
                "projection output dimension {output_dim} exceeds input dimension {input_dim}"
            )));
        }
        if output_dim > u32::MAX as usize {
            return Err(Error::invalid("projection output dimension too large"));
        }
        let p = mode.nonzero_probability(input_dim);
        let half = p / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let expected = ((input_dim * output_dim) as f64 * p * 1.05) as usize + 16;
        let mut cols = Vec::with_capacity(expected);
        let mut negative = Vec::with_capacity(expected);
        let mut row_start = Vec::with_capacity(input_dim + 1);
        row_start.push(0);
        for _ in 0..input_dim {
            for j in 0..output_dim {
                let u = unit_uniform(&mut rng);
                if u < p {
                    cols.push(j as u32);
                    negative.push(u >= half);
                }
            }
            row_start.push(cols.len());
        }
        Ok(Self {
            input_dim,
            output_dim,
            seed,
            mode,
            scale: mode.scale(input_dim, output_dim),
            row_start,
            cols,
            negative,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> DensityMode {
        self.mode
    }

    /// Magnitude of every nonzero entry.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Entry `P[i, j]`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_start[i]..self.row_start[i + 1]];
        match row.binary_search(&(j as u32)) {
            Ok(pos) => {
                if self.negative[self.row_start[i] + pos] {
                    -self.scale
                } else {
                    self.scale
                }
            }
            Err(_) => 0.0,
        }
    }

    /// Iterates the nonzero entries as `(row, col, value)`.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.input_dim).flat_map(move |i| {
            (self.row_start[i]..self.row_start[i + 1]).map(move |e| {
                let v = if self.negative[e] { -self.scale } else { self.scale };
                (i, self.cols[e] as usize, v)
            })
        })
    }

    /// Dense copy of `P` (`d x n`); intended for tests and small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.input_dim, self.output_dim);
        for (i, j, v) in self.nonzeros() {
            m[(i, j)] = v;
        }
        m
    }

    /// `Pᵀ X` for a `d x b` block of column samples.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim {
            return Err(Error::shape(
                "projection input",
                (self.input_dim, x.ncols()),
                x.shape(),
            ));
        }
        let mut out = DMatrix::zeros(self.output_dim, x.ncols());
        for c in 0..x.ncols() {
            let src = x.column(c);
            let mut dst = out.column_mut(c);
            self.accumulate(src.as_slice(), dst.as_mut_slice());
        }
        Ok(out)
    }

    /// `Pᵀ x` for a single sample.
    pub fn project_vec(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape("projection input", (self.input_dim, 1), (x.len(), 1)));
        }
        let mut out = DVector::zeros(self.output_dim);
        self.accumulate(x, out.as_mut_slice());
        Ok(out)
    }

    fn accumulate(&self, x: &[f64], out: &mut [f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for e in self.row_start[i]..self.row_start[i + 1] {
                let j = self.cols[e] as usize;
                if self.negative[e] {
                    out[j] -= xi;
                } else {
                    out[j] += xi;
                }
            }
        }
        for v in out.iter_mut() {
            *v *= self.scale;
        }
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
fn unit_uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            SparseProjection::new(10, 0, 1, DensityMode::Achlioptas),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            SparseProjection::new(10, 11, 1, DensityMode::Achlioptas),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let a = SparseProjection::new(100, 20, 7, DensityMode::Achlioptas).unwrap();
        let b = SparseProjection::new(100, 20, 7, DensityMode::Achlioptas).unwrap();
        assert_eq!(a, b);
        let c = SparseProjection::new(100, 20, 8, DensityMode::Achlioptas).unwrap();
        assert_ne!(a.cols, c.cols);
    }

    #[test]
    fn achlioptas_density_within_three_sigma() {
        let (d, n) = (400usize, 60usize);
        let p = SparseProjection::new(d, n, 11, DensityMode::Achlioptas).unwrap();
        let total = (d * n) as f64;
        let frac = p.nnz() as f64 / total;
        let sigma = (1.0 / 3.0 * 2.0 / 3.0 / total).sqrt();
        assert!((frac - 1.0 / 3.0).abs() <= 3.0 * sigma, "fraction {frac}");
        let positives = p.nonzeros().filter(|e| e.2 > 0.0).count() as f64;
        let nz = p.nnz() as f64;
        let s = (0.25 / nz).sqrt();
        assert!((positives / nz - 0.5).abs() <= 3.0 * s);
        assert!(p.nonzeros().all(|(_, _, v)| (v.abs() - (3.0f64 / 60.0).sqrt()).abs() < 1e-15));
    }

    #[test]
    fn very_sparse_density_and_scale() {
        let (d, n) = (2500usize, 40usize);
        let p = SparseProjection::new(d, n, 2, DensityMode::VerySparse).unwrap();
        let total = (d * n) as f64;
        let q = 1.0 / 50.0;
        let sigma = (q * (1.0 - q) / total).sqrt();
        let frac = p.nnz() as f64 / total;
        assert!((frac - q).abs() <= 3.0 * sigma, "fraction {frac}");
        assert!((p.scale() - (50.0f64 / 40.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_input_projects_to_zero() {
        let p = SparseProjection::new(50, 10, 1, DensityMode::Achlioptas).unwrap();
        let y = p.project(&DMatrix::zeros(50, 3)).unwrap();
        assert_eq!(y, DMatrix::zeros(10, 3));
    }

    #[test]
    fn matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = SparseProjection::new(30, 8, 5, DensityMode::Achlioptas).unwrap();
        let x = gaussian_matrix(30, 4, &mut rng);
        let dense = p.to_dense().transpose() * &x;
        assert!((p.project(&x).unwrap() - dense).amax() < 1e-12);
        let v = p.project_vec(x.column(1).as_slice()).unwrap();
        assert!((v - p.project(&x).unwrap().column(1)).amax() < 1e-15);
    }

    #[test]
    fn entry_lookup_agrees_with_iteration() {
        let p = SparseProjection::new(20, 6, 3, DensityMode::Achlioptas).unwrap();
        let dense = p.to_dense();
        for i in 0..20 {
            for j in 0..6 {
                assert_eq!(p.entry(i, j), dense[(i, j)]);
            }
        }
    }

    #[test]
    fn row_count_mismatch_is_shape_error() {
        let p = SparseProjection::new(20, 6, 3, DensityMode::Achlioptas).unwrap();
        assert!(matches!(p.project(&DMatrix::zeros(19, 2)), Err(Error::Shape { .. })));
        assert!(matches!(p.project_vec(&[0.0; 21]), Err(Error::Shape { .. })));
    }
}
