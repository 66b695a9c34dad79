//! Dense linear-algebra helpers shared by the reduction and tiling code.
//!
//! QR, Cholesky and eigendecompositions come from nalgebra; the SVD is a
//! one-sided Jacobi iteration. This module pins down the conventions the
//! rest of the crate relies on (positive-diagonal QR, sorted SVD, PSD
//! flooring, precision Cholesky factors).

use alloc::format;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;

/// Relative jitter added to covariance-like matrices before factorization.
pub const COV_JITTER: f64 = 1e-6;

/// Thin QR with the sign convention `diag(R) >= 0`.
///
/// For an `m x n` input returns `Q` (`m x min(m,n)`) and `R` (`min(m,n) x n`).
pub fn thin_qr(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.qr();
    let (mut q, mut r) = qr.unpack();
    let p = r.nrows().min(r.ncols());
    for i in 0..p {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Sweeps of the Jacobi SVD before giving up.
const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition, singular values in decreasing order.
///
/// For an `m x n` input, `u` is `m x p`, `v_t` is `p x n` with
/// `p = min(m, n)`, and both have orthonormal rows/columns even when `m` is
/// rank deficient. Computed by one-sided Jacobi rotations, which keep small
/// singular values accurate relative to the large ones.
pub fn svd(m: DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    if m.nrows() < m.ncols() {
        let t = svd(m.transpose())?;
        return Ok(SVD {
            u: t.v_t.map(|v| v.transpose()),
            v_t: t.u.map(|u| u.transpose()),
            singular_values: t.singular_values,
        });
    }
    let (rows, cols) = m.shape();
    let mut a = m;
    let mut v = DMatrix::<f64>::identity(cols, cols);
    // Columns below this norm are numerically zero and are left alone.
    let negligible = f64::EPSILON * a.norm();
    let negligible_sq = negligible * negligible;
    let mut converged = cols < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0
                    || alpha <= negligible_sq
                    || beta <= negligible_sq
                    || math::abs(gamma) <= f64::EPSILON * math::sqrt(alpha) * math::sqrt(beta)
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (math::abs(zeta) + math::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (a[(r, i)], a[(r, j)]);
                    a[(r, i)] = c * x - s * y;
                    a[(r, j)] = s * x + c * y;
                }
                for r in 0..cols {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("svd did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
    }

    let norms: alloc::vec::Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: alloc::vec::Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let mut u = DMatrix::zeros(rows, cols);
    let mut v_sorted = DMatrix::zeros(cols, cols);
    let mut sigma = DVector::zeros(cols);
    let mut filled = 0;
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        v_sorted.set_column(dst, &v.column(src));
        if norms[src] > scale * f64::EPSILON * rows as f64 && norms[src] > 0.0 {
            u.set_column(dst, &(a.column(src) / norms[src]));
            filled += 1;
        }
    }
    // Columns of negligible norm carry no direction; complete them to an
    // orthonormal set instead.
    if filled < cols {
        let mut candidate = 0;
        for dst in filled..cols {
            loop {
                let mut e = DVector::<f64>::zeros(rows);
                e[candidate % rows] = 1.0;
                candidate += 1;
                for _ in 0..2 {
                    for k in 0..dst {
                        let proj = u.column(k).dot(&e);
                        e -= u.column(k) * proj;
                    }
                }
                let n = e.norm();
                if n > 0.5 {
                    u.set_column(dst, &(e / n));
                    break;
                }
            }
        }
    }
    Ok(SVD { u: Some(u), v_t: Some(v_sorted.transpose()), singular_values: sigma })
}

/// `max |QᵀQ - I|` over all entries.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max(math::abs(g[(i, j)] - target));
        }
    }
    worst
}

/// Sines of the principal angles between the column spans of two matrices
/// with orthonormal columns, largest first.
///
/// Computed as the singular values of `(I - AAᵀ)B`, which stays accurate for
/// tiny angles where `acos` of the cosines would lose half the digits.
pub fn principal_angle_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape("principal angles", (a.nrows(), b.ncols()), (b.nrows(), b.ncols())));
    }
    let residual = b - a * a.tr_mul(b);
    let s = svd(residual)?;
    Ok(s.singular_values)
}

/// Numerically stable `log(sum(exp(v)))`. Returns `-inf` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64
where
    I::IntoIter: Clone,
{
    let it = values.into_iter();
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = it.map(|v| math::exp(v - max)).sum();
    max + math::ln(sum)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes and clamps negative eigenvalues to zero.
pub fn floor_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    if sym.nrows() == 0 {
        return Ok(sym);
    }
    let mut eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition failed".into()))?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(eig.recompose());
    }
    for l in eig.eigenvalues.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok(symmetrize(&eig.recompose()))
}

/// Jitter magnitude for a covariance: `1e-6 * trace / k`, or `1e-6` when the
/// trace is zero or not finite (degenerate buffers of identical points).
pub fn covariance_jitter(cov: &DMatrix<f64>) -> f64 {
    let k = cov.nrows().max(1) as f64;
    let scale = cov.trace() / k;
    if scale.is_finite() && scale > 0.0 {
        COV_JITTER * scale
    } else {
        COV_JITTER
    }
}

/// Lower Cholesky factor, or `None` if the matrix is not positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(symmetrize(m)).map(|c| c.unpack())
}

/// Lower-triangular `L` with positive diagonal such that `cov⁻¹ = L Lᵀ`.
pub fn precision_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(symmetrize(cov))
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let precision = symmetrize(&chol.inverse());
    cholesky_lower(&precision)
        .ok_or_else(|| Error::Numerical("precision is not positive definite".into()))
}

/// Covariance `(L Lᵀ)⁻¹` from a precision Cholesky factor.
pub fn covariance_from_precision_cholesky(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let precision = l * l.transpose();
    let chol = Cholesky::new(precision)
        .ok_or_else(|| Error::Numerical("precision is not positive definite".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Haar-distributed random orthogonal `k x k` matrix.
pub fn random_orthogonal<R: RngCore>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    thin_qr(g).0
}

/// Matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix<R: RngCore>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
