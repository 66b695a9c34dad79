use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math;

/// Log-density of `N(mu, (L Lᵀ)⁻¹)` at `x`, where `L` is the lower Cholesky
/// factor of the precision.
pub fn gaussian_logpdf(mu: &[f64], chol: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    let k = mu.len();
    if chol.shape() != (k, k) {
        return Err(Error::shape("precision factor", (k, k), chol.shape()));
    }
    if x.len() != k {
        return Err(Error::shape("density argument", (k, 1), (x.len(), 1)));
    }
    if (0..k).any(|i| !(chol[(i, i)] > 0.0)) {
        return Err(Error::invalid("precision factor needs a positive diagonal"));
    }
    Ok(log_norm(chol) - 0.5 * whitened_sq(mu, chol, x))
}

/// `-(k/2) log 2π + Σ log L_ii`.
pub(crate) fn log_norm(chol: &DMatrix<f64>) -> f64 {
    let k = chol.nrows();
    let mut s = -0.5 * k as f64 * math::LN_2PI;
    for i in 0..k {
        s += math::ln(chol[(i, i)]);
    }
    s
}

/// `‖Lᵀ(x − μ)‖²`, reading only the lower triangle of `L`.
#[inline]
pub(crate) fn whitened_sq(mu: &[f64], chol: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = mu.len();
    let mut acc = 0.0;
    for i in 0..k {
        let col = &chol.as_slice()[i * k..(i + 1) * k];
        let mut z = 0.0;
        for r in i..k {
            z += col[r] * (x[r] - mu[r]);
        }
        acc += z * z;
    }
    acc
}

/// Row-wise softmax of an `N x N` logit matrix.
pub fn row_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(logits.nrows(), logits.ncols());
    softmax_into(logits, &mut out);
    out
}

/// Row-wise softmax written into an existing buffer of the same shape.
pub(crate) fn softmax_into(logits: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    let n = logits.nrows();
    let mut max = alloc::vec![f64::NEG_INFINITY; n];
    for col in logits.as_slice().chunks_exact(n.max(1)) {
        for (mx, &v) in max.iter_mut().zip(col) {
            *mx = mx.max(v);
        }
    }
    softmax_with_max(logits, &max, out);
}

/// Row softmax given the exact row maxima of `logits`.
pub(crate) fn softmax_with_max(logits: &DMatrix<f64>, max: &[f64], out: &mut DMatrix<f64>) {
    let n = logits.nrows();
    let mut sums = alloc::vec![0.0; n];
    for (src, dst) in logits
        .as_slice()
        .chunks_exact(n.max(1))
        .zip(out.as_mut_slice().chunks_exact_mut(n.max(1)))
    {
        for i in 0..n {
            let e = math::exp_poly(src[i] - max[i]);
            dst[i] = e;
            sums[i] += e;
        }
    }
    for s in sums.iter_mut() {
        *s = 1.0 / *s;
    }
    for dst in out.as_mut_slice().chunks_exact_mut(n.max(1)) {
        for i in 0..n {
            dst[i] *= sums[i];
        }
    }
}

/// Tile parameters: means, precision Cholesky factors and transition logits.
///
/// The row-stochastic transition matrix and the per-node normalizing
/// constants are cached and kept in sync by every mutator.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams {
    pub(crate) means: DMatrix<f64>,
    pub(crate) chol: Vec<DMatrix<f64>>,
    pub(crate) logits: DMatrix<f64>,
    pub(crate) transition: DMatrix<f64>,
    pub(crate) log_norms: Vec<f64>,
}

impl NodeParams {
    /// `means` is `k x N` (one column per node); `logits` is `N x N`.
    pub fn new(means: DMatrix<f64>, chol: Vec<DMatrix<f64>>, logits: DMatrix<f64>) -> Result<Self> {
        let (k, n) = means.shape();
        if chol.len() != n {
            return Err(Error::shape("precision factors", (n, 1), (chol.len(), 1)));
        }
        if logits.shape() != (n, n) {
            return Err(Error::shape("transition logits", (n, n), logits.shape()));
        }
        if means.iter().chain(logits.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node parameters"));
        }
        for l in &chol {
            check_factor(l, k)?;
        }
        let transition = row_softmax(&logits);
        let log_norms = chol.iter().map(log_norm).collect();
        Ok(Self { means, chol, logits, transition, log_norms })
    }

    pub fn nodes(&self) -> usize {
        self.means.ncols()
    }

    pub fn dim(&self) -> usize {
        self.means.nrows()
    }

    /// `k x N`, one column per node.
    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    pub fn mean(&self, j: usize) -> &[f64] {
        let k = self.dim();
        &self.means.as_slice()[j * k..(j + 1) * k]
    }

    pub fn chol(&self, j: usize) -> &DMatrix<f64> {
        &self.chol[j]
    }

    pub fn chols(&self) -> &[DMatrix<f64>] {
        &self.chol
    }

    pub fn logits(&self) -> &DMatrix<f64> {
        &self.logits
    }

    /// Row-stochastic `A = softmax(a)` by rows.
    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn covariance(&self, j: usize) -> Result<DMatrix<f64>> {
        crate::linalg::covariance_from_precision_cholesky(&self.chol[j])
    }

    /// Log-density of node `j` at `x`; shape and diagonal are trusted.
    #[inline]
    pub fn log_density(&self, j: usize, x: &[f64]) -> f64 {
        self.log_norms[j] - 0.5 * whitened_sq(self.mean(j), &self.chol[j], x)
    }

    /// Fills `out[j]` with the log-density of every node at `x`.
    pub fn log_densities_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.log_density(j, x);
        }
    }

    pub fn log_densities(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.nodes());
        self.log_densities_into(x, out.as_mut_slice());
        out
    }

    pub fn set_logits(&mut self, logits: DMatrix<f64>) -> Result<()> {
        let n = self.nodes();
        if logits.shape() != (n, n) {
            return Err(Error::shape("transition logits", (n, n), logits.shape()));
        }
        self.logits = logits;
        self.refresh_transition();
        Ok(())
    }

    pub fn set_mean(&mut self, j: usize, mu: &[f64]) -> Result<()> {
        if mu.len() != self.dim() {
            return Err(Error::shape("node mean", (self.dim(), 1), (mu.len(), 1)));
        }
        self.means.column_mut(j).copy_from_slice(mu);
        Ok(())
    }

    pub fn set_chol(&mut self, j: usize, l: DMatrix<f64>) -> Result<()> {
        check_factor(&l, self.dim())?;
        self.log_norms[j] = log_norm(&l);
        self.chol[j] = l;
        Ok(())
    }

    pub(crate) fn refresh_transition(&mut self) {
        softmax_into(&self.logits, &mut self.transition);
    }

    pub(crate) fn refresh_log_norm(&mut self, j: usize) {
        self.log_norms[j] = log_norm(&self.chol[j]);
    }

    /// Resets row `i` of the logits to a constant (uniform outgoing transitions).
    pub(crate) fn reset_row(&mut self, i: usize) {
        let n = self.nodes();
        let u = 1.0 / n as f64;
        for j in 0..n {
            self.logits[(i, j)] = 0.0;
            self.transition[(i, j)] = u;
        }
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Vec<DMatrix<f64>>, DMatrix<f64>) {
        (self.means, self.chol, self.logits)
    }
}

fn check_factor(l: &DMatrix<f64>, k: usize) -> Result<()> {
    if l.shape() != (k, k) {
        return Err(Error::shape("precision factor", (k, k), l.shape()));
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("precision factor"));
    }
    for j in 0..k {
        if !(l[(j, j)] > 0.0) {
            return Err(Error::invalid("precision factor needs a positive diagonal"));
        }
        for i in 0..j {
            if l[(i, j)] != 0.0 {
                return Err(Error::invalid("precision factor must be lower triangular"));
            }
        }
    }
    Ok(())
}
