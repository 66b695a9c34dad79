use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::params::NodeParams;
use crate::error::{Error, Result};
use crate::math;

/// Entries of the filtered posterior are clamped to at least this value.
pub const ALPHA_FLOOR: f64 = 1e-16;

/// Discounted sufficient statistics of the online E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    /// Expected transition counts `N̂`, `N x N`.
    pub(crate) transitions: DMatrix<f64>,
    /// Effective node occupancies `n̂ⱼ = Σᵢ N̂ᵢⱼ`.
    pub(crate) counts: DVector<f64>,
    /// First moments, `k x N` (column `j` is `Ŝ₁ⱼ`).
    pub(crate) s1: DMatrix<f64>,
    /// Second moments `Ŝ₂ⱼ`.
    pub(crate) s2: Vec<DMatrix<f64>>,
    /// Filtered posterior over nodes.
    pub(crate) alpha: DVector<f64>,
}

impl SuffStats {
    /// All-zero statistics with a uniform posterior.
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            transitions: DMatrix::zeros(nodes, nodes),
            counts: DVector::zeros(nodes),
            s1: DMatrix::zeros(dim, nodes),
            s2: alloc::vec![DMatrix::zeros(dim, dim); nodes],
            alpha: DVector::from_element(nodes, 1.0 / nodes as f64),
        }
    }

    pub fn from_parts(
        transitions: DMatrix<f64>,
        counts: DVector<f64>,
        s1: DMatrix<f64>,
        s2: Vec<DMatrix<f64>>,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let n = alpha.len();
        let k = s1.nrows();
        if transitions.shape() != (n, n) {
            return Err(Error::shape("transition counts", (n, n), transitions.shape()));
        }
        if counts.len() != n || s1.ncols() != n || s2.len() != n {
            return Err(Error::invalid("sufficient statistics disagree on the node count"));
        }
        if s2.iter().any(|m| m.shape() != (k, k)) {
            return Err(Error::invalid("second moments must be k x k"));
        }
        let all = transitions
            .iter()
            .chain(counts.iter())
            .chain(s1.iter())
            .chain(alpha.iter())
            .chain(s2.iter().flat_map(|m| m.iter()));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sufficient statistics"));
        }
        Ok(Self { transitions, counts, s1, s2, alpha })
    }

    pub fn nodes(&self) -> usize {
        self.alpha.len()
    }

    pub fn dim(&self) -> usize {
        self.s1.nrows()
    }

    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.transitions
    }

    pub fn counts(&self) -> &DVector<f64> {
        &self.counts
    }

    pub fn s1(&self) -> &DMatrix<f64> {
        &self.s1
    }

    pub fn s2(&self) -> &[DMatrix<f64>] {
        &self.s2
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn set_alpha(&mut self, alpha: DVector<f64>) -> Result<()> {
        if alpha.len() != self.nodes() {
            return Err(Error::shape("posterior", (self.nodes(), 1), (alpha.len(), 1)));
        }
        self.alpha = alpha;
        Ok(())
    }

    /// Removes every trace of node `j`: its row and column of `N̂`, its
    /// occupancy and its moments. Occupancies of other nodes are kept equal to
    /// the column sums of `N̂`.
    pub fn clear_node(&mut self, j: usize) {
        let n = self.nodes();
        for c in 0..n {
            if c != j {
                self.counts[c] -= self.transitions[(j, c)];
                if self.counts[c] < 0.0 {
                    self.counts[c] = 0.0;
                }
            }
            self.transitions[(j, c)] = 0.0;
        }
        self.transitions.column_mut(j).fill(0.0);
        self.counts[j] = 0.0;
        self.s1.column_mut(j).fill(0.0);
        self.s2[j].fill(0.0);
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, Vec<DMatrix<f64>>, DVector<f64>) {
        (self.transitions, self.counts, self.s1, self.s2, self.alpha)
    }
}

/// Result of one forward-filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// `Γᵢⱼ = Aᵢⱼ bⱼ / Z`.
    pub gamma: DMatrix<f64>,
    /// `αⱼ(t) = Σᵢ αᵢ(t-1) Γᵢⱼ`, floored and renormalized.
    pub alpha: DVector<f64>,
}

/// One step of the normalized forward recursion on fixed parameters.
///
/// Emission likelihoods are handled in log space and shifted by their
/// maximum before exponentiation, so only the ratios `bⱼ / max b` are ever
/// formed. Returns `FilterDegenerate` when the normalizer vanishes.
pub fn forward_filter(params: &NodeParams, alpha_prev: &DVector<f64>, x: &[f64]) -> Result<FilterOutput> {
    let n = params.nodes();
    check_inputs(params, alpha_prev, x)?;
    let mut b = alloc::vec![0.0; n];
    params.log_densities_into(x, &mut b);
    scaled_emissions(&mut b)?;
    let a = params.transition();
    let mut pred = alloc::vec![0.0; n];
    predict_into(a, alpha_prev.as_slice(), &mut pred);
    let norm: f64 = pred.iter().zip(&b).map(|(p, bj)| p * bj).sum();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::FilterDegenerate);
    }
    let mut gamma = DMatrix::zeros(n, n);
    for j in 0..n {
        let f = b[j] / norm;
        for i in 0..n {
            gamma[(i, j)] = a[(i, j)] * f;
        }
    }
    let mut alpha = DVector::zeros(n);
    for j in 0..n {
        alpha[j] = pred[j] * b[j] / norm;
    }
    floor_and_normalize(alpha.as_mut_slice());
    Ok(FilterOutput { gamma, alpha })
}

/// Folds one filter step into the statistics with forgetting rate `epsilon`.
///
/// `alpha_prev` is the posterior before the step. The posterior stored in
/// `stats` is left untouched; callers install the new one themselves.
pub fn update_suff_stats(
    stats: &mut SuffStats,
    alpha_prev: &DVector<f64>,
    gamma: &DMatrix<f64>,
    x: &[f64],
    epsilon: f64,
) -> Result<()> {
    let n = stats.nodes();
    let k = stats.dim();
    if alpha_prev.len() != n {
        return Err(Error::shape("previous posterior", (n, 1), (alpha_prev.len(), 1)));
    }
    if gamma.shape() != (n, n) {
        return Err(Error::shape("filter update matrix", (n, n), gamma.shape()));
    }
    if x.len() != k {
        return Err(Error::shape("observation", (k, 1), (x.len(), 1)));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid("forgetting rate must lie in [0, 1]"));
    }
    let keep = 1.0 - epsilon;
    let mut weights = alloc::vec![0.0; n];
    for j in 0..n {
        let mut col_sum = 0.0;
        let mut w = 0.0;
        for i in 0..n {
            let inc = alpha_prev[i] * gamma[(i, j)];
            let v = keep * stats.transitions[(i, j)] + inc;
            stats.transitions[(i, j)] = v;
            col_sum += v;
            w += inc;
        }
        stats.counts[j] = col_sum;
        weights[j] = w;
    }
    accumulate_moments(stats, &weights, x, keep);
    Ok(())
}

pub(crate) fn check_inputs(params: &NodeParams, alpha_prev: &DVector<f64>, x: &[f64]) -> Result<()> {
    let n = params.nodes();
    if alpha_prev.len() != n {
        return Err(Error::shape("previous posterior", (n, 1), (alpha_prev.len(), 1)));
    }
    if x.len() != params.dim() {
        return Err(Error::shape("observation", (params.dim(), 1), (x.len(), 1)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    Ok(())
}

/// Replaces log-densities with `exp(log b - max)` in place; returns the max.
pub(crate) fn scaled_emissions(log_b: &mut [f64]) -> Result<f64> {
    let max = log_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::FilterDegenerate);
    }
    for v in log_b.iter_mut() {
        *v = math::exp(*v - max);
    }
    Ok(max)
}

/// `out = Aᵀ alpha`, i.e. `out[j] = Σᵢ alpha[i] A[i, j]`.
#[inline]
pub(crate) fn predict_into(a: &DMatrix<f64>, alpha: &[f64], out: &mut [f64]) {
    let n = alpha.len();
    let data = a.as_slice();
    for (j, o) in out.iter_mut().enumerate() {
        *o = math::dot(&data[j * n..(j + 1) * n], alpha);
    }
}

pub(crate) fn floor_and_normalize(alpha: &mut [f64]) {
    let mut total = 0.0;
    for v in alpha.iter_mut() {
        if !(*v >= ALPHA_FLOOR) {
            *v = ALPHA_FLOOR;
        }
        total += *v;
    }
    for v in alpha.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn accumulate_moments(stats: &mut SuffStats, weights: &[f64], x: &[f64], keep: f64) {
    let k = x.len();
    for (j, &w) in weights.iter().enumerate() {
        let mut s1 = stats.s1.column_mut(j);
        for r in 0..k {
            s1[r] = keep * s1[r] + w * x[r];
        }
        let s2 = stats.s2[j].as_mut_slice();
        for c in 0..k {
            for r in 0..k {
                // `x[c] * x[r]` is commutative bit for bit, so S2 stays exactly symmetric.
                s2[c * k + r] = keep * s2[c * k + r] + w * (x[c] * x[r]);
            }
        }
    }
}

/// Fused filter and statistics update on the model's hot path.
///
/// Equivalent to [`forward_filter`] followed by [`update_suff_stats`] and
/// installing the new posterior, without materializing `Γ`. `log_b` holds
/// the node log-densities at `x` and is overwritten.
pub(crate) fn filter_and_accumulate(
    params: &NodeParams,
    stats: &mut SuffStats,
    log_b: &mut [f64],
    pred: &mut [f64],
    x: &[f64],
    epsilon: f64,
) -> Result<()> {
    let n = params.nodes();
    scaled_emissions(log_b)?;
    let b = log_b;
    let a = params.transition();
    predict_into(a, stats.alpha.as_slice(), pred);
    let norm: f64 = pred.iter().zip(b.iter()).map(|(p, bj)| p * bj).sum();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::FilterDegenerate);
    }
    let keep = 1.0 - epsilon;
    let a_data = a.as_slice();
    let alpha_prev = stats.alpha.as_slice();
    let nhat = stats.transitions.as_mut_slice();
    for j in 0..n {
        let f = b[j] / norm;
        let a_col = &a_data[j * n..(j + 1) * n];
        let n_col = &mut nhat[j * n..(j + 1) * n];
        for i in 0..n {
            n_col[i] = keep * n_col[i] + alpha_prev[i] * a_col[i] * f;
        }
        stats.counts[j] = math::sum(n_col);
        // Σᵢ αᵢ Γᵢⱼ = pred_j b_j / Z.
        pred[j] *= f;
    }
    accumulate_moments(stats, pred, x, keep);
    stats.alpha.as_mut_slice().copy_from_slice(pred);
    floor_and_normalize(stats.alpha.as_mut_slice());
    Ok(())
}
