//! The tiling objective and its gradient with respect to the unconstrained
//! parameters (transition logits, means and precision Cholesky factors).

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::hyper::Hyperparameters;
use super::params::NodeParams;
use super::priors::Priors;
use super::stats::SuffStats;
use crate::error::{Error, Result};
use crate::math;

/// Gradient of the objective, laid out like the parameters it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    /// `N x N`.
    pub logits: DMatrix<f64>,
    /// `k x N`.
    pub means: DMatrix<f64>,
    /// Lower-triangular `k x k` per node.
    pub chol: Vec<DMatrix<f64>>,
}

impl ElboGradient {
    pub fn max_abs(&self) -> f64 {
        self.chol
            .iter()
            .map(|m| m.amax())
            .fold(self.logits.amax().max(self.means.amax()), f64::max)
    }
}

/// Value of the objective.
pub fn elbo(params: &NodeParams, stats: &SuffStats, priors: &Priors, hyper: &Hyperparameters) -> Result<f64> {
    check_consistent(params, stats, priors)?;
    let mut total = transition_term(params, stats, hyper.transition_prior);
    for j in 0..params.nodes() {
        total += node_terms(params, stats, priors, j, false).value;
    }
    if !total.is_finite() {
        return Err(Error::Numerical("objective is not finite".into()));
    }
    Ok(total)
}

/// Analytic gradient of [`elbo`].
pub fn elbo_gradient(
    params: &NodeParams,
    stats: &SuffStats,
    priors: &Priors,
    hyper: &Hyperparameters,
) -> Result<ElboGradient> {
    check_consistent(params, stats, priors)?;
    let n = params.nodes();
    let k = params.dim();
    let row_weight = transition_row_weights(stats, hyper.transition_prior);
    let a = params.transition();
    let beta = hyper.transition_prior - 1.0;
    let logits = DMatrix::from_fn(n, n, |i, j| stats.transitions[(i, j)] + beta - a[(i, j)] * row_weight[i]);
    let mut means = DMatrix::zeros(k, n);
    let mut chol = Vec::with_capacity(n);
    for j in 0..n {
        let t = node_terms(params, stats, priors, j, true);
        means.set_column(j, &t.grad_mean);
        chol.push(t.grad_chol);
    }
    let g = ElboGradient { logits, means, chol };
    if !g.max_abs().is_finite() {
        return Err(Error::Numerical("objective gradient is not finite".into()));
    }
    Ok(g)
}

pub(crate) fn check_consistent(params: &NodeParams, stats: &SuffStats, priors: &Priors) -> Result<()> {
    let (n, k) = (params.nodes(), params.dim());
    if stats.nodes() != n || stats.dim() != k {
        return Err(Error::shape("sufficient statistics", (k, n), (stats.dim(), stats.nodes())));
    }
    if priors.mu0.shape() != (k, n) {
        return Err(Error::shape("prior means", (k, n), priors.mu0.shape()));
    }
    Ok(())
}

/// `Σᵢⱼ (N̂ᵢⱼ + β − 1) log Aᵢⱼ`, with `log A` formed from the logits directly.
pub(crate) fn transition_term(params: &NodeParams, stats: &SuffStats, beta: f64) -> f64 {
    let n = params.nodes();
    let logits = params.logits();
    let mut total = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let lse = crate::linalg::log_sum_exp(row.iter().copied());
        for j in 0..n {
            let c = stats.transitions[(i, j)] + beta - 1.0;
            if c != 0.0 {
                total += c * (logits[(i, j)] - lse);
            }
        }
    }
    total
}

/// Row sums of `N̂ + β − 1`.
pub(crate) fn transition_row_weights(stats: &SuffStats, beta: f64) -> Vec<f64> {
    let n = stats.nodes();
    let mut w = alloc::vec![(beta - 1.0) * n as f64; n];
    for j in 0..n {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi += stats.transitions[(i, j)];
        }
    }
    w
}

pub(crate) struct NodeTerms {
    pub value: f64,
    pub grad_mean: DVector<f64>,
    pub grad_chol: DMatrix<f64>,
}

/// Contribution of node `j` and, when asked, its gradient.
///
/// With `P = L Lᵀ`, `s = Ŝ₁ + λμ₀`, `G = Ψ + Ŝ₂ + λμ₀μ₀ᵀ` and
/// `c = ν + n̂ + k + 2`:
///   value   = sᵀPμ − ½ tr(G P) − ½(λ + n̂) μᵀPμ + c Σ log Lᵢᵢ
///   ∂/∂μ    = P (s − (λ + n̂) μ)
///   ∂/∂L    = tril(s uᵀ + μ vᵀ − G L − (λ + n̂) μ uᵀ) + diag(c / Lᵢᵢ)
/// where `u = Lᵀμ` and `v = Lᵀs`.
pub(crate) fn node_terms(params: &NodeParams, stats: &SuffStats, priors: &Priors, j: usize, grad: bool) -> NodeTerms {
    let k = params.dim();
    let l = params.chol(j);
    let mu = DVector::from_column_slice(params.mean(j));
    let lambda = priors.lambda[j];
    let nhat = stats.counts[j];
    let mu0 = priors.mu0.column(j);
    let s = stats.s1.column(j) + mu0 * lambda;
    let mut g = &priors.psi + &stats.s2[j];
    g.ger(lambda, &mu0, &mu0, 1.0);
    let u = l.tr_mul(&mu);
    let v = l.tr_mul(&s);
    let gl = &g * l;
    let tr_gp = gl.component_mul(l).sum();
    let c = priors.nu[j] + nhat + k as f64 + 2.0;
    let weight = lambda + nhat;
    let mut log_diag = 0.0;
    for i in 0..k {
        log_diag += math::ln(l[(i, i)]);
    }
    let value = v.dot(&u) - 0.5 * (tr_gp + weight * u.norm_squared()) + c * log_diag;
    if !grad {
        return NodeTerms { value, grad_mean: DVector::zeros(0), grad_chol: DMatrix::zeros(0, 0) };
    }
    let grad_mean = l * (&v - &u * weight);
    let mut grad_chol = -gl;
    grad_chol.ger(1.0, &s, &u, 1.0);
    grad_chol.ger(1.0, &mu, &v, 1.0);
    grad_chol.ger(-weight, &mu, &u, 1.0);
    for col in 1..k {
        for row in 0..col {
            grad_chol[(row, col)] = 0.0;
        }
    }
    for i in 0..k {
        grad_chol[(i, i)] += c / l[(i, i)];
    }
    NodeTerms { value, grad_mean, grad_chol }
}
