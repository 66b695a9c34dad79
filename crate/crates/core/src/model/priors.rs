use nalgebra::{DMatrix, DVector};
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::stats::SuffStats;
use crate::error::{Error, Result};
use crate::linalg::{covariance_jitter, floor_psd, precision_cholesky};
use crate::math;

/// Empirical-Bayes NIW priors shared across nodes, plus the global moments
/// they are derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    /// Prior means, `k x N`.
    pub(crate) mu0: DMatrix<f64>,
    /// Shared prior scale `Ψ`.
    pub(crate) psi: DMatrix<f64>,
    pub(crate) lambda: DVector<f64>,
    pub(crate) nu: DVector<f64>,
    pub(crate) mu_bar: DVector<f64>,
    pub(crate) sigma_bar: DMatrix<f64>,
    /// Per-dimension step scale of the prior-mean walk.
    pub(crate) eta: DVector<f64>,
    /// Precision Cholesky factor of `Ψ`; the shape fresh nodes start with.
    pub(crate) psi_chol: DMatrix<f64>,
}

impl Priors {
    /// Priors centred on `mu_bar` with global covariance `sigma_bar`.
    pub fn from_moments(
        nodes: usize,
        mu_bar: DVector<f64>,
        sigma_bar: &DMatrix<f64>,
        lambda: f64,
        nu: f64,
        walk_rate: f64,
    ) -> Result<Self> {
        let k = mu_bar.len();
        if sigma_bar.shape() != (k, k) {
            return Err(Error::shape("global covariance", (k, k), sigma_bar.shape()));
        }
        let sigma_bar = floor_psd(sigma_bar)?;
        let psi = prior_scale(&sigma_bar, nodes);
        let psi_chol = precision_cholesky(&psi)?;
        let eta = walk_scale(&sigma_bar, walk_rate);
        let mu0 = DMatrix::from_fn(k, nodes, |r, _| mu_bar[r]);
        Ok(Self {
            mu0,
            psi,
            lambda: DVector::from_element(nodes, lambda),
            nu: DVector::from_element(nodes, nu),
            mu_bar,
            sigma_bar,
            eta,
            psi_chol,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        mu0: DMatrix<f64>,
        psi: DMatrix<f64>,
        lambda: DVector<f64>,
        nu: DVector<f64>,
        mu_bar: DVector<f64>,
        sigma_bar: DMatrix<f64>,
        eta: DVector<f64>,
    ) -> Result<Self> {
        let (k, n) = mu0.shape();
        if psi.shape() != (k, k) || sigma_bar.shape() != (k, k) {
            return Err(Error::invalid("prior scale matrices must be k x k"));
        }
        if lambda.len() != n || nu.len() != n || mu_bar.len() != k || eta.len() != k {
            return Err(Error::invalid("prior vectors have inconsistent lengths"));
        }
        if lambda.iter().chain(nu.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("NIW pseudo-counts must be positive"));
        }
        let psi_chol = precision_cholesky(&psi)?;
        Ok(Self { mu0, psi, lambda, nu, mu_bar, sigma_bar, eta, psi_chol })
    }

    pub fn mu0(&self) -> &DMatrix<f64> {
        &self.mu0
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// Precision Cholesky factor of `Ψ`.
    pub fn psi_chol(&self) -> &DMatrix<f64> {
        &self.psi_chol
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }

    pub fn mu_bar(&self) -> &DVector<f64> {
        &self.mu_bar
    }

    pub fn sigma_bar(&self) -> &DMatrix<f64> {
        &self.sigma_bar
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    /// Re-estimates the global moments from the statistics, steps every prior
    /// mean once along its walk, and refreshes `Ψ`.
    ///
    /// Fails with `Precondition` (leaving everything unchanged) when the
    /// statistics carry no mass.
    pub fn update<R: RngCore>(&mut self, stats: &SuffStats, walk_rate: f64, rng: &mut R) -> Result<()> {
        let k = self.mu_bar.len();
        let nodes = self.mu0.ncols();
        let total = stats.counts.sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Precondition("prior update needs nonzero statistics"));
        }
        let mut mu_bar = DVector::zeros(k);
        for j in 0..nodes {
            mu_bar += stats.s1.column(j);
        }
        mu_bar /= total;
        let mut second = DMatrix::zeros(k, k);
        for m in &stats.s2 {
            second += m;
        }
        second /= total;
        let sigma_bar = floor_psd(&(second - &mu_bar * mu_bar.transpose()))?;
        let psi = prior_scale(&sigma_bar, nodes);
        let psi_chol = precision_cholesky(&psi)?;
        let eta = walk_scale(&sigma_bar, walk_rate);
        prior_walk_step(&mut self.mu0, &mu_bar, &eta, walk_rate, rng);
        self.mu_bar = mu_bar;
        self.sigma_bar = sigma_bar;
        self.eta = eta;
        self.psi = psi;
        self.psi_chol = psi_chol;
        Ok(())
    }
}

/// `Ψ = Σ̄ / N^(2/k) + jitter·I`.
pub fn prior_scale(sigma_bar: &DMatrix<f64>, nodes: usize) -> DMatrix<f64> {
    let k = sigma_bar.nrows();
    let shrink = math::powf(nodes as f64, 2.0 / k as f64);
    let mut psi = sigma_bar / shrink;
    let jitter = covariance_jitter(sigma_bar);
    for i in 0..k {
        psi[(i, i)] += jitter;
    }
    psi
}

/// `η = sqrt(rate · diag Σ̄)`.
pub fn walk_scale(sigma_bar: &DMatrix<f64>, rate: f64) -> DVector<f64> {
    DVector::from_iterator(
        sigma_bar.nrows(),
        sigma_bar.diagonal().iter().map(|&v| math::sqrt(rate * v.max(0.0))),
    )
}

/// One step of the mean-reverting walk for every column of `mu0`:
/// `μ₀ⱼ ← (1 − rate)·μ₀ⱼ + rate·μ̄ + η∘z`, `z ~ N(0, I)`.
pub fn prior_walk_step<R: RngCore>(
    mu0: &mut DMatrix<f64>,
    mu_bar: &DVector<f64>,
    eta: &DVector<f64>,
    rate: f64,
    rng: &mut R,
) {
    let k = mu0.nrows();
    for mut col in mu0.column_iter_mut() {
        for r in 0..k {
            let z: f64 = StandardNormal.sample(rng);
            col[r] = (1.0 - rate) * col[r] + rate * mu_bar[r] + eta[r] * z;
        }
    }
}
