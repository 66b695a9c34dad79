#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use streamtile_core::model::NodeParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).unwrap().sample(rng)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Lower-triangular factor with diagonal in `[lo, hi]` and small off-diagonal entries.
pub fn random_chol(k: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |r, c| match r.cmp(&c) {
        core::cmp::Ordering::Equal => uniform(rng, lo, hi),
        core::cmp::Ordering::Greater => 0.3 * normal(rng),
        core::cmp::Ordering::Less => 0.0,
    })
}

pub fn random_params(n: usize, k: usize, spread: f64, rng: &mut ChaCha8Rng) -> NodeParams {
    let means = gaussian(k, n, rng) * spread;
    let chol = (0..n).map(|_| random_chol(k, 0.6, 1.4, rng)).collect();
    let logits = gaussian(n, n, rng);
    NodeParams::new(means, chol, logits).unwrap()
}

/// Row-stochastic matrix with entries bounded away from zero.
pub fn random_stochastic(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(n, n, |_, _| uniform(rng, 0.05, 1.0));
    for mut row in a.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    a
}

pub fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| uniform(rng, 0.05, 1.0));
    let s = v.sum();
    v / s
}

/// Covariance `(L Lᵀ)⁻¹` by explicit inversion.
pub fn covariance_of(l: &DMatrix<f64>) -> DMatrix<f64> {
    (l * l.transpose()).try_inverse().unwrap()
}

/// Gaussian density from a dense covariance: `exp(-½ dᵀΣ⁻¹d) / sqrt((2π)^k det Σ)`.
pub fn dense_pdf(mu: &[f64], cov: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = mu.len();
    let d = DVector::from_iterator(k, x.iter().zip(mu).map(|(a, b)| a - b));
    let inv = cov.clone().try_inverse().unwrap();
    let q = (d.transpose() * inv * &d)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(k as i32) * cov.determinant()).sqrt()
}

pub fn dense_logpdf(mu: &[f64], cov: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = mu.len();
    let d = DVector::from_iterator(k, x.iter().zip(mu).map(|(a, b)| a - b));
    let inv = cov.clone().try_inverse().unwrap();
    let q = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (q + cov.determinant().ln() + k as f64 * (2.0 * std::f64::consts::PI).ln())
}
