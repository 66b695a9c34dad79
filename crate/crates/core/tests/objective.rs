mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use streamtile_core::model::{elbo, elbo_gradient, Hyperparameters, NodeParams, Priors, SuffStats};

struct Point {
    params: NodeParams,
    stats: SuffStats,
    priors: Priors,
    hyper: Hyperparameters,
}

fn random_point(n: usize, k: usize, seed: u64) -> Point {
    let mut r = rng(seed);
    let params = random_params(n, k, 1.0, &mut r);
    let transitions = DMatrix::from_fn(n, n, |_, _| uniform(&mut r, 0.0, 3.0));
    let counts = DVector::from_iterator(n, (0..n).map(|j| transitions.column(j).sum()));
    let s1 = gaussian(k, n, &mut r);
    let s2 = (0..n)
        .map(|_| {
            let g = gaussian(k, k + 3, &mut r);
            &g * g.transpose()
        })
        .collect();
    let stats = SuffStats::from_parts(transitions, counts, s1, s2, random_simplex(n, &mut r)).unwrap();
    let g = gaussian(k, k + 2, &mut r);
    let sigma = &g * g.transpose() / (k + 2) as f64;
    let mut priors = Priors::from_moments(n, gaussian(k, 1, &mut r).column(0).into(), &sigma, 0.5, 0.3, 0.02).unwrap();
    // Spread the prior means so every node has its own anchor.
    let mu0 = gaussian(k, n, &mut r);
    let p = &priors;
    priors = Priors::from_parts(
        mu0,
        p.psi().clone(),
        p.lambda().clone(),
        p.nu().clone(),
        p.mu_bar().clone(),
        p.sigma_bar().clone(),
        p.eta().clone(),
    )
    .unwrap();
    let mut hyper = Hyperparameters::new(n, k);
    hyper.transition_prior = 1.5;
    Point { params, stats, priors, hyper }
}

fn value(p: &Point, params: &NodeParams) -> f64 {
    elbo(params, &p.stats, &p.priors, &p.hyper).unwrap()
}

fn rebuild(params: &NodeParams, f: impl FnOnce(&mut DMatrix<f64>, &mut Vec<DMatrix<f64>>, &mut DMatrix<f64>)) -> NodeParams {
    let (mut means, mut chol, mut logits) = params.clone().into_parts();
    f(&mut means, &mut chol, &mut logits);
    NodeParams::new(means, chol, logits).unwrap()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[test]
fn gradient_matches_central_differences() {
    let (n, k) = (5, 3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let p = random_point(n, k, 100 + seed);
        let g = elbo_gradient(&p.params, &p.stats, &p.priors, &p.hyper).unwrap();
        let mut check = |analytic: f64, up: NodeParams, down: NodeParams| {
            let fd = (value(&p, &up) - value(&p, &down)) / (2.0 * h);
            worst = worst.max(rel_err(analytic, fd));
        };
        for i in 0..n {
            for j in 0..n {
                let up = rebuild(&p.params, |_, _, a| a[(i, j)] += h);
                let down = rebuild(&p.params, |_, _, a| a[(i, j)] -= h);
                check(g.logits[(i, j)], up, down);
            }
        }
        for j in 0..n {
            for r in 0..k {
                let up = rebuild(&p.params, |m, _, _| m[(r, j)] += h);
                let down = rebuild(&p.params, |m, _, _| m[(r, j)] -= h);
                check(g.means[(r, j)], up, down);
            }
            for c in 0..k {
                for r in c..k {
                    let up = rebuild(&p.params, |_, l, _| l[j][(r, c)] += h);
                    let down = rebuild(&p.params, |_, l, _| l[j][(r, c)] -= h);
                    check(g.chol[j][(r, c)], up, down);
                }
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

/// Weighted Gaussian log-likelihood plus unnormalized Normal-inverse-Wishart
/// log-prior for one scalar node, written out term by term.
fn scalar_objective(mu: f64, prec: f64, n_hat: f64, s1: f64, s2: f64, mu0: f64, lambda: f64, nu: f64, psi: f64) -> f64 {
    let k = 1.0;
    let likelihood = 0.5 * n_hat * prec.ln() - 0.5 * prec * (s2 - 2.0 * mu * s1 + n_hat * mu * mu);
    let mean_prior = 0.5 * prec.ln() - 0.5 * lambda * prec * (mu - mu0) * (mu - mu0);
    let cov_prior = 0.5 * (nu + k + 1.0) * prec.ln() - 0.5 * psi * prec;
    likelihood + mean_prior + cov_prior
}

#[test]
fn single_scalar_node_matches_term_by_term_objective() {
    let (lambda, nu, psi) = (1e-3, 1e-3, 1.0);
    let stats = SuffStats::from_parts(
        DMatrix::from_element(1, 1, 2.0),
        DVector::from_element(1, 2.0),
        DMatrix::from_element(1, 1, 3.0),
        vec![DMatrix::from_element(1, 1, 5.0)],
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let priors = Priors::from_parts(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, psi),
        DVector::from_element(1, lambda),
        DVector::from_element(1, nu),
        DVector::zeros(1),
        DMatrix::identity(1, 1),
        DVector::zeros(1),
    )
    .unwrap();
    let hyper = Hyperparameters::new(1, 1);
    for (mu, l) in [(0.0, 1.0), (1.3, 0.7), (-0.4, 2.2)] {
        let params = NodeParams::new(
            DMatrix::from_element(1, 1, mu),
            vec![DMatrix::from_element(1, 1, l)],
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let got = elbo(&params, &stats, &priors, &hyper).unwrap();
        let want = scalar_objective(mu, l * l, 2.0, 3.0, 5.0, 0.0, lambda, nu, psi);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn gradient_vanishes_at_posterior_mode() {
    let mut r = rng(7);
    let k = 3;
    let lambda = 0.4;
    let nu = 0.8;
    let n_hat = 6.5;
    let s1 = gaussian(k, 1, &mut r) * 2.0;
    let g = gaussian(k, 8, &mut r);
    let s2 = &g * g.transpose();
    let psi = DMatrix::identity(k, k) * 0.3;
    let mu0 = gaussian(k, 1, &mut r);
    let weight = lambda + n_hat;
    let mode_mean = (&s1 + &mu0 * lambda) / weight;
    let scatter = &psi + &s2 + &mu0 * mu0.transpose() * lambda - &mode_mean * mode_mean.transpose() * weight;
    let mode_cov = scatter / (nu + n_hat + k as f64 + 2.0);
    let l = mode_cov.try_inverse().unwrap().cholesky().unwrap().l();

    let stats = SuffStats::from_parts(
        DMatrix::from_element(1, 1, n_hat),
        DVector::from_element(1, n_hat),
        s1,
        vec![s2],
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let priors = Priors::from_parts(
        mu0,
        psi,
        DVector::from_element(1, lambda),
        DVector::from_element(1, nu),
        DVector::zeros(k),
        DMatrix::identity(k, k),
        DVector::zeros(k),
    )
    .unwrap();
    let params = NodeParams::new(mode_mean, vec![l], DMatrix::zeros(1, 1)).unwrap();
    let grad = elbo_gradient(&params, &stats, &priors, &Hyperparameters::new(1, k)).unwrap();
    let norm = (grad.logits.norm_squared() + grad.means.norm_squared() + grad.chol[0].norm_squared()).sqrt();
    assert!(norm < 1e-8, "gradient norm {norm:e}");
}

#[test]
fn empty_node_is_pulled_toward_its_prior_mean() {
    let mut p = random_point(3, 2, 9);
    let (t, _, s1, mut s2, alpha) = p.stats.clone().into_parts();
    let mut t = t;
    let mut s1 = s1;
    t.column_mut(1).fill(0.0);
    s1.column_mut(1).fill(0.0);
    s2[1].fill(0.0);
    let counts = DVector::from_iterator(3, (0..3).map(|j| t.column(j).sum()));
    p.stats = SuffStats::from_parts(t, counts, s1, s2, alpha).unwrap();
    let g = elbo_gradient(&p.params, &p.stats, &p.priors, &p.hyper).unwrap();
    let l = p.params.chol(1);
    let precision = l * l.transpose();
    let diff = p.priors.mu0().column(1) - DVector::from_column_slice(p.params.mean(1));
    let expected = precision * diff * p.priors.lambda()[1];
    assert!((g.means.column(1) - expected).amax() < 1e-12);
}
