mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use streamtile_core::model::{forward_filter, gaussian_logpdf, update_suff_stats, NodeParams, SuffStats};

/// Classic normalized forward recursion with densities from dense covariances.
fn textbook_forward(params: &NodeParams, alpha0: &DVector<f64>, xs: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = params.nodes();
    let a = params.transition();
    let covs: Vec<DMatrix<f64>> = (0..n).map(|j| covariance_of(params.chol(j))).collect();
    let mut alpha = alpha0.clone();
    let mut out = Vec::new();
    for x in xs.column_iter() {
        let mut next = DVector::zeros(n);
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += alpha[i] * a[(i, j)];
            }
            next[j] = s * dense_pdf(params.mean(j), &covs[j], x.as_slice());
        }
        let z = next.sum();
        alpha = next / z;
        out.push(alpha.clone());
    }
    out
}

#[test]
fn filter_matches_textbook_forward_algorithm() {
    let mut r = rng(11);
    let (n, k) = (4, 2);
    let params = random_params(n, k, 1.0, &mut r);
    let xs = gaussian(k, 50, &mut r) * 1.2;
    let alpha0 = DVector::from_element(n, 0.25);
    let oracle = textbook_forward(&params, &alpha0, &xs);
    let mut alpha = alpha0;
    let mut worst: f64 = 0.0;
    for (t, x) in xs.column_iter().enumerate() {
        let out = forward_filter(&params, &alpha, x.as_slice()).unwrap();
        alpha = out.alpha;
        worst = worst.max((&alpha - &oracle[t]).amax());
    }
    assert!(worst < 1e-10, "max deviation {worst:e}");
}

#[test]
fn filter_update_matrix_is_normalized_joint() {
    let mut r = rng(12);
    let params = random_params(5, 3, 1.0, &mut r);
    let alpha = random_simplex(5, &mut r);
    let x = [0.3, -0.2, 0.5];
    let out = forward_filter(&params, &alpha, &x).unwrap();
    let a = params.transition();
    let b: Vec<f64> = (0..5).map(|j| gaussian_logpdf(params.mean(j), params.chol(j), &x).unwrap().exp()).collect();
    let z: f64 = (0..5).flat_map(|i| (0..5).map(move |j| (i, j))).map(|(i, j)| alpha[i] * a[(i, j)] * b[j]).sum();
    for i in 0..5 {
        for j in 0..5 {
            let expect = a[(i, j)] * b[j] / z;
            assert!((out.gamma[(i, j)] - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }
    for j in 0..5 {
        let marginal: f64 = (0..5).map(|i| alpha[i] * out.gamma[(i, j)]).sum();
        assert!((marginal - out.alpha[j]).abs() < 1e-12);
    }
}

#[test]
fn identity_transitions_weight_prior_by_emission() {
    let mut r = rng(13);
    let mut params = random_params(3, 2, 1.0, &mut r);
    // Strongly diagonal logits give A = I up to exp(-800) underflow.
    let logits = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { -800.0 });
    params.set_logits(logits).unwrap();
    let alpha = DVector::from_column_slice(&[0.5, 0.3, 0.2]);
    let x = [0.1, 0.4];
    let out = forward_filter(&params, &alpha, &x).unwrap();
    let w: Vec<f64> = (0..3).map(|j| alpha[j] * params.log_density(j, &x).exp()).collect();
    let s: f64 = w.iter().sum();
    for j in 0..3 {
        assert!((out.alpha[j] - w[j] / s).abs() < 1e-12);
    }
}

#[test]
fn symmetric_two_node_model_keeps_posterior() {
    let l = DMatrix::identity(2, 2);
    let means = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
    let params = NodeParams::new(means, vec![l.clone(), l], DMatrix::zeros(2, 2)).unwrap();
    let out = forward_filter(&params, &DVector::from_element(2, 0.5), &[0.0, 3.0]).unwrap();
    assert!((out.alpha[0] - 0.5).abs() < 1e-15 && (out.alpha[1] - 0.5).abs() < 1e-15);
}

#[test]
fn statistics_follow_discounted_accumulation() {
    let mut r = rng(14);
    let (n, k) = (4, 3);
    let params = random_params(n, k, 1.0, &mut r);
    let eps = 0.05;
    let mut stats = SuffStats::zeros(n, k);
    let mut alpha = DVector::from_element(n, 0.25);
    let mut n_hat = DMatrix::<f64>::zeros(n, n);
    let mut s1 = DMatrix::<f64>::zeros(k, n);
    let mut s2 = vec![DMatrix::<f64>::zeros(k, k); n];
    for _ in 0..40 {
        let x = gaussian(k, 1, &mut r);
        let out = forward_filter(&params, &alpha, x.as_slice()).unwrap();
        update_suff_stats(&mut stats, &alpha, &out.gamma, x.as_slice(), eps).unwrap();
        for i in 0..n {
            for j in 0..n {
                n_hat[(i, j)] = (1.0 - eps) * n_hat[(i, j)] + alpha[i] * out.gamma[(i, j)];
            }
        }
        for j in 0..n {
            let w = out.alpha[j];
            let col = s1.column(j) * (1.0 - eps) + &x * w;
            s1.set_column(j, &col);
            s2[j] = &s2[j] * (1.0 - eps) + &x * x.transpose() * w;
        }
        alpha = out.alpha;
        stats.set_alpha(alpha.clone()).unwrap();
    }
    assert!((stats.transitions() - &n_hat).amax() < 1e-12);
    assert!((stats.s1() - &s1).amax() < 1e-12);
    for j in 0..n {
        assert!((&stats.s2()[j] - &s2[j]).amax() < 1e-12);
        assert!((stats.counts()[j] - n_hat.column(j).sum()).abs() < 1e-12);
    }
}

#[test]
fn full_forgetting_keeps_only_the_current_step() {
    let mut r = rng(15);
    let params = random_params(3, 2, 1.0, &mut r);
    let alpha = random_simplex(3, &mut r);
    let mut stats = SuffStats::zeros(3, 2);
    for _ in 0..5 {
        let x = gaussian(2, 1, &mut r);
        let out = forward_filter(&params, &alpha, x.as_slice()).unwrap();
        update_suff_stats(&mut stats, &alpha, &out.gamma, x.as_slice(), 0.0).unwrap();
    }
    let x = [0.7, -0.4];
    let out = forward_filter(&params, &alpha, &x).unwrap();
    update_suff_stats(&mut stats, &alpha, &out.gamma, &x, 1.0).unwrap();
    for j in 0..3 {
        assert!((stats.s1()[(0, j)] - out.alpha[j] * 0.7).abs() < 1e-15);
        assert!((stats.s1()[(1, j)] + out.alpha[j] * 0.4).abs() < 1e-15);
        for i in 0..3 {
            assert!((stats.transitions()[(i, j)] - alpha[i] * out.gamma[(i, j)]).abs() < 1e-15);
        }
    }
}

#[test]
fn repeated_point_accumulates_posterior_mass() {
    let mut r = rng(16);
    let params = random_params(3, 2, 1.0, &mut r);
    let mut stats = SuffStats::zeros(3, 2);
    let mut alpha = DVector::from_element(3, 1.0 / 3.0);
    let x = [0.2, 0.9];
    let mut mass = DVector::zeros(3);
    for _ in 0..12 {
        let out = forward_filter(&params, &alpha, &x).unwrap();
        update_suff_stats(&mut stats, &alpha, &out.gamma, &x, 0.0).unwrap();
        mass += &out.alpha;
        alpha = out.alpha;
    }
    for j in 0..3 {
        assert!((stats.s1()[(0, j)] - mass[j] * 0.2).abs() < 1e-13);
        assert!((stats.s1()[(1, j)] - mass[j] * 0.9).abs() < 1e-13);
    }
}

#[test]
fn logpdf_matches_dense_evaluation() {
    let mut r = rng(17);
    for _ in 0..20 {
        let l = random_chol(5, 0.5, 1.5, &mut r);
        let mu = gaussian(5, 1, &mut r);
        let x = gaussian(5, 1, &mut r);
        let got = gaussian_logpdf(mu.as_slice(), &l, x.as_slice()).unwrap();
        let want = dense_logpdf(mu.as_slice(), &covariance_of(&l), x.as_slice());
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
    let one = DMatrix::identity(1, 1);
    assert!((gaussian_logpdf(&[0.0], &one, &[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-15);
    let two = DMatrix::identity(2, 2);
    let v = gaussian_logpdf(&[1.0, 2.0], &two, &[1.0, 2.0]).unwrap();
    assert!((v + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(gaussian_logpdf(&[0.0, 0.0], &bad, &[0.0, 0.0]).is_err());
}
