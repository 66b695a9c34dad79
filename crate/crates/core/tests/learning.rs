mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use streamtile_core::model::{
    forward_filter, prior_walk_step, update_suff_stats, Hyperparameters, Model, SuffStats,
};
use streamtile_core::predict::Predictive;
use streamtile_core::simulate::{generate, TrajectoryConfig};

fn vdp(steps: usize) -> DMatrix<f64> {
    generate(&TrajectoryConfig::van_der_pol(steps, 0.05, 3)).unwrap().noisy
}

#[test]
fn means_converge_to_a_repeated_point() {
    let mut r = rng(1);
    let mut hyper = Hyperparameters::new(2, 2);
    hyper.teleport_threshold = f64::NEG_INFINITY;
    hyper.step_size = 1e-2;
    let mut model = Model::init(&gaussian(2, 30, &mut r), hyper).unwrap();
    let x = [1.5, -1.0];
    let dist = |m: &Model| {
        (0..2)
            .map(|j| {
                let mu = m.params().mean(j);
                ((mu[0] - x[0]).powi(2) + (mu[1] - x[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let initial = dist(&model);
    for _ in 0..500 {
        model.observe(&x).unwrap();
    }
    assert!(dist(&model) < 0.1 * initial, "{} vs initial {initial}", dist(&model));
    model.check_invariants().unwrap();
}

#[test]
fn posterior_stays_a_distribution_on_a_stream() {
    let data = vdp(400);
    let mut hyper = Hyperparameters::new(50, 2);
    hyper.step_size = 1e-2;
    let mut model = Model::init(&data.columns(0, 30).into_owned(), hyper).unwrap();
    for x in data.column_iter().skip(30) {
        model.observe(x.as_slice()).unwrap();
        let alpha = model.stats().alpha();
        assert!((alpha.sum() - 1.0).abs() < 1e-10);
        assert!(alpha.iter().all(|&a| a >= 0.0));
    }
    model.check_invariants().unwrap();
}

#[test]
fn disabled_teleporting_matches_a_never_firing_threshold() {
    let data = vdp(300);
    let buffer = data.columns(0, 30).into_owned();
    let mut off = Hyperparameters::new(20, 2);
    off.teleport_threshold = f64::NEG_INFINITY;
    let mut low = off.clone();
    low.teleport_threshold = -1e300;
    let mut a = Model::init(&buffer, off).unwrap();
    let mut b = Model::init(&buffer, low).unwrap();
    for x in data.column_iter().skip(30) {
        let ra = a.observe(x.as_slice()).unwrap();
        let rb = b.observe(x.as_slice()).unwrap();
        assert_eq!(ra.teleported, None);
        assert_eq!(rb.teleported, None);
    }
    assert_eq!(a.params(), b.params());
    assert_eq!(a.stats(), b.stats());
    assert_eq!(a.priors(), b.priors());
}

#[test]
fn per_sample_stage_matches_filter_and_statistics_functions() {
    let data = vdp(60);
    let mut hyper = Hyperparameters::new(6, 2);
    hyper.teleport_threshold = f64::NEG_INFINITY;
    let mut model = Model::init(&data.columns(0, 30).into_owned(), hyper.clone()).unwrap();
    let params = model.params().clone();
    let mut stats = SuffStats::zeros(6, 2);
    let mut alpha = stats.alpha().clone();
    for t in 30..45 {
        let x = data.column(t);
        model.observe_with(x.as_slice(), usize::MAX, &mut ()).unwrap();
        let out = forward_filter(&params, &alpha, x.as_slice()).unwrap();
        update_suff_stats(&mut stats, &alpha, &out.gamma, x.as_slice(), 0.01).unwrap();
        alpha = out.alpha;
    }
    assert!((model.stats().transitions() - stats.transitions()).amax() < 1e-12);
    assert!((model.stats().s1() - stats.s1()).amax() < 1e-12);
    assert!((model.stats().alpha() - &alpha).amax() < 1e-12);
}

#[test]
fn far_points_are_breadcrumbed_in_index_order() {
    let mut r = rng(5);
    let mut model = Model::init(&gaussian(2, 30, &mut r), Hyperparameters::new(8, 2)).unwrap();
    for (i, c) in [100.0, 200.0, 300.0].iter().enumerate() {
        let x = [*c, -*c];
        let report = model.observe_with(&x, usize::MAX, &mut ()).unwrap();
        assert_eq!(report.teleported, Some(i));
        assert_eq!(model.params().mean(i), &x);
        assert!(model.stats().alpha()[i] > 1.0 - 1e-9);
    }
    model.check_invariants().unwrap();
}

#[test]
fn teleport_reclaims_least_occupied_node_once_all_are_used() {
    let data = vdp(200);
    let mut model = Model::init(&data.columns(0, 30).into_owned(), Hyperparameters::new(5, 2)).unwrap();
    model.observe_batch(&data.columns(30, 170).into_owned(), 1).unwrap();
    let mut parts = model.to_parts();
    parts.dead_nodes.clear();
    let model_before = Model::from_parts(parts.clone()).unwrap();
    let counts = &parts.counts;
    let mut want = 0;
    for j in 1..counts.len() {
        if counts[j] < counts[want] {
            want = j;
        }
    }
    let mut model = model_before.clone();
    let x = [500.0, 500.0];
    let report = model.observe_with(&x, usize::MAX, &mut ()).unwrap();
    assert_eq!(report.teleported, Some(want));
    assert_eq!(model.params().mean(want), &x);
    assert!(model.stats().alpha()[want] > 1.0 - 1e-9);
    model.check_invariants().unwrap();

    // A point the model already explains leaves every node in place.
    let mut quiet = model_before;
    let inside = quiet.params().mean(0).to_vec();
    let report = quiet.observe_with(&inside, usize::MAX, &mut ()).unwrap();
    assert_eq!(report.teleported, None);
    assert_eq!(quiet.params().means(), &parts.means);
}

#[test]
fn snapshots_are_detached_copies() {
    let data = vdp(100);
    let mut model = Model::init(&data.columns(0, 30).into_owned(), Hyperparameters::new(10, 2)).unwrap();
    model.observe_batch(&data.columns(30, 40).into_owned(), 1).unwrap();
    let snap = model.snapshot();
    assert_eq!(snap.transition(), model.params().transition());
    assert_eq!(snap.means(), model.params().means());
    assert_eq!(snap.alpha(), model.stats().alpha());
    for j in 0..10 {
        assert_eq!(snap.chol(j), model.params().chol(j));
    }
    assert_eq!(model.snapshot(), snap);
    let kept = snap.clone();
    model.observe_batch(&data.columns(70, 30).into_owned(), 1).unwrap();
    assert_eq!(snap, kept);
    assert_ne!(model.snapshot(), snap);
}

#[test]
fn identical_seeds_give_identical_models() {
    let data = vdp(150);
    let run = || {
        let mut m = Model::init(&data.columns(0, 30).into_owned(), Hyperparameters::new(12, 2)).unwrap();
        m.observe_batch(&data.columns(30, 120).into_owned(), 1).unwrap();
        m
    };
    assert!(run() == run());
}

#[test]
fn prior_walk_variance_matches_stationary_value() {
    let (k, nodes, steps, burn) = (2, 40, 100_000, 2_000);
    let rate = 0.02;
    let eta = DVector::from_column_slice(&[0.3, 1.1]);
    let mu_bar = DVector::from_column_slice(&[1.0, -2.0]);
    let mut mu0 = DMatrix::from_fn(k, nodes, |r, _| mu_bar[r]);
    let mut r = rng(8);
    let mut sum = DVector::<f64>::zeros(k);
    let mut sum_sq = DVector::<f64>::zeros(k);
    let mut count = 0.0;
    for t in 0..steps {
        prior_walk_step(&mut mu0, &mu_bar, &eta, rate, &mut r);
        if t >= burn {
            for col in mu0.column_iter() {
                for d in 0..k {
                    sum[d] += col[d];
                    sum_sq[d] += col[d] * col[d];
                }
            }
            count += nodes as f64;
        }
    }
    for d in 0..k {
        let mean = sum[d] / count;
        let var = sum_sq[d] / count - mean * mean;
        let want = eta[d] * eta[d] / (2.0 * rate - rate * rate);
        assert!((var - want).abs() < 0.05 * want, "dim {d}: {var} vs {want}");
    }
}

#[test]
fn noiseless_prior_walk_contracts_geometrically() {
    let mu_bar = DVector::from_column_slice(&[2.0]);
    let mut mu0 = DMatrix::from_element(1, 3, 0.0);
    let mut r = rng(9);
    let eta = DVector::zeros(1);
    for t in 1..=50 {
        prior_walk_step(&mut mu0, &mu_bar, &eta, 0.02, &mut r);
        let gap = 2.0 * 0.98f64.powi(t);
        assert!(mu0.iter().all(|v| ((2.0 - v) - gap).abs() < 1e-12));
    }
}
