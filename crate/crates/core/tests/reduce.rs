mod common;

use common::*;
use nalgebra::DMatrix;
use streamtile_core::linalg::{principal_angle_sines, random_orthogonal};
use streamtile_core::reduce::{BasisAlignment, DensityMode, ProSvd, ReductionConfig, SparseProjection, StreamingReducer};
use streamtile_core::simulate::{generate, lift, TrajectoryConfig};

fn offline_top(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let svd = x.clone().svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let u = svd.u.unwrap();
    DMatrix::from_fn(x.nrows(), k, |r, c| u[(r, order[c])])
}

#[test]
fn streaming_subspace_matches_offline_svd() {
    for seed in 0..12 {
        let mut r = rng(seed);
        let (n, k, batch, batches) = (100, 6, 6, 50);
        let factors = gaussian(n, k, &mut r);
        let data = &factors * gaussian(k, batch * (batches + 1), &mut r);
        let mut svd = ProSvd::init(&data.columns(0, batch).into_owned(), k).unwrap();
        for b in 1..=batches {
            svd.update(&data.columns(b * batch, batch).into_owned()).unwrap();
        }
        let reference = offline_top(&data, k);
        let sines = principal_angle_sines(svd.basis(), &reference).unwrap();
        let worst = sines.iter().fold(0.0f64, |m, s| m.max(s.asin()));
        assert!(worst < 1e-8, "seed {seed}: largest principal angle {worst:e}");
    }
}

#[test]
fn full_rank_stream_tracks_dominant_subspace() {
    let mut r = rng(2);
    let (n, k) = (40, 3);
    let strong = gaussian(n, k, &mut r) * 10.0;
    let data = &strong * gaussian(k, 400, &mut r) + gaussian(n, 400, &mut r) * 0.01;
    let mut svd = ProSvd::init(&data.columns(0, 10).into_owned(), k).unwrap();
    for b in 1..40 {
        svd.update(&data.columns(b * 10, 10).into_owned()).unwrap();
    }
    let sines = principal_angle_sines(svd.basis(), &offline_top(&data, k)).unwrap();
    assert!(sines.amax() < 1e-3);
}

#[test]
fn rotation_minimizes_distance_to_previous_basis() {
    let mut r = rng(3);
    let (n, k) = (30, 4);
    let data = gaussian(n, 200, &mut r);
    let mut svd = ProSvd::init(&data.columns(0, 8).into_owned(), k).unwrap();
    for b in 1..20 {
        let trace = svd.update_traced(&data.columns(b * 8, 8).into_owned()).unwrap();
        let chosen = (svd.basis() - &trace.previous).norm();
        for _ in 0..100 {
            let q = random_orthogonal(k, &mut r);
            let other = (&trace.unrotated * q - &trace.previous).norm();
            assert!(chosen <= other + 1e-12, "rotation {chosen} beaten by {other}");
        }
    }
}

/// Columns drawn from a subspace that slowly rotates into fresh directions.
fn drifting_stream(n: usize, k: usize, steps: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let start = random_orthogonal(n, &mut r);
    let mut out = DMatrix::zeros(n, steps);
    for t in 0..steps {
        let phase = t as f64 / steps as f64 * std::f64::consts::FRAC_PI_2;
        let basis = start.columns(0, k) * phase.cos() + start.columns(k, k) * phase.sin();
        let coeffs = DMatrix::from_fn(k, 1, |i, _| (k - i) as f64 * normal(&mut r));
        out.set_column(t, &(basis * coeffs).column(0));
        for v in out.column_mut(t).iter_mut() {
            *v += 0.05 * normal(&mut r);
        }
    }
    out
}

fn total_drift(data: &DMatrix<f64>, k: usize, batch: usize, alignment: BasisAlignment) -> f64 {
    let mut svd = ProSvd::init(&data.columns(0, batch).into_owned(), k)
        .unwrap()
        .with_decay(0.98)
        .unwrap()
        .with_alignment(alignment);
    let mut drift = 0.0;
    for b in 1..data.ncols() / batch {
        let prev = svd.basis().clone();
        svd.update(&data.columns(b * batch, batch).into_owned()).unwrap();
        drift += (svd.basis() - prev).norm();
    }
    drift
}

#[test]
fn aligned_basis_drifts_no_more_than_raw_singular_vectors() {
    for seed in 0..3 {
        let data = drifting_stream(40, 4, 2000, 10 + seed);
        let aligned = total_drift(&data, 4, 5, BasisAlignment::Procrustes);
        let raw = total_drift(&data, 4, 5, BasisAlignment::SingularVectors);
        assert!(aligned <= raw, "aligned {aligned} raw {raw}");
    }
}

#[test]
fn projection_bounds_pairwise_distortion() {
    let (d, n, pairs) = (10_000, 200, 1_000);
    let p = SparseProjection::new(d, n, 5, DensityMode::Achlioptas).unwrap();
    let mut r = rng(6);
    let mut ratios = Vec::with_capacity(pairs);
    for _ in 0..pairs / 100 {
        let diff = gaussian(d, 100, &mut r) - gaussian(d, 100, &mut r);
        let proj = p.project(&diff).unwrap();
        for c in 0..100 {
            ratios.push((proj.column(c).norm_squared() / diff.column(c).norm_squared() - 1.0).abs());
        }
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max = ratios[pairs - 1];
    let median = 0.5 * (ratios[pairs / 2 - 1] + ratios[pairs / 2]);
    assert!(max < 0.5, "max distortion {max}");
    assert!(median < 0.2, "median distortion {median}");
}

#[test]
fn projection_preserves_squared_norm_on_average() {
    let (d, n, seeds) = (1000, 50, 10_000);
    let mut r = rng(7);
    let x = gaussian(d, 1, &mut r);
    let x = &x / x.norm();
    let mean: f64 = (0..seeds)
        .map(|s| {
            let p = SparseProjection::new(d, n, s as u64, DensityMode::Achlioptas).unwrap();
            p.project_vec(x.as_slice()).unwrap().norm_squared()
        })
        .sum::<f64>()
        / seeds as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean squared norm {mean}");
}

#[test]
fn reducer_recovers_lifted_plane() {
    let traj = generate(&TrajectoryConfig::van_der_pol(600, 0.0, 0)).unwrap();
    let lifted = lift(&traj.clean, 50, 9, 0.0).unwrap();
    let mut config = ReductionConfig::new(50, 50, 2);
    config.batch = 10;
    let mut reducer = StreamingReducer::new(config).unwrap();
    let latent = reducer.reduce_all(&lifted.data).unwrap();
    assert_eq!(latent.shape(), (2, 600));
    let tracker = reducer.tracker().unwrap();
    let sines = principal_angle_sines(tracker.basis(), &lifted.basis).unwrap();
    assert!(sines.amax() < 1e-6, "largest sine {:e}", sines.amax());
}
