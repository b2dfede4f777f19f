//! Monte Carlo and dense-oracle checks for the measurement operators.

mod common;

use common::{dense_pinv_apply, materialize, rel_err, vec_rel_err};
use genprior::operators::bicubic_kernel;
use genprior::tensor::norm2;
use genprior::{CgConfig, LinearOperator, RngStream, Tensor};

#[test]
fn gaussian_operator_is_near_isometric_in_expectation() {
    // E||Ax||^2 = ||x||^2 for unit x; average over 500 fresh draws.
    let mut rng = RngStream::new(200);
    let (m, n) = (1000, 100);
    let x = {
        let raw = rng.sample_gaussian(&[n], 0.0, 1.0).unwrap();
        raw.scale(1.0 / norm2(&raw))
    };
    let mut acc = 0.0;
    for draw in 0..500 {
        let op = LinearOperator::gaussian(&mut rng.fork(&format!("draw/{draw}")), m, n).unwrap();
        let ax = op.apply(&x).unwrap();
        acc += norm2(&ax).powi(2);
    }
    let mean = acc / 500.0;
    assert!((mean - 1.0).abs() <= 0.10, "mean energy {mean}");
}

#[test]
fn gaussian_operator_entry_variance() {
    let (m, n) = (200, 200);
    let mut rng = RngStream::new(201);
    let op = LinearOperator::gaussian(&mut rng, m, n).unwrap();
    let dense = materialize(&op);
    let mut acc = 0.0;
    for row in &dense {
        for v in row {
            acc += v * v;
        }
    }
    let var = acc / (m * n) as f64;
    let want = 1.0 / m as f64;
    assert!(rel_err(var, want) <= 0.05, "entry variance {var} vs {want}");
}

#[test]
fn pseudoinverse_matches_dense_oracle_on_small_gaussian() {
    let mut rng = RngStream::new(202);
    let op = LinearOperator::gaussian(&mut rng, 4, 10).unwrap();
    let dense = materialize(&op);
    let r = rng.sample_gaussian(&[4], 0.0, 1.0).unwrap();
    let want = dense_pinv_apply(&dense, r.data());
    let cfg = CgConfig {
        tol: 1e-12,
        max_iter: 200,
    };
    let got = op.pseudoinverse_apply(&r, &cfg).unwrap();
    assert!(vec_rel_err(got.data(), &want) <= 1e-8);
}

#[test]
fn fourier_adjoint_inner_product_identity_100_trials() {
    let mut rng = RngStream::new(203);
    let (h, w) = (8, 8);
    let mask: Vec<bool> = (0..h * w).map(|i| i % 3 == 0 || i % 7 == 1).collect();
    let op = LinearOperator::subsampled_fourier(&mask, h, w).unwrap();
    for _ in 0..100 {
        let x = rng.sample_gaussian(&[op.n()], 0.0, 1.0).unwrap();
        let u = rng.sample_gaussian(&[op.m()], 0.0, 1.0).unwrap();
        let ax = op.apply(&x).unwrap();
        let atu = op.apply_adjoint(&u).unwrap();
        let lhs = genprior::tensor::dot(&ax, &u).unwrap();
        let rhs = genprior::tensor::dot(&x, &atu).unwrap();
        let bound = norm2(&ax) * norm2(&u) + norm2(&x) * norm2(&atu);
        assert!((lhs - rhs).abs() <= 1e-10 * bound);
    }
}

#[test]
fn blur_decimate_matches_dense_adjoint() {
    let kernel = bicubic_kernel(2);
    let op = LinearOperator::blur_decimate(&kernel, 2, 8, 8).unwrap();
    let dense = materialize(&op);
    let mut rng = RngStream::new(204);
    let u = rng.sample_gaussian(&[op.m()], 0.0, 1.0).unwrap();
    let want = common::dense_matvec_t(&dense, u.data());
    let got = op.apply_adjoint(&u).unwrap();
    assert!(vec_rel_err(got.data(), &want) <= 1e-12);
}

#[test]
fn identity_pseudoinverse_is_identity() {
    let op = LinearOperator::identity(9);
    let mut rng = RngStream::new(205);
    let r = rng.sample_gaussian(&[9], 0.0, 1.0).unwrap();
    let got = op.pseudoinverse_apply(&r, &CgConfig::default()).unwrap();
    assert!(vec_rel_err(got.data(), r.data()) <= 1e-12);
}

#[test]
fn full_index_sampling_projector_is_identity() {
    let op = LinearOperator::sampling((0..16).collect(), 16).unwrap();
    let mut rng = RngStream::new(206);
    let v = rng.sample_gaussian(&[16], 0.0, 1.0).unwrap();
    let p = op.project_row_space(&v, &CgConfig::default()).unwrap();
    assert!(vec_rel_err(p.data(), v.data()) <= 1e-10);
    let q = op.project_null_space(&v, &CgConfig::default()).unwrap();
    assert!(norm2(&q) <= 1e-10 * norm2(&v));
}

#[test]
fn uniform_blur_pseudoinverse_matches_dense_oracle() {
    // Small, well-conditioned instance: 3x3 box blur on an 8x8 image.
    let op = LinearOperator::uniform_blur(3, 8, 8).unwrap();
    let dense = materialize(&op);
    let mut rng = RngStream::new(207);
    let r = rng.sample_gaussian(&[op.m()], 0.0, 1.0).unwrap();
    let want = dense_pinv_apply(&dense, r.data());
    let cfg = CgConfig {
        tol: 1e-12,
        max_iter: 20_000,
    };
    let got = op.pseudoinverse_apply(&r, &cfg).unwrap();
    assert!(
        vec_rel_err(got.data(), &want) <= 1e-7,
        "rel err {}",
        vec_rel_err(got.data(), &want)
    );
}

#[test]
fn dense_gaussian_apply_matches_materialization() {
    let mut rng = RngStream::new(208);
    let op = LinearOperator::gaussian(&mut rng, 12, 30).unwrap();
    let dense = materialize(&op);
    let x = rng.sample_gaussian(&[30], 0.0, 1.0).unwrap();
    let got = op.apply(&x).unwrap();
    let want = common::dense_matvec(&dense, x.data());
    assert!(vec_rel_err(got.data(), &want) <= 1e-13);
}

#[test]
fn synthesized_noise_is_fresh_per_fork_but_stable_per_label() {
    let rng = RngStream::new(209);
    let op = LinearOperator::identity(64);
    let x = Tensor::zeros(&[64]);
    let root = rng.fork("cells");
    let y_a = genprior::operators::synthesize_observation(
        &op,
        &x,
        0.1,
        &mut root.fork("cell/0"),
    )
    .unwrap();
    let y_b = genprior::operators::synthesize_observation(
        &op,
        &x,
        0.1,
        &mut root.fork("cell/1"),
    )
    .unwrap();
    assert_ne!(y_a.data(), y_b.data());
    let again = genprior::operators::synthesize_observation(
        &op,
        &x,
        0.1,
        &mut root.fork("cell/0"),
    )
    .unwrap();
    assert_eq!(y_a.data(), again.data());
}
