use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use genprior::operators::bicubic_kernel;
use genprior::{CgConfig, LinearOperator, RngStream};

fn bench_gaussian_apply(c: &mut Criterion) {
    let mut rng = RngStream::new(1);
    let op = LinearOperator::gaussian(&mut rng, 128, 256).unwrap();
    let x = rng.sample_gaussian(&[256], 0.0, 1.0).unwrap();
    let u = rng.sample_gaussian(&[128], 0.0, 1.0).unwrap();
    c.bench_function("gaussian_apply_128x256", |b| {
        b.iter(|| black_box(op.apply(black_box(&x)).unwrap()))
    });
    c.bench_function("gaussian_adjoint_128x256", |b| {
        b.iter(|| black_box(op.apply_adjoint(black_box(&u)).unwrap()))
    });
}

fn bench_fourier_apply(c: &mut Criterion) {
    let mut rng = RngStream::new(2);
    let mask: Vec<bool> = (0..256).map(|i| i % 3 == 0).collect();
    let op = LinearOperator::subsampled_fourier(&mask, 16, 16).unwrap();
    let x = rng.sample_gaussian(&[256], 0.0, 1.0).unwrap();
    c.bench_function("fourier_apply_16x16", |b| {
        b.iter(|| black_box(op.apply(black_box(&x)).unwrap()))
    });
}

fn bench_blur_decimate_apply(c: &mut Criterion) {
    let mut rng = RngStream::new(3);
    let op = LinearOperator::blur_decimate(&bicubic_kernel(2), 2, 16, 16).unwrap();
    let x = rng.sample_gaussian(&[256], 0.0, 1.0).unwrap();
    c.bench_function("blur_decimate_apply_16x16_s2", |b| {
        b.iter(|| black_box(op.apply(black_box(&x)).unwrap()))
    });
}

fn bench_pseudoinverse(c: &mut Criterion) {
    let mut rng = RngStream::new(4);
    let op = LinearOperator::gaussian(&mut rng, 64, 256).unwrap();
    let r = rng.sample_gaussian(&[64], 0.0, 1.0).unwrap();
    let cfg = CgConfig::default();
    c.bench_function("pseudoinverse_cg_64x256", |b| {
        b.iter(|| black_box(op.pseudoinverse_apply(black_box(&r), &cfg).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_gaussian_apply,
    bench_fourier_apply,
    bench_blur_decimate_apply,
    bench_pseudoinverse
);
criterion_main!(benches);
