//! Sequential vs parallel throughput for the data-parallel hot paths:
//! batched backbone inference, confidence scoring, and MMD kernel sums.
//! Both paths produce bit-identical results; this suite measures what the
//! `parallel` feature buys.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use osrlab_core::datasets::{synth_gaussians, GaussianClassSpec};
use osrlab_core::eval::{mmd, mmd_seq, KernelSpec};
use osrlab_core::nn::BackboneNet;
use osrlab_core::tensor::Tensor;

fn gaussian_rows(n: usize, d: usize, seed: u64, spread: f64) -> Tensor {
    let ds = synth_gaussians(
        &[GaussianClassSpec {
            name: "x".into(),
            mean: vec![spread; d],
            scale: 1.0,
            count: n,
        }],
        seed,
        "bench",
    )
    .unwrap();
    ds.full_batch().unwrap()
}

fn bench_forward(c: &mut Criterion) {
    let net = BackboneNet::mlp(16, &[64, 64], 32, 6, 7).unwrap();
    let mut group = c.benchmark_group("forward_batch");
    for &batch in &[256usize, 2048] {
        let data = gaussian_rows(batch, 16, 11, 0.0);
        group.bench_with_input(BenchmarkId::new("seq", batch), &data, |b, data| {
            b.iter(|| black_box(net.forward_seq(data).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("par", batch), &data, |b, data| {
            b.iter(|| black_box(net.forward(data).unwrap()))
        });
    }
    group.finish();
}

fn bench_mmd(c: &mut Criterion) {
    let mut group = c.benchmark_group("mmd_rbf");
    for &n in &[128usize, 512] {
        let x = gaussian_rows(n, 8, 3, 0.0);
        let y = gaussian_rows(n, 8, 4, 1.5);
        let spec = KernelSpec::Rbf { bandwidth: Some(2.0) };
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |b, _| {
            b.iter(|| black_box(mmd_seq(&x, &y, spec).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("par", n), &n, |b, _| {
            b.iter(|| black_box(mmd(&x, &y, spec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_forward, bench_mmd);
criterion_main!(benches);
