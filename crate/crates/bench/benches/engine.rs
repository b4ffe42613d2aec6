use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use zerostyle_bench::{feature_pair, pruned_pair, rng};
use zerostyle_core::fixtures::random_tensor;
use zerostyle_core::graph::{execute_with, ExecOptions};
use zerostyle_core::ops::{conv2d, ConvParams};
use zerostyle_core::{sandwich_swap, style_swap, Shape4, TransferConfig};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_3x3");
    let mut r = rng(1);
    for ch in [16, 64] {
        let x = random_tensor(Shape4::new(1, ch, 32, 32), -1.0, 1.0, &mut r);
        let w = random_tensor(Shape4::new(ch, ch, 3, 3), -0.1, 0.1, &mut r);
        let p = ConvParams { padding: 1, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(ch), &ch, |b, _| {
            b.iter(|| conv2d(black_box(&x), &w, None, p).unwrap())
        });
    }
    group.finish();
}

fn pruned_vs_original(c: &mut Criterion) {
    let pair = pruned_pair(4, 64, 2).expect("fixture");
    let opts = ExecOptions { parallel: false };
    let mut group = c.benchmark_group("googlenet_div4_64px");
    group.sample_size(20);
    group.bench_function("original", |b| {
        b.iter(|| execute_with(&pair.original, black_box(&pair.input), &[], opts).unwrap())
    });
    group.bench_function("pruned", |b| {
        b.iter(|| execute_with(&pair.pruned, black_box(&pair.input), &[], opts).unwrap())
    });
    group.finish();
}

fn transfer(c: &mut Criterion) {
    let (fc, fs) = feature_pair(64, 16, 16, 3);
    let mut group = c.benchmark_group("transfer_64x16x16");
    group.bench_function("style_swap", |b| b.iter(|| style_swap(black_box(&fc), &fs, 3, 1, 1e-5).unwrap()));
    group.bench_function("sandwich_swap", |b| {
        b.iter(|| sandwich_swap(black_box(&fc), &fs, &TransferConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, conv, pruned_vs_original, transfer);
criterion_main!(benches);
