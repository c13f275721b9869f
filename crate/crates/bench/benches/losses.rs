use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use structmark::{
    heatmap_mse_loss, soft_argmax_l2_loss, structured_loss, GridCoord, MarginSpec, Point, StructuredLossConfig,
};
use structmark_bench::score_map;

fn losses(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss");
    for side in [16, 64] {
        let h = score_map(side);
        let target = score_map(side).shifted(0.5).unwrap();
        let y = GridCoord::new(side / 3, side / 2);
        let cfg = StructuredLossConfig::default();
        let l2 = StructuredLossConfig {
            margin: MarginSpec::l2(1.0),
            ..cfg
        };
        group.bench_with_input(BenchmarkId::new("structured_smooth_l1", side), &h, |b, h| {
            b.iter(|| structured_loss(black_box(h), y, &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("structured_l2", side), &h, |b, h| {
            b.iter(|| structured_loss(black_box(h), y, &l2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("soft_argmax_l2", side), &h, |b, h| {
            b.iter(|| soft_argmax_l2_loss(black_box(h), Point::from(y)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mse", side), &h, |b, h| {
            b.iter(|| heatmap_mse_loss(black_box(h), &target).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, losses);
criterion_main!(benches);
