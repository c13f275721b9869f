use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use structmark::{
    build_edge_heatmap, fit_gaussian_label, generate_dataset, refine_edge_heatmap, train, BoundaryDef, DatasetParams,
    LinearScorer, Objective, SmoothingConfig, TrainConfig,
};
use structmark_bench::jaw;

fn label_fit(c: &mut Criterion) {
    let cfg = SmoothingConfig::default();
    let lm = jaw(17);
    let boundary = BoundaryDef::new(vec![(0..17).collect()]).unwrap();
    c.bench_function("smoothing/edge_map_and_refine", |b| {
        b.iter(|| refine_edge_heatmap(&build_edge_heatmap(black_box(&lm), &boundary, &cfg).unwrap(), &cfg).unwrap())
    });
    let refined = refine_edge_heatmap(&build_edge_heatmap(&lm, &boundary, &cfg).unwrap(), &cfg).unwrap();
    c.bench_function("smoothing/fit_17_labels", |b| {
        b.iter(|| {
            for &p in lm.points() {
                black_box(fit_gaussian_label(&refined, p, &cfg).unwrap());
            }
        })
    });
}

fn synth_epoch(c: &mut Criterion) {
    let data = generate_dataset(&DatasetParams {
        n_samples: 100,
        ..DatasetParams::default()
    })
    .unwrap();
    let mut group = c.benchmark_group("synth_epoch_100");
    group.sample_size(10);
    for objective in [
        Objective::structured(),
        Objective::SoftArgmaxL2,
        Objective::HeatmapMse { sigma: 1.0 },
    ] {
        let cfg = TrainConfig {
            objective: objective.clone(),
            learning_rate: 0.1,
            epochs: 1,
            ..TrainConfig::default()
        };
        group.bench_function(objective.name(), |b| {
            b.iter(|| train(&data, &[], LinearScorer::zeros(3, 32, 32), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, label_fit, synth_epoch);
criterion_main!(benches);
