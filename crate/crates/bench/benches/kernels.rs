use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depthmine_core::{
    generate_regression, generate_scene, nms, rotated_iou, strategy_loss, Box3D, Rng, SceneConfig, Strategy, StrategyConfig,
    SynthConfig, ToyModel,
};

fn iou(c: &mut Criterion) {
    let a = Box3D::new([0.0, 0.0, 0.8], [1.9, 4.6, 1.7], 0.3, [0.0, 0.0], 0, 0).unwrap();
    let b = Box3D::new([0.7, 0.4, 0.8], [2.0, 4.4, 1.6], -0.5, [0.0, 0.0], 0, 0).unwrap();
    c.bench_function("rotated_iou", |bench| bench.iter(|| rotated_iou(black_box(&a), black_box(&b)).unwrap()));
}

fn suppression(c: &mut Criterion) {
    let mut group = c.benchmark_group("nms");
    for n_objects in [8, 32] {
        let cfg = SceneConfig { n_objects, min_separation: 3.0, ..SceneConfig::default() };
        let dets = generate_scene(&cfg).unwrap().detections;
        group.bench_with_input(BenchmarkId::from_parameter(dets.len()), &dets, |bench, dets| {
            bench.iter(|| nms(black_box(dets), 0.5, true).unwrap())
        });
    }
    group.finish();
}

fn model_and_loss(c: &mut Criterion) {
    let batch = generate_regression(&SynthConfig::default()).unwrap();
    let model = ToyModel::init(batch.feature_dim, 16, &mut Rng::new(1)).unwrap();
    c.bench_function("forward_4000", |bench| bench.iter(|| model.forward(black_box(&batch)).unwrap()));

    let outputs = model.forward(&batch).unwrap();
    let mut group = c.benchmark_group("strategy_loss_4000");
    for s in [Strategy::Baseline, Strategy::Mpm, Strategy::Gmm] {
        let cfg = StrategyConfig::new(s);
        group.bench_function(s.name(), |bench| bench.iter(|| strategy_loss(&cfg, black_box(&batch), black_box(&outputs)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, iou, suppression, model_and_loss);
criterion_main!(benches);
