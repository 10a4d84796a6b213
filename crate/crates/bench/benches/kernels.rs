use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dendrite::connectivity::{build_masks, ArchitectureKind, ArchitectureSpec};
use dendrite::data::Grid;
use dendrite::embed::{tsne, TsneConfig};
use dendrite::network::{backward, forward, NetworkParams, Storage};
use dendrite::optim::{adam_step, AdamConfig, AdamState};
use dendrite::rng;
use ndarray::Array2;
use rand::Rng;

const GRID: Grid = Grid::new(28, 28, 1);
const BATCH: usize = 128;

fn batch() -> (Array2<f32>, Vec<usize>) {
    let mut r = rng::seeded(1);
    let x = Array2::from_shape_fn((BATCH, GRID.len()), |_| r.random_range(0.0..1.0));
    let labels = (0..BATCH).map(|i| i % 10).collect();
    (x, labels)
}

fn specs() -> Vec<ArchitectureSpec> {
    vec![
        ArchitectureSpec::dendritic(ArchitectureKind::DannLrf, GRID, 10, 256, 8),
        ArchitectureSpec::dendritic(ArchitectureKind::DannR, GRID, 10, 512, 32),
        ArchitectureSpec::vanilla(GRID, 10, 512, 256),
    ]
}

fn forward_backward(c: &mut Criterion) {
    let (x, labels) = batch();
    let mut g = c.benchmark_group("train_step");
    g.sample_size(20);
    for spec in specs() {
        for storage in [Storage::Sparse, Storage::DenseMasked] {
            if !spec.kind.is_dendritic() && storage == Storage::DenseMasked {
                continue;
            }
            let params = NetworkParams::<f32>::from_spec(&spec, 0, storage).unwrap();
            let id = BenchmarkId::new(spec.label(), format!("{storage:?}"));
            g.bench_with_input(id, &params, |b, p| {
                let mut p = p.clone();
                let mut state = AdamState::new(&p, AdamConfig::default());
                b.iter(|| {
                    let trace = forward(&p, x.view()).unwrap();
                    let grads = backward(&p, &trace, &labels).unwrap();
                    adam_step(&mut p, &grads, &mut state).unwrap();
                })
            });
        }
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    let (x, _) = batch();
    let mut g = c.benchmark_group("forward");
    for spec in specs() {
        let params = NetworkParams::<f32>::from_spec(&spec, 0, Storage::Sparse).unwrap();
        g.bench_function(spec.label(), |b| {
            b.iter(|| forward(&params, black_box(x.view())).unwrap())
        });
    }
    g.finish();
}

fn masks(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_masks");
    for kind in [
        ArchitectureKind::DannR,
        ArchitectureKind::DannLrf,
        ArchitectureKind::DannGrf,
    ] {
        let spec = ArchitectureSpec::dendritic(kind, GRID, 10, 512, 32);
        g.bench_function(kind.as_str(), |b| b.iter(|| build_masks(black_box(&spec)).unwrap()));
    }
    g.finish();
}

fn embedding(c: &mut Criterion) {
    let mut r = rng::seeded(2);
    let x = Array2::from_shape_fn((500, 32), |(i, _)| (i % 10) as f64 + r.random_range(0.0..1.0));
    let cfg = TsneConfig {
        perplexity: 30.0,
        iterations: 100,
        ..TsneConfig::default()
    };
    let mut g = c.benchmark_group("tsne");
    g.sample_size(10);
    g.bench_function("500x32_100_iters", |b| b.iter(|| tsne(x.view(), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, forward_backward, inference, masks, embedding);
criterion_main!(benches);
