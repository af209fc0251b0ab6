use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unirep::data::{generate_synthetic, SynthSpec};
use unirep::network::{apply_sharing, build_blueprint, Preset, SharingConfig, SharingMode};
use unirep::norm::NormStrategy;
use unirep::ops::conv2d;
use unirep::{par, Dims4, DomainId, Tensor4};

fn pools() -> Vec<(&'static str, usize)> {
    vec![("sequential", 1), ("pool", par::current_threads())]
}

fn conv(c: &mut Criterion) {
    let x = Tensor4::from_fn(Dims4::new(16, 16, 16, 32), |v, u, ch, t| ((v * 7 + u * 3 + ch + t) % 11) as f32 * 0.1);
    let w = Tensor4::from_fn(Dims4::new(3, 3, 16, 16), |v, u, ci, co| ((v + u * 5 + ci * 3 + co) % 7) as f32 * 0.05);
    let bias = vec![0.0f32; 16];
    let mut g = c.benchmark_group("conv3x3_16x16x16_b32");
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::with_threads(threads, || b.iter(|| conv2d(black_box(&x), &w, &bias, 1, 1).unwrap()))
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut spec = SynthSpec::new(10, 4);
    spec.size = 16;
    let ds = generate_synthetic(&spec).unwrap();
    let bp = build_blueprint(Preset::Desk8, 1, NormStrategy::default(), &[10])
        .unwrap()
        .with_input(16, 3)
        .unwrap();
    let model = apply_sharing::<f32>(&bp, &SharingConfig::new(SharingMode::DeepSharing, 1), 0).unwrap();
    let idx: Vec<usize> = (0..32).collect();
    let (x, labels) = ds.batch(&idx);
    let d = DomainId::new(1).unwrap();
    let mut g = c.benchmark_group("desk8_forward_backward_b32");
    g.sample_size(20);
    for (name, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::with_threads(threads, || b.iter(|| model.loss_and_grads(black_box(&x), &labels, d).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, conv, train_step);
criterion_main!(benches);
