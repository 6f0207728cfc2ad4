use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use e2icm_bench::{rng, tensor};
use e2icm_core::model::layers::{Conv2d, ConvTranspose2d};
use e2icm_core::model::ops::ConvGeom;
use e2icm_core::model::{DiscriminatorNetwork, GeneratorNetwork, Mode, NetworkSpec};
use std::hint::black_box;

const DOWN: ConvGeom = ConvGeom {
    kernel: 4,
    stride: 2,
    pad: 1,
};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_forward");
    for side in [32usize, 64, 128] {
        let x = tensor((1, 64, side, side), 1);
        let mut layer = Conv2d::new(64, 128, DOWN, false, &mut rng(2));
        group.bench_with_input(BenchmarkId::from_parameter(side), &x, |b, x| b.iter(|| layer.forward(black_box(x))));
    }
    group.finish();

    let x = tensor((1, 128, 32, 32), 3);
    let mut up = ConvTranspose2d::new(128, 64, DOWN, false, &mut rng(4));
    c.bench_function("conv_transpose2d_forward/32", |b| b.iter(|| up.forward(black_box(&x))));

    let mut layer = Conv2d::new(64, 128, DOWN, false, &mut rng(2));
    let x = tensor((1, 64, 64, 64), 5);
    let y = layer.forward(&x);
    let dy = tensor(y.dim(), 6);
    c.bench_function("conv2d_backward/64", |b| b.iter(|| layer.backward(black_box(&dy))));
}

fn networks(c: &mut Criterion) {
    let spec = NetworkSpec::standard();
    let mut g = GeneratorNetwork::build(&spec, 0).unwrap();
    g.mode = Mode::Inference;
    let mut d = DiscriminatorNetwork::build(&spec, 1).unwrap();
    d.mode = Mode::Inference;
    let face = tensor((1, 3, 256, 256), 7);
    let mri = tensor((1, 1, 256, 256), 8);

    let mut group = c.benchmark_group("standard_256");
    group.sample_size(10);
    group.bench_function("generator_forward", |b| b.iter(|| g.forward(black_box(&face), None).unwrap()));
    group.bench_function("discriminator_forward", |b| {
        b.iter(|| d.forward(black_box(&face), black_box(&mri)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, conv, networks);
criterion_main!(benches);
