use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use varlab_core::numerics::{conv2d, matmul, max_pool2d, RngStream, Tensor};

fn random(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut s = RngStream::from_state(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| s.gaussian()).collect()).unwrap()
}

fn gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    // Batch × input by input × hidden, as in the desk MLP forward pass.
    for (m, k, n) in [(64, 256, 256), (256, 256, 256), (1000, 256, 10)] {
        let (a, b) = (random(vec![m, k], 1), random(vec![k, n], 2));
        g.throughput(Throughput::Elements((2 * m * k * n) as u64));
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{m}x{k}x{n}")),
            &(a, b),
            |bch, (a, b)| bch.iter(|| matmul(black_box(a), black_box(b)).unwrap()),
        );
    }
    g.finish();
}

fn conv(c: &mut Criterion) {
    let input = random(vec![16, 3, 16, 16], 3);
    let weight = random(vec![8, 3, 3, 3], 4);
    let bias = random(vec![8], 5);
    c.bench_function("conv2d 16x3x16x16 k3 c8", |b| {
        b.iter(|| conv2d(black_box(&input), black_box(&weight), black_box(&bias), 1).unwrap())
    });
    let feature = random(vec![16, 8, 16, 16], 6);
    c.bench_function("max_pool2d 16x8x16x16", |b| {
        b.iter(|| max_pool2d(black_box(&feature)).unwrap())
    });
}

criterion_group!(benches, gemm, conv);
criterion_main!(benches);
