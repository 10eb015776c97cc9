use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pmtr_bench::{conv_fixture, pmt_fixture, random_matrix};
use pmtr_core::hdc::conv2_bruteforce;
use pmtr_core::matcher::sinkhorn_ot;
use pmtr_core::pmt::{pmt_forward_raw, Side};
use std::hint::black_box;

fn pmt_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("pmt_forward");
    for n in [1 << 10, 1 << 12, 1 << 14] {
        let f = pmt_fixture(n, 16).expect("fixture");
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| pmt_forward_raw(black_box(&f.features), &f.attention, &f.proxies, Side::X).unwrap())
        });
    }
    group.finish();
}

fn conv2(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2_bruteforce");
    group.sample_size(10);
    for n in [128, 256, 512] {
        let f = conv_fixture(n).expect("fixture");
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| conv2_bruteforce(black_box(&f.fx), &f.fy, &f.lattice, &f.lattice, &f.kernel).unwrap())
        });
    }
    group.finish();
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    for n in [50, 200] {
        let scores = random_matrix(n, n, 9);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| sinkhorn_ot(black_box(s), 1.0, 0.1, 100).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pmt_forward, conv2, sinkhorn);
criterion_main!(benches);
