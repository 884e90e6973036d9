use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use trafficmat::archive::{compress, serialize};
use trafficmat::{compute_quantities, hierarchical_aggregate, BlobMeta, TrafficMatrix};
use trafficmat_bench::{heavy_tail_matrix, heavy_tail_packets, BLOCK};

fn build(c: &mut Criterion) {
    let packets = heavy_tail_packets(BLOCK, 1);
    let mut g = c.benchmark_group("matrix");
    g.throughput(Throughput::Elements(BLOCK));
    g.bench_function("from_pairs 2^17", |b| {
        b.iter(|| TrafficMatrix::from_pairs(packets.iter().map(|r| (r.src, r.dst))))
    });

    let m = heavy_tail_matrix(BLOCK, 2);
    let other = heavy_tail_matrix(BLOCK, 3);
    g.bench_function("quantities 2^17", |b| b.iter(|| compute_quantities(black_box(&m))));
    g.bench_function("add 2^17 + 2^17", |b| b.iter(|| m.add(black_box(&other)).unwrap()));
    g.bench_function("serialize+zstd 2^17", |b| {
        let meta = BlobMeta { ts_first_us: 0, ts_last_us: 0, partial: false };
        b.iter(|| compress(&serialize(black_box(&m), &meta)))
    });
    g.finish();

    let mut g = c.benchmark_group("hierarchy");
    g.sample_size(10);
    let blocks: Vec<TrafficMatrix> = (0..16).map(|i| heavy_tail_matrix(1 << 14, i)).collect();
    g.throughput(Throughput::Elements(16 << 14));
    g.bench_function("16 blocks, 4 levels", |b| {
        b.iter_batched(|| blocks.clone(), |bs| hierarchical_aggregate(bs, 4).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, build);
criterion_main!(benches);
