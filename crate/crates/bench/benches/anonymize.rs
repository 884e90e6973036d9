use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use trafficmat::anon::anonymize_block;
use trafficmat::{AddressAnonymizer, AnonMode, PacketBlock};
use trafficmat_bench::{addresses, bench_key, heavy_tail_packets};

fn modes() -> Vec<(String, AnonMode)> {
    let key = bench_key();
    vec![
        ("direct".to_string(), AnonMode::direct(&key)),
        ("table w=16".to_string(), AnonMode::table(&key, 16).unwrap()),
        ("table w=24".to_string(), AnonMode::table(&key, 24).unwrap()),
    ]
}

fn per_address(c: &mut Criterion) {
    let addrs = addresses(1 << 14);
    let mut g = c.benchmark_group("anonymize address");
    g.throughput(Throughput::Elements(addrs.len() as u64));
    for (name, mode) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| addrs.iter().fold(0u32, |acc, &a| acc ^ mode.anonymize(black_box(a))))
        });
    }
    g.finish();
}

fn per_block(c: &mut Criterion) {
    let packets = heavy_tail_packets(1 << 17, 5);
    let mut g = c.benchmark_group("anonymize block 2^17");
    g.sample_size(10);
    g.throughput(Throughput::Elements(packets.len() as u64));
    for (name, mode) in modes() {
        g.bench_function(name, |b| {
            b.iter_batched(
                || PacketBlock::new(0, 0, packets.clone(), false),
                |block| anonymize_block(&mode, block),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, per_address, per_block);
criterion_main!(benches);
