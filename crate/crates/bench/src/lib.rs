//! Shared fixtures for the benchmarks.

use trafficmat::{AnonKey, PacketRecord, SyntheticSource, TrafficMatrix, TrafficModel};

/// Default production block size.
pub const BLOCK: u64 = 1 << 17;

pub fn bench_key() -> AnonKey {
    AnonKey::from_bytes(*b"bench-key-not-for-real-traffic!!")
}

pub fn heavy_tail_packets(n: u64, seed: u64) -> Vec<PacketRecord> {
    SyntheticSource::new(n, TrafficModel::HeavyTail, seed).collect()
}

pub fn heavy_tail_matrix(n: u64, seed: u64) -> TrafficMatrix {
    TrafficMatrix::from_pairs(heavy_tail_packets(n, seed).iter().map(|r| (r.src, r.dst)))
}

/// Pseudo-random addresses for anonymizer throughput runs.
pub fn addresses(n: usize) -> Vec<u32> {
    heavy_tail_packets(n as u64, 99).iter().map(|r| r.src ^ r.dst.rotate_left(7)).collect()
}
