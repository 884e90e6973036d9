//! Packet events and the fixed-capacity blocks stream workers publish.

use std::net::Ipv4Addr;

/// One observed IPv4 packet, reduced to its endpoints and arrival time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PacketRecord {
    pub src: u32,
    pub dst: u32,
    /// Microseconds since the Unix epoch.
    pub timestamp_us: u64,
}

impl PacketRecord {
    pub fn new(src: u32, dst: u32, timestamp_us: u64) -> Self {
        PacketRecord {
            src,
            dst,
            timestamp_us,
        }
    }

    pub fn src_addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.src)
    }

    pub fn dst_addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.dst)
    }
}

/// Block of records published by one stream worker.
///
/// Every block is exactly full except the last one a worker flushes at
/// shutdown, which carries `partial = true`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketBlock {
    stream: u32,
    sequence: u64,
    records: Vec<PacketRecord>,
    partial: bool,
}

impl PacketBlock {
    pub fn new(stream: u32, sequence: u64, records: Vec<PacketRecord>, partial: bool) -> Self {
        PacketBlock {
            stream,
            sequence,
            records,
            partial,
        }
    }

    pub fn stream(&self) -> u32 {
        self.stream
    }

    pub fn sequence(&self) -> u64 {
        self.sequence
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [PacketRecord] {
        &mut self.records
    }

    pub fn first_timestamp(&self) -> Option<u64> {
        self.records.iter().map(|r| r.timestamp_us).min()
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.records.iter().map(|r| r.timestamp_us).max()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.records.iter().map(|r| (r.src, r.dst))
    }
}
