//! Packet sources feeding the pipeline: a deterministic synthetic generator,
//! the canonical CSV format, and classic libpcap capture files.
//!
//! Canonical CSV: one record per line, `src_u32,dst_u32,timestamp_us` in
//! decimal, LF-terminated, no header. Dotted-quad addresses are also
//! accepted on input. Fields that parse as IPv6 addresses are counted as
//! non-IPv4 and skipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

use crate::packet::PacketRecord;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("unknown traffic model `{0}` (expected `uniform` or `heavy-tail`)")]
    UnknownModel(String),
    #[error("unknown input format `{0}` (expected `csv` or `pcap`)")]
    UnknownFormat(String),
    #[error("error budget of {budget} exceeded at {location}: {reason}")]
    BudgetExceeded {
        budget: u64,
        location: String,
        reason: String,
    },
    #[error("invalid pcap file: {0}")]
    Pcap(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Pull-based stream of packet records.
pub trait PacketSource: Send {
    /// Next record, `Ok(None)` at end of input.
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError>;

    /// Entries dropped so far (malformed or non-IPv4).
    fn skipped(&self) -> u64 {
        0
    }
}

impl<S: PacketSource + ?Sized> PacketSource for Box<S> {
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError> {
        (**self).next_record()
    }

    fn skipped(&self) -> u64 {
        (**self).skipped()
    }
}

/// Source over an in-memory list, mostly for tests.
pub struct VecSource {
    records: std::vec::IntoIter<PacketRecord>,
}

impl VecSource {
    pub fn new(records: Vec<PacketRecord>) -> Self {
        VecSource {
            records: records.into_iter(),
        }
    }
}

impl PacketSource for VecSource {
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError> {
        Ok(self.records.next())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrafficModel {
    /// Independent uniformly random 32-bit endpoints.
    Uniform,
    /// Zipf-distributed endpoint popularity, as seen in real traffic.
    HeavyTail,
}

impl FromStr for TrafficModel {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(TrafficModel::Uniform),
            "heavy-tail" | "heavytail" | "power-law" => Ok(TrafficModel::HeavyTail),
            other => Err(SourceError::UnknownModel(other.to_string())),
        }
    }
}

/// Number of distinct endpoints the heavy-tail model draws from.
pub const HEAVY_TAIL_POPULATION: u64 = 1 << 20;
/// Zipf exponent of the heavy-tail model.
pub const HEAVY_TAIL_EXPONENT: f64 = 1.2;
/// Timestamp of the first synthetic packet (2023-07-22T04:26:40Z).
pub const SYNTHETIC_EPOCH_US: u64 = 1_690_000_000_000_000;

/// Spreads popularity ranks over the address space (bijective on u32).
fn scatter(rank: u32, salt: u32) -> u32 {
    let mut x = rank ^ salt;
    x = x.wrapping_mul(0x9E37_79B1);
    x ^= x >> 16;
    x = x.wrapping_mul(0x85EB_CA6B);
    x ^ (x >> 13)
}

/// Deterministic synthetic packet generator.
pub struct SyntheticSource {
    remaining: u64,
    model: TrafficModel,
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    timestamp_us: u64,
}

impl SyntheticSource {
    pub fn new(count: u64, model: TrafficModel, seed: u64) -> Self {
        SyntheticSource {
            remaining: count,
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            zipf: Zipf::new(HEAVY_TAIL_POPULATION as f64, HEAVY_TAIL_EXPONENT)
                .expect("valid zipf parameters"),
            timestamp_us: SYNTHETIC_EPOCH_US,
        }
    }

    /// Generator with no packet limit.
    pub fn unbounded(model: TrafficModel, seed: u64) -> Self {
        Self::new(u64::MAX, model, seed)
    }

    fn draw(&mut self) -> PacketRecord {
        let (src, dst) = match self.model {
            TrafficModel::Uniform => (self.rng.random(), self.rng.random()),
            TrafficModel::HeavyTail => {
                let s = self.zipf.sample(&mut self.rng) as u32;
                let d = self.zipf.sample(&mut self.rng) as u32;
                (scatter(s, 0x5EED_0001), scatter(d, 0x5EED_0002))
            }
        };
        self.timestamp_us += self.rng.random_range(0..=2);
        PacketRecord::new(src, dst, self.timestamp_us)
    }
}

impl PacketSource for SyntheticSource {
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        Ok(Some(self.draw()))
    }
}

impl Iterator for SyntheticSource {
    type Item = PacketRecord;

    fn next(&mut self) -> Option<PacketRecord> {
        self.next_record().ok().flatten()
    }
}

/// Writes records in the canonical CSV format.
pub fn write_csv<W: Write>(mut out: W, records: impl IntoIterator<Item = PacketRecord>) -> io::Result<u64> {
    let mut n = 0;
    for r in records {
        writeln!(out, "{},{},{}", r.src, r.dst, r.timestamp_us)?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

enum Field {
    V4(u32),
    NotV4,
}

fn parse_addr_field(s: &str) -> Option<Field> {
    if let Ok(v) = s.parse::<u32>() {
        return Some(Field::V4(v));
    }
    if let Ok(a) = s.parse::<Ipv4Addr>() {
        return Some(Field::V4(a.into()));
    }
    if s.parse::<Ipv6Addr>().is_ok() {
        return Some(Field::NotV4);
    }
    None
}

/// Skip-and-count bookkeeping shared by the file adapters.
#[derive(Clone, Copy, Debug, Default)]
struct SkipCounter {
    budget: u64,
    malformed: u64,
    non_ipv4: u64,
}

impl SkipCounter {
    fn malformed(&mut self, location: String, reason: &str) -> Result<(), SourceError> {
        self.malformed += 1;
        if self.malformed > self.budget {
            return Err(SourceError::BudgetExceeded {
                budget: self.budget,
                location,
                reason: reason.to_string(),
            });
        }
        Ok(())
    }
}

/// Reader for the canonical CSV format.
pub struct CsvSource<R> {
    reader: R,
    line: String,
    line_no: u64,
    skips: SkipCounter,
}

impl<R: BufRead + Send> CsvSource<R> {
    /// `error_budget` is the number of malformed lines tolerated before the
    /// source fails.
    pub fn new(reader: R, error_budget: u64) -> Self {
        CsvSource {
            reader,
            line: String::new(),
            line_no: 0,
            skips: SkipCounter {
                budget: error_budget,
                ..Default::default()
            },
        }
    }

    pub fn malformed(&self) -> u64 {
        self.skips.malformed
    }

    pub fn non_ipv4(&self) -> u64 {
        self.skips.non_ipv4
    }

    fn parse_line(line: &str) -> Result<Option<PacketRecord>, &'static str> {
        let mut fields = line.split(',');
        let (Some(src), Some(dst), Some(ts), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err("expected 3 comma-separated fields");
        };
        let src = parse_addr_field(src.trim()).ok_or("bad source address")?;
        let dst = parse_addr_field(dst.trim()).ok_or("bad destination address")?;
        let ts: u64 = ts.trim().parse().map_err(|_| "bad timestamp")?;
        match (src, dst) {
            (Field::V4(s), Field::V4(d)) => Ok(Some(PacketRecord::new(s, d, ts))),
            _ => Ok(None),
        }
    }
}

impl<R: BufRead + Send> PacketSource for CsvSource<R> {
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError> {
        loop {
            self.line.clear();
            if self.reader.read_line(&mut self.line)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = self.line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            match Self::parse_line(line) {
                Ok(Some(rec)) => return Ok(Some(rec)),
                Ok(None) => self.skips.non_ipv4 += 1,
                Err(reason) => self.skips.malformed(format!("line {}", self.line_no), reason)?,
            }
        }
    }

    fn skipped(&self) -> u64 {
        self.skips.malformed + self.skips.non_ipv4
    }
}

const PCAP_MAGIC_US: u32 = 0xa1b2_c3d4;
const PCAP_MAGIC_NS: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW: u32 = 101;
const LINKTYPE_IPV4: u32 = 228;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

/// Reader for classic libpcap capture files (not pcapng). Ethernet
/// (optionally VLAN-tagged) and raw-IP link types are understood;
/// everything that is not IPv4 is skipped and counted.
pub struct PcapSource<R> {
    reader: R,
    swapped: bool,
    nanos: bool,
    linktype: u32,
    frame: Vec<u8>,
    frame_no: u64,
    skips: SkipCounter,
}

impl<R: Read + Send> PcapSource<R> {
    pub fn new(mut reader: R, error_budget: u64) -> Result<Self, SourceError> {
        let mut header = [0u8; 24];
        match reader.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(SourceError::Pcap("truncated global header".into()))
            }
            Err(e) => return Err(e.into()),
        }
        let magic_le = u32::from_le_bytes(header[..4].try_into().unwrap());
        let (swapped, nanos) = match magic_le {
            PCAP_MAGIC_US => (false, false),
            PCAP_MAGIC_NS => (false, true),
            m if m.swap_bytes() == PCAP_MAGIC_US => (true, false),
            m if m.swap_bytes() == PCAP_MAGIC_NS => (true, true),
            m => return Err(SourceError::Pcap(format!("unknown magic {m:#010x}"))),
        };
        let word = |b: &[u8]| {
            let v = u32::from_le_bytes(b.try_into().unwrap());
            if swapped {
                v.swap_bytes()
            } else {
                v
            }
        };
        let linktype = word(&header[20..24]) & 0x0fff_ffff;
        Ok(PcapSource {
            reader,
            swapped,
            nanos,
            linktype,
            frame: Vec::new(),
            frame_no: 0,
            skips: SkipCounter {
                budget: error_budget,
                ..Default::default()
            },
        })
    }

    fn word(&self, b: &[u8]) -> u32 {
        let v = u32::from_le_bytes(b.try_into().unwrap());
        if self.swapped {
            v.swap_bytes()
        } else {
            v
        }
    }

    /// Offset of the IPv4 header inside the current frame, or `None` if the
    /// frame is not IPv4.
    fn ipv4_offset(&self) -> Result<Option<usize>, &'static str> {
        let f = &self.frame;
        match self.linktype {
            LINKTYPE_ETHERNET => {
                if f.len() < 14 {
                    return Err("short ethernet frame");
                }
                let mut off = 12;
                let mut ethertype = u16::from_be_bytes([f[off], f[off + 1]]);
                while ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
                    off += 4;
                    if f.len() < off + 2 {
                        return Err("short VLAN header");
                    }
                    ethertype = u16::from_be_bytes([f[off], f[off + 1]]);
                }
                Ok((ethertype == ETHERTYPE_IPV4).then_some(off + 2))
            }
            LINKTYPE_RAW | LINKTYPE_IPV4 => {
                if f.is_empty() {
                    return Err("empty frame");
                }
                Ok((f[0] >> 4 == 4).then_some(0))
            }
            _ => Err("unsupported link type"),
        }
    }
}

impl<R: Read + Send> PacketSource for PcapSource<R> {
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError> {
        loop {
            let mut rec = [0u8; 16];
            match self.reader.read_exact(&mut rec) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
                Err(e) => return Err(e.into()),
            }
            self.frame_no += 1;
            let secs = u64::from(self.word(&rec[0..4]));
            let frac = u64::from(self.word(&rec[4..8]));
            let incl = self.word(&rec[8..12]) as usize;
            if incl > 1 << 18 {
                return Err(SourceError::Pcap(format!(
                    "frame {} claims {incl} captured bytes",
                    self.frame_no
                )));
            }
            self.frame.resize(incl, 0);
            if self.reader.read_exact(&mut self.frame).is_err() {
                return Err(SourceError::Pcap(format!("frame {} truncated", self.frame_no)));
            }
            let ts = secs * 1_000_000 + if self.nanos { frac / 1000 } else { frac };
            let location = format!("frame {}", self.frame_no);
            match self.ipv4_offset() {
                Ok(None) => self.skips.non_ipv4 += 1,
                Err(reason) => self.skips.malformed(location, reason)?,
                Ok(Some(off)) => {
                    let ip = &self.frame[off..];
                    if ip.len() < 20 || ip[0] >> 4 != 4 {
                        self.skips.malformed(location, "short IPv4 header")?;
                        continue;
                    }
                    let src = u32::from_be_bytes(ip[12..16].try_into().unwrap());
                    let dst = u32::from_be_bytes(ip[16..20].try_into().unwrap());
                    return Ok(Some(PacketRecord::new(src, dst, ts)));
                }
            }
        }
    }

    fn skipped(&self) -> u64 {
        self.skips.malformed + self.skips.non_ipv4
    }
}

/// Ends another source once a wall-clock deadline passes. The clock is
/// checked every 1024 records.
pub struct TimedSource<S> {
    inner: S,
    deadline: std::time::Instant,
    counter: u32,
    expired: bool,
}

impl<S: PacketSource> TimedSource<S> {
    pub fn new(inner: S, duration: std::time::Duration) -> Self {
        TimedSource {
            inner,
            deadline: std::time::Instant::now() + duration,
            counter: 0,
            expired: false,
        }
    }
}

impl<S: PacketSource> PacketSource for TimedSource<S> {
    fn next_record(&mut self) -> Result<Option<PacketRecord>, SourceError> {
        if self.expired {
            return Ok(None);
        }
        self.counter = self.counter.wrapping_add(1);
        if self.counter.is_multiple_of(1024) && std::time::Instant::now() >= self.deadline {
            self.expired = true;
            return Ok(None);
        }
        self.inner.next_record()
    }

    fn skipped(&self) -> u64 {
        self.inner.skipped()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Pcap,
}

impl FromStr for InputFormat {
    type Err = SourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "pcap" => Ok(InputFormat::Pcap),
            other => Err(SourceError::UnknownFormat(other.to_string())),
        }
    }
}

/// Opens a file as a packet source.
pub fn read_records(
    path: impl AsRef<Path>,
    format: InputFormat,
    error_budget: u64,
) -> Result<Box<dyn PacketSource>, SourceError> {
    let reader = BufReader::with_capacity(1 << 20, File::open(path)?);
    Ok(match format {
        InputFormat::Csv => Box::new(CsvSource::new(reader, error_budget)),
        InputFormat::Pcap => Box::new(PcapSource::new(reader, error_budget)?),
    })
}
