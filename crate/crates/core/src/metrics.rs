//! Run-time observables of a pipeline: packet rates, per-stream block
//! counts, reporter queue depth, resident memory and CPU time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Shared counters updated by the pipeline threads.
#[derive(Debug)]
pub struct Metrics {
    start: Instant,
    packets_in: AtomicU64,
    packets_archived: AtomicU64,
    blocks: Vec<AtomicU64>,
    windows: AtomicU64,
    queue_depth: AtomicU64,
    last_build_us: AtomicU64,
    max_build_us: AtomicU64,
    bytes_written: AtomicU64,
}

impl Metrics {
    pub fn new(streams: usize) -> Self {
        Metrics {
            start: Instant::now(),
            packets_in: AtomicU64::new(0),
            packets_archived: AtomicU64::new(0),
            blocks: (0..streams).map(|_| AtomicU64::new(0)).collect(),
            windows: AtomicU64::new(0),
            queue_depth: AtomicU64::new(0),
            last_build_us: AtomicU64::new(0),
            max_build_us: AtomicU64::new(0),
            bytes_written: AtomicU64::new(0),
        }
    }

    pub(crate) fn add_packets_in(&self, n: u64) {
        self.packets_in.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn block_published(&self, stream: usize) {
        self.blocks[stream].fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn set_queue_depth(&self, depth: usize) {
        self.queue_depth.store(depth as u64, Ordering::Relaxed);
    }

    pub(crate) fn window_built(&self, elapsed: Duration) {
        let us = elapsed.as_micros() as u64;
        self.last_build_us.store(us, Ordering::Relaxed);
        self.max_build_us.fetch_max(us, Ordering::Relaxed);
    }

    pub(crate) fn window_written(&self, packets: u64, bytes: u64) {
        self.windows.fetch_add(1, Ordering::Relaxed);
        self.packets_archived.fetch_add(packets, Ordering::Relaxed);
        self.bytes_written.fetch_add(bytes, Ordering::Relaxed);
    }

    /// Cumulative view; rates are averages since the collector was created.
    pub fn snapshot(&self) -> MetricsSnapshot {
        let elapsed = self.start.elapsed().as_secs_f64();
        let packets_in = self.packets_in.load(Ordering::Relaxed);
        MetricsSnapshot {
            elapsed_s: elapsed,
            packets_in,
            packets_archived: self.packets_archived.load(Ordering::Relaxed),
            packets_per_sec: if elapsed > 0.0 {
                packets_in as f64 / elapsed
            } else {
                0.0
            },
            blocks_per_stream: self
                .blocks
                .iter()
                .map(|b| b.load(Ordering::Relaxed))
                .collect(),
            windows: self.windows.load(Ordering::Relaxed),
            reporter_queue_depth: self.queue_depth.load(Ordering::Relaxed),
            last_window_build_ms: self.last_build_us.load(Ordering::Relaxed) as f64 / 1e3,
            max_window_build_ms: self.max_build_us.load(Ordering::Relaxed) as f64 / 1e3,
            bytes_written: self.bytes_written.load(Ordering::Relaxed),
            rss_bytes: resident_bytes(),
            cpu_seconds: process_cpu_seconds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub elapsed_s: f64,
    pub packets_in: u64,
    pub packets_archived: u64,
    pub packets_per_sec: f64,
    pub blocks_per_stream: Vec<u64>,
    pub windows: u64,
    pub reporter_queue_depth: u64,
    pub last_window_build_ms: f64,
    pub max_window_build_ms: f64,
    pub bytes_written: u64,
    pub rss_bytes: u64,
    pub cpu_seconds: f64,
}

/// One row of the per-interval time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t_s: f64,
    pub packets_per_sec: f64,
    pub packets_total: u64,
    pub windows: u64,
    pub queue_depth: u64,
    pub rss_bytes: u64,
    /// CPU time over wall time for the interval, in percent of one core.
    pub cpu_load_pct: f64,
    pub window_build_ms: f64,
}

pub const METRICS_TSV_HEADER: &str =
    "t_s\tpackets_per_sec\tpackets_total\twindows\tqueue_depth\trss_bytes\tcpu_load_pct\twindow_build_ms\n";

impl MetricsRow {
    pub fn to_tsv(&self) -> String {
        format!(
            "{:.3}\t{:.0}\t{}\t{}\t{}\t{}\t{:.1}\t{:.3}\n",
            self.t_s,
            self.packets_per_sec,
            self.packets_total,
            self.windows,
            self.queue_depth,
            self.rss_bytes,
            self.cpu_load_pct,
            self.window_build_ms
        )
    }
}

pub fn metrics_tsv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_TSV_HEADER);
    for r in rows {
        out.push_str(&r.to_tsv());
    }
    out
}

/// Turns successive snapshots into interval rows.
pub struct IntervalSampler {
    prev: MetricsSnapshot,
}

impl IntervalSampler {
    pub fn new(metrics: &Metrics) -> Self {
        IntervalSampler {
            prev: metrics.snapshot(),
        }
    }

    pub fn sample(&mut self, metrics: &Metrics) -> MetricsRow {
        let now = metrics.snapshot();
        let dt = now.elapsed_s - self.prev.elapsed_s;
        let rate = |a: f64| if dt > 0.0 { a / dt } else { 0.0 };
        let row = MetricsRow {
            t_s: now.elapsed_s,
            packets_per_sec: rate((now.packets_in - self.prev.packets_in) as f64),
            packets_total: now.packets_in,
            windows: now.windows,
            queue_depth: now.reporter_queue_depth,
            rss_bytes: now.rss_bytes,
            cpu_load_pct: 100.0 * rate(now.cpu_seconds - self.prev.cpu_seconds),
            window_build_ms: now.last_window_build_ms,
        };
        self.prev = now;
        row
    }
}

/// Resident set size of this process, 0 where unavailable.
pub fn resident_bytes() -> u64 {
    let Ok(statm) = std::fs::read_to_string("/proc/self/statm") else {
        return 0;
    };
    let pages: u64 = statm
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    // SAFETY: sysconf has no memory-safety preconditions.
    let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    pages * u64::try_from(page).unwrap_or(4096)
}

/// User plus system CPU time consumed by this process.
pub fn process_cpu_seconds() -> f64 {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    // SAFETY: getrusage writes a full rusage into the provided buffer.
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) };
    if rc != 0 {
        return 0.0;
    }
    // SAFETY: initialized by the successful call above.
    let usage = unsafe { usage.assume_init() };
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
    tv(usage.ru_utime) + tv(usage.ru_stime)
}
