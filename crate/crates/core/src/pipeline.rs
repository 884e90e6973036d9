//! Constant-packet window pipeline.
//!
//! ```text
//! source -> dispatcher --round robin--> S stream workers --B-packet blocks-->
//!     reporter (K blocks: anonymize, build K matrices) --window--> writer -> sink
//! ```
//!
//! Packet `i` goes to stream `i mod S`. Each worker publishes exactly full
//! blocks of `B` records; at shutdown it flushes whatever is left as a
//! block marked partial. The reporter orders blocks by
//! `sequence * S + stream`, so windows are deterministic for any `S`, and
//! when `S` divides `K` window `w` holds exactly source packets
//! `[w*B*K, (w+1)*B*K)`. Blocks left over at the end of input form a single
//! partial window. All queues are bounded; a full queue blocks its
//! producer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};
use rayon::prelude::*;
use thiserror::Error;

use crate::anon::{anonymize_block, AnonMode};
use crate::archive::{self, ArchiveError, BlobMeta, EncodedBlock, Manifest};
use crate::matrix::TrafficMatrix;
use crate::metrics::{IntervalSampler, Metrics, MetricsRow};
use crate::packet::{PacketBlock, PacketRecord};
use crate::source::{PacketSource, SourceError};

pub const DEFAULT_BLOCK_SIZE: usize = 1 << 17;
pub const DEFAULT_BLOCKS_PER_WINDOW: usize = 64;
pub const DEFAULT_STREAMS: usize = 8;
pub const DEFAULT_QUEUE_DEPTH: usize = 16;

/// Records handed from the dispatcher to a worker per message.
const DISPATCH_BATCH: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("block size {0} is not a power of two")]
    BlockSize(usize),
    #[error("blocks per window {0} is not a power of two")]
    BlocksPerWindow(usize),
    #[error("stream count must be at least 1")]
    Streams,
    #[error("queue depth must be at least 1")]
    QueueDepth,
}

/// Window geometry: `B` packets per block, `K` blocks per window, `S`
/// streams. The window size is `N_V = B * K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowConfig {
    block_size: usize,
    blocks_per_window: usize,
    streams: usize,
    queue_depth: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            block_size: DEFAULT_BLOCK_SIZE,
            blocks_per_window: DEFAULT_BLOCKS_PER_WINDOW,
            streams: DEFAULT_STREAMS,
            queue_depth: DEFAULT_QUEUE_DEPTH,
        }
    }
}

impl WindowConfig {
    pub fn new(
        block_size: usize,
        blocks_per_window: usize,
        streams: usize,
        queue_depth: usize,
    ) -> Result<Self, ConfigError> {
        if !block_size.is_power_of_two() {
            return Err(ConfigError::BlockSize(block_size));
        }
        if !blocks_per_window.is_power_of_two() {
            return Err(ConfigError::BlocksPerWindow(blocks_per_window));
        }
        if streams == 0 {
            return Err(ConfigError::Streams);
        }
        if queue_depth == 0 {
            return Err(ConfigError::QueueDepth);
        }
        Ok(WindowConfig {
            block_size,
            blocks_per_window,
            streams,
            queue_depth,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks_per_window(&self) -> usize {
        self.blocks_per_window
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn queue_depth(&self) -> usize {
        self.queue_depth
    }

    /// Packets per full window.
    pub fn window_size(&self) -> u64 {
        (self.block_size * self.blocks_per_window) as u64
    }
}

/// One block's matrix with its provenance.
#[derive(Clone, Debug)]
pub struct BuiltBlock {
    pub stream: u32,
    pub sequence: u64,
    pub matrix: TrafficMatrix,
    pub meta: BlobMeta,
}

/// A reporter window handed to the sink.
#[derive(Clone, Debug)]
pub struct WindowOutput {
    pub window: u64,
    pub block_size: u64,
    pub partial: bool,
    pub anonymization: &'static str,
    pub blocks: Vec<BuiltBlock>,
}

impl WindowOutput {
    pub fn packets(&self) -> u64 {
        self.blocks.iter().map(|b| b.matrix.sum_all()).sum()
    }

    pub fn ts_first_us(&self) -> u64 {
        self.blocks.iter().map(|b| b.meta.ts_first_us).min().unwrap_or(0)
    }

    pub fn ts_last_us(&self) -> u64 {
        self.blocks.iter().map(|b| b.meta.ts_last_us).max().unwrap_or(0)
    }

    /// Serializes and compresses every block (in parallel).
    pub fn encode(&self) -> Vec<EncodedBlock> {
        self.blocks
            .par_iter()
            .enumerate()
            .map(|(i, b)| EncodedBlock::encode(i as u64, &b.matrix, b.meta))
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            window: self.window,
            block_size: self.block_size,
            blocks: self.blocks.len() as u64,
            total_packets: self.packets(),
            ts_first_us: self.ts_first_us(),
            ts_last_us: self.ts_last_us(),
            created_us: self.ts_last_us(),
            partial: self.partial,
            anonymization: self.anonymization.to_string(),
            members: Vec::new(),
        }
    }
}

/// What a sink reports after durably storing a window.
#[derive(Clone, Debug, Default)]
pub struct SinkReceipt {
    pub bytes: u64,
    pub path: Option<PathBuf>,
}

/// Destination of finished windows.
pub trait ArchiveSink: Send {
    fn write_window(&mut self, window: WindowOutput) -> Result<SinkReceipt, ArchiveError>;
}

/// Writes one TAR archive per window into a directory.
pub struct TarDirSink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl TarDirSink {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self, ArchiveError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(TarDirSink {
            dir,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

impl ArchiveSink for TarDirSink {
    fn write_window(&mut self, window: WindowOutput) -> Result<SinkReceipt, ArchiveError> {
        let blocks = window.encode();
        let path = self.dir.join(archive::archive_file_name(window.window));
        let unit = archive::write_archive(&path, window.manifest(), &blocks)?;
        self.written.push(path.clone());
        Ok(SinkReceipt {
            bytes: unit.bytes,
            path: Some(path),
        })
    }
}

/// Keeps windows in memory.
#[derive(Default)]
pub struct MemorySink {
    pub windows: Vec<WindowOutput>,
}

impl ArchiveSink for MemorySink {
    fn write_window(&mut self, window: WindowOutput) -> Result<SinkReceipt, ArchiveError> {
        self.windows.push(window);
        Ok(SinkReceipt::default())
    }
}

/// Encodes and compresses windows, then discards them. Used for
/// benchmarking the full path without disk I/O.
#[derive(Default)]
pub struct DiscardSink {
    pub compressed_bytes: u64,
    pub packets: u64,
}

impl ArchiveSink for DiscardSink {
    fn write_window(&mut self, window: WindowOutput) -> Result<SinkReceipt, ArchiveError> {
        let bytes: u64 = window.encode().iter().map(|b| b.frame.len() as u64).sum();
        self.compressed_bytes += bytes;
        self.packets += window.packets();
        Ok(SinkReceipt { bytes, path: None })
    }
}

/// Totals of a pipeline run.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    /// Records delivered by the source.
    pub packets_in: u64,
    /// Entries the source dropped (malformed or non-IPv4).
    pub skipped: u64,
    /// Sum of all matrices durably written.
    pub packets_archived: u64,
    pub blocks: u64,
    pub full_windows: u64,
    pub partial_windows: u64,
    pub bytes_written: u64,
    pub last_durable_window: Option<u64>,
    pub archives: Vec<PathBuf>,
    pub elapsed: Duration,
    pub metrics: Vec<MetricsRow>,
}

impl RunReport {
    pub fn windows(&self) -> u64 {
        self.full_windows + self.partial_windows
    }

    pub fn packets_per_sec(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.packets_in as f64 / s
        } else {
            0.0
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("source failed after {} packets: {error}", report.packets_in)]
    Source {
        error: SourceError,
        report: Box<RunReport>,
    },
    #[error("sink failed (last durable window {:?}): {error}", report.last_durable_window)]
    Sink {
        error: ArchiveError,
        report: Box<RunReport>,
    },
}

impl PipelineError {
    pub fn report(&self) -> &RunReport {
        match self {
            PipelineError::Source { report, .. } | PipelineError::Sink { report, .. } => report,
        }
    }
}

/// Optional knobs of [`run_pipeline`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Sample metrics at this interval into [`RunReport::metrics`].
    pub sample_interval: Option<Duration>,
    /// Counters to update; a private collector is used when absent.
    pub metrics: Option<Arc<Metrics>>,
}

fn stream_worker(
    stream: usize,
    block_size: usize,
    input: Receiver<Vec<PacketRecord>>,
    output: Sender<PacketBlock>,
    metrics: &Metrics,
) {
    let mut sequence = 0u64;
    let mut current: Vec<PacketRecord> = Vec::with_capacity(block_size);
    for batch in input {
        let mut rest = &batch[..];
        while !rest.is_empty() {
            let take = (block_size - current.len()).min(rest.len());
            current.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if current.len() == block_size {
                let full = std::mem::replace(&mut current, Vec::with_capacity(block_size));
                let block = PacketBlock::new(stream as u32, sequence, full, false);
                if output.send(block).is_err() {
                    return;
                }
                metrics.block_published(stream);
                sequence += 1;
            }
        }
    }
    if !current.is_empty() {
        let block = PacketBlock::new(stream as u32, sequence, current, true);
        if output.send(block).is_ok() {
            metrics.block_published(stream);
        }
    }
}

fn build_window(
    window: u64,
    blocks: Vec<PacketBlock>,
    cfg: &WindowConfig,
    mode: &AnonMode,
    metrics: &Metrics,
) -> WindowOutput {
    let started = Instant::now();
    let partial = blocks.len() < cfg.blocks_per_window || blocks.iter().any(|b| b.is_partial());
    let built: Vec<BuiltBlock> = blocks
        .into_par_iter()
        .map(|b| {
            let b = anonymize_block(mode, b);
            let meta = BlobMeta {
                ts_first_us: b.first_timestamp().unwrap_or(0),
                ts_last_us: b.last_timestamp().unwrap_or(0),
                partial: b.is_partial(),
            };
            BuiltBlock {
                stream: b.stream(),
                sequence: b.sequence(),
                matrix: TrafficMatrix::from_pairs(b.pairs()),
                meta,
            }
        })
        .collect();
    metrics.window_built(started.elapsed());
    WindowOutput {
        window,
        block_size: cfg.block_size as u64,
        partial,
        anonymization: mode.name(),
        blocks: built,
    }
}

fn reporter(
    cfg: &WindowConfig,
    mode: &AnonMode,
    input: Receiver<PacketBlock>,
    output: Sender<WindowOutput>,
    metrics: &Metrics,
) {
    let streams = cfg.streams as u64;
    let k = cfg.blocks_per_window;
    let mut pending: BTreeMap<u64, PacketBlock> = BTreeMap::new();
    let mut next_ordinal = 0u64;
    let mut window: Vec<PacketBlock> = Vec::with_capacity(k);
    let mut window_index = 0u64;

    let emit = |blocks: Vec<PacketBlock>, window_index: &mut u64| -> bool {
        let out = build_window(*window_index, blocks, cfg, mode, metrics);
        *window_index += 1;
        output.send(out).is_ok()
    };

    for block in &input {
        metrics.set_queue_depth(input.len());
        let ordinal = block.sequence() * streams + u64::from(block.stream());
        pending.insert(ordinal, block);
        // A partial block only appears once input has ended, so windows stop
        // at the first one and everything from there is flushed below.
        while pending.get(&next_ordinal).is_some_and(|b| !b.is_partial()) {
            let b = pending.remove(&next_ordinal).unwrap();
            next_ordinal += 1;
            window.push(b);
            if window.len() == k {
                let full = std::mem::replace(&mut window, Vec::with_capacity(k));
                if !emit(full, &mut window_index) {
                    return;
                }
            }
        }
    }
    // All workers are done. Whatever remains becomes one partial unit, in
    // ordinal order; it can hold up to K - 1 + S blocks.
    window.extend(pending.into_values());
    if !window.is_empty() {
        emit(window, &mut window_index);
    }
}

/// Runs the whole pipeline to completion on `source`.
///
/// Errors carry the report of everything that was durably written before
/// the failure; a source failure still flushes all buffered packets.
pub fn run_pipeline<S, K>(
    source: &mut S,
    cfg: &WindowConfig,
    mode: &AnonMode,
    sink: &mut K,
    options: &RunOptions,
) -> Result<RunReport, PipelineError>
where
    S: PacketSource + ?Sized,
    K: ArchiveSink + ?Sized,
{
    let metrics = options
        .metrics
        .clone()
        .unwrap_or_else(|| Arc::new(Metrics::new(cfg.streams)));
    let started = Instant::now();
    let batch = DISPATCH_BATCH.min(cfg.block_size);

    let (block_tx, block_rx) = bounded::<PacketBlock>(cfg.queue_depth);
    let (window_tx, window_rx) = bounded::<WindowOutput>(2);
    let (stop_tx, stop_rx) = bounded::<()>(0);

    let mut report = RunReport::default();
    let mut source_error = None;
    let mut sink_error = None;
    let mut samples = Vec::new();

    std::thread::scope(|scope| {
        let metrics = &*metrics;

        let sampler = options.sample_interval.map(|interval| {
            scope.spawn(move || {
                let mut sampler = IntervalSampler::new(metrics);
                let mut rows = Vec::new();
                let mut deadline = Instant::now() + interval;
                loop {
                    let wait = deadline.saturating_duration_since(Instant::now());
                    match stop_rx.recv_timeout(wait) {
                        Err(RecvTimeoutError::Timeout) => {
                            rows.push(sampler.sample(metrics));
                            deadline += interval;
                        }
                        _ => {
                            rows.push(sampler.sample(metrics));
                            return rows;
                        }
                    }
                }
            })
        });

        let mut worker_txs = Vec::with_capacity(cfg.streams);
        for stream in 0..cfg.streams {
            let (tx, rx) = bounded::<Vec<PacketRecord>>(4);
            worker_txs.push(tx);
            let out = block_tx.clone();
            let block_size = cfg.block_size;
            scope.spawn(move || stream_worker(stream, block_size, rx, out, metrics));
        }
        drop(block_tx);

        scope.spawn(move || reporter(cfg, mode, block_rx, window_tx, metrics));

        let writer = scope.spawn(move || {
            let mut report = RunReport::default();
            for window in window_rx {
                let packets = window.packets();
                let blocks = window.blocks.len() as u64;
                let partial = window.partial;
                let index = window.window;
                match sink.write_window(window) {
                    Ok(receipt) => {
                        metrics.window_written(packets, receipt.bytes);
                        report.packets_archived += packets;
                        report.blocks += blocks;
                        report.bytes_written += receipt.bytes;
                        report.last_durable_window = Some(index);
                        if partial {
                            report.partial_windows += 1;
                        } else {
                            report.full_windows += 1;
                        }
                        report.archives.extend(receipt.path);
                    }
                    Err(e) => return (report, Some(e)),
                }
            }
            (report, None)
        });

        // Dispatcher: round-robin in arrival order, batched per stream.
        let mut batches: Vec<Vec<PacketRecord>> =
            (0..cfg.streams).map(|_| Vec::with_capacity(batch)).collect();
        let mut next = 0usize;
        let mut packets = 0u64;
        'read: loop {
            match source.next_record() {
                Ok(Some(rec)) => {
                    packets += 1;
                    batches[next].push(rec);
                    if batches[next].len() == batch {
                        let full = std::mem::replace(&mut batches[next], Vec::with_capacity(batch));
                        metrics.add_packets_in(full.len() as u64);
                        if worker_txs[next].send(full).is_err() {
                            break 'read;
                        }
                    }
                    next += 1;
                    if next == cfg.streams {
                        next = 0;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    source_error = Some(e);
                    break;
                }
            }
        }
        for (tx, rest) in worker_txs.iter().zip(batches) {
            if !rest.is_empty() {
                metrics.add_packets_in(rest.len() as u64);
                let _ = tx.send(rest);
            }
        }
        drop(worker_txs);
        report.packets_in = packets;
        report.skipped = source.skipped();

        let (written, err) = writer.join().expect("writer thread panicked");
        sink_error = err;
        drop(stop_tx);
        if let Some(s) = sampler {
            samples = s.join().expect("sampler thread panicked");
        }
        report.packets_archived = written.packets_archived;
        report.blocks = written.blocks;
        report.full_windows = written.full_windows;
        report.partial_windows = written.partial_windows;
        report.bytes_written = written.bytes_written;
        report.last_durable_window = written.last_durable_window;
        report.archives = written.archives;
    });

    report.elapsed = started.elapsed();
    report.metrics = samples;
    if let Some(error) = sink_error {
        return Err(PipelineError::Sink {
            error,
            report: Box::new(report),
        });
    }
    if let Some(error) = source_error {
        return Err(PipelineError::Source {
            error,
            report: Box::new(report),
        });
    }
    Ok(report)
}
