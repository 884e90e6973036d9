//! Anonymized hypersparse traffic matrices built from packet streams in
//! constant-packet windows, their aggregate network quantities, a
//! compressed archive format, and associative-array analytics over
//! connection logs.
//!
//! ```
//! use trafficmat::{compute_quantities, TrafficMatrix};
//!
//! let a = TrafficMatrix::from_pairs([(1, 2), (1, 2), (1, 3), (4, 2)]);
//! let q = compute_quantities(&a);
//! assert_eq!(q.valid_packets, 4);
//! assert_eq!(q.max_source_fanout, 2);
//! ```

pub mod analytics;
pub mod anon;
pub mod archive;
pub mod assoc;
pub mod matrix;
pub mod metrics;
pub mod packet;
pub mod pipeline;
pub mod range;
pub mod source;

pub use analytics::{
    compute_quantities, compute_vectors, hierarchical_aggregate, HierarchicalAggregator, Hierarchy,
    LevelRow, NetworkQuantities, QuantityVectors,
};
pub use anon::{
    build_table, AddressAnonymizer, AnonError, AnonKey, AnonMode, CryptoPan, LookupTable,
    TableAnonymizer,
};
pub use archive::{read_archive, write_archive, ArchiveError, ArchivedBlock, BlobMeta, Manifest};
pub use assoc::{
    array_quantities, daily_report, explode, parse_log, transpose_multiply, AssocArray,
    DailyReport, LogRecord,
};
pub use matrix::{MatrixError, SparseVector, TrafficMatrix};
pub use metrics::{Metrics, MetricsRow};
pub use packet::{PacketBlock, PacketRecord};
pub use pipeline::{
    run_pipeline, ArchiveSink, DiscardSink, MemorySink, PipelineError, RunOptions, RunReport,
    TarDirSink, WindowConfig,
};
pub use range::RangeSet;
pub use source::{PacketSource, SourceError, SyntheticSource, TimedSource, TrafficModel};
