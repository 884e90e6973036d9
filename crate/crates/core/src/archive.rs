//! Matrix blobs, per-member compression and TAR archive units.
//!
//! ```text
//! Blob (little-endian, 56-byte header):
//!   0  magic        "HSTM"
//!   4  version      u16 = 1
//!   6  flags        u16, bit 0 = partial window
//!   8  row_dim      u64
//!  16  col_dim      u64
//!  24  nnz          u64
//!  32  packets      u64 (sum of all entries)
//!  40  ts_first_us  u64
//!  48  ts_last_us   u64
//!  56  nnz x (row u32, col u32, count u64), strictly row-major sorted
//! ```
//!
//! Each blob is stored as a standard Zstandard frame (level 1) in a ustar
//! member named `w<window:08>_b<block:02>.gbz`, next to a `manifest.json`
//! member describing the window.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{MatrixError, TrafficMatrix, ADDRESS_SPACE};

pub const BLOB_MAGIC: [u8; 4] = *b"HSTM";
pub const BLOB_VERSION: u16 = 1;
pub const BLOB_HEADER_LEN: usize = 56;
const TRIPLE_LEN: usize = 16;
const FLAG_PARTIAL: u16 = 1;

/// Zstandard level used for every member.
pub const ZSTD_LEVEL: i32 = 1;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("blob: {0}")]
    Blob(String),
    #[error("corrupt zstd frame at byte offset {offset}: {reason}")]
    Frame { offset: u64, reason: String },
    #[error("refusing to write an archive with no members")]
    EmptyArchive,
    #[error("duplicate member `{0}`")]
    DuplicateMember(String),
    #[error("member `{0}` listed in the manifest is missing")]
    MissingMember(String),
    #[error("archive has no manifest")]
    MissingManifest,
    #[error("member `{name}`: {source}")]
    Member {
        name: String,
        #[source]
        source: Box<ArchiveError>,
    },
    #[error("truncated or malformed container: {0}")]
    Container(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-blob metadata carried in the header.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobMeta {
    pub ts_first_us: u64,
    pub ts_last_us: u64,
    pub partial: bool,
}

/// Serializes a matrix. Equal matrices with equal metadata always produce
/// identical bytes.
pub fn serialize(m: &TrafficMatrix, meta: &BlobMeta) -> Vec<u8> {
    let nnz = m.nnz() as usize;
    let mut out = Vec::with_capacity(BLOB_HEADER_LEN + nnz * TRIPLE_LEN);
    out.extend_from_slice(&BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    let flags = if meta.partial { FLAG_PARTIAL } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for v in [
        m.row_dim(),
        m.col_dim(),
        m.nnz(),
        m.sum_all(),
        meta.ts_first_us,
        meta.ts_last_us,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (r, c, v) in m.iter() {
        out.extend_from_slice(&r.to_le_bytes());
        out.extend_from_slice(&c.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Parses and fully validates a blob.
pub fn deserialize(bytes: &[u8]) -> Result<(TrafficMatrix, BlobMeta), ArchiveError> {
    let bad = |msg: String| ArchiveError::Blob(msg);
    if bytes.len() < BLOB_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != BLOB_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BLOB_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags & !FLAG_PARTIAL != 0 {
        return Err(bad(format!("unknown flags {flags:#06x}")));
    }
    let row_dim = le_u64(bytes, 8);
    let col_dim = le_u64(bytes, 16);
    let nnz = le_u64(bytes, 24);
    let packets = le_u64(bytes, 32);
    let meta = BlobMeta {
        ts_first_us: le_u64(bytes, 40),
        ts_last_us: le_u64(bytes, 48),
        partial: flags & FLAG_PARTIAL != 0,
    };
    for d in [row_dim, col_dim] {
        if d == 0 || d > ADDRESS_SPACE {
            return Err(bad(format!("invalid dimension {d}")));
        }
    }
    let payload = &bytes[BLOB_HEADER_LEN..];
    let expected = nnz
        .checked_mul(TRIPLE_LEN as u64)
        .filter(|&n| n == payload.len() as u64);
    if expected.is_none() {
        return Err(bad(format!(
            "header declares {nnz} entries but payload holds {} bytes",
            payload.len()
        )));
    }
    let mut prev: Option<(u32, u32)> = None;
    let mut triples = Vec::with_capacity(nnz as usize);
    for (i, t) in payload.chunks_exact(TRIPLE_LEN).enumerate() {
        let r = u32::from_le_bytes(t[0..4].try_into().unwrap());
        let c = u32::from_le_bytes(t[4..8].try_into().unwrap());
        let v = u64::from_le_bytes(t[8..16].try_into().unwrap());
        if u64::from(r) >= row_dim || u64::from(c) >= col_dim {
            return Err(bad(format!("entry {i} ({r}, {c}) out of range")));
        }
        if v == 0 {
            return Err(bad(format!("entry {i} stores an explicit zero")));
        }
        if prev.is_some_and(|p| p >= (r, c)) {
            return Err(bad(format!("entry {i} ({r}, {c}) out of order")));
        }
        prev = Some((r, c));
        triples.push((r, c, v));
    }
    let m = TrafficMatrix::from_sorted_entries(row_dim, col_dim, triples)?;
    if m.sum_all() != packets {
        return Err(bad(format!(
            "header packet count {packets} != entry sum {}",
            m.sum_all()
        )));
    }
    Ok((m, meta))
}

/// Wraps bytes in a single Zstandard frame.
pub fn compress(blob: &[u8]) -> Vec<u8> {
    zstd::bulk::compress(blob, ZSTD_LEVEL).expect("in-memory zstd compression cannot fail")
}

/// Decodes one Zstandard frame. Errors report how far into the input the
/// decoder got.
pub fn decompress(frame: &[u8]) -> Result<Vec<u8>, ArchiveError> {
    use zstd::stream::raw::{Decoder, InBuffer, Operation, OutBuffer};

    let mut decoder = Decoder::new()?;
    let mut input = InBuffer::around(frame);
    let mut out = Vec::with_capacity(frame.len() * 4);
    let mut chunk = vec![0u8; 1 << 16];
    loop {
        let mut output = OutBuffer::around(&mut chunk[..]);
        let hint = decoder
            .run(&mut input, &mut output)
            .map_err(|e| ArchiveError::Frame {
                offset: input.pos() as u64,
                reason: e.to_string(),
            })?;
        let produced = output.pos();
        out.extend_from_slice(&chunk[..produced]);
        if hint == 0 {
            if input.pos() != frame.len() {
                return Err(ArchiveError::Frame {
                    offset: input.pos() as u64,
                    reason: "trailing bytes after frame".into(),
                });
            }
            return Ok(out);
        }
        if input.pos() == frame.len() && produced == 0 {
            return Err(ArchiveError::Frame {
                offset: frame.len() as u64,
                reason: "frame is truncated".into(),
            });
        }
    }
}

/// Member name for block `block` of window `window`.
pub fn member_name(window: u64, block: u64) -> String {
    format!("w{window:08}_b{block:02}.gbz")
}

/// Archive file name for a window.
pub fn archive_file_name(window: u64) -> String {
    format!("w{window:08}.tar")
}

/// Window-level metadata stored as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub window: u64,
    pub block_size: u64,
    pub blocks: u64,
    pub total_packets: u64,
    pub ts_first_us: u64,
    pub ts_last_us: u64,
    /// Stream time at which the window closed; equals `ts_last_us`.
    pub created_us: u64,
    pub partial: bool,
    pub anonymization: String,
    pub members: Vec<String>,
}

/// One compressed member ready for the container.
#[derive(Clone, Debug)]
pub struct EncodedBlock {
    pub block: u64,
    pub packets: u64,
    pub meta: BlobMeta,
    pub frame: Vec<u8>,
}

impl EncodedBlock {
    pub fn encode(block: u64, matrix: &TrafficMatrix, meta: BlobMeta) -> Self {
        EncodedBlock {
            block,
            packets: matrix.sum_all(),
            meta,
            frame: compress(&serialize(matrix, &meta)),
        }
    }
}

/// Handle to a written archive.
#[derive(Clone, Debug)]
pub struct ArchiveUnit {
    pub path: PathBuf,
    pub manifest: Manifest,
    pub bytes: u64,
}

fn append_member<W: Write>(
    builder: &mut tar::Builder<W>,
    name: &str,
    data: &[u8],
    mtime_s: u64,
) -> io::Result<()> {
    let mut header = tar::Header::new_ustar();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(mtime_s);
    header.set_entry_type(tar::EntryType::Regular);
    builder.append_data(&mut header, name, data)
}

/// Writes a ustar archive holding the manifest followed by each block.
/// Member names in `manifest.members` are filled in from the blocks.
pub fn write_archive_to<W: Write>(
    out: W,
    manifest: &mut Manifest,
    blocks: &[EncodedBlock],
) -> Result<W, ArchiveError> {
    if blocks.is_empty() {
        return Err(ArchiveError::EmptyArchive);
    }
    let names: Vec<String> = blocks
        .iter()
        .map(|b| member_name(manifest.window, b.block))
        .collect();
    let mut seen = std::collections::HashSet::new();
    for n in &names {
        if !seen.insert(n) {
            return Err(ArchiveError::DuplicateMember(n.clone()));
        }
    }
    manifest.members = names.clone();
    manifest.blocks = blocks.len() as u64;

    let mtime = manifest.created_us / 1_000_000;
    let mut builder = tar::Builder::new(out);
    append_member(
        &mut builder,
        MANIFEST_NAME,
        &serde_json::to_vec_pretty(manifest)?,
        mtime,
    )?;
    for (name, b) in names.iter().zip(blocks) {
        append_member(&mut builder, name, &b.frame, mtime)?;
    }
    Ok(builder.into_inner()?)
}

pub fn write_archive(
    path: impl AsRef<Path>,
    mut manifest: Manifest,
    blocks: &[EncodedBlock],
) -> Result<ArchiveUnit, ArchiveError> {
    let path = path.as_ref();
    if blocks.is_empty() {
        return Err(ArchiveError::EmptyArchive);
    }
    let tmp = path.with_extension("tar.tmp");
    let file = BufWriter::new(File::create(&tmp)?);
    let mut file = write_archive_to(file, &mut manifest, blocks)?;
    file.flush()?;
    file.into_inner()
        .map_err(|e| e.into_error())?
        .sync_all()?;
    std::fs::rename(&tmp, path)?;
    let bytes = std::fs::metadata(path)?.len();
    Ok(ArchiveUnit {
        path: path.to_path_buf(),
        manifest,
        bytes,
    })
}

/// A decoded archive member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchivedBlock {
    pub name: String,
    pub meta: BlobMeta,
    pub matrix: TrafficMatrix,
}

/// Reads every member of an archive, returning blocks in manifest order.
pub fn read_archive_from<R: Read>(input: R) -> Result<(Manifest, Vec<ArchivedBlock>), ArchiveError> {
    let container = |e: io::Error| ArchiveError::Container(e.to_string());
    let mut archive = tar::Archive::new(input);
    let mut manifest: Option<Manifest> = None;
    let mut members: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for entry in archive.entries().map_err(container)? {
        let mut entry = entry.map_err(container)?;
        let name = entry
            .path()
            .map_err(container)?
            .to_string_lossy()
            .into_owned();
        let mut data = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut data).map_err(container)?;
        if name == MANIFEST_NAME {
            if manifest.is_some() {
                return Err(ArchiveError::DuplicateMember(name));
            }
            manifest = Some(serde_json::from_slice(&data)?);
        } else if members.insert(name.clone(), data).is_some() {
            return Err(ArchiveError::DuplicateMember(name));
        }
    }
    let manifest = manifest.ok_or(ArchiveError::MissingManifest)?;
    let mut blocks = Vec::with_capacity(manifest.members.len());
    for name in &manifest.members {
        let frame = members
            .remove(name)
            .ok_or_else(|| ArchiveError::MissingMember(name.clone()))?;
        let wrap = |e: ArchiveError| ArchiveError::Member {
            name: name.clone(),
            source: Box::new(e),
        };
        let blob = decompress(&frame).map_err(wrap)?;
        let (matrix, meta) = deserialize(&blob).map_err(wrap)?;
        blocks.push(ArchivedBlock {
            name: name.clone(),
            meta,
            matrix,
        });
    }
    Ok((manifest, blocks))
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<(Manifest, Vec<ArchivedBlock>), ArchiveError> {
    read_archive_from(BufReader::new(File::open(path)?))
}
