//! Prefix-preserving IPv4 anonymization (Crypto-PAn construction).
//!
//! Output bit `n` of an address is input bit `n` XOR the top bit of
//! `AES_k(prefix_n || pad)`, where `prefix_n` is the first `n` input bits and
//! `pad` fills the remaining block bits. Because bit `n` depends only on
//! the first `n` input bits, two addresses sharing a `k`-bit prefix map to
//! outputs sharing exactly a `k`-bit prefix.
//!
//! Two modes are provided: [`CryptoPan`] computes the mapping directly
//! (32 block encryptions per address) and [`TableAnonymizer`] answers from a
//! precomputed [`LookupTable`]. Both produce identical outputs for a key.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::{Aes128, Block};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::packet::PacketBlock;

/// Key length in bytes: 16 bytes of AES key followed by 16 bytes of pad seed.
pub const KEY_LEN: usize = 32;

/// Environment variable consulted for hex-encoded key material.
pub const KEY_ENV_VAR: &str = "TRAFFICMAT_KEY";

const TABLE_MAGIC: [u8; 4] = *b"CPAT";
const TABLE_VERSION: u16 = 1;
const TABLE_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum AnonError {
    #[error("key must be {KEY_LEN} raw bytes or {hex} hex digits, got {0} bytes", hex = KEY_LEN * 2)]
    KeyLength(usize),
    #[error("key is not valid hex: {0}")]
    KeyHex(#[from] hex::FromHexError),
    #[error("cannot read key file {path}: {source}")]
    KeyFile { path: String, source: io::Error },
    #[error("table width {0} not in 1..=32")]
    Width(u8),
    #[error("cannot allocate {bytes} bytes for a {width}-bit lookup table")]
    TableAlloc { width: u8, bytes: u64 },
    #[error("table was built for a different key (fingerprint {found}, expected {expected})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("malformed table file: {0}")]
    TableFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Secret key material. `Debug` never prints the key.
#[derive(Clone, PartialEq, Eq)]
pub struct AnonKey([u8; KEY_LEN]);

impl std::fmt::Debug for AnonKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AnonKey(fingerprint={})", hex::encode(self.fingerprint()))
    }
}

impl AnonKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        AnonKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, AnonError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| AnonError::KeyLength(bytes.len()))?;
        Ok(AnonKey(arr))
    }

    pub fn from_hex(text: &str) -> Result<Self, AnonError> {
        let bytes = hex::decode(text.trim())?;
        Self::from_slice(&bytes)
    }

    /// Reads a key file holding either exactly 32 raw bytes or 64 hex digits
    /// (surrounding whitespace allowed).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AnonError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| AnonError::KeyFile {
            path: path.display().to_string(),
            source,
        })?;
        if bytes.len() == KEY_LEN {
            return Self::from_slice(&bytes);
        }
        match std::str::from_utf8(&bytes) {
            Ok(text) => Self::from_hex(text),
            Err(_) => Err(AnonError::KeyLength(bytes.len())),
        }
    }

    /// Key from [`KEY_ENV_VAR`], if set.
    pub fn from_env() -> Result<Option<Self>, AnonError> {
        match std::env::var(KEY_ENV_VAR) {
            Ok(v) => Self::from_hex(&v).map(Some),
            Err(_) => Ok(None),
        }
    }

    pub fn generate<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill(&mut bytes[..]);
        AnonKey(bytes)
    }

    /// 8-byte identifier of the key, safe to store next to derived tables.
    pub fn fingerprint(&self) -> [u8; 8] {
        let mut h = Sha256::new();
        h.update(b"trafficmat key fingerprint v1");
        h.update(self.0);
        let digest = h.finalize();
        digest[..8].try_into().expect("digest is 32 bytes")
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Anything that maps addresses through a keyed bijection.
pub trait AddressAnonymizer: Send + Sync {
    fn anonymize(&self, addr: u32) -> u32;

    /// Number of bytes of precomputed state this mapper holds.
    fn state_bytes(&self) -> usize;
}

/// Direct-mode prefix-preserving anonymizer.
#[derive(Clone)]
pub struct CryptoPan {
    cipher: Aes128,
    pad: [u8; 16],
    fingerprint: [u8; 8],
}

/// Bits of the 32-bit address word that survive when the first `n` bits
/// are taken from the address.
#[inline]
fn top_mask(n: u32) -> u32 {
    if n == 0 {
        0
    } else {
        u32::MAX << (32 - n)
    }
}

const BATCH: usize = 64;

impl CryptoPan {
    pub fn new(key: &AnonKey) -> Self {
        let cipher = Aes128::new(GenericArray::from_slice(&key.0[..16]));
        let mut pad = Block::clone_from_slice(&key.0[16..]);
        cipher.encrypt_block(&mut pad);
        CryptoPan {
            cipher,
            pad: pad.into(),
            fingerprint: key.fingerprint(),
        }
    }

    pub fn key_fingerprint(&self) -> [u8; 8] {
        self.fingerprint
    }

    fn pad_word(&self) -> u32 {
        u32::from_be_bytes(self.pad[..4].try_into().unwrap())
    }

    /// PRF input block whose first 32 bits are `head`.
    #[inline]
    fn block_with_head(&self, head: u32) -> Block {
        let mut b = Block::from(self.pad);
        b[..4].copy_from_slice(&head.to_be_bytes());
        b
    }

    /// XOR mask for output bit positions `from..to` (MSB-first) of `addr`.
    pub(crate) fn flip_mask(&self, addr: u32, from: u32, to: u32) -> u32 {
        debug_assert!(from <= to && to <= 32);
        let pad_word = self.pad_word();
        let mut blocks = [Block::default(); 32];
        let count = (to - from) as usize;
        for (slot, n) in blocks.iter_mut().zip(from..to) {
            let m = top_mask(n);
            *slot = self.block_with_head((addr & m) | (pad_word & !m));
        }
        self.cipher.encrypt_blocks(&mut blocks[..count]);
        blocks[..count]
            .iter()
            .zip(from..to)
            .fold(0u32, |acc, (b, n)| acc | (u32::from(b[0] >> 7) << (31 - n)))
    }

    /// Anonymizes a full 32-bit address.
    pub fn anonymize(&self, addr: u32) -> u32 {
        addr ^ self.flip_mask(addr, 0, 32)
    }

    /// Anonymizes a `width`-bit value, i.e. the `/width` prefix of the
    /// address `value << (32 - width)`. Equals the top `width` bits of
    /// [`anonymize`](Self::anonymize) applied to any address with that prefix.
    pub fn anonymize_prefix(&self, value: u32, width: u8) -> u32 {
        assert!((1..=32).contains(&width), "width must be in 1..=32");
        let shift = 32 - u32::from(width);
        let aligned = if shift == 32 { 0 } else { value << shift };
        let out = aligned ^ self.flip_mask(aligned, 0, u32::from(width));
        out.checked_shr(shift).unwrap_or(0)
    }

    /// Top output bit decision for every prefix `base + q` (q in `0..n`) of
    /// length `depth`, written into `out[q]`.
    fn prefix_flips(&self, depth: u32, base: u32, out: &mut [u8]) {
        let pad_word = self.pad_word();
        let low = pad_word & !top_mask(depth);
        let mut blocks = [Block::default(); BATCH];
        for (chunk_idx, chunk) in out.chunks_mut(BATCH).enumerate() {
            let start = base + (chunk_idx * BATCH) as u32;
            for (i, slot) in blocks.iter_mut().take(chunk.len()).enumerate() {
                let prefix = start + i as u32;
                let head = if depth == 0 { 0 } else { prefix << (32 - depth) };
                *slot = self.block_with_head(head | low);
            }
            self.cipher.encrypt_blocks(&mut blocks[..chunk.len()]);
            for (o, b) in chunk.iter_mut().zip(&blocks) {
                *o = b[0] >> 7;
            }
        }
    }
}

impl AddressAnonymizer for CryptoPan {
    fn anonymize(&self, addr: u32) -> u32 {
        CryptoPan::anonymize(self, addr)
    }

    fn state_bytes(&self) -> usize {
        std::mem::size_of::<Self>()
    }
}

/// Precomputed mapping of all `2^width` values.
#[derive(Clone, PartialEq, Eq)]
pub struct LookupTable {
    width: u8,
    fingerprint: [u8; 8],
    entries: Vec<u32>,
}

impl std::fmt::Debug for LookupTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LookupTable")
            .field("width", &self.width)
            .field("fingerprint", &hex::encode(self.fingerprint))
            .finish()
    }
}

/// Bytes needed for a table of the given width.
pub fn table_bytes(width: u8) -> u64 {
    4u64 << width
}

/// Builds `table[x] = anonymize_prefix(x, width)` for every `x < 2^width`.
///
/// Output bit `d` depends only on the `d`-bit input prefix, so the XOR masks
/// are expanded one level at a time from the root of the prefix tree. This
/// takes `2^width - 1` PRF evaluations instead of `width * 2^width`. The
/// top levels are expanded serially, then each subtree is filled in place
/// on the rayon pool.
pub fn build_table(pan: &CryptoPan, width: u8) -> Result<LookupTable, AnonError> {
    if !(1..=32).contains(&width) {
        return Err(AnonError::Width(width));
    }
    let len = 1usize
        .checked_shl(u32::from(width))
        .filter(|_| usize::BITS > u32::from(width))
        .ok_or(AnonError::TableAlloc {
            width,
            bytes: table_bytes(width),
        })?;
    let mut entries: Vec<u32> = Vec::new();
    entries.try_reserve_exact(len).map_err(|_| AnonError::TableAlloc {
        width,
        bytes: table_bytes(width),
    })?;
    entries.resize(len, 0);

    let w = u32::from(width);
    let split = w.min(8);

    // Masks for the first `split` levels, serially.
    let mut top = vec![0u32; 1 << split];
    let mut flips = vec![0u8; 1 << split];
    for depth in 0..split {
        let n = 1usize << depth;
        pan.prefix_flips(depth, 0, &mut flips[..n]);
        for p in (0..n).rev() {
            let m = top[p] | (u32::from(flips[p]) << (w - 1 - depth));
            top[2 * p] = m;
            top[2 * p + 1] = m;
        }
    }

    let sub_len = len >> split;
    entries
        .par_chunks_mut(sub_len)
        .enumerate()
        .for_each(|(chunk, sub)| {
            sub[0] = top[chunk];
            let mut flips = [0u8; BATCH];
            for t in 0..(w - split) {
                let depth = split + t;
                let n = 1usize << t;
                let base = (chunk as u32) << t;
                // Descending so parents are read before children overwrite them.
                let mut hi = n;
                while hi > 0 {
                    let lo = hi.saturating_sub(BATCH);
                    let batch = &mut flips[..hi - lo];
                    pan.prefix_flips(depth, base + lo as u32, batch);
                    for q in (lo..hi).rev() {
                        let m = sub[q] | (u32::from(batch[q - lo]) << (w - 1 - depth));
                        sub[2 * q] = m;
                        sub[2 * q + 1] = m;
                    }
                    hi = lo;
                }
            }
        });

    entries
        .par_iter_mut()
        .enumerate()
        .for_each(|(x, e)| *e ^= x as u32);

    Ok(LookupTable {
        width,
        fingerprint: pan.key_fingerprint(),
        entries,
    })
}

impl LookupTable {
    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn fingerprint(&self) -> [u8; 8] {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mapped value for `x < 2^width`.
    #[inline]
    pub fn get(&self, x: u32) -> u32 {
        self.entries[x as usize]
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn size_bytes(&self) -> usize {
        self.entries.len() * 4
    }

    /// Writes the header (`CPAT`, version, width, fingerprint) followed by
    /// little-endian entries.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        w.write_all(&u16::from(self.width).to_le_bytes())?;
        w.write_all(&self.fingerprint)?;
        let mut buf = Vec::with_capacity(1 << 16);
        for chunk in self.entries.chunks(1 << 14) {
            buf.clear();
            for e in chunk {
                buf.extend_from_slice(&e.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AnonError> {
        let f = File::create(path)?;
        self.write_to(BufWriter::new(f))?;
        Ok(())
    }

    /// Reads a table and checks it was built for `key`.
    pub fn read_from<R: Read>(mut r: R, key: &AnonKey) -> Result<Self, AnonError> {
        let mut header = [0u8; TABLE_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| AnonError::TableFormat("truncated header".into()))?;
        if header[..4] != TABLE_MAGIC {
            return Err(AnonError::TableFormat("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != TABLE_VERSION {
            return Err(AnonError::TableFormat(format!("unsupported version {version}")));
        }
        let width = u16::from_le_bytes([header[6], header[7]]);
        let width = u8::try_from(width)
            .ok()
            .filter(|w| (1..=32).contains(w))
            .ok_or(AnonError::Width(width.min(255) as u8))?;
        let fingerprint: [u8; 8] = header[8..16].try_into().unwrap();
        let expected = key.fingerprint();
        if fingerprint != expected {
            return Err(AnonError::FingerprintMismatch {
                expected: hex::encode(expected),
                found: hex::encode(fingerprint),
            });
        }
        let len = 1usize << width;
        let mut entries: Vec<u32> = Vec::new();
        entries
            .try_reserve_exact(len)
            .map_err(|_| AnonError::TableAlloc {
                width,
                bytes: table_bytes(width),
            })?;
        let mut buf = vec![0u8; 1 << 16];
        while entries.len() < len {
            let want = ((len - entries.len()) * 4).min(buf.len());
            r.read_exact(&mut buf[..want]).map_err(|_| {
                AnonError::TableFormat(format!(
                    "truncated: {} of {len} entries present",
                    entries.len()
                ))
            })?;
            entries.extend(
                buf[..want]
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap())),
            );
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(AnonError::TableFormat("trailing bytes after entries".into()));
        }
        Ok(LookupTable {
            width,
            fingerprint,
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>, key: &AnonKey) -> Result<Self, AnonError> {
        let f = File::open(path)?;
        Self::read_from(BufReader::new(f), key)
    }
}

/// Table-mode anonymizer for full 32-bit addresses.
///
/// With a 32-bit table every lookup is a single array read. With a
/// narrower table the top `width` output bits come from the table and the
/// remaining `32 - width` bits are computed directly, so results always
/// match [`CryptoPan::anonymize`].
pub struct TableAnonymizer {
    table: LookupTable,
    pan: CryptoPan,
}

impl TableAnonymizer {
    pub fn new(table: LookupTable, pan: CryptoPan) -> Result<Self, AnonError> {
        if table.fingerprint != pan.key_fingerprint() {
            return Err(AnonError::FingerprintMismatch {
                expected: hex::encode(pan.key_fingerprint()),
                found: hex::encode(table.fingerprint),
            });
        }
        Ok(TableAnonymizer { table, pan })
    }

    pub fn build(key: &AnonKey, width: u8) -> Result<Self, AnonError> {
        let pan = CryptoPan::new(key);
        let table = build_table(&pan, width)?;
        Ok(TableAnonymizer { table, pan })
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    #[inline]
    pub fn anonymize(&self, addr: u32) -> u32 {
        let w = u32::from(self.table.width);
        if w == 32 {
            return self.table.get(addr);
        }
        let shift = 32 - w;
        let high = self.table.get(addr >> shift) << shift;
        let low_mask = (1u32 << shift) - 1;
        high | ((addr ^ self.pan.flip_mask(addr, w, 32)) & low_mask)
    }
}

impl AddressAnonymizer for TableAnonymizer {
    fn anonymize(&self, addr: u32) -> u32 {
        TableAnonymizer::anonymize(self, addr)
    }

    fn state_bytes(&self) -> usize {
        self.table.size_bytes() + std::mem::size_of::<CryptoPan>()
    }
}

/// Anonymization mode selected for a pipeline run.
#[derive(Clone)]
pub enum AnonMode {
    Direct(Arc<CryptoPan>),
    Table(Arc<TableAnonymizer>),
}

impl AnonMode {
    pub fn direct(key: &AnonKey) -> Self {
        AnonMode::Direct(Arc::new(CryptoPan::new(key)))
    }

    pub fn table(key: &AnonKey, width: u8) -> Result<Self, AnonError> {
        Ok(AnonMode::Table(Arc::new(TableAnonymizer::build(key, width)?)))
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnonMode::Direct(_) => "direct",
            AnonMode::Table(_) => "table",
        }
    }
}

impl AddressAnonymizer for AnonMode {
    #[inline]
    fn anonymize(&self, addr: u32) -> u32 {
        match self {
            AnonMode::Direct(p) => p.anonymize(addr),
            AnonMode::Table(t) => t.anonymize(addr),
        }
    }

    fn state_bytes(&self) -> usize {
        match self {
            AnonMode::Direct(p) => p.state_bytes(),
            AnonMode::Table(t) => t.state_bytes(),
        }
    }
}

/// Maps the source and destination of every record in place. Order and
/// timestamps are untouched.
pub fn anonymize_block<A: AddressAnonymizer + ?Sized>(mode: &A, mut block: PacketBlock) -> PacketBlock {
    for rec in block.records_mut() {
        rec.src = mode.anonymize(rec.src);
        rec.dst = mode.anonymize(rec.dst);
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::PacketRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::net::Ipv4Addr;

    /// Key and vectors published with the reference Crypto-PAn implementation.
    const REFERENCE_KEY: [u8; 32] = [
        21, 34, 23, 141, 51, 164, 207, 128, 19, 10, 91, 22, 73, 144, 125, 16, 216, 152, 143, 131,
        121, 121, 101, 39, 98, 87, 76, 45, 42, 132, 34, 2,
    ];

    const REFERENCE_VECTORS: &[(&str, &str)] = &[
        ("128.11.68.132", "135.242.180.132"),
        ("129.118.74.4", "134.136.186.123"),
        ("130.132.252.244", "133.68.164.234"),
        ("141.223.7.43", "141.167.8.160"),
        ("141.233.145.108", "141.129.237.235"),
        ("152.163.225.39", "151.140.114.167"),
        ("156.29.3.236", "147.225.12.42"),
        ("165.247.96.84", "162.9.99.234"),
        ("166.107.77.190", "160.132.178.185"),
        ("192.102.249.13", "252.138.62.131"),
        ("192.215.32.125", "252.43.47.189"),
        ("192.233.80.103", "252.25.108.8"),
        ("192.41.57.43", "252.222.221.184"),
        ("193.150.244.223", "253.169.52.216"),
        ("195.205.63.100", "255.186.223.5"),
        ("198.200.171.101", "249.199.68.213"),
        ("198.26.132.101", "249.36.123.202"),
        ("198.36.213.5", "249.7.21.132"),
        ("198.51.77.238", "249.18.186.254"),
        ("199.217.79.101", "248.38.184.213"),
        ("202.49.198.20", "245.206.7.234"),
        ("203.12.160.252", "244.248.163.4"),
        ("204.184.162.189", "243.192.77.90"),
        ("204.202.136.230", "243.178.4.198"),
        ("204.29.20.4", "243.33.20.123"),
        ("205.178.38.67", "242.108.198.51"),
        ("205.188.147.153", "242.96.16.101"),
        ("205.188.248.25", "242.96.88.27"),
        ("205.245.121.43", "242.21.121.163"),
        ("207.105.49.5", "241.118.205.138"),
        ("207.135.65.238", "241.202.129.222"),
        ("207.155.9.214", "241.220.250.22"),
        ("207.188.7.45", "241.255.249.220"),
        ("207.25.71.27", "241.33.119.156"),
        ("207.33.151.131", "241.1.233.131"),
        ("208.147.89.59", "227.237.98.191"),
        ("208.234.120.210", "227.154.67.17"),
        ("208.28.185.184", "227.39.94.90"),
        ("208.52.56.122", "227.8.63.165"),
        ("209.12.231.7", "226.243.167.8"),
        ("209.238.72.3", "226.6.119.243"),
        ("209.246.74.109", "226.22.124.76"),
        ("209.68.60.238", "226.184.220.233"),
        ("209.85.249.6", "226.170.70.6"),
        ("212.120.124.31", "228.135.163.231"),
        ("212.146.8.236", "228.19.4.234"),
        ("212.186.227.154", "228.59.98.98"),
        ("212.204.172.118", "228.71.195.169"),
        ("212.206.130.201", "228.69.242.193"),
        ("216.148.237.145", "235.84.194.111"),
        ("216.157.30.252", "235.89.31.26"),
        ("216.184.159.48", "235.96.225.78"),
        ("216.227.10.221", "235.28.253.36"),
        ("216.254.18.172", "235.7.16.162"),
        ("216.32.132.250", "235.192.139.38"),
        ("216.35.217.178", "235.195.157.81"),
        ("24.0.250.221", "100.15.198.226"),
        ("24.13.62.231", "100.2.192.247"),
        ("24.14.213.138", "100.1.42.141"),
        ("24.5.0.80", "100.9.15.210"),
        ("24.7.198.88", "100.10.6.25"),
        ("24.94.26.44", "100.88.228.35"),
        ("38.15.67.68", "64.3.66.187"),
        ("4.3.88.225", "124.60.155.63"),
        ("63.14.55.111", "95.9.215.7"),
        ("63.195.241.44", "95.179.238.44"),
        ("63.97.7.140", "95.97.9.123"),
        ("64.14.118.196", "0.255.183.58"),
        ("64.34.154.117", "0.221.154.117"),
        ("64.39.15.238", "0.219.7.41"),
    ];

    fn ip(s: &str) -> u32 {
        u32::from(s.parse::<Ipv4Addr>().unwrap())
    }

    fn lcp(a: u32, b: u32) -> u32 {
        (a ^ b).leading_zeros()
    }

    fn test_key() -> AnonKey {
        AnonKey::from_bytes(REFERENCE_KEY)
    }

    #[test]
    fn matches_reference_vectors() {
        let pan = CryptoPan::new(&test_key());
        for &(input, expected) in REFERENCE_VECTORS {
            assert_eq!(
                Ipv4Addr::from(pan.anonymize(ip(input))),
                expected.parse::<Ipv4Addr>().unwrap(),
                "{input}"
            );
        }
    }

    #[test]
    fn reference_vectors_through_partial_table() {
        let t = TableAnonymizer::build(&test_key(), 12).unwrap();
        for &(input, expected) in REFERENCE_VECTORS {
            assert_eq!(t.anonymize(ip(input)), ip(expected), "{input}");
        }
    }

    #[test]
    fn neighbouring_addresses_keep_30_bit_prefix() {
        let pan = CryptoPan::new(&test_key());
        let (a, b) = (ip("10.0.0.1"), ip("10.0.0.2"));
        assert_eq!(lcp(a, b), 30);
        assert_eq!(lcp(pan.anonymize(a), pan.anonymize(b)), 30);
    }

    #[test]
    fn prefix_preserved_on_random_pairs() {
        let pan = CryptoPan::new(&test_key());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a: u32 = rng.random();
            // bias towards long shared prefixes
            let b = a ^ (rng.random::<u32>() >> rng.random_range(0..32));
            assert_eq!(lcp(pan.anonymize(a), pan.anonymize(b)), lcp(a, b));
        }
    }

    #[test]
    fn no_collisions_on_sample() {
        let pan = CryptoPan::new(&test_key());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inputs: Vec<u32> = (0..100_000).map(|_| rng.random()).collect();
        inputs.sort_unstable();
        inputs.dedup();
        let mut outputs: Vec<u32> = inputs.iter().map(|&a| pan.anonymize(a)).collect();
        outputs.sort_unstable();
        outputs.dedup();
        assert_eq!(outputs.len(), inputs.len());
    }

    #[test]
    fn width_16_is_a_permutation() {
        let pan = CryptoPan::new(&test_key());
        let mut seen = vec![false; 1 << 16];
        for x in 0..(1u32 << 16) {
            let y = pan.anonymize_prefix(x, 16);
            assert!(y < 1 << 16);
            assert!(!seen[y as usize], "collision at {x}");
            seen[y as usize] = true;
        }
    }

    #[test]
    fn table_width_8_matches_direct() {
        let pan = CryptoPan::new(&test_key());
        let table = build_table(&pan, 8).unwrap();
        assert_eq!(table.len(), 256);
        for x in 0..256u32 {
            assert_eq!(table.get(x), pan.anonymize_prefix(x, 8));
        }
    }

    #[test]
    fn small_widths_match_direct() {
        let pan = CryptoPan::new(&test_key());
        for w in 1..=10u8 {
            let table = build_table(&pan, w).unwrap();
            for x in 0..(1u32 << w) {
                assert_eq!(table.get(x), pan.anonymize_prefix(x, w), "w={w} x={x}");
            }
        }
    }

    #[test]
    fn prefix_value_is_top_bits_of_full_address() {
        let pan = CryptoPan::new(&test_key());
        let a = ip("141.223.7.43");
        for w in 1..=32u8 {
            let shift = 32 - u32::from(w);
            assert_eq!(
                pan.anonymize_prefix(a.checked_shr(shift).unwrap_or(0), w),
                pan.anonymize(a).checked_shr(shift).unwrap_or(0)
            );
        }
    }

    #[test]
    fn production_table_size() {
        assert_eq!(table_bytes(32), 16 * 1024 * 1024 * 1024);
    }

    #[test]
    fn invalid_widths_rejected() {
        let pan = CryptoPan::new(&test_key());
        assert!(matches!(build_table(&pan, 0), Err(AnonError::Width(0))));
        assert!(matches!(build_table(&pan, 33), Err(AnonError::Width(33))));
    }

    #[test]
    fn table_file_round_trip_and_fingerprint() {
        let key = test_key();
        let pan = CryptoPan::new(&key);
        let table = build_table(&pan, 10).unwrap();
        let mut bytes = Vec::new();
        table.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * 1024);
        assert_eq!(&bytes[..4], b"CPAT");
        let back = LookupTable::read_from(&bytes[..], &key).unwrap();
        assert_eq!(back, table);

        let other = AnonKey::from_bytes([9; 32]);
        assert!(matches!(
            LookupTable::read_from(&bytes[..], &other),
            Err(AnonError::FingerprintMismatch { .. })
        ));
        assert!(matches!(
            LookupTable::read_from(&bytes[..bytes.len() - 1], &key),
            Err(AnonError::TableFormat(_))
        ));
        assert!(TableAnonymizer::new(table, CryptoPan::new(&other)).is_err());
    }

    #[test]
    fn key_parsing() {
        let key = test_key();
        assert_eq!(AnonKey::from_hex(&key.to_hex()).unwrap(), key);
        assert!(matches!(AnonKey::from_hex("abcd"), Err(AnonError::KeyLength(2))));
        assert!(matches!(AnonKey::from_hex("zz"), Err(AnonError::KeyHex(_))));
        assert!(!format!("{key:?}").contains(&key.to_hex()));

        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.key");
        std::fs::write(&raw, REFERENCE_KEY).unwrap();
        assert_eq!(AnonKey::from_file(&raw).unwrap(), key);
        let hexed = dir.path().join("hex.key");
        std::fs::write(&hexed, format!("{}\n", key.to_hex())).unwrap();
        assert_eq!(AnonKey::from_file(&hexed).unwrap(), key);
        assert!(matches!(
            AnonKey::from_file(dir.path().join("missing")),
            Err(AnonError::KeyFile { .. })
        ));
    }

    #[test]
    fn block_anonymization() {
        let mode = AnonMode::direct(&test_key());
        let empty = anonymize_block(&mode, PacketBlock::new(0, 0, Vec::new(), false));
        assert!(empty.is_empty());

        let src = ip("1.2.3.4");
        let recs: Vec<PacketRecord> = (0..10)
            .map(|i| PacketRecord::new(src, i, 1000 + u64::from(i)))
            .collect();
        let out = anonymize_block(&mode, PacketBlock::new(3, 7, recs.clone(), false));
        let first = out.records()[0].src;
        assert_ne!(first, src);
        assert!(out.records().iter().all(|r| r.src == first));
        for (a, b) in out.records().iter().zip(&recs) {
            assert_eq!(a.timestamp_us, b.timestamp_us);
            assert_eq!(a.dst, mode.anonymize(b.dst));
        }
        assert_eq!((out.stream(), out.sequence()), (3, 7));
    }
}
