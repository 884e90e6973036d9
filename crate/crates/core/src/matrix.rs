//! Hypersparse traffic matrices.
//!
//! A [`TrafficMatrix`] maps `(source, destination)` pairs to packet counts.
//! Storage is doubly compressed sparse rows (DCSR): only rows that hold at
//! least one entry are listed, so memory is proportional to the number of
//! nonzeros and never to the `2^32 x 2^32` address space.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::range::RangeSet;

/// Size of the IPv4 address space; the dimension of every production matrix.
pub const ADDRESS_SPACE: u64 = 1 << 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("triple #{index} ({row}, {col}) is outside a {row_dim}x{col_dim} matrix")]
    OutOfRange {
        index: usize,
        row: u32,
        col: u32,
        row_dim: u64,
        col_dim: u64,
    },
    #[error("dimension mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: u64,
        left_cols: u64,
        right_rows: u64,
        right_cols: u64,
    },
    #[error("invalid dimension {0}; must be in 1..=2^32")]
    InvalidDimension(u64),
    #[error("packet count overflow")]
    Overflow,
}

/// Sparse vector over 32-bit ids, as produced by row and column reductions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SparseVector {
    dim: u64,
    ids: Vec<u32>,
    vals: Vec<u64>,
}

impl SparseVector {
    /// Builds a vector from `(id, value)` pairs sorted by strictly increasing id.
    /// Zero values are dropped.
    fn from_sorted(dim: u64, pairs: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut ids = Vec::new();
        let mut vals = Vec::new();
        for (id, v) in pairs {
            debug_assert!(ids.last().is_none_or(|&last| last < id));
            if v != 0 {
                ids.push(id);
                vals.push(v);
            }
        }
        SparseVector { dim, ids, vals }
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> u64 {
        self.ids.len() as u64
    }

    /// Largest stored value, 0 for an empty vector.
    pub fn max(&self) -> u64 {
        self.vals.iter().copied().max().unwrap_or(0)
    }

    pub fn sum(&self) -> u64 {
        self.vals.iter().sum()
    }

    pub fn get(&self, id: u32) -> u64 {
        match self.ids.binary_search(&id) {
            Ok(pos) => self.vals[pos],
            Err(_) => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.ids.iter().copied().zip(self.vals.iter().copied())
    }
}

/// Hypersparse matrix of `u64` packet counts.
///
/// Invariants: no stored zeros, ids below their dimension, entries sorted
/// row-major with no duplicate coordinates. Matrices are immutable once
/// built and can be shared across threads.
#[derive(Clone, PartialEq, Eq)]
pub struct TrafficMatrix {
    row_dim: u64,
    col_dim: u64,
    rows: Vec<u32>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<u64>,
    total: u64,
}

impl fmt::Debug for TrafficMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrafficMatrix")
            .field("row_dim", &self.row_dim)
            .field("col_dim", &self.col_dim)
            .field("nnz", &self.nnz())
            .field("total", &self.total)
            .finish()
    }
}

/// Appends sorted, deduplicated entries into DCSR arrays.
struct DcsrBuilder {
    row_dim: u64,
    col_dim: u64,
    rows: Vec<u32>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<u64>,
    total: u64,
}

impl DcsrBuilder {
    fn new(row_dim: u64, col_dim: u64, capacity: usize) -> Self {
        DcsrBuilder {
            row_dim,
            col_dim,
            rows: Vec::new(),
            row_ptr: vec![0],
            cols: Vec::with_capacity(capacity),
            vals: Vec::with_capacity(capacity),
            total: 0,
        }
    }

    /// Caller guarantees (row, col) is strictly greater than the last push.
    fn push(&mut self, row: u32, col: u32, val: u64) -> Result<(), MatrixError> {
        if val == 0 {
            return Ok(());
        }
        if self.rows.last() != Some(&row) {
            if !self.rows.is_empty() {
                self.row_ptr.push(self.cols.len());
            }
            self.rows.push(row);
        }
        self.cols.push(col);
        self.vals.push(val);
        self.total = self.total.checked_add(val).ok_or(MatrixError::Overflow)?;
        Ok(())
    }

    fn finish(mut self) -> TrafficMatrix {
        if !self.rows.is_empty() {
            self.row_ptr.push(self.cols.len());
        }
        TrafficMatrix {
            row_dim: self.row_dim,
            col_dim: self.col_dim,
            rows: self.rows,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
            total: self.total,
        }
    }
}

fn check_dim(dim: u64) -> Result<(), MatrixError> {
    if dim == 0 || dim > ADDRESS_SPACE {
        Err(MatrixError::InvalidDimension(dim))
    } else {
        Ok(())
    }
}

impl TrafficMatrix {
    /// Empty matrix of the given dimensions.
    pub fn empty(row_dim: u64, col_dim: u64) -> Result<Self, MatrixError> {
        check_dim(row_dim)?;
        check_dim(col_dim)?;
        Ok(DcsrBuilder::new(row_dim, col_dim, 0).finish())
    }

    /// Empty `2^32 x 2^32` matrix.
    pub fn empty_traffic() -> Self {
        DcsrBuilder::new(ADDRESS_SPACE, ADDRESS_SPACE, 0).finish()
    }

    /// Builds a matrix from `(row, col, count)` triples. Duplicate
    /// coordinates accumulate and zero counts are dropped.
    pub fn from_triples<I>(row_dim: u64, col_dim: u64, triples: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (u32, u32, u64)>,
    {
        check_dim(row_dim)?;
        check_dim(col_dim)?;
        let mut buf: Vec<(u32, u32, u64)> = Vec::new();
        for (index, (row, col, count)) in triples.into_iter().enumerate() {
            if u64::from(row) >= row_dim || u64::from(col) >= col_dim {
                return Err(MatrixError::OutOfRange {
                    index,
                    row,
                    col,
                    row_dim,
                    col_dim,
                });
            }
            if count != 0 {
                buf.push((row, col, count));
            }
        }
        buf.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut builder = DcsrBuilder::new(row_dim, col_dim, buf.len());
        let mut iter = buf.into_iter();
        if let Some((mut r, mut c, mut acc)) = iter.next() {
            for (row, col, count) in iter {
                if (row, col) == (r, c) {
                    acc = acc.checked_add(count).ok_or(MatrixError::Overflow)?;
                } else {
                    builder.push(r, c, acc)?;
                    (r, c, acc) = (row, col, count);
                }
            }
            builder.push(r, c, acc)?;
        }
        Ok(builder.finish())
    }

    /// Builds a `2^32 x 2^32` matrix counting one packet per `(src, dst)` pair.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut keys: Vec<u64> = pairs
            .into_iter()
            .map(|(s, d)| (u64::from(s) << 32) | u64::from(d))
            .collect();
        keys.sort_unstable();

        let mut builder = DcsrBuilder::new(ADDRESS_SPACE, ADDRESS_SPACE, keys.len());
        let mut i = 0;
        while i < keys.len() {
            let key = keys[i];
            let mut j = i + 1;
            while j < keys.len() && keys[j] == key {
                j += 1;
            }
            builder
                .push((key >> 32) as u32, key as u32, (j - i) as u64)
                .expect("pair count cannot overflow u64");
            i = j;
        }
        builder.finish()
    }

    /// Builds from entries already sorted row-major with distinct
    /// coordinates and in-range ids. Used by decoders that have validated
    /// their input.
    pub(crate) fn from_sorted_entries<I>(
        row_dim: u64,
        col_dim: u64,
        entries: I,
    ) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (u32, u32, u64)>,
    {
        let iter = entries.into_iter();
        let mut builder = DcsrBuilder::new(row_dim, col_dim, iter.size_hint().0);
        for (r, c, v) in iter {
            builder.push(r, c, v)?;
        }
        Ok(builder.finish())
    }

    pub fn row_dim(&self) -> u64 {
        self.row_dim
    }

    pub fn col_dim(&self) -> u64 {
        self.col_dim
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> u64 {
        self.cols.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Number of rows holding at least one entry.
    pub fn nonempty_rows(&self) -> usize {
        self.rows.len()
    }

    /// Sum of every entry. For a window matrix this is the packet count.
    pub fn sum_all(&self) -> u64 {
        self.total
    }

    pub fn get(&self, row: u32, col: u32) -> u64 {
        let Ok(r) = self.rows.binary_search(&row) else {
            return 0;
        };
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&col) {
            Ok(pos) => self.vals[span.start + pos],
            Err(_) => 0,
        }
    }

    /// Row-major iterator over `(row, col, count)`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(r, &row)| {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(move |(&col, &val)| (row, col, val))
        })
    }

    /// Same pattern with every stored value set to 1.
    pub fn zero_norm(&self) -> TrafficMatrix {
        TrafficMatrix {
            row_dim: self.row_dim,
            col_dim: self.col_dim,
            rows: self.rows.clone(),
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: vec![1; self.vals.len()],
            total: self.nnz(),
        }
    }

    /// `A 1`: packets per source.
    pub fn row_sums(&self) -> SparseVector {
        SparseVector::from_sorted(
            self.row_dim,
            self.rows.iter().enumerate().map(|(r, &row)| {
                (row, self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            }),
        )
    }

    /// `|A|_0 1`: distinct columns per row.
    pub fn row_nnz(&self) -> SparseVector {
        SparseVector::from_sorted(
            self.row_dim,
            self.rows
                .iter()
                .enumerate()
                .map(|(r, &row)| (row, (self.row_ptr[r + 1] - self.row_ptr[r]) as u64)),
        )
    }

    /// `1^T A`: packets per destination.
    pub fn col_sums(&self) -> SparseVector {
        self.reduce_cols(|v| v)
    }

    /// `1^T |A|_0`: distinct rows per column.
    pub fn col_nnz(&self) -> SparseVector {
        self.reduce_cols(|_| 1)
    }

    fn reduce_cols(&self, f: impl Fn(u64) -> u64) -> SparseVector {
        let mut pairs: Vec<(u32, u64)> = self
            .cols
            .iter()
            .zip(&self.vals)
            .map(|(&c, &v)| (c, f(v)))
            .collect();
        pairs.sort_unstable_by_key(|&(c, _)| c);
        let mut out: Vec<(u32, u64)> = Vec::with_capacity(pairs.len());
        for (c, v) in pairs {
            match out.last_mut() {
                Some((last, acc)) if *last == c => *acc += v,
                _ => out.push((c, v)),
            }
        }
        SparseVector::from_sorted(self.col_dim, out)
    }

    /// Largest stored value, 0 for an empty matrix.
    pub fn max_entry(&self) -> u64 {
        self.vals.iter().copied().max().unwrap_or(0)
    }

    fn check_same_shape(&self, other: &TrafficMatrix) -> Result<(), MatrixError> {
        if self.row_dim != other.row_dim || self.col_dim != other.col_dim {
            return Err(MatrixError::DimensionMismatch {
                left_rows: self.row_dim,
                left_cols: self.col_dim,
                right_rows: other.row_dim,
                right_cols: other.col_dim,
            });
        }
        Ok(())
    }

    /// Element-wise sum.
    pub fn add(&self, other: &TrafficMatrix) -> Result<TrafficMatrix, MatrixError> {
        self.check_same_shape(other)?;
        let mut builder = DcsrBuilder::new(
            self.row_dim,
            self.col_dim,
            self.cols.len().max(other.cols.len()),
        );
        let mut a = self.iter().peekable();
        let mut b = other.iter().peekable();
        loop {
            let next = match (a.peek(), b.peek()) {
                (None, None) => break,
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (Some(&(ra, ca, va)), Some(&(rb, cb, vb))) => match (ra, ca).cmp(&(rb, cb)) {
                    Ordering::Less => a.next(),
                    Ordering::Greater => b.next(),
                    Ordering::Equal => {
                        a.next();
                        b.next();
                        Some((ra, ca, va.checked_add(vb).ok_or(MatrixError::Overflow)?))
                    }
                },
            };
            let (r, c, v) = next.expect("peeked entry present");
            builder.push(r, c, v)?;
        }
        Ok(builder.finish())
    }

    /// Sums a sequence of equally shaped matrices.
    pub fn sum_of<'a, I>(matrices: I) -> Result<Option<TrafficMatrix>, MatrixError>
    where
        I: IntoIterator<Item = &'a TrafficMatrix>,
    {
        let mut iter = matrices.into_iter();
        let Some(first) = iter.next() else {
            return Ok(None);
        };
        let mut triples: Vec<(u32, u32, u64)> = first.iter().collect();
        for m in iter {
            first.check_same_shape(m)?;
            triples.extend(m.iter());
        }
        TrafficMatrix::from_triples(first.row_dim, first.col_dim, triples).map(Some)
    }

    /// `A_r A A_r`: entries whose row and column both fall in `range`.
    pub fn subrange(&self, range: &RangeSet) -> TrafficMatrix {
        self.filter(|r, c| range.contains(r) && range.contains(c))
    }

    /// `A - A_r A A_r`: everything [`subrange`](Self::subrange) would keep is dropped.
    pub fn exclude(&self, range: &RangeSet) -> TrafficMatrix {
        self.filter(|r, c| !(range.contains(r) && range.contains(c)))
    }

    fn filter(&self, keep: impl Fn(u32, u32) -> bool) -> TrafficMatrix {
        let mut builder = DcsrBuilder::new(self.row_dim, self.col_dim, 0);
        for (r, c, v) in self.iter().filter(|&(r, c, _)| keep(r, c)) {
            builder.push(r, c, v).expect("subset of a valid matrix cannot overflow");
        }
        builder.finish()
    }

    /// Applies `map` to every row and column id. With a bijection this is a
    /// symmetric permutation `P A P^T`.
    pub fn relabel(&self, map: impl Fn(u32) -> u32) -> Result<TrafficMatrix, MatrixError> {
        TrafficMatrix::from_triples(
            self.row_dim,
            self.col_dim,
            self.iter().map(|(r, c, v)| (map(r), map(c), v)),
        )
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.rows.capacity() * 4
            + self.row_ptr.capacity() * std::mem::size_of::<usize>()
            + self.cols.capacity() * 4
            + self.vals.capacity() * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(triples: &[(u32, u32, u64)]) -> TrafficMatrix {
        TrafficMatrix::from_triples(ADDRESS_SPACE, ADDRESS_SPACE, triples.iter().copied()).unwrap()
    }

    #[test]
    fn duplicates_accumulate() {
        let a = m(&[(1, 2, 1), (1, 2, 1)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(1, 2), 2);
        assert_eq!(a.sum_all(), 2);
    }

    #[test]
    fn empty_input() {
        let a = m(&[]);
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.sum_all(), 0);
        assert_eq!(a.max_entry(), 0);
        assert!(a.row_sums().is_empty());
        assert!(a.col_sums().is_empty());
        assert!(a.zero_norm().is_empty());
    }

    #[test]
    fn zero_counts_dropped() {
        let a = m(&[(3, 4, 0), (5, 6, 2)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(3, 4), 0);
    }

    #[test]
    fn out_of_range_names_triple() {
        let err = TrafficMatrix::from_triples(16, 16, [(0, 0, 1), (3, 16, 1)]).unwrap_err();
        assert_eq!(
            err,
            MatrixError::OutOfRange {
                index: 1,
                row: 3,
                col: 16,
                row_dim: 16,
                col_dim: 16
            }
        );
    }

    #[test]
    fn overflow_is_an_error() {
        let err = TrafficMatrix::from_triples(4, 4, [(0, 0, u64::MAX), (0, 0, 1)]).unwrap_err();
        assert_eq!(err, MatrixError::Overflow);
        let err = TrafficMatrix::from_triples(4, 4, [(0, 0, u64::MAX), (0, 1, 1)]).unwrap_err();
        assert_eq!(err, MatrixError::Overflow);
    }

    #[test]
    fn sum_of_five_unit_triples() {
        let a = m(&[(0, 0, 1), (0, 1, 1), (7, 7, 1), (9, 1, 1), (0, 0, 1)]);
        assert_eq!(a.sum_all(), 5);
    }

    #[test]
    fn reductions_small_example() {
        let a = m(&[(0, 1, 2), (0, 2, 1), (3, 1, 4)]);
        let rs: Vec<_> = a.row_sums().iter().collect();
        assert_eq!(rs, vec![(0, 3), (3, 4)]);
        let cs: Vec<_> = a.col_sums().iter().collect();
        assert_eq!(cs, vec![(1, 6), (2, 1)]);
        assert_eq!(a.max_entry(), 4);
        assert_eq!(m(&[(0, 1, 2), (3, 1, 4)]).max_entry(), 4);
    }

    #[test]
    fn zero_norm_pattern() {
        let a = m(&[(1, 2, 5)]);
        let z = a.zero_norm();
        assert_eq!(z.get(1, 2), 1);
        assert_eq!(z.nnz(), 1);
        assert_eq!(z.zero_norm(), z);
    }

    #[test]
    fn add_cases() {
        let a = m(&[(1, 1, 1)]);
        let b = m(&[(1, 1, 2)]);
        assert_eq!(a.add(&b).unwrap().get(1, 1), 3);
        assert_eq!(a.add(&m(&[])).unwrap(), a);
        let small = TrafficMatrix::empty(8, 8).unwrap();
        assert!(matches!(
            a.add(&small),
            Err(MatrixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn subrange_identity_cases() {
        let a = m(&[(1, 2, 3), (4, 5, 6), (u32::MAX, 0, 1)]);
        assert_eq!(a.subrange(&RangeSet::full()), a);
        assert!(a.subrange(&RangeSet::empty()).is_empty());
        assert_eq!(a.exclude(&RangeSet::empty()), a);
        assert!(a.exclude(&RangeSet::full()).is_empty());
    }

    #[test]
    fn sixty_four_blocks_sum_to_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let block = 1usize << 17;
        let blocks: Vec<TrafficMatrix> = (0..64)
            .map(|_| {
                TrafficMatrix::from_pairs(
                    (0..block).map(|_| (rng.random::<u32>() >> 12, rng.random::<u32>() >> 12)),
                )
            })
            .collect();
        for b in &blocks {
            assert_eq!(b.sum_all(), 131072);
        }
        let mut acc = TrafficMatrix::empty_traffic();
        for b in &blocks {
            acc = acc.add(b).unwrap();
        }
        assert_eq!(acc.sum_all(), 8388608);
        assert_eq!(TrafficMatrix::sum_of(&blocks).unwrap().unwrap(), acc);
    }

    #[test]
    fn storage_tracks_nnz_not_dimension() {
        let a = m(&[(0, 0, 1), (u32::MAX, u32::MAX, 1)]);
        assert!(a.heap_bytes() < 1024);
    }

    #[test]
    fn relabel_swaps_ids() {
        let a = m(&[(1, 2, 3)]);
        let b = a.relabel(|x| x ^ 1).unwrap();
        assert_eq!(b.get(0, 3), 3);
        assert_eq!(b.sum_all(), 3);
    }
}
