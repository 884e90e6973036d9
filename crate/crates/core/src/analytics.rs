//! Network quantities of a traffic window and their multi-scale aggregates.
//!
//! Every scalar is a reduction of the window matrix `A`:
//!
//! | quantity                | formula            |
//! |-------------------------|--------------------|
//! | valid packets           | `1^T A 1`          |
//! | unique links            | `1^T abs0(A) 1`    |
//! | max link packets        | `max(A)`           |
//! | unique sources          | `nnz(A 1)`         |
//! | max source packets      | `max(A 1)`         |
//! | max source fan-out      | `max(abs0(A) 1)`   |
//! | unique destinations     | `nnz(1^T A)`       |
//! | max destination packets | `max(1^T A)`       |
//! | max destination fan-in  | `max(1^T abs0(A))` |
//!
//! where `abs0` sets each nonzero to 1. Destination packets are column sums
//! of `A`; fan-in is column sums of `abs0(A)`. All of them are invariant
//! under a symmetric relabelling of ids, so they can be computed on
//! anonymized windows.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{MatrixError, SparseVector, TrafficMatrix};

/// Scalar aggregates of one window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkQuantities {
    pub valid_packets: u64,
    pub unique_links: u64,
    pub max_link_packets: u64,
    pub unique_sources: u64,
    pub max_source_packets: u64,
    pub max_source_fanout: u64,
    pub unique_destinations: u64,
    pub max_destination_packets: u64,
    pub max_destination_fanin: u64,
}

/// Per-id vectors behind the scalar maxima. Computed on demand only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantityVectors {
    /// `A 1`
    pub source_packets: SparseVector,
    /// `abs0(A) 1`
    pub source_fanout: SparseVector,
    /// `1^T A`
    pub destination_packets: SparseVector,
    /// `1^T abs0(A)`
    pub destination_fanin: SparseVector,
}

pub fn compute_quantities(a: &TrafficMatrix) -> NetworkQuantities {
    let source_packets = a.row_sums();
    let destination_packets = a.col_sums();
    let destination_fanin = a.col_nnz();
    NetworkQuantities {
        valid_packets: a.sum_all(),
        unique_links: a.nnz(),
        max_link_packets: a.max_entry(),
        unique_sources: source_packets.nnz(),
        max_source_packets: source_packets.max(),
        max_source_fanout: a.row_nnz().max(),
        unique_destinations: destination_packets.nnz(),
        max_destination_packets: destination_packets.max(),
        max_destination_fanin: destination_fanin.max(),
    }
}

pub fn compute_vectors(a: &TrafficMatrix) -> QuantityVectors {
    QuantityVectors {
        source_packets: a.row_sums(),
        source_fanout: a.row_nnz(),
        destination_packets: a.col_sums(),
        destination_fanin: a.col_nnz(),
    }
}

impl NetworkQuantities {
    /// Checks the ordering relations that hold for every traffic matrix.
    pub fn check_invariants(&self) -> Result<(), String> {
        let checks = [
            (self.unique_links <= self.valid_packets, "unique_links <= valid_packets"),
            (self.unique_sources <= self.unique_links, "unique_sources <= unique_links"),
            (
                self.unique_destinations <= self.unique_links,
                "unique_destinations <= unique_links",
            ),
            (
                self.max_source_fanout <= self.unique_destinations,
                "max_source_fanout <= unique_destinations",
            ),
            (
                self.max_destination_fanin <= self.unique_sources,
                "max_destination_fanin <= unique_sources",
            ),
            (
                self.max_link_packets <= self.max_source_packets,
                "max_link_packets <= max_source_packets",
            ),
            (
                self.max_link_packets <= self.max_destination_packets,
                "max_link_packets <= max_destination_packets",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(format!("violated {what}: {self:?}")),
            None => Ok(()),
        }
    }

    fn values(&self) -> [u64; 9] {
        [
            self.valid_packets,
            self.unique_links,
            self.max_link_packets,
            self.unique_sources,
            self.max_source_packets,
            self.max_source_fanout,
            self.unique_destinations,
            self.max_destination_packets,
            self.max_destination_fanin,
        ]
    }

    fn from_values(v: [u64; 9]) -> Self {
        NetworkQuantities {
            valid_packets: v[0],
            unique_links: v[1],
            max_link_packets: v[2],
            unique_sources: v[3],
            max_source_packets: v[4],
            max_source_fanout: v[5],
            unique_destinations: v[6],
            max_destination_packets: v[7],
            max_destination_fanin: v[8],
        }
    }
}

/// Quantities of one window at one aggregation level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: u32,
    pub window_index: u64,
    #[serde(flatten)]
    pub quantities: NetworkQuantities,
}

/// Streaming pairwise aggregator.
///
/// Level 0 receives input windows in arrival order. Each level holds at
/// most one pending window; when a second arrives the two are summed and
/// the result is pushed to the next level, so level `k` windows cover
/// `2^k` inputs. An odd window left pending at the end is not summed with
/// anything and is never promoted.
pub struct HierarchicalAggregator {
    levels: u32,
    pending: Vec<Option<TrafficMatrix>>,
    counts: Vec<u64>,
    keep_matrices: bool,
    rows: Vec<LevelRow>,
    matrices: Vec<Vec<TrafficMatrix>>,
}

impl HierarchicalAggregator {
    /// `levels` is the number of aggregation levels above the inputs, so
    /// rows are produced for levels `0..=levels`.
    pub fn new(levels: u32) -> Self {
        let n = levels as usize + 1;
        HierarchicalAggregator {
            levels,
            pending: vec![None; n],
            counts: vec![0; n],
            keep_matrices: false,
            rows: Vec::new(),
            matrices: vec![Vec::new(); n],
        }
    }

    /// Also retain every aggregated matrix (memory grows with input).
    pub fn keep_matrices(mut self) -> Self {
        self.keep_matrices = true;
        self
    }

    pub fn push(&mut self, window: TrafficMatrix) -> Result<(), MatrixError> {
        let mut level = 0usize;
        let mut current = window;
        loop {
            self.rows.push(LevelRow {
                level: level as u32,
                window_index: self.counts[level],
                quantities: compute_quantities(&current),
            });
            self.counts[level] += 1;
            if self.keep_matrices {
                self.matrices[level].push(current.clone());
            }
            if level == self.levels as usize {
                return Ok(());
            }
            match self.pending[level].take() {
                None => {
                    self.pending[level] = Some(current);
                    return Ok(());
                }
                Some(earlier) => {
                    current = earlier.add(&current)?;
                    level += 1;
                }
            }
        }
    }

    pub fn rows(&self) -> &[LevelRow] {
        &self.rows
    }

    /// Rows sorted by level, then window index.
    pub fn finish(self) -> (Vec<LevelRow>, Vec<Vec<TrafficMatrix>>) {
        let mut rows = self.rows;
        rows.sort_by_key(|r| (r.level, r.window_index));
        (rows, self.matrices)
    }
}

/// Aggregated windows and their quantities, per level.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub rows: Vec<LevelRow>,
    /// `matrices[k]` are the level-`k` windows in order.
    pub matrices: Vec<Vec<TrafficMatrix>>,
}

/// Convenience wrapper over [`HierarchicalAggregator`] that keeps matrices.
pub fn hierarchical_aggregate<I>(windows: I, levels: u32) -> Result<Hierarchy, MatrixError>
where
    I: IntoIterator<Item = TrafficMatrix>,
{
    let mut agg = HierarchicalAggregator::new(levels).keep_matrices();
    for w in windows {
        agg.push(w)?;
    }
    let (rows, matrices) = agg.finish();
    Ok(Hierarchy { rows, matrices })
}

/// Column order of the TSV report.
pub const TSV_HEADER: [&str; 11] = [
    "level",
    "window_index",
    "nv",
    "unique_links",
    "max_link",
    "unique_src",
    "max_src_pkts",
    "max_src_fanout",
    "unique_dst",
    "max_dst_pkts",
    "max_dst_fanin",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            other => Err(ReportError::Format(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format `{0}`")]
    Format(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn tsv_header() -> String {
    let mut s = TSV_HEADER.join("\t");
    s.push('\n');
    s
}

pub fn tsv_row(row: &LevelRow) -> String {
    let mut s = format!("{}\t{}", row.level, row.window_index);
    for v in row.quantities.values() {
        write!(s, "\t{v}").unwrap();
    }
    s.push('\n');
    s
}

/// Renders rows as a TSV document (header always present) or a JSON array.
pub fn quantities_report(rows: &[LevelRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Tsv => {
            let mut out = tsv_header();
            for r in rows {
                out.push_str(&tsv_row(r));
            }
            out
        }
        ReportFormat::Json => {
            serde_json::to_string_pretty(rows).expect("rows serialize") + "\n"
        }
    }
}

/// Parses a TSV report produced by [`quantities_report`].
pub fn parse_quantities_tsv(text: &str) -> Result<Vec<LevelRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').eq(TSV_HEADER.iter().copied()) => {}
        _ => {
            return Err(ReportError::Parse {
                line: 1,
                reason: "missing or unexpected header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let err = |reason: &str| ReportError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<u64> = line
            .split('\t')
            .map(|f| f.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err("non-numeric field"))?;
        if fields.len() != TSV_HEADER.len() {
            return Err(err("wrong field count"));
        }
        rows.push(LevelRow {
            level: u32::try_from(fields[0]).map_err(|_| err("level too large"))?,
            window_index: fields[1],
            quantities: NetworkQuantities::from_values(fields[2..].try_into().unwrap()),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ADDRESS_SPACE;

    fn m(triples: &[(u32, u32, u64)]) -> TrafficMatrix {
        TrafficMatrix::from_triples(ADDRESS_SPACE, ADDRESS_SPACE, triples.iter().copied()).unwrap()
    }

    #[test]
    fn worked_example() {
        // dense 4x3 oracle:
        //        c0 c1 c2
        //   r0 [  0  2  1 ]
        //   r3 [  0  4  0 ]
        let q = compute_quantities(&m(&[(0, 1, 2), (0, 2, 1), (3, 1, 4)]));
        assert_eq!(
            q,
            NetworkQuantities {
                valid_packets: 7,
                unique_links: 3,
                max_link_packets: 4,
                unique_sources: 2,
                max_source_packets: 4,
                max_source_fanout: 2,
                unique_destinations: 2,
                max_destination_packets: 6,
                max_destination_fanin: 2,
            }
        );
        q.check_invariants().unwrap();
    }

    #[test]
    fn empty_matrix_all_zero() {
        assert_eq!(
            compute_quantities(&TrafficMatrix::empty_traffic()),
            NetworkQuantities::default()
        );
    }

    #[test]
    fn two_windows_one_level() {
        let w = m(&[(1, 2, 4)]);
        let h = hierarchical_aggregate([w.clone(), w], 1).unwrap();
        let top: Vec<_> = h.rows.iter().filter(|r| r.level == 1).collect();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].quantities.valid_packets, 8);
    }

    #[test]
    fn odd_window_is_carried() {
        let w = m(&[(1, 2, 1)]);
        let h = hierarchical_aggregate(vec![w; 5], 3).unwrap();
        let per_level: Vec<usize> = (0..=3)
            .map(|l| h.rows.iter().filter(|r| r.level == l).count())
            .collect();
        assert_eq!(per_level, vec![5, 2, 1, 0]);
        for r in &h.rows {
            assert_eq!(r.quantities.valid_packets, 1 << r.level);
        }
    }

    #[test]
    fn unique_links_subadditive() {
        let a = m(&[(1, 1, 1), (2, 2, 1)]);
        let b = m(&[(1, 1, 3), (3, 3, 1)]);
        let h = hierarchical_aggregate([a, b], 1).unwrap();
        let l0: u64 = h.rows.iter().filter(|r| r.level == 0).map(|r| r.quantities.unique_links).sum();
        let l1 = h.rows.iter().find(|r| r.level == 1).unwrap().quantities.unique_links;
        assert!(l1 <= l0);
        assert_eq!(l1, 3);
    }

    #[test]
    fn report_tsv_and_json() {
        assert_eq!(quantities_report(&[], ReportFormat::Tsv), tsv_header());
        assert_eq!(
            tsv_header(),
            "level\twindow_index\tnv\tunique_links\tmax_link\tunique_src\tmax_src_pkts\tmax_src_fanout\tunique_dst\tmax_dst_pkts\tmax_dst_fanin\n"
        );
        let windows = [
            m(&[(0, 1, 2), (0, 2, 1), (3, 1, 4)]),
            m(&[(5, 5, 7)]),
            m(&[(1, 2, 3), (2, 1, 4)]),
        ];
        let rows: Vec<LevelRow> = windows
            .iter()
            .enumerate()
            .map(|(i, w)| LevelRow {
                level: 0,
                window_index: i as u64,
                quantities: compute_quantities(w),
            })
            .collect();
        let tsv = quantities_report(&rows, ReportFormat::Tsv);
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.lines().skip(1).all(|l| l.split('\t').nth(2) == Some("7")));
        assert_eq!(parse_quantities_tsv(&tsv).unwrap(), rows);

        let json = quantities_report(&rows, ReportFormat::Json);
        let back: Vec<LevelRow> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_quantities_tsv("").is_err());
        let bad = format!("{}0\t0\t1\n", tsv_header());
        assert!(parse_quantities_tsv(&bad).is_err());
    }
}
