//! Address subranges, the diagonal selector `A_r` used by
//! [`TrafficMatrix::subrange`](crate::TrafficMatrix::subrange).

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RangeError {
    #[error("empty range item")]
    EmptyItem,
    #[error("invalid address `{0}`")]
    BadAddress(String),
    #[error("invalid prefix length in `{0}`")]
    BadPrefix(String),
    #[error("range start after end in `{0}`")]
    Reversed(String),
}

/// Set of 32-bit ids stored as sorted, disjoint, non-adjacent inclusive
/// intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    intervals: Vec<(u32, u32)>,
}

impl RangeSet {
    pub fn empty() -> Self {
        RangeSet::default()
    }

    pub fn full() -> Self {
        RangeSet {
            intervals: vec![(0, u32::MAX)],
        }
    }

    /// Normalizes arbitrary inclusive intervals. Intervals with `start > end`
    /// are ignored.
    pub fn from_intervals(intervals: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut v: Vec<(u32, u32)> = intervals.into_iter().filter(|(s, e)| s <= e).collect();
        v.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(v.len());
        for (s, e) in v {
            match out.last_mut() {
                Some((_, last_end)) if u64::from(s) <= u64::from(*last_end) + 1 => {
                    *last_end = (*last_end).max(e);
                }
                _ => out.push((s, e)),
            }
        }
        RangeSet { intervals: out }
    }

    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        Self::from_intervals(ids.into_iter().map(|i| (i, i)))
    }

    /// All addresses sharing the top `prefix_len` bits with `addr`.
    pub fn from_cidr(addr: u32, prefix_len: u8) -> Self {
        assert!(prefix_len <= 32, "prefix length above 32");
        let host_bits = 32 - u32::from(prefix_len);
        let mask = if host_bits == 32 { 0 } else { u32::MAX << host_bits };
        let start = addr & mask;
        RangeSet {
            intervals: vec![(start, start | !mask)],
        }
    }

    pub fn union(&self, other: &RangeSet) -> RangeSet {
        Self::from_intervals(self.intervals.iter().chain(&other.intervals).copied())
    }

    pub fn contains(&self, id: u32) -> bool {
        // first interval whose end is >= id
        let pos = self.intervals.partition_point(|&(_, e)| e < id);
        self.intervals.get(pos).is_some_and(|&(s, _)| s <= id)
    }

    /// Number of ids in the set.
    pub fn len(&self) -> u64 {
        self.intervals
            .iter()
            .map(|&(s, e)| u64::from(e) - u64::from(s) + 1)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[(u32, u32)] {
        &self.intervals
    }
}

fn parse_addr(s: &str) -> Result<u32, RangeError> {
    let s = s.trim();
    if s.contains('.') {
        s.parse::<Ipv4Addr>()
            .map(u32::from)
            .map_err(|_| RangeError::BadAddress(s.to_string()))
    } else {
        s.parse::<u32>()
            .map_err(|_| RangeError::BadAddress(s.to_string()))
    }
}

/// Parses a comma-separated list of items, each one of `a.b.c.d/len`,
/// a single address (dotted or decimal), or `start-end`. An empty string or
/// the keyword `none` yields the empty set; `all` yields the full space.
impl FromStr for RangeSet {
    type Err = RangeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "" | "none" => return Ok(RangeSet::empty()),
            "all" => return Ok(RangeSet::full()),
            _ => {}
        }
        let mut intervals = Vec::new();
        for item in s.split(',') {
            let item = item.trim();
            if item.is_empty() {
                return Err(RangeError::EmptyItem);
            }
            if let Some((addr, len)) = item.split_once('/') {
                let len: u8 = len
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&l| l <= 32)
                    .ok_or_else(|| RangeError::BadPrefix(item.to_string()))?;
                intervals.extend(RangeSet::from_cidr(parse_addr(addr)?, len).intervals);
            } else if let Some((a, b)) = item.split_once('-') {
                let (a, b) = (parse_addr(a)?, parse_addr(b)?);
                if a > b {
                    return Err(RangeError::Reversed(item.to_string()));
                }
                intervals.push((a, b));
            } else {
                let a = parse_addr(item)?;
                intervals.push((a, a));
            }
        }
        Ok(RangeSet::from_intervals(intervals))
    }
}

impl fmt::Display for RangeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return f.write_str("none");
        }
        for (i, &(s, e)) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if s == e {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}-{e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merge_and_contains() {
        let r = RangeSet::from_intervals([(10, 20), (21, 30), (5, 12), (100, 100)]);
        assert_eq!(r.intervals(), &[(5, 30), (100, 100)]);
        assert!(r.contains(5) && r.contains(30) && r.contains(100));
        assert!(!r.contains(4) && !r.contains(31) && !r.contains(99));
        assert_eq!(r.len(), 27);
    }

    #[test]
    fn full_and_empty() {
        assert_eq!(RangeSet::full().len(), 1 << 32);
        assert!(RangeSet::full().contains(u32::MAX));
        assert!(!RangeSet::empty().contains(0));
    }

    #[test]
    fn parse_items() {
        let r: RangeSet = "10.0.0.0/8, 192.168.1.5,1-3".parse().unwrap();
        assert!(r.contains(u32::from(Ipv4Addr::new(10, 255, 0, 1))));
        assert!(r.contains(u32::from(Ipv4Addr::new(192, 168, 1, 5))));
        assert!(r.contains(2));
        assert!(!r.contains(4));
        assert_eq!("0.0.0.0/0".parse::<RangeSet>().unwrap(), RangeSet::full());
        assert_eq!("all".parse::<RangeSet>().unwrap(), RangeSet::full());
        assert_eq!("".parse::<RangeSet>().unwrap(), RangeSet::empty());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!("10.0.0.0/33".parse::<RangeSet>(), Err(RangeError::BadPrefix(_))));
        assert!(matches!("9-3".parse::<RangeSet>(), Err(RangeError::Reversed(_))));
        assert!(matches!("1,,2".parse::<RangeSet>(), Err(RangeError::EmptyItem)));
        assert!(matches!("1.2.3".parse::<RangeSet>(), Err(RangeError::BadAddress(_))));
    }

    proptest! {
        #[test]
        fn contains_matches_intervals(raw in prop::collection::vec((0u32..512, 0u32..64), 0..12), probe in 0u32..600) {
            let ivs: Vec<(u32, u32)> = raw.iter().map(|&(s, w)| (s, s + w)).collect();
            let r = RangeSet::from_intervals(ivs.clone());
            let expected = ivs.iter().any(|&(s, e)| s <= probe && probe <= e);
            prop_assert_eq!(r.contains(probe), expected);
            for w in r.intervals().windows(2) {
                prop_assert!(u64::from(w[0].1) + 1 < u64::from(w[1].0));
            }
        }

        #[test]
        fn display_round_trips(raw in prop::collection::vec((any::<u32>(), 0u32..1000), 0..8)) {
            let r = RangeSet::from_intervals(raw.iter().map(|&(s, w)| (s, s.saturating_add(w))));
            prop_assert_eq!(r.to_string().parse::<RangeSet>().unwrap(), r);
        }
    }
}
