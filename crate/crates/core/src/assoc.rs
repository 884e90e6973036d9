//! Associative arrays over string keys and the connection-log report built
//! on them.
//!
//! A log is exploded into an event array `E` with one row per record and one
//! column per `field|value` string. Products `Ea^T Eb` then count how many
//! records carry each pair of values, e.g. connections per (user,
//! destination).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

/// Field holding the record id when a log carries one.
pub const ID_FIELD: &str = "id";
pub const USER_FIELD: &str = "userID";
pub const DST_FIELD: &str = "DstIP";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log has no header line")]
    MissingHeader,
    #[error("header has an empty or repeated field name")]
    BadHeader,
    #[error("error budget of {budget} exceeded at line {line}: {reason}")]
    BudgetExceeded { budget: u64, line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sparse count-valued array with sorted, duplicate-free string keys.
///
/// Only keys that carry at least one entry are kept, and no zero is stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssocArray {
    rows: Vec<String>,
    cols: Vec<String>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<u64>,
}

impl Default for AssocArray {
    fn default() -> Self {
        Self::new()
    }
}

impl AssocArray {
    pub fn new() -> Self {
        AssocArray {
            rows: Vec::new(),
            cols: Vec::new(),
            row_ptr: vec![0],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds an array from `(row, col, value)` triples; repeated keys add
    /// and zero values vanish.
    pub fn from_triples<R, C, I>(triples: I) -> Self
    where
        R: Into<String>,
        C: Into<String>,
        I: IntoIterator<Item = (R, C, u64)>,
    {
        let mut acc: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (r, c, v) in triples {
            if v != 0 {
                *acc.entry((r.into(), c.into())).or_insert(0) += v;
            }
        }
        Self::from_sorted_map(acc)
    }

    fn from_sorted_map(acc: BTreeMap<(String, String), u64>) -> Self {
        let cols: Vec<String> = acc
            .keys()
            .map(|(_, c)| c.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let mut out = AssocArray::new();
        for ((r, c), v) in acc {
            if out.rows.last() != Some(&r) {
                out.rows.push(r);
                out.row_ptr.push(out.col_idx.len());
            }
            let j = cols.binary_search(&c).expect("column collected above");
            out.col_idx.push(j as u32);
            out.vals.push(v);
            *out.row_ptr.last_mut().unwrap() = out.col_idx.len();
        }
        out.cols = cols;
        out
    }

    pub fn row_keys(&self) -> &[String] {
        &self.rows
    }

    pub fn col_keys(&self) -> &[String] {
        &self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn get(&self, row: &str, col: &str) -> u64 {
        let (Ok(i), Ok(j)) = (
            self.rows.binary_search_by(|k| k.as_str().cmp(row)),
            self.cols.binary_search_by(|k| k.as_str().cmp(col)),
        ) else {
            return 0;
        };
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&(j as u32)) {
            Ok(p) => self.vals[range.start + p],
            Err(_) => 0,
        }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (u32, u64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// Entries in row-major key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> + '_ {
        (0..self.rows.len()).flat_map(move |i| {
            self.row(i)
                .map(move |(j, v)| (self.rows[i].as_str(), self.cols[j as usize].as_str(), v))
        })
    }

    pub fn transpose(&self) -> AssocArray {
        AssocArray::from_triples(self.iter().map(|(r, c, v)| (c, r, v)))
    }

    pub fn sum(&self) -> u64 {
        self.vals.iter().sum()
    }

    /// `A 1`.
    pub fn row_sums(&self) -> BTreeMap<String, u64> {
        (0..self.rows.len())
            .map(|i| (self.rows[i].clone(), self.row(i).map(|(_, v)| v).sum()))
            .collect()
    }

    /// `|A|_0 1`.
    pub fn row_nnz(&self) -> BTreeMap<String, u64> {
        (0..self.rows.len())
            .map(|i| (self.rows[i].clone(), (self.row_ptr[i + 1] - self.row_ptr[i]) as u64))
            .collect()
    }

    fn col_reduce(&self, f: impl Fn(u64) -> u64) -> BTreeMap<String, u64> {
        let mut acc = vec![0u64; self.cols.len()];
        for (&j, &v) in self.col_idx.iter().zip(&self.vals) {
            acc[j as usize] += f(v);
        }
        self.cols.iter().cloned().zip(acc).collect()
    }

    /// `1^T A`.
    pub fn col_sums(&self) -> BTreeMap<String, u64> {
        self.col_reduce(|v| v)
    }

    /// `1^T |A|_0`.
    pub fn col_nnz(&self) -> BTreeMap<String, u64> {
        self.col_reduce(|_| 1)
    }
}

/// `Ea^T Eb`: entry `(a, b)` counts the rows (records) holding both column
/// `a` of `Ea` and column `b` of `Eb`, weighted by the entry values.
pub fn transpose_multiply(ea: &AssocArray, eb: &AssocArray) -> AssocArray {
    let mut acc: HashMap<(u32, u32), u64> = HashMap::new();
    let (mut i, mut k) = (0, 0);
    while i < ea.rows.len() && k < eb.rows.len() {
        match ea.rows[i].cmp(&eb.rows[k]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => k += 1,
            std::cmp::Ordering::Equal => {
                for (a, va) in ea.row(i) {
                    for (b, vb) in eb.row(k) {
                        *acc.entry((a, b)).or_insert(0) += va * vb;
                    }
                }
                i += 1;
                k += 1;
            }
        }
    }
    let mut sorted: Vec<((u32, u32), u64)> = acc.into_iter().collect();
    sorted.sort_unstable();
    let mut out = AssocArray::new();
    let mut cols_used = vec![false; eb.cols.len()];
    for &((_, b), _) in &sorted {
        cols_used[b as usize] = true;
    }
    let mut remap = vec![0u32; eb.cols.len()];
    for (j, used) in cols_used.iter().enumerate() {
        if *used {
            remap[j] = out.cols.len() as u32;
            out.cols.push(eb.cols[j].clone());
        }
    }
    for ((a, b), v) in sorted {
        let key = &ea.cols[a as usize];
        if out.rows.last() != Some(key) {
            out.rows.push(key.clone());
            out.row_ptr.push(out.col_idx.len());
        }
        out.col_idx.push(remap[b as usize]);
        out.vals.push(v);
        *out.row_ptr.last_mut().unwrap() = out.col_idx.len();
    }
    out
}

/// Per-key tallies of an array.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArrayTallies {
    pub row_sums: BTreeMap<String, u64>,
    pub row_nnz: BTreeMap<String, u64>,
    pub col_sums: BTreeMap<String, u64>,
    pub col_nnz: BTreeMap<String, u64>,
}

pub fn array_quantities(a: &AssocArray) -> ArrayTallies {
    ArrayTallies {
        row_sums: a.row_sums(),
        row_nnz: a.row_nnz(),
        col_sums: a.col_sums(),
        col_nnz: a.col_nnz(),
    }
}

fn escape_into(out: &mut String, s: &str) {
    for ch in s.chars() {
        if ch == '|' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
}

/// `field|value` with `|` and `\` in either part escaped by `\`.
pub fn column_key(field: &str, value: &str) -> String {
    let mut out = String::with_capacity(field.len() + value.len() + 1);
    escape_into(&mut out, field);
    out.push('|');
    escape_into(&mut out, value);
    out
}

/// Inverse of [`column_key`].
pub fn split_column_key(key: &str) -> Option<(String, String)> {
    let mut parts = [String::new(), String::new()];
    let mut part = 0;
    let mut chars = key.chars();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => parts[part].push(chars.next()?),
            '|' if part == 0 => part = 1,
            '|' => return None,
            c => parts[part].push(c),
        }
    }
    if part == 0 {
        return None;
    }
    let [f, v] = parts;
    Some((f, v))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub id: String,
    pub fields: BTreeMap<String, String>,
}

impl LogRecord {
    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    /// Data lines dropped as malformed.
    pub skipped: u64,
    /// Data lines seen, including skipped ones.
    pub lines: u64,
}

/// Parses a tab-separated log whose first line names the fields.
///
/// Records take their id from an `id` column when there is one and are
/// otherwise named `<date>-<line>` by 1-based file line. Empty fields are
/// omitted. A line with the wrong number of fields or a repeated id is
/// skipped; more than `budget` skips is an error. Blank lines are ignored.
pub fn parse_log<R: BufRead>(reader: R, date: &str, budget: u64) -> Result<ParsedLog, LogError> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            None => return Err(LogError::MissingHeader),
            Some(line) => {
                let line = line?;
                let line = line.trim_end_matches('\r');
                if !line.is_empty() {
                    break line.split('\t').map(str::to_string).collect::<Vec<_>>();
                }
            }
        }
    };
    let mut names = HashSet::new();
    if header.iter().any(|h| h.is_empty() || !names.insert(h.as_str())) {
        return Err(LogError::BadHeader);
    }
    let id_col = header.iter().position(|h| h == ID_FIELD);

    let mut out = ParsedLog::default();
    let mut seen = HashSet::new();
    let skip = |out: &mut ParsedLog, line: u64, reason: String| {
        out.skipped += 1;
        if out.skipped > budget {
            Err(LogError::BudgetExceeded { budget, line, reason })
        } else {
            Ok(())
        }
    };
    // Header sits on some line >= 1; count from the line after it.
    let header_line = 1;
    for (offset, line) in lines.enumerate() {
        let line_no = header_line + 1 + offset as u64;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        out.lines += 1;
        let values: Vec<&str> = line.split('\t').collect();
        if values.len() != header.len() {
            let reason = format!("expected {} fields, found {}", header.len(), values.len());
            skip(&mut out, line_no, reason)?;
            continue;
        }
        let id = match id_col {
            Some(c) if !values[c].is_empty() => values[c].to_string(),
            Some(_) => {
                skip(&mut out, line_no, "empty record id".to_string())?;
                continue;
            }
            None => format!("{date}-{line_no}"),
        };
        if !seen.insert(id.clone()) {
            skip(&mut out, line_no, format!("duplicate record id `{id}`"))?;
            continue;
        }
        let fields = header
            .iter()
            .zip(&values)
            .enumerate()
            .filter(|&(c, (_, v))| Some(c) != id_col && !v.is_empty())
            .map(|(_, (h, v))| (h.clone(), v.to_string()))
            .collect();
        out.records.push(LogRecord { id, fields });
    }
    Ok(out)
}

/// Event array over the given fields: `E(record, field|value) = 1`.
pub fn explode<S: AsRef<str>>(records: &[LogRecord], fields: &[S]) -> AssocArray {
    AssocArray::from_triples(records.iter().flat_map(|r| {
        fields.iter().filter_map(move |f| {
            let f = f.as_ref();
            r.get(f).map(|v| (r.id.clone(), column_key(f, v), 1))
        })
    }))
}

/// Ranked `(value, count)` rows.
pub type TopK = Vec<(String, u64)>;

/// Summary of one day's connections.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DailyReport {
    pub date: String,
    pub records: u64,
    /// Records that carry both a user and a destination.
    pub connections: u64,
    pub distinct_users: u64,
    pub distinct_destinations: u64,
    pub top_users_by_connections: TopK,
    pub top_users_by_destinations: TopK,
    pub top_destinations_by_connections: TopK,
    pub top_destinations_by_users: TopK,
}

/// Highest counts first; ties by ascending key. Keys lose their `field|`
/// prefix.
fn top_k(tally: &BTreeMap<String, u64>, k: usize) -> TopK {
    let mut rows: Vec<(&String, u64)> = tally.iter().map(|(key, &v)| (key, v)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows.into_iter()
        .take(k)
        .map(|(key, v)| {
            let value = split_column_key(key).map(|(_, v)| v).unwrap_or_else(|| key.clone());
            (value, v)
        })
        .collect()
}

/// Builds `A = E_user^T E_dst` and ranks users and destinations.
///
/// # Panics
///
/// If `top_k` is zero.
pub fn daily_report(records: &[LogRecord], top_k_rows: usize, date: &str) -> DailyReport {
    assert!(top_k_rows >= 1, "top_k must be at least 1");
    let users = explode(records, &[USER_FIELD]);
    let dsts = explode(records, &[DST_FIELD]);
    let a = transpose_multiply(&users, &dsts);
    let t = array_quantities(&a);
    DailyReport {
        date: date.to_string(),
        records: records.len() as u64,
        connections: a.sum(),
        distinct_users: users.col_keys().len() as u64,
        distinct_destinations: dsts.col_keys().len() as u64,
        top_users_by_connections: top_k(&t.row_sums, top_k_rows),
        top_users_by_destinations: top_k(&t.row_nnz, top_k_rows),
        top_destinations_by_connections: top_k(&t.col_sums, top_k_rows),
        top_destinations_by_users: top_k(&t.col_nnz, top_k_rows),
    }
}

impl DailyReport {
    fn tables(&self) -> [(&'static str, &'static str, &TopK); 4] {
        [
            ("users_by_connections", "connections", &self.top_users_by_connections),
            ("users_by_destinations", "destinations", &self.top_users_by_destinations),
            ("destinations_by_connections", "connections", &self.top_destinations_by_connections),
            ("destinations_by_users", "users", &self.top_destinations_by_users),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Connection report for {}", self.date);
        let _ = writeln!(out);
        let _ = writeln!(out, "records                {}", self.records);
        let _ = writeln!(out, "connections            {}", self.connections);
        let _ = writeln!(out, "distinct users         {}", self.distinct_users);
        let _ = writeln!(out, "distinct destinations  {}", self.distinct_destinations);
        for (name, unit, rows) in self.tables() {
            let _ = writeln!(out);
            let _ = writeln!(out, "top {} ({unit})", name.replace('_', " "));
            if rows.is_empty() {
                let _ = writeln!(out, "  (none)");
            }
            for (rank, (key, v)) in rows.iter().enumerate() {
                let _ = writeln!(out, "  {:>3}. {key:<40} {v}", rank + 1);
            }
        }
        out
    }

    /// One `table rank key count` row per ranked entry, after summary rows
    /// with rank 0.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("table\trank\tkey\tcount\n");
        for (key, v) in [
            ("records", self.records),
            ("connections", self.connections),
            ("distinct_users", self.distinct_users),
            ("distinct_destinations", self.distinct_destinations),
        ] {
            let _ = writeln!(out, "summary\t0\t{key}\t{v}");
        }
        for (name, _, rows) in self.tables() {
            for (rank, (key, v)) in rows.iter().enumerate() {
                let _ = writeln!(out, "{name}\t{}\t{key}\t{v}", rank + 1);
            }
        }
        out
    }

    /// `report_<date>`, to be suffixed `.txt` or `.tsv`.
    pub fn file_stem(&self) -> String {
        format!("report_{}", self.date)
    }
}

pub const SYNTHETIC_LOG_HEADER: &str = "timestamp\tuserID\tSrcIP\tDstIP\tDstPort\tproto";

/// Writes a deterministic synthetic connection log with `records` data
/// lines. Users and destinations follow Zipf popularity; about one line in
/// fifty lacks a user.
pub fn write_synthetic_log<W: Write>(mut out: W, records: u64, seed: u64) -> io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = Zipf::new(500.0, 1.1).expect("valid zipf parameters");
    let dsts = Zipf::new(20_000.0, 1.05).expect("valid zipf parameters");
    const PORTS: [u16; 6] = [22, 53, 80, 123, 443, 8080];
    writeln!(out, "{SYNTHETIC_LOG_HEADER}")?;
    let mut ts = 1_690_000_000u64;
    for _ in 0..records {
        ts += rng.random_range(0..3);
        let user = if rng.random_ratio(1, 50) {
            String::new()
        } else {
            format!("user{:03}", users.sample(&mut rng) as u32)
        };
        let d = dsts.sample(&mut rng) as u32;
        let dst = std::net::Ipv4Addr::from(0x0A00_0000 | (d.wrapping_mul(2_654_435_761) & 0x00FF_FFFF));
        let src = std::net::Ipv4Addr::from(0xC0A8_0000 | rng.random_range(1u32..255));
        let port = PORTS[rng.random_range(0..PORTS.len())];
        let proto = if port == 53 || port == 123 { "UDP" } else { "TCP" };
        writeln!(out, "{ts}\t{user}\t{src}\t{dst}\t{port}\t{proto}")?;
    }
    Ok(())
}

/// Converts netfilter `LOG` lines (`... SRC=a DST=b PROTO=p DPT=n UID=u`)
/// to the synthetic log's TSV layout. Lines without `SRC=` and `DST=` are
/// dropped. Only meant for producing fixtures.
pub fn netfilter_to_tsv<R: BufRead, W: Write>(input: R, mut out: W) -> io::Result<u64> {
    writeln!(out, "{SYNTHETIC_LOG_HEADER}")?;
    let mut written = 0;
    for line in input.lines() {
        let line = line?;
        let mut kv: HashMap<&str, &str> = HashMap::new();
        for token in line.split_whitespace() {
            if let Some((k, v)) = token.split_once('=') {
                kv.insert(k, v);
            }
        }
        let (Some(src), Some(dst)) = (kv.get("SRC"), kv.get("DST")) else {
            continue;
        };
        let stamp: Vec<&str> = line.split_whitespace().take(3).collect();
        let get = |k: &str| kv.get(k).copied().unwrap_or("");
        writeln!(
            out,
            "{}\t{}\t{src}\t{dst}\t{}\t{}",
            stamp.join(" "),
            get("UID"),
            get("DPT"),
            get("PROTO")
        )?;
        written += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, fields: &[(&str, &str)]) -> LogRecord {
        LogRecord {
            id: id.to_string(),
            fields: fields.iter().map(|(f, v)| (f.to_string(), v.to_string())).collect(),
        }
    }

    fn alice_bob() -> Vec<LogRecord> {
        vec![
            rec("r1", &[(USER_FIELD, "alice"), (DST_FIELD, "d1")]),
            rec("r2", &[(USER_FIELD, "alice"), (DST_FIELD, "d2")]),
            rec("r3", &[(USER_FIELD, "bob"), (DST_FIELD, "d1")]),
        ]
    }

    #[test]
    fn alice_bob_tallies() {
        let recs = alice_bob();
        let a = transpose_multiply(&explode(&recs, &[USER_FIELD]), &explode(&recs, &[DST_FIELD]));
        assert_eq!(a.get("userID|alice", "DstIP|d1"), 1);
        assert_eq!(a.get("userID|alice", "DstIP|d2"), 1);
        assert_eq!(a.get("userID|bob", "DstIP|d1"), 1);
        assert_eq!(a.get("userID|bob", "DstIP|d2"), 0);
        let t = array_quantities(&a);
        assert_eq!(t.row_sums["userID|alice"], 2);
        assert_eq!(t.row_sums["userID|bob"], 1);
        assert_eq!(t.col_nnz["DstIP|d1"], 2);

        let report = daily_report(&recs, 1, "2024-01-01");
        assert_eq!(report.top_users_by_connections, vec![("alice".to_string(), 2)]);
        assert_eq!(report.top_destinations_by_users, vec![("d1".to_string(), 2)]);
        assert_eq!((report.distinct_users, report.distinct_destinations), (2, 2));
    }

    #[test]
    fn ties_break_by_ascending_key() {
        let recs = vec![
            rec("a", &[(USER_FIELD, "zed"), (DST_FIELD, "x")]),
            rec("b", &[(USER_FIELD, "amy"), (DST_FIELD, "x")]),
        ];
        let r = daily_report(&recs, 2, "d");
        assert_eq!(r.top_users_by_connections[0].0, "amy");
        assert_eq!(r.top_users_by_connections[1].0, "zed");
    }

    #[test]
    fn empty_inputs() {
        let r = daily_report(&[], 5, "2024-01-01");
        assert_eq!(r.records, 0);
        assert!(r.top_users_by_connections.is_empty());
        assert!(r.to_text().contains("(none)"));
        assert_eq!(r.to_tsv().lines().count(), 5);
        assert!(explode::<&str>(&[], &[USER_FIELD]).is_empty());
        assert_eq!(array_quantities(&AssocArray::new()), ArrayTallies::default());
    }

    #[test]
    fn single_record_arrays() {
        let recs = vec![rec("r", &[(USER_FIELD, "alice"), (DST_FIELD, "1.2.3.4")])];
        let e = explode(&recs, &[USER_FIELD, DST_FIELD]);
        assert_eq!((e.row_keys().len(), e.col_keys().len(), e.nnz()), (1, 2, 2));
        assert!(e.iter().all(|(_, _, v)| v == 1));
        let u = explode(&recs, &[USER_FIELD]);
        let a = transpose_multiply(&u, &u);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![("userID|alice", "userID|alice", 1)]);
    }

    #[test]
    fn parse_log_cases() {
        let text = "userID\tDstIP\tDstPort\nalice\t1.2.3.4\t443\n\nbob\t\t22\nbad line\n";
        let log = parse_log(text.as_bytes(), "2024-05-01", 5).unwrap();
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.skipped, 1);
        assert_eq!(log.records[0].id, "2024-05-01-2");
        assert_eq!(log.records[0].get("DstPort"), Some("443"));
        assert_eq!(log.records[1].id, "2024-05-01-4");
        assert_eq!(log.records[1].get(DST_FIELD), None);

        assert!(parse_log("h1\th2\n".as_bytes(), "d", 0).unwrap().records.is_empty());
        assert!(matches!(parse_log("".as_bytes(), "d", 0), Err(LogError::MissingHeader)));
        assert!(matches!(parse_log("a\ta\n".as_bytes(), "d", 0), Err(LogError::BadHeader)));
        assert!(matches!(
            parse_log("a\tb\n1\n".as_bytes(), "d", 0),
            Err(LogError::BudgetExceeded { line: 2, .. })
        ));
    }

    #[test]
    fn id_column_and_duplicates() {
        let text = "id\tuserID\nx\talice\ny\tbob\nx\tcarol\n";
        let log = parse_log(text.as_bytes(), "d", 1).unwrap();
        assert_eq!(log.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["x", "y"]);
        assert_eq!(log.skipped, 1);
        assert!(!log.records[0].fields.contains_key(ID_FIELD));
    }

    #[test]
    fn synthetic_log_counts() {
        let mut buf = Vec::new();
        write_synthetic_log(&mut buf, 10_000, 3).unwrap();
        let log = parse_log(buf.as_slice(), "2024-01-01", 0).unwrap();
        assert_eq!(log.records.len() as u64, log.lines - log.skipped);
        assert_eq!(log.records.len(), 10_000);

        let e = explode(&log.records, &[USER_FIELD, DST_FIELD]);
        let distinct: HashSet<(String, String)> = log
            .records
            .iter()
            .flat_map(|r| {
                [USER_FIELD, DST_FIELD]
                    .into_iter()
                    .filter_map(|f| r.get(f).map(|v| (f.to_string(), v.to_string())))
            })
            .collect();
        assert_eq!(e.col_keys().len(), distinct.len());
        let present: usize = log
            .records
            .iter()
            .map(|r| [USER_FIELD, DST_FIELD].iter().filter(|f| r.get(f).is_some()).count())
            .sum();
        assert_eq!(e.nnz(), present);
    }

    #[test]
    fn netfilter_fixture_conversion() {
        let raw = "Oct 16 10:00:01 gw kernel: [1.0] IN=eth0 OUT= SRC=10.0.0.5 DST=8.8.8.8 PROTO=UDP SPT=5353 DPT=53 UID=1001\n\
                   Oct 16 10:00:02 gw kernel: unrelated message\n";
        let mut out = Vec::new();
        assert_eq!(netfilter_to_tsv(raw.as_bytes(), &mut out).unwrap(), 1);
        let log = parse_log(out.as_slice(), "2024-10-16", 0).unwrap();
        assert_eq!(log.records[0].get(USER_FIELD), Some("1001"));
        assert_eq!(log.records[0].get("DstPort"), Some("53"));
    }

    fn brute_force(recs: &[LogRecord], fa: &str, fb: &str) -> BTreeMap<(String, String), u64> {
        let mut out = BTreeMap::new();
        for r in recs {
            if let (Some(a), Some(b)) = (r.get(fa), r.get(fb)) {
                *out.entry((column_key(fa, a), column_key(fb, b))).or_insert(0) += 1;
            }
        }
        out
    }

    fn arb_records() -> impl Strategy<Value = Vec<LogRecord>> {
        prop::collection::vec((prop::option::of(0u8..6), prop::option::of(0u8..9)), 0..200).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (u, d))| {
                    let mut fields = BTreeMap::new();
                    if let Some(u) = u {
                        fields.insert(USER_FIELD.to_string(), format!("u{u}"));
                    }
                    if let Some(d) = d {
                        fields.insert(DST_FIELD.to_string(), format!("d|{d}"));
                    }
                    LogRecord { id: format!("r{i}"), fields }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn product_matches_pair_counting(recs in arb_records()) {
            let a = transpose_multiply(&explode(&recs, &[USER_FIELD]), &explode(&recs, &[DST_FIELD]));
            let got: BTreeMap<(String, String), u64> =
                a.iter().map(|(r, c, v)| ((r.to_string(), c.to_string()), v)).collect();
            let expected = brute_force(&recs, USER_FIELD, DST_FIELD);
            prop_assert_eq!(a.sum(), expected.values().sum::<u64>());
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn report_ignores_record_order(recs in arb_records(), k in 1usize..5) {
            let mut rev = recs.clone();
            rev.reverse();
            prop_assert_eq!(daily_report(&recs, k, "d"), daily_report(&rev, k, "d"));
        }

        #[test]
        fn column_keys_round_trip(f in "[a-z|\\\\]{1,6}", v in "[a-z0-9|\\\\.]{0,8}") {
            let key = column_key(&f, &v);
            prop_assert_eq!(split_column_key(&key), Some((f, v)));
        }

        #[test]
        fn transpose_is_involution(
            t in prop::collection::vec(("[a-c]{1,2}", "[x-z]{1,2}", 0u64..4), 0..30)
        ) {
            let a = AssocArray::from_triples(t);
            prop_assert_eq!(a.transpose().transpose(), a.clone());
            prop_assert_eq!(a.row_sums().values().sum::<u64>(), a.sum());
            prop_assert_eq!(a.col_sums().values().sum::<u64>(), a.sum());
            prop_assert!(a.iter().all(|(_, _, v)| v > 0));
        }
    }
}
