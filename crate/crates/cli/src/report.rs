use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use trafficmat::{daily_report, parse_log};

use crate::args::ReportArgs;
use crate::common::{rate, usage, CmdResult};

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// First `YYYY-MM-DD` in the file name.
fn date_from_name(path: &Path) -> Option<NaiveDate> {
    let name = path.file_name()?.to_str()?;
    let bytes = name.as_bytes();
    (0..bytes.len().saturating_sub(9))
        .filter(|&i| name.is_char_boundary(i) && name.is_char_boundary(i + 10))
        .find_map(|i| parse_date(&name[i..i + 10]))
}

pub fn d4m_report(args: ReportArgs) -> CmdResult {
    if args.top_k == 0 {
        return Err(usage(anyhow!("--top-k must be at least 1")));
    }
    let date = match &args.date {
        Some(d) => parse_date(d).ok_or_else(|| usage(anyhow!("bad date `{d}`, expected YYYY-MM-DD")))?,
        None => date_from_name(&args.log).unwrap_or_else(|| chrono::Local::now().date_naive()),
    };
    let date = date.format("%Y-%m-%d").to_string();
    let file = File::open(&args.log)
        .with_context(|| format!("opening {}", args.log.display()))
        .map_err(usage)?;

    let started = Instant::now();
    let log = parse_log(BufReader::new(file), &date, args.error_budget)?;
    let parse_s = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let report = daily_report(&log.records, args.top_k, &date);
    let analyze_s = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.output)?;
    let stem = args.output.join(report.file_stem());
    std::fs::write(stem.with_extension("txt"), report.to_text())?;
    std::fs::write(stem.with_extension("tsv"), report.to_tsv())?;

    let n = log.records.len() as u64;
    eprintln!("skipped {} malformed lines", log.skipped);
    eprintln!("parsed {n} records in {parse_s:.3} s ({:.0} records/s)", rate(n, parse_s));
    eprintln!("analyzed {n} records in {analyze_s:.3} s ({:.0} records/s)", rate(n, analyze_s));
    println!("{}", stem.with_extension("txt").display());
    println!("{}", stem.with_extension("tsv").display());
    Ok(())
}
