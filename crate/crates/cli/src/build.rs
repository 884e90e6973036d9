use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::Context;
use trafficmat::metrics::{metrics_tsv, process_cpu_seconds};
use trafficmat::source::{read_records, InputFormat};
use trafficmat::{
    run_pipeline, AnonKey, DiscardSink, PacketSource, RunOptions, RunReport, SyntheticSource,
    TarDirSink, TimedSource,
};

use crate::args::{BenchArgs, BuildArgs, Format};
use crate::common::{anon_mode, load_key, model, output, rate, require_key, usage, window_config, CmdResult};

/// Throughput range reported for the reference deployment on 1-2 cores,
/// printed next to bench results.
const REFERENCE_RATE_LOW: f64 = 7.0e5;
const REFERENCE_RATE_HIGH: f64 = 2.1e6;

fn guess_format(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pcap" | "cap") => InputFormat::Pcap,
        _ => InputFormat::Csv,
    }
}

fn print_summary(report: &RunReport) {
    let bpp = if report.packets_archived > 0 {
        report.bytes_written as f64 / report.packets_archived as f64
    } else {
        0.0
    };
    eprintln!("packets in        {} ({} skipped)", report.packets_in, report.skipped);
    eprintln!("packets archived  {}", report.packets_archived);
    eprintln!("windows           {} full, {} partial", report.full_windows, report.partial_windows);
    eprintln!("bytes written     {} ({bpp:.3} bytes/packet)", report.bytes_written);
    eprintln!(
        "elapsed           {:.3} s ({:.0} packets/s)",
        report.elapsed.as_secs_f64(),
        report.packets_per_sec()
    );
}

pub fn build(args: BuildArgs) -> CmdResult {
    let cfg = window_config(&args.window)?;
    let key = require_key(args.anon.key_file.as_deref())?;
    let mut source: Box<dyn PacketSource> = match (&args.input, args.synthetic) {
        (Some(path), _) => {
            let format = match args.format {
                Some(Format::Csv) => InputFormat::Csv,
                Some(Format::Pcap) => InputFormat::Pcap,
                None => guess_format(path),
            };
            read_records(path, format, args.error_budget)
                .with_context(|| format!("opening {}", path.display()))
                .map_err(usage)?
        }
        (None, Some(n)) => Box::new(SyntheticSource::new(n, model(args.model), args.seed)),
        (None, None) => return Err(usage(anyhow::anyhow!("pass --input or --synthetic"))),
    };
    let mode = anon_mode(
        &key,
        args.anon.anon,
        args.anon.table_width,
        args.anon.table_file.as_deref(),
    )?;
    let mut sink = TarDirSink::new(&args.output)?;
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| args.output.join("metrics.tsv"));

    let options = RunOptions {
        sample_interval: Some(Duration::from_secs(1)),
        metrics: None,
    };
    let (report, error) = match run_pipeline(&mut source, &cfg, &mode, &mut sink, &options) {
        Ok(r) => (r, None),
        Err(e) => (e.report().clone(), Some(e)),
    };
    std::fs::write(&metrics_path, metrics_tsv(&report.metrics))
        .with_context(|| format!("writing {}", metrics_path.display()))?;
    for path in &report.archives {
        println!("{}", path.display());
    }
    print_summary(&report);
    match error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn bench(args: BenchArgs) -> CmdResult {
    let cfg = window_config(&args.window)?;
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(usage(anyhow::anyhow!("duration must be positive")));
    }
    if args.interval_ms == 0 {
        return Err(usage(anyhow::anyhow!("interval must be positive")));
    }
    let key = match load_key(args.key_file.as_deref())? {
        Some(k) => k,
        None => AnonKey::generate(&mut rand::rng()),
    };
    let mut out = output(args.output.as_deref())?;
    let setup = Instant::now();
    let mode = anon_mode(&key, args.anon, args.table_width, None)?;
    let setup_s = setup.elapsed().as_secs_f64();

    let mut source = TimedSource::new(
        SyntheticSource::unbounded(model(args.model), args.seed),
        Duration::from_secs_f64(args.duration),
    );
    let mut sink = DiscardSink::default();
    let options = RunOptions {
        sample_interval: Some(Duration::from_millis(args.interval_ms)),
        metrics: None,
    };
    let cpu_before = process_cpu_seconds();
    let report = run_pipeline(&mut source, &cfg, &mode, &mut sink, &options)?;
    let cpu = process_cpu_seconds() - cpu_before;

    out.write_all(metrics_tsv(&report.metrics).as_bytes())?;
    out.flush()?;

    let elapsed = report.elapsed.as_secs_f64();
    let peak_rss = report.metrics.iter().map(|r| r.rss_bytes).max().unwrap_or(0);
    let bpp = if sink.packets > 0 {
        sink.compressed_bytes as f64 / sink.packets as f64
    } else {
        0.0
    };
    eprintln!("# anonymization\t{}", mode.name());
    eprintln!("# setup_s\t{setup_s:.3}");
    eprintln!("# packets\t{}", report.packets_in);
    eprintln!("# packets_archived\t{}", report.packets_archived);
    eprintln!("# windows\t{}", report.windows());
    eprintln!("# elapsed_s\t{elapsed:.3}");
    eprintln!("# packets_per_sec\t{:.0}", rate(report.packets_in, elapsed));
    eprintln!("# cpu_s\t{cpu:.3}");
    eprintln!("# packets_per_cpu_sec\t{:.0}", rate(report.packets_in, cpu));
    eprintln!("# peak_rss_bytes\t{peak_rss}");
    eprintln!("# compressed_bytes_per_packet\t{bpp:.4}");
    eprintln!("# reference_packets_per_sec\t{REFERENCE_RATE_LOW:.0}-{REFERENCE_RATE_HIGH:.0}");
    Ok(())
}
