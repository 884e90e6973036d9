use anyhow::{anyhow, Context};
use trafficmat::analytics::{quantities_report, ReportFormat};
use trafficmat::archive::{EncodedBlock, Manifest};
use trafficmat::{read_archive, write_archive, HierarchicalAggregator, RangeSet};

use crate::args::{FilterArgs, ReportFormatArg, StatsArgs};
use crate::common::{output, usage, CmdResult, Failure, EXIT_FAILURE};

pub fn stats(args: StatsArgs) -> CmdResult {
    let mut agg = HierarchicalAggregator::new(args.levels);
    let mut failed = 0usize;
    for path in &args.archives {
        match read_archive(path) {
            Ok((_, blocks)) => {
                for b in blocks {
                    agg.push(b.matrix)?;
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    let (rows, _) = agg.finish();
    let format = match args.format {
        ReportFormatArg::Tsv => ReportFormat::Tsv,
        ReportFormatArg::Json => ReportFormat::Json,
    };
    let mut out = output(args.output.as_deref())?;
    out.write_all(quantities_report(&rows, format).as_bytes())?;
    out.flush()?;
    if failed > 0 {
        return Err(Failure {
            code: EXIT_FAILURE,
            error: anyhow!("{failed} of {} archives could not be read", args.archives.len()),
        });
    }
    Ok(())
}

pub fn filter(args: FilterArgs) -> CmdResult {
    let range: RangeSet = args
        .range
        .parse()
        .with_context(|| format!("bad range `{}`", args.range))
        .map_err(usage)?;
    let (manifest, blocks) =
        read_archive(&args.archive).with_context(|| format!("reading {}", args.archive.display()))?;
    let encoded: Vec<EncodedBlock> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let m = if args.exclude {
                b.matrix.exclude(&range)
            } else {
                b.matrix.subrange(&range)
            };
            EncodedBlock::encode(i as u64, &m, b.meta)
        })
        .collect();
    let manifest = Manifest {
        total_packets: encoded.iter().map(|b| b.packets).sum(),
        ..manifest
    };
    let unit = write_archive(&args.output, manifest, &encoded)?;
    eprintln!(
        "{} packets kept in {} blocks",
        unit.manifest.total_packets, unit.manifest.blocks
    );
    Ok(())
}
