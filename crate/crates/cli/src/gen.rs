use std::time::Instant;

use anyhow::Context;
use trafficmat::assoc::write_synthetic_log;
use trafficmat::source::write_csv;
use trafficmat::{build_table, CryptoPan, SyntheticSource};

use crate::args::{GenArgs, MktableArgs};
use crate::common::{check_width, model, output, require_key, CmdResult};

pub fn gen(args: GenArgs) -> CmdResult {
    let mut out = output(args.output.as_deref())?;
    if args.log {
        write_synthetic_log(&mut out, args.count, args.seed)?;
    } else {
        write_csv(&mut out, SyntheticSource::new(args.count, model(args.model), args.seed))?;
    }
    out.flush()?;
    Ok(())
}

pub fn mktable(args: MktableArgs) -> CmdResult {
    check_width(args.width)?;
    let key = require_key(args.key_file.as_deref())?;
    let started = Instant::now();
    let table = build_table(&CryptoPan::new(&key), args.width)?;
    let built = started.elapsed().as_secs_f64();
    table
        .save(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "{}-bit table, {} bytes, built in {built:.2} s",
        table.width(),
        table.size_bytes()
    );
    Ok(())
}
