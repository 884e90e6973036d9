use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use trafficmat::anon::{AnonKey, AnonMode, CryptoPan, LookupTable, TableAnonymizer, KEY_ENV_VAR};
use trafficmat::{TrafficModel, WindowConfig};

use crate::args::{AnonKind, Model, WindowArgs};

/// Exit status 2: bad invocation or configuration, nothing was done.
pub const EXIT_USAGE: u8 = 2;
/// Exit status 1: the work started but did not complete.
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_FAILURE,
            error: e.into(),
        }
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: e.into(),
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn window_config(w: &WindowArgs) -> Result<WindowConfig, Failure> {
    WindowConfig::new(w.block_size, w.blocks, w.streams, w.queue_depth).map_err(usage)
}

pub fn model(m: Model) -> TrafficModel {
    match m {
        Model::Uniform => TrafficModel::Uniform,
        Model::HeavyTail => TrafficModel::HeavyTail,
    }
}

/// Key from `--key-file`, else from the environment.
pub fn load_key(path: Option<&Path>) -> Result<Option<AnonKey>, Failure> {
    match path {
        Some(p) => AnonKey::from_file(p).map(Some).map_err(usage),
        None => AnonKey::from_env()
            .with_context(|| format!("bad key in {KEY_ENV_VAR}"))
            .map_err(usage),
    }
}

pub fn require_key(path: Option<&Path>) -> Result<AnonKey, Failure> {
    load_key(path)?.ok_or_else(|| usage(anyhow!("no key: pass --key-file or set {KEY_ENV_VAR}")))
}

pub fn check_width(width: u8) -> Result<(), Failure> {
    if (1..=32).contains(&width) {
        Ok(())
    } else {
        Err(usage(anyhow!("table width {width} not in 1..=32")))
    }
}

pub fn anon_mode(
    key: &AnonKey,
    kind: AnonKind,
    width: u8,
    table_file: Option<&Path>,
) -> Result<AnonMode, Failure> {
    match (kind, table_file) {
        (AnonKind::Direct, _) => Ok(AnonMode::direct(key)),
        (AnonKind::Table, Some(path)) => {
            let table = LookupTable::load(path, key)
                .with_context(|| format!("loading table {}", path.display()))
                .map_err(usage)?;
            let anon = TableAnonymizer::new(table, CryptoPan::new(key)).map_err(usage)?;
            Ok(AnonMode::Table(Arc::new(anon)))
        }
        (AnonKind::Table, None) => {
            check_width(width)?;
            Ok(AnonMode::table(key, width)?)
        }
    }
}

/// Buffered writer on a file, or on stdout when `path` is absent.
pub fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn rate(count: u64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        count as f64 / seconds
    } else {
        0.0
    }
}
