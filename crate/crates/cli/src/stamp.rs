use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::experiments::write;

pub const STAMP_FILE: &str = "stamp.json";

/// Reproducibility record written into every output directory.
#[derive(Debug, Serialize)]
pub struct Stamp<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub args: Vec<String>,
    pub seed: u64,
    pub deterministic: bool,
    pub config: &'a RunConfig,
}

pub fn write_stamp(out_dir: &Path, subcommand: &str, cfg: &RunConfig) -> Result<()> {
    let stamp = Stamp {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        args: std::env::args().collect(),
        seed: cfg.seed,
        deterministic: cfg.deterministic,
        config: cfg,
    };
    write(&out_dir.join(STAMP_FILE), &serde_json::to_string_pretty(&stamp)?)
}
