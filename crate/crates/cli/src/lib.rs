//! Batch experiment runner for the `seqdetect-core` toolkit: reads a TOML
//! experiment file, runs one of the `bounds`, `calibrate`, `simulate` or
//! `rates` pipelines and writes CSV plus structured-text reports.

pub mod config;
pub mod pipelines;

pub use config::{Command, Experiment, ExperimentConfig, Overrides};
pub use pipelines::{run, Report};

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

/// Writes every report file into `dir`, plus `<command>.log` holding the
/// run-dependent lines and a timestamp.
pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for file in &report.files {
        let path = dir.join(&file.name);
        std::fs::write(&path, &file.contents).with_context(|| format!("writing {}", path.display()))?;
    }
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut log = format!("started_unix_time = {stamp}\n");
    for line in &report.log {
        log.push_str(line);
        log.push('\n');
    }
    log.push_str(&format!("passed = {}\n", report.passed));
    let path = dir.join(format!("{}.log", report.command.name()));
    std::fs::write(&path, log).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
