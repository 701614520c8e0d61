// SPDX-License-Identifier: Apache-2.0

//! CSV tables and the run manifest.
//!
//! Floats are written in shortest round-trip form, so every CSV value parses
//! back to the exact `f64` that was computed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Config;

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        writer.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    writer.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ThetaRow {
    pub t_n: f64,
    pub theta_star: f64,
}

#[derive(Debug, Serialize)]
pub struct ResidualRow {
    pub t: f64,
    pub market: f64,
    pub model: f64,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct PriceRow {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub method: &'static str,
    pub value: f64,
    pub mc_value: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub elapsed_sec: f64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

/// Wall-clock timings per phase.
#[derive(Debug, Default)]
pub struct Stopwatch {
    pub timings: Vec<Timing>,
}

impl Stopwatch {
    pub fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing { phase: phase.to_owned(), seconds: start.elapsed().as_secs_f64() });
        out
    }
}

/// Everything needed to repeat a run: pass the manifest back as `--config`.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_path: String,
    pub curve_path: Option<String>,
    pub out_dir: String,
    pub resolved_config: &'a Config,
    pub outputs: Vec<String>,
    pub timings: &'a [Timing],
}

pub fn write_manifest(out: &Path, manifest: &Manifest<'_>) -> Result<PathBuf> {
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).context("serialising the manifest")?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
