//! On-disk artifacts. One run directory holds:
//!
//! * `trace.csv` — the scalar time series, fixed 12-column schema.
//! * `trace.json` — the complete trace (meta, records, checkpoints) for
//!   lossless reload; checks always rerun on the native grid.
//! * `run.json` — config echo + hash, summary, lengths, lemma reports.
//! * `verify.json` — written by `verify`, the re-run check reports.
//!
//! Every artifact is a pure function of the config, so reruns are
//! byte-identical; wall-clock time is deliberately kept out of all of
//! them and only printed to the console.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use krflow_core::observables::TRACE_SCHEMA_VERSION;
use krflow_core::{LemmaReport, LengthReport, ObservableRecord, Trace};

use crate::config::ExperimentConfig;

/// Bumped whenever a column or field changes meaning.
pub const ARTIFACT_SCHEMA_VERSION: u32 = TRACE_SCHEMA_VERSION;

/// Column order is frozen; downstream plotting scripts index by name but
/// golden-file diffs rely on the exact layout.
pub const TRACE_COLUMNS: [&str; 12] = [
    "t",
    "l2_u_tilde",
    "l2_grad_u_tilde",
    "l2_lap_u_tilde",
    "c0_u_tilde",
    "c0_grad_u_tilde",
    "c0_lap_u_tilde",
    "c0_R_minus_n",
    "a",
    "b",
    "min_R",
    "c0_profile_dist",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub complete: bool,
    pub abort: Option<String>,
    pub steps: u64,
    pub min_dt_used: f64,
    pub cross_check_max: f64,
    pub rows: usize,
    pub final_record: ObservableRecord,
    pub lengths: LengthReport,
    pub lemmas: Vec<LemmaReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub config_sha256: String,
    pub trace_complete: bool,
    pub conclusion_violations: usize,
    pub reports: Vec<LemmaReport>,
}

fn csv_row(r: &ObservableRecord) -> [String; 12] {
    [
        r.t.to_string(),
        r.l2_u_tilde.to_string(),
        r.l2_grad_u_tilde.to_string(),
        r.l2_lap_u_tilde.to_string(),
        r.c0_u_tilde.to_string(),
        r.c0_grad_u_tilde.to_string(),
        r.c0_lap_u_tilde.to_string(),
        r.c0_r_minus_n.to_string(),
        r.a.to_string(),
        r.b.to_string(),
        r.min_r.to_string(),
        r.c0_profile_dist.to_string(),
    ]
}

pub fn write_trace_csv(dir: &Path, trace: &Trace) -> Result<()> {
    let path = dir.join("trace.csv");
    let mut writer = csv::Writer::from_path(&path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        writer.write_record(csv_row(r))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_trace(dir: &Path) -> Result<Trace> {
    read_json(dir, "trace.json")
}

pub fn load_run_report(dir: &Path) -> Result<RunReport> {
    read_json(dir, "run.json")
}
