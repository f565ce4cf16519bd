//! CSV artifacts. Floats are written in their shortest round-trip decimal
//! form, zero-padded to at least nine significant digits, so parsing a file
//! back reproduces every value bit for bit.

use std::fs::File;
use std::path::{Path, PathBuf};

use rfseeker_core::progressive::LocalizationTrace;
use serde::Deserialize;

use crate::error::{HarnessError, Result};
use crate::experiment::{ExperimentReport, RawRow, RmseRow};

pub const RAW_FILE: &str = "raw.csv";
pub const RMSE_FILE: &str = "rmse.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

const RAW_HEADER: [&str; 5] = ["method", "snr_db", "iteration", "trial", "error_m"];
const RMSE_HEADER: [&str; 5] = ["method", "snr_db", "iteration", "rmse_m", "trials"];
const TRAJECTORY_HEADER: [&str; 8] = [
    "iteration",
    "waypoint_x",
    "waypoint_y",
    "waypoint_z",
    "estimate_x",
    "estimate_y",
    "estimate_z",
    "error_m",
];

const MIN_SIGNIFICANT: usize = 9;

/// Decimal text for `v` that parses back to exactly `v` and shows at least
/// nine significant digits.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let mut s = v.to_string();
    let significant = s
        .trim_start_matches('-')
        .replace('.', "")
        .trim_start_matches('0')
        .len()
        .max(1);
    if significant < MIN_SIGNIFICANT {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', MIN_SIGNIFICANT - significant));
    }
    s
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| HarnessError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Write `raw.csv` and `rmse.csv` into `dir` (created if missing).
pub fn emit_csv(report: &ExperimentReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let raw_path = dir.join(RAW_FILE);
    write_rows(
        &raw_path,
        RAW_HEADER,
        report.raw.iter().map(|r| {
            [
                r.method.clone(),
                format_float(r.snr_db),
                r.iteration.to_string(),
                r.trial.to_string(),
                format_float(r.error_m),
            ]
        }),
    )?;
    let rmse_path = dir.join(RMSE_FILE);
    write_rows(
        &rmse_path,
        RMSE_HEADER,
        report.rmse.iter().map(|r| {
            [
                r.method.clone(),
                format_float(r.snr_db),
                r.iteration.to_string(),
                format_float(r.rmse_m),
                r.trials.to_string(),
            ]
        }),
    )?;
    Ok((raw_path, rmse_path))
}

/// One row per iteration: the UAV position at the end of the leg, the
/// fused estimate and its error.
pub fn emit_trajectory(trace: &LocalizationTrace, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    write_rows(
        path,
        TRAJECTORY_HEADER,
        trace.iterations.iter().map(|r| {
            [
                r.index.to_string(),
                format_float(r.leg_end.x),
                format_float(r.leg_end.y),
                format_float(r.leg_end.z),
                format_float(r.fused.x),
                format_float(r.fused.y),
                format_float(r.fused.z),
                format_float(r.error),
            ]
        }),
    )
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    method: String,
    snr_db: f64,
    iteration: usize,
    trial: usize,
    error_m: f64,
}

#[derive(Debug, Deserialize)]
struct RmseRecord {
    method: String,
    snr_db: f64,
    iteration: usize,
    rmse_m: f64,
    trials: usize,
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::csv(path, e))
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRow>> {
    Ok(read_records::<RawRecord>(path)?
        .into_iter()
        .map(|r| RawRow {
            method: r.method,
            snr_db: r.snr_db,
            iteration: r.iteration,
            trial: r.trial,
            error_m: r.error_m,
        })
        .collect())
}

pub fn read_rmse(path: &Path) -> Result<Vec<RmseRow>> {
    Ok(read_records::<RmseRecord>(path)?
        .into_iter()
        .map(|r| RmseRow {
            method: r.method,
            snr_db: r.snr_db,
            iteration: r.iteration,
            rmse_m: r.rmse_m,
            trials: r.trials,
        })
        .collect())
}
