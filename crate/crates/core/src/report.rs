//! Run artifacts: the files a training run leaves behind.
//!
//! A run directory contains exactly four files — the model checkpoint, a
//! metrics table, the per-step weight trajectory, and a manifest echoing
//! the full configuration, seed, and data checksum. Nothing in any file
//! depends on wall-clock time, so re-running the same configuration
//! overwrites every file with identical bytes.
//!
//! Readers for the two CSV formats and a histogram helper support the
//! plot-export command, which reshapes these artifacts into tidy
//! long-format tables for external plotting tools.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::Model;
use crate::scalar::{to_f64, Scalar};
use crate::train::{AblationRow, TrainOutcome, TrajectoryEntry, WeightTrajectory};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Placeholder written for an undefined R² (constant target column).
pub const UNDEFINED_MARKER: &str = "undefined";

// ──────────────────────────────── manifest ─────────────────────────────────

/// Everything needed to reproduce or audit a run: the full configuration
/// tree as the caller supplied it, the master seed, and the checksum of the
/// raw data the run consumed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub seed: u64,
    pub data_checksum: String,
    pub config: serde_json::Value,
}

pub const MANIFEST_VERSION: u32 = 1;

pub fn write_manifest<W: Write>(out: W, manifest: &RunManifest) -> Result<()> {
    serde_json::to_writer_pretty(out, manifest)?;
    Ok(())
}

pub fn read_manifest<R: Read>(input: R) -> Result<RunManifest> {
    let manifest: RunManifest = serde_json::from_reader(input)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

// ─────────────────────────────── metrics table ─────────────────────────────

fn fmt<T: Scalar>(v: T) -> String {
    format!("{}", to_f64(v))
}

/// Writes the metrics table: one row per validation-curve point and one row
/// per test metric, long format with columns
/// `section,epoch,objective,metric,value`. Test rows leave `epoch` empty;
/// an undefined R² is written as the literal marker, never NaN.
pub fn write_metrics_csv<T: Scalar, W: Write>(
    mut out: W,
    report: &MetricsReport<T>,
) -> Result<()> {
    writeln!(out, "section,epoch,objective,metric,value")?;
    for (epoch, per_objective) in report.validation_curve.iter().enumerate() {
        for (obj, &mse) in per_objective.iter().enumerate() {
            writeln!(out, "validation,{},{obj},mse,{}", epoch + 1, fmt(mse))?;
        }
    }
    let mut write_block = |section: &str, metrics: &[crate::metrics::ObjectiveMetrics<T>]| {
        for (obj, m) in metrics.iter().enumerate() {
            writeln!(out, "{section},,{obj},rmse,{}", fmt(m.rmse))?;
            writeln!(out, "{section},,{obj},mae,{}", fmt(m.mae))?;
            match m.r2 {
                Some(r2) => writeln!(out, "{section},,{obj},r2,{}", fmt(r2))?,
                None => writeln!(out, "{section},,{obj},r2,{UNDEFINED_MARKER}")?,
            }
        }
        Ok::<(), Error>(())
    };
    write_block("test", &report.test)?;
    write_block("test-normalized", &report.test_normalized)?;
    Ok(())
}

/// One parsed row of the metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow<T> {
    pub section: String,
    pub epoch: Option<usize>,
    pub objective: usize,
    pub metric: String,
    /// `None` when the file holds the undefined marker.
    pub value: Option<T>,
}

pub fn read_metrics_csv<T: Scalar, R: Read>(input: R) -> Result<Vec<MetricsRow<T>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Row {
                line,
                message: format!("metrics row needs 5 fields, got {}", record.len()),
            })
        };
        let epoch = match field(1)? {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::Row {
                line,
                message: format!("bad epoch {s:?}"),
            })?),
        };
        let value = match field(4)? {
            UNDEFINED_MARKER => None,
            s => Some(crate::scalar::real(s.parse::<f64>().map_err(|_| Error::Row {
                line,
                message: format!("bad value {s:?}"),
            })?)),
        };
        rows.push(MetricsRow {
            section: field(0)?.to_string(),
            epoch,
            objective: field(2)?.parse().map_err(|_| Error::Row {
                line,
                message: "bad objective index".into(),
            })?,
            metric: field(3)?.to_string(),
            value,
        });
    }
    Ok(rows)
}

// ────────────────────────────── trajectory table ───────────────────────────

/// Writes the per-step trajectory: `step,w0..,loss0..,residual`, one row
/// per training step.
pub fn write_trajectory_csv<T: Scalar, W: Write>(
    mut out: W,
    trajectory: &WeightTrajectory<T>,
) -> Result<()> {
    let k = trajectory
        .entries
        .first()
        .map_or(0, |e| e.weights.len());
    let mut header = String::from("step");
    for i in 0..k {
        header.push_str(&format!(",w{i}"));
    }
    for i in 0..k {
        header.push_str(&format!(",loss{i}"));
    }
    header.push_str(",residual");
    writeln!(out, "{header}")?;
    for e in &trajectory.entries {
        let mut row = e.step.to_string();
        for &w in &e.weights {
            row.push(',');
            row.push_str(&fmt(w));
        }
        for &l in &e.losses {
            row.push(',');
            row.push_str(&fmt(l));
        }
        row.push(',');
        row.push_str(&fmt(e.residual));
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn read_trajectory_csv<T: Scalar, R: Read>(input: R) -> Result<WeightTrajectory<T>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Domain("trajectory file is empty".into()))?;
    let k = header.split(',').filter(|c| c.starts_with('w')).count();
    let mut entries = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + 2 * k;
        if fields.len() != expected {
            return Err(Error::Row {
                line: idx + 2,
                message: format!("expected {expected} fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Row {
                line: idx + 2,
                message: format!("bad number {s:?}"),
            })
        };
        entries.push(TrajectoryEntry {
            step: fields[0].parse().map_err(|_| Error::Row {
                line: idx + 2,
                message: "bad step index".into(),
            })?,
            weights: fields[1..1 + k]
                .iter()
                .map(|s| parse(s).map(crate::scalar::real))
                .collect::<Result<_>>()?,
            losses: fields[1 + k..1 + 2 * k]
                .iter()
                .map(|s| parse(s).map(crate::scalar::real))
                .collect::<Result<_>>()?,
            residual: crate::scalar::real(parse(fields[1 + 2 * k])?),
        });
    }
    Ok(WeightTrajectory { entries })
}

// ─────────────────────────────── ablation table ────────────────────────────

/// Writes one row per grid cell:
/// `label,runs,` then per-objective mean/std pairs, then the combined mean
/// and a semicolon-joined failure list.
pub fn write_ablation_csv<T: Scalar, W: Write>(
    mut out: W,
    rows: &[AblationRow<T>],
) -> Result<()> {
    let k = rows.first().map_or(0, |r| r.r2_mean.len());
    let mut header = String::from("label,runs");
    for i in 0..k {
        header.push_str(&format!(",r2_mean_{i},r2_std_{i}"));
    }
    header.push_str(",combined_mean,failures");
    writeln!(out, "{header}")?;
    let cell = |v: &Option<T>| match v {
        Some(v) => fmt(*v),
        None => UNDEFINED_MARKER.to_string(),
    };
    for row in rows {
        let mut line = format!("{},{}", row.label, row.runs);
        for (m, s) in row.r2_mean.iter().zip(&row.r2_std) {
            line.push(',');
            line.push_str(&cell(m));
            line.push(',');
            line.push_str(&cell(s));
        }
        line.push(',');
        line.push_str(&cell(&row.combined_mean));
        line.push(',');
        line.push_str(&row.failures.join(";"));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

// ─────────────────────────────── histograms ────────────────────────────────

/// One histogram bin over `[lo, hi)` (the last bin is closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistBin<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
}

/// Equal-width histogram. All-identical values collapse to a single bin.
pub fn histogram<T: Scalar>(values: &[T], bins: usize) -> Result<Vec<HistBin<T>>> {
    if values.is_empty() || bins == 0 {
        return Err(Error::Domain(
            "histogram needs values and at least one bin".into(),
        ));
    }
    let mut lo = values[0];
    let mut hi = values[0];
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Domain("histogram values must be finite".into()));
        }
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if lo == hi {
        return Ok(vec![HistBin {
            lo,
            hi,
            count: values.len(),
        }]);
    }
    let width = (hi - lo) / crate::scalar::real(bins as f64);
    let mut out: Vec<HistBin<T>> = (0..bins)
        .map(|i| HistBin {
            lo: lo + width * crate::scalar::real(i as f64),
            hi: if i + 1 == bins {
                hi
            } else {
                lo + width * crate::scalar::real((i + 1) as f64)
            },
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = (to_f64((v - lo) / width).floor() as usize).min(bins - 1);
        out[idx].count += 1;
    }
    Ok(out)
}

// ───────────────────────────── whole-run writer ────────────────────────────

/// Writes the four run artifacts into `dir`, creating it if needed. Output
/// is a pure function of the arguments, so re-running a configuration
/// rewrites identical bytes.
pub fn write_run_dir<T: Scalar + Serialize>(
    dir: impl AsRef<Path>,
    manifest: &RunManifest,
    outcome: &TrainOutcome<T>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    outcome.model.save(std::fs::File::create(dir.join(CHECKPOINT_FILE))?)?;
    write_metrics_csv(
        std::fs::File::create(dir.join(METRICS_FILE))?,
        &outcome.report,
    )?;
    write_trajectory_csv(
        std::fs::File::create(dir.join(TRAJECTORY_FILE))?,
        &outcome.trajectory,
    )?;
    write_manifest(std::fs::File::create(dir.join(MANIFEST_FILE))?, manifest)?;
    Ok(())
}

/// Loads the checkpoint from a run directory.
pub fn load_checkpoint<T: Scalar + serde::de::DeserializeOwned>(
    dir: impl AsRef<Path>,
) -> Result<Model<T>> {
    Model::load(std::fs::File::open(dir.as_ref().join(CHECKPOINT_FILE))?)
}
