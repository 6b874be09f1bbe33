//! Tabular time-series ingestion and preparation.
//!
//! The pipeline reads a headered delimited file of process variables
//! (inputs) and quality variables (regression targets), drops rows with
//! null entries, builds lag-embedded feature rows (each input variable
//! contributes its current value and the previous `L − 1` values,
//! variable-major), splits the result into contiguous temporal
//! train/validation/test partitions, and standardizes features and targets
//! with statistics fitted on the training partition only.
//!
//! A seed-deterministic synthetic generator produces series with the same
//! shape as the sulfur-recovery-unit benchmark — five autocorrelated
//! process channels and two quality targets that share one latent driver
//! and disagree on a second — so the whole stack can be exercised without
//! any proprietary data.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::{real, to_f64, Scalar};

// ──────────────────────────────── schema ───────────────────────────────────

/// Named columns of a raw series: process variables (model inputs) and
/// quality variables (targets). Units are carried as documentation only;
/// nothing downstream interprets them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub process: Vec<String>,
    pub quality: Vec<String>,
}

impl Default for ColumnSchema {
    /// The sulfur-recovery-unit layout: five gas-flow inputs (m³/s) and
    /// two acid-gas concentration targets (mol/m³).
    fn default() -> Self {
        ColumnSchema {
            process: (1..=5).map(|i| format!("x{i}")).collect(),
            quality: vec!["y1".to_string(), "y2".to_string()],
        }
    }
}

impl ColumnSchema {
    pub fn validate(&self) -> Result<()> {
        if self.process.is_empty() {
            return Err(Error::config("data.schema.process", "needs at least one column"));
        }
        if self.quality.is_empty() {
            return Err(Error::config("data.schema.quality", "needs at least one column"));
        }
        let mut all: Vec<&String> = self.process.iter().chain(&self.quality).collect();
        all.sort();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("data.schema", "column names must be unique"));
        }
        Ok(())
    }

    /// Number of process (input) variables.
    pub fn process_dims(&self) -> usize {
        self.process.len()
    }

    /// Number of quality (target) variables.
    pub fn quality_dims(&self) -> usize {
        self.quality.len()
    }
}

// ─────────────────────────────── raw series ────────────────────────────────

/// Time-ordered samples with no missing values, columns in schema order
/// (process variables first, then quality variables).
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries<T> {
    schema: ColumnSchema,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> RawSeries<T> {
    pub fn new(schema: ColumnSchema, rows: Vec<Vec<T>>) -> Result<Self> {
        schema.validate()?;
        let width = schema.process_dims() + schema.quality_dims();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Row {
                    line: i + 1,
                    message: format!("expected {width} values, got {}", row.len()),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Row {
                    line: i + 1,
                    message: format!("non-finite value {v}"),
                });
            }
        }
        Ok(RawSeries { schema, rows })
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// SHA-256 over dimensions and the exact bit patterns of every value,
    /// row-major; stable across runs and platforms.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.rows.len() as u64).to_le_bytes());
        hasher.update((self.schema.process_dims() as u64).to_le_bytes());
        hasher.update((self.schema.quality_dims() as u64).to_le_bytes());
        for row in &self.rows {
            for &v in row {
                hasher.update(to_f64(v).to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// What `load_csv` kept and what it discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_kept: usize,
    pub rows_dropped: usize,
}

fn is_null_token(field: &str) -> bool {
    let t = field.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("null")
}

/// Reads a headered comma-separated file against `schema`. Columns may
/// appear in any order and extra columns are ignored; output rows are in
/// schema order. Rows containing null tokens (empty, `NaN`, `NA`, `null`)
/// are dropped and counted; any other unparsable numeric is an error
/// naming the 1-based file line.
pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    schema: &ColumnSchema,
) -> Result<(RawSeries<T>, LoadReport)> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema)
}

/// [`load_csv`] over any reader, for tests and in-memory sources.
pub fn load_csv_reader<T: Scalar>(
    input: impl Read,
    schema: &ColumnSchema,
) -> Result<(RawSeries<T>, LoadReport)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &String| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))
    };
    let indices: Vec<usize> = schema
        .process
        .iter()
        .chain(&schema.quality)
        .map(find)
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + dropped + 2);
        let mut row = Vec::with_capacity(indices.len());
        let mut null = false;
        for &idx in &indices {
            let field = record.get(idx).ok_or_else(|| Error::Row {
                line,
                message: format!("row has only {} fields", record.len()),
            })?;
            if is_null_token(field) {
                null = true;
                break;
            }
            let value: f64 = field.parse().map_err(|_| Error::Row {
                line,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            row.push(real::<T>(value));
        }
        if null {
            dropped += 1;
        } else {
            rows.push(row);
        }
    }
    let kept = rows.len();
    Ok((
        RawSeries::new(schema.clone(), rows)?,
        LoadReport {
            rows_kept: kept,
            rows_dropped: dropped,
        },
    ))
}

// ─────────────────────────────── lag embedding ─────────────────────────────

/// Supervised rows built from a raw series: row i holds, for each process
/// variable in order, its value at the source time t followed by the
/// previous `lags − 1` values; the target row is the quality values at t.
#[derive(Clone, Debug, PartialEq)]
pub struct LaggedDataset<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<Vec<T>>,
    pub lags: usize,
}

impl<T: Scalar> LaggedDataset<T> {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    /// Borrowed row views, the shape batch-gradient APIs take.
    pub fn x_refs(&self) -> Vec<&[T]> {
        self.x.iter().map(Vec::as_slice).collect()
    }

    pub fn y_refs(&self) -> Vec<&[T]> {
        self.y.iter().map(Vec::as_slice).collect()
    }
}

/// Default lag depth: the current value plus nine past values per variable.
pub const DEFAULT_LAGS: usize = 10;

/// Builds the lag-embedded dataset. Needs at least `lags` raw rows; yields
/// `raw.len() − lags + 1` samples, feature width `D · lags`, variable-major
/// with the current value first: `X[i][d·lags + z] == raw[t − z][d]`.
pub fn lag_embed<T: Scalar>(raw: &RawSeries<T>, lags: usize) -> Result<LaggedDataset<T>> {
    if lags < 1 {
        return Err(Error::Domain("lag depth must be at least 1".into()));
    }
    if raw.len() < lags {
        return Err(Error::Domain(format!(
            "lag embedding needs at least {lags} rows, got {}",
            raw.len()
        )));
    }
    let d = raw.schema().process_dims();
    let k = raw.schema().quality_dims();
    let rows = raw.rows();
    let n = rows.len() - (lags - 1);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for t in (lags - 1)..rows.len() {
        let mut features = Vec::with_capacity(d * lags);
        for var in 0..d {
            for z in 0..lags {
                features.push(rows[t - z][var]);
            }
        }
        x.push(features);
        y.push(rows[t][d..d + k].to_vec());
    }
    Ok(LaggedDataset { x, y, lags })
}

// ──────────────────────────────── splitting ────────────────────────────────

/// How samples are assigned to partitions. Lag windows of adjacent rows
/// overlap, so only order-preserving schemes avoid leaking test rows into
/// training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    #[default]
    ContiguousTemporal,
}

/// Train/validation/test fractions plus the assignment mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fractions: (0.6, 0.2, 0.2),
            mode: SplitMode::ContiguousTemporal,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::config("data.split.fractions", "all fractions must be positive"));
        }
        if (a + b + c - 1.0).abs() > 1e-12 {
            return Err(Error::config("data.split.fractions", "fractions must sum to 1"));
        }
        Ok(())
    }
}

/// Contiguous temporal split: the first `floor(f_train·N)` samples train,
/// the next `floor(f_val·N)` validate, and the remainder tests.
pub fn split<T: Scalar>(
    ds: &LaggedDataset<T>,
    spec: &SplitSpec,
) -> Result<(LaggedDataset<T>, LaggedDataset<T>, LaggedDataset<T>)> {
    spec.validate()?;
    let n = ds.len();
    if n < 5 {
        return Err(Error::Domain(format!(
            "splitting needs at least 5 samples, got {n}"
        )));
    }
    let n_train = (spec.fractions.0 * n as f64).floor() as usize;
    let n_val = (spec.fractions.1 * n as f64).floor() as usize;
    let take = |lo: usize, hi: usize| LaggedDataset {
        x: ds.x[lo..hi].to_vec(),
        y: ds.y[lo..hi].to_vec(),
        lags: ds.lags,
    };
    Ok((
        take(0, n_train),
        take(n_train, n_train + n_val),
        take(n_train + n_val, n),
    ))
}

// ─────────────────────────────── normalization ─────────────────────────────

/// Per-feature standardization fitted on one partition (training) and
/// applied everywhere. Constant features get their deviation clamped to 1
/// so they transform to (numerically) zero instead of dividing by zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T> {
    mean: Vec<T>,
    std: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    /// Fits column means and population standard deviations.
    pub fn fit(rows: &[Vec<T>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| {
            Error::Domain("cannot fit a normalizer on an empty partition".into())
        })?;
        let width = first.len();
        let n = real::<T>(rows.len() as f64);
        let mut mean = vec![T::zero(); width];
        for row in rows {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut var = vec![T::zero(); width];
        for row in rows {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(&v, &m)| {
                let s = (v / n).sqrt();
                // Constant column: clamp so the transform maps it to ~0.
                if s <= real::<T>(1e-12) * (T::one() + m.abs()) {
                    T::one()
                } else {
                    s
                }
            })
            .collect();
        Ok(Normalizer { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &mut [T]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn inverse_row(&self, row: &mut [T]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }

    pub fn transform_all(&self, rows: &mut [Vec<T>]) {
        for row in rows {
            self.transform_row(row);
        }
    }

    /// Undoes the target transform for one objective's value.
    pub fn inverse_value(&self, column: usize, value: T) -> T {
        value * self.std[column] + self.mean[column]
    }

    /// A normalizer over a subset of this one's columns, in the given
    /// order; used when a multi-target dataset is viewed single-target.
    pub fn restrict(&self, columns: &[usize]) -> Normalizer<T> {
        Normalizer {
            mean: columns.iter().map(|&c| self.mean[c]).collect(),
            std: columns.iter().map(|&c| self.std[c]).collect(),
        }
    }
}

// ──────────────────────────── synthetic generator ──────────────────────────

// Generator shape constants. The five process channels are stationary
// AR(1) processes; the targets combine two bounded nonlinear latents — one
// shared, one entering the targets with opposite signs — plus observation
// noise. The opposite-sign latent carries more variance than the shared
// one, which makes the two targets negatively correlated and makes their
// training gradients genuinely conflict.
const AR_COEFF: [f64; 5] = [0.92, 0.88, 0.95, 0.85, 0.90];
const AR_INNOVATION: [f64; 5] = [0.40, 0.50, 0.30, 0.55, 0.45];
const SYNTH_BURN_IN: usize = 64;
const NOISE_SD: f64 = 0.05;

fn shared_latent(x: &dyn Fn(usize, usize) -> f64, t: usize) -> f64 {
    (0.9 * x(t, 0) + 0.7 * x(t - 2, 1) - 0.5 * x(t - 5, 2)).tanh()
}

fn opposed_latent(x: &dyn Fn(usize, usize) -> f64, t: usize) -> f64 {
    (0.8 * x(t - 1, 3) - 0.9 * x(t - 3, 4) + 0.4 * x(t - 7, 0)).tanh()
}

/// Generates a seed-deterministic series with the default schema: five
/// autocorrelated process channels and two targets driven by lagged inputs
/// (maximum lag 7, within the default embedding depth of 10).
pub fn synth_sru<T: Scalar>(seed: u64, rows: usize) -> Result<RawSeries<T>> {
    if rows < 20 {
        return Err(Error::Domain(format!(
            "synthetic series needs at least 20 rows, got {rows}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let total = rows + SYNTH_BURN_IN;
    let mut channels = vec![vec![0.0f64; total]; 5];
    for t in 0..total {
        for (c, channel) in channels.iter_mut().enumerate() {
            let eps: f64 = rng.standard_normal();
            let prev = if t == 0 { 0.0 } else { channel[t - 1] };
            channel[t] = AR_COEFF[c] * prev + AR_INNOVATION[c] * eps;
        }
    }
    let x = |t: usize, c: usize| channels[c][t];
    let mut out = Vec::with_capacity(rows);
    for t in SYNTH_BURN_IN..total {
        let s = shared_latent(&x, t);
        let a = opposed_latent(&x, t);
        let e1: f64 = rng.standard_normal();
        let e2: f64 = rng.standard_normal();
        let y1 = 0.5 * s + 1.1 * a + NOISE_SD * e1;
        let y2 = 0.7 * s - 0.9 * a + NOISE_SD * e2;
        let mut row: Vec<T> = (0..5).map(|c| real(x(t, c))).collect();
        row.push(real(y1));
        row.push(real(y2));
        out.push(row);
    }
    RawSeries::new(ColumnSchema::default(), out)
}

// ───────────────────────────── prepared bundle ─────────────────────────────

/// Everything the training loop consumes: normalized partitions, the
/// fitted normalizers (targets must be de-normalized for reporting), and
/// the checksum of the raw series for the run manifest.
#[derive(Clone, Debug)]
pub struct PreparedData<T> {
    pub train: LaggedDataset<T>,
    pub val: LaggedDataset<T>,
    pub test: LaggedDataset<T>,
    pub x_normalizer: Normalizer<T>,
    pub y_normalizer: Normalizer<T>,
    pub checksum: String,
}

/// Lag-embeds, splits, and standardizes a raw series. Normalizer statistics
/// come from the training partition alone; features and targets of all
/// three partitions are stored in normalized units.
pub fn prepare<T: Scalar>(
    raw: &RawSeries<T>,
    lags: usize,
    spec: &SplitSpec,
) -> Result<PreparedData<T>> {
    let checksum = raw.checksum();
    let ds = lag_embed(raw, lags)?;
    let (mut train, mut val, mut test) = split(&ds, spec)?;
    let x_normalizer = Normalizer::fit(&train.x)?;
    let y_normalizer = Normalizer::fit(&train.y)?;
    for part in [&mut train, &mut val, &mut test] {
        x_normalizer.transform_all(&mut part.x);
        y_normalizer.transform_all(&mut part.y);
    }
    Ok(PreparedData {
        train,
        val,
        test,
        x_normalizer,
        y_normalizer,
        checksum,
    })
}
