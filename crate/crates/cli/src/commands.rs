//! The five commands. Each returns the process exit code on success and a
//! [`CliError`] otherwise; `main` maps errors onto their exit codes.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use pmoe_core::data::Normalizer;
use pmoe_core::metrics::ObjectiveMetrics;
use pmoe_core::model::Model;
use pmoe_core::oracle::min_norm_oracle;
use pmoe_core::report::{
    histogram, load_checkpoint, read_manifest, read_metrics_csv, read_trajectory_csv,
    write_ablation_csv, write_run_dir, RunManifest, MANIFEST_FILE, MANIFEST_VERSION, METRICS_FILE,
    TRAJECTORY_FILE, UNDEFINED_MARKER,
};
use pmoe_core::rng::SeededRng;
use pmoe_core::solver::{
    frank_wolfe, verify_gap_bound, verify_primal_bound, verify_step_progress, BoundCheck,
    FWConfig, GramMatrix, StepMode,
};
use pmoe_core::train::{evaluate, run_ablation, train, AblationSpec, CellSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Results table written by `ablate` into the output directory.
pub const ABLATION_FILE: &str = "ablation.csv";
/// Tidy tables written by `export-plots` into the run directory.
pub const METRIC_CURVES_FILE: &str = "metric_curves.csv";
pub const WEIGHT_TRAJECTORY_FILE: &str = "weight_trajectory.csv";
pub const RESIDUAL_HISTOGRAM_FILE: &str = "residual_histogram.csv";

/// Bins for the prediction-residual histogram.
const HISTOGRAM_BINS: usize = 30;
/// Oracle-agreement tolerance for `solver-bench`.
const BENCH_ORACLE_TOL: f64 = 1e-3;

// ─────────────────────────────────── train ─────────────────────────────────

pub fn cmd_train(config_path: &Path) -> CliResult<i32> {
    let cfg = RunConfig::load(config_path)?;
    cfg.validate()?;
    let (_, data) = cfg.load_data()?;
    let train_cfg = cfg.train_config();
    let outcome = train(&train_cfg, &data)?;
    let manifest = RunManifest {
        format_version: MANIFEST_VERSION,
        seed: train_cfg.seed,
        data_checksum: data.checksum.clone(),
        config: serde_json::to_value(&cfg).map_err(pmoe_core::error::Error::from)?,
    };
    write_run_dir(&cfg.output.dir, &manifest, &outcome)?;
    println!("run written to {}", cfg.output.dir.display());
    print_metrics("test", &outcome.report.test);
    Ok(0)
}

fn print_metrics(section: &str, metrics: &[ObjectiveMetrics<f64>]) {
    for (obj, m) in metrics.iter().enumerate() {
        let r2 = m
            .r2
            .map_or(UNDEFINED_MARKER.to_string(), |v| format!("{v:.4}"));
        println!(
            "{section} objective {obj}: rmse {:.4}  mae {:.4}  r2 {r2}",
            m.rmse, m.mae
        );
    }
}

// ─────────────────────────────────── eval ──────────────────────────────────

pub fn cmd_eval(config_path: &Path, checkpoint: &Path) -> CliResult<i32> {
    let cfg = RunConfig::load(config_path)?;
    cfg.validate()?;
    let file = File::open(checkpoint).map_err(|e| {
        CliError::Data(format!("cannot read checkpoint {}: {e}", checkpoint.display()))
    })?;
    let model = Model::<f64>::load(file)?;
    let (_, data) = cfg.load_data()?;
    let (physical, normalized) = evaluate(&model, &data.test, &data.y_normalizer)?;
    print_metrics("test", &physical);
    print_metrics("test-normalized", &normalized);
    Ok(0)
}

// ────────────────────────────────── ablate ─────────────────────────────────

/// Grid file: seeds plus one `[[cells]]` table per configuration patch.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    seeds: Vec<u64>,
    #[serde(default)]
    cells: Vec<CellSpec<f64>>,
}

pub fn cmd_ablate(config_path: &Path, grid_path: &Path) -> CliResult<i32> {
    let cfg = RunConfig::load(config_path)?;
    cfg.validate()?;
    let grid_text = std::fs::read_to_string(grid_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", grid_path.display())))?;
    let grid: GridSpec = toml::from_str(&grid_text)
        .map_err(|e| CliError::Config(format!("{}: {e}", grid_path.display())))?;

    let (_, data) = cfg.load_data()?;
    let spec = AblationSpec {
        cells: grid.cells,
        seeds: grid.seeds,
        base: cfg.train_config(),
    };
    let rows = run_ablation(&spec, &data)?;

    std::fs::create_dir_all(&cfg.output.dir).map_err(pmoe_core::error::Error::from)?;
    let out_path = cfg.output.dir.join(ABLATION_FILE);
    write_ablation_csv(
        File::create(&out_path).map_err(pmoe_core::error::Error::from)?,
        &rows,
    )?;

    for row in &rows {
        let combined = row
            .combined_mean
            .map_or(UNDEFINED_MARKER.to_string(), |v| format!("{v:.4}"));
        println!(
            "cell {}: {} runs, combined r2 {combined}, {} failures",
            row.label,
            row.runs,
            row.failures.len()
        );
    }
    println!("ablation table written to {}", out_path.display());

    if rows.iter().all(|r| r.runs == 0) {
        let reasons: Vec<&str> = rows
            .iter()
            .flat_map(|r| r.failures.iter().map(String::as_str))
            .collect();
        return Err(CliError::Divergence(format!(
            "every ablation cell failed: {}",
            reasons.join("; ")
        )));
    }
    Ok(0)
}

// ─────────────────────────────── solver-bench ──────────────────────────────

pub fn cmd_solver_bench(k: usize, n: usize, seed: u64) -> CliResult<i32> {
    if k < 1 {
        return Err(CliError::config_field("k", "must be at least 1"));
    }
    if n < 1 {
        return Err(CliError::config_field("n", "must be at least 1"));
    }

    struct Tally {
        checks: usize,
        violations: usize,
        worst: f64,
    }
    impl Tally {
        fn new() -> Self {
            Tally {
                checks: 0,
                violations: 0,
                worst: f64::INFINITY,
            }
        }
        fn absorb(&mut self, chk: &BoundCheck<f64>) {
            self.checks += chk.checked;
            self.violations += chk.violations;
            self.worst = self.worst.min(chk.worst_slack);
        }
    }

    let mut primal = Tally::new();
    let mut gap = Tally::new();
    let mut progress = Tally::new();
    let mut oracle = Tally::new();

    let tight = FWConfig {
        max_iters: 5_000,
        v_tol: 1e-12,
        ..FWConfig::default()
    };
    let mut rng = SeededRng::new(seed);
    for i in 0..n {
        let rank = 1 + (i % k);
        let m: GramMatrix<f64> = GramMatrix::random_psd(k, rank, &mut rng).trace_normalized();

        primal.absorb(&verify_primal_bound(&m, 100)?);
        for r in [2usize, 10, 50] {
            gap.absorb(&verify_gap_bound(&m, r)?);
        }
        let fixed = FWConfig {
            max_iters: 100,
            step_mode: StepMode::FixedDecay,
            ..FWConfig::default()
        };
        let (_, diag) = frank_wolfe(&m, &fixed)?;
        progress.absorb(&verify_step_progress(&m, &diag));

        let (w, _) = frank_wolfe(&m, &tight)?;
        let solver_val = m.quad(w.as_slice());
        let (_, oracle_val) = min_norm_oracle(&m);
        let diff = (solver_val - oracle_val).abs();
        oracle.absorb(&BoundCheck {
            checked: 1,
            violations: usize::from(diff > BENCH_ORACLE_TOL),
            worst_slack: BENCH_ORACLE_TOL - diff,
        });
    }

    println!("solver bench: K = {k}, {n} instances, seed {seed}");
    println!("check             checks  violations  worst slack");
    for (name, tally) in [
        ("primal bound", &primal),
        ("duality gap", &gap),
        ("step progress", &progress),
        ("oracle agreement", &oracle),
    ] {
        println!(
            "{name:<17} {:>6} {:>11}  {:.2e}",
            tally.checks, tally.violations, tally.worst
        );
    }
    let total = primal.violations + gap.violations + progress.violations + oracle.violations;
    println!("violations: {total}");
    Ok(if total == 0 { 0 } else { 1 })
}

// ─────────────────────────────── export-plots ──────────────────────────────

/// One tidy output row; every exported table shares the
/// `step,series,value` layout so any plotting tool can pivot it.
struct TidyRow {
    step: String,
    series: String,
    value: String,
}

fn write_tidy(path: &Path, rows: &[TidyRow]) -> CliResult<()> {
    let mut out = File::create(path).map_err(pmoe_core::error::Error::from)?;
    writeln!(out, "step,series,value").map_err(pmoe_core::error::Error::from)?;
    for row in rows {
        writeln!(out, "{},{},{}", row.step, row.series, row.value)
            .map_err(pmoe_core::error::Error::from)?;
    }
    Ok(())
}

fn open_artifact(dir: &Path, name: &str) -> CliResult<File> {
    File::open(dir.join(name))
        .map_err(|e| CliError::Data(format!("missing run artifact {name} in {}: {e}", dir.display())))
}

pub fn cmd_export_plots(run_dir: &Path) -> CliResult<i32> {
    let metrics = read_metrics_csv::<f64, _>(open_artifact(run_dir, METRICS_FILE)?)?;
    let trajectory = read_trajectory_csv::<f64, _>(open_artifact(run_dir, TRAJECTORY_FILE)?)?;
    let manifest = read_manifest(open_artifact(run_dir, MANIFEST_FILE)?)?;
    let model = load_checkpoint::<f64>(run_dir)?;

    // Per-epoch metric curves.
    let mut curve_rows = Vec::new();
    for row in &metrics {
        let (Some(epoch), Some(value)) = (row.epoch, row.value) else {
            continue;
        };
        curve_rows.push(TidyRow {
            step: epoch.to_string(),
            series: format!("{}.objective{}.{}", row.section, row.objective, row.metric),
            value: format!("{value}"),
        });
    }
    write_tidy(&run_dir.join(METRIC_CURVES_FILE), &curve_rows)?;

    // Per-step weights, losses, and stationarity residual.
    let mut weight_rows = Vec::new();
    for entry in &trajectory.entries {
        for (k, &w) in entry.weights.iter().enumerate() {
            weight_rows.push(TidyRow {
                step: entry.step.to_string(),
                series: format!("weight.objective{k}"),
                value: format!("{w}"),
            });
        }
        for (k, &loss) in entry.losses.iter().enumerate() {
            weight_rows.push(TidyRow {
                step: entry.step.to_string(),
                series: format!("loss.objective{k}"),
                value: format!("{loss}"),
            });
        }
        weight_rows.push(TidyRow {
            step: entry.step.to_string(),
            series: "residual".to_string(),
            value: format!("{}", entry.residual),
        });
    }
    write_tidy(&run_dir.join(WEIGHT_TRAJECTORY_FILE), &weight_rows)?;

    // Test-set prediction residuals, binned per objective. The data is
    // regenerated from the manifest's config echo, so the file matches the
    // checkpoint exactly.
    let cfg: RunConfig = serde_json::from_value(manifest.config)
        .map_err(|e| CliError::Data(format!("manifest config echo does not parse: {e}")))?;
    let (raw, data) = cfg.load_data()?;
    let residuals = prediction_residuals(&model, &data.test.x, &data.test.y, &data.y_normalizer)?;

    let mut hist_rows = Vec::new();
    for (obj, series) in residuals.iter().enumerate() {
        let name = &raw.schema().quality[obj];
        for (bin, b) in histogram(series, HISTOGRAM_BINS)?.iter().enumerate() {
            for (kind, value) in [
                ("bin-lo", format!("{}", b.lo)),
                ("bin-hi", format!("{}", b.hi)),
                ("count", b.count.to_string()),
            ] {
                hist_rows.push(TidyRow {
                    step: bin.to_string(),
                    series: format!("{kind}.{name}"),
                    value,
                });
            }
        }
    }
    write_tidy(&run_dir.join(RESIDUAL_HISTOGRAM_FILE), &hist_rows)?;

    println!(
        "plot tables written to {}: {METRIC_CURVES_FILE}, {WEIGHT_TRAJECTORY_FILE}, {RESIDUAL_HISTOGRAM_FILE}",
        run_dir.display()
    );
    Ok(0)
}

/// Physical-unit residuals (truth − prediction) per objective.
fn prediction_residuals(
    model: &Model<f64>,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    y_normalizer: &Normalizer<f64>,
) -> CliResult<Vec<Vec<f64>>> {
    let objectives = model.config().objectives;
    let mut residuals = vec![Vec::with_capacity(xs.len()); objectives];
    for (x, y) in xs.iter().zip(ys) {
        let mut pred = model.predict(x)?;
        let mut truth = y.clone();
        y_normalizer.inverse_row(&mut pred);
        y_normalizer.inverse_row(&mut truth);
        for k in 0..objectives {
            residuals[k].push(truth[k] - pred[k]);
        }
    }
    Ok(residuals)
}
