//! Training loop, evaluation, and comparison harnesses.
//!
//! One training step runs the full reconciliation cycle on a mini-batch:
//! forward all objectives, backpropagate each objective's loss separately,
//! assemble the shared-gradient Gram matrix, solve for loss weights on the
//! simplex (or take fixed ones), and apply the descent update — specific
//! parameters by their own gradient, shared parameters by the weighted
//! combination. Everything is seed-deterministic: model initialization,
//! batch order, and therefore the entire parameter trajectory.

use serde::{Deserialize, Serialize};

use crate::data::{LaggedDataset, PreparedData};
use crate::error::{Error, Result};
use crate::metrics::{regression_metrics, MetricsReport, ObjectiveMetrics};
use crate::model::{Model, ModelConfig};
use crate::rng::SeededRng;
use crate::scalar::{real, Scalar};
use crate::solver::{
    apply_updates, frank_wolfe, pareto_stationarity_residual, FWConfig, GramMatrix,
    SimplexWeights,
};

// ─────────────────────────────── configuration ─────────────────────────────

/// How the per-objective loss weights are chosen each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode<T> {
    /// Solve the min-norm problem on the current batch's gradients.
    Por,
    /// Constant weights, e.g. equal weights for the baseline mode.
    Fixed(Vec<T>),
}

/// Full training hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: T,
    pub weight_mode: WeightMode<T>,
    /// Master seed: drives parameter initialization and batch order.
    pub seed: u64,
    /// Re-solve the weights only on the first batch of each epoch instead
    /// of every batch.
    pub weights_per_epoch: bool,
    pub fw: FWConfig<T>,
    pub model: ModelConfig,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: real(1e-2),
            weight_mode: WeightMode::Por,
            seed: 0,
            weights_per_epoch: false,
            fw: FWConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("training.epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("training.batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::config(
                "training.learning_rate",
                "must be positive and finite",
            ));
        }
        if let WeightMode::Fixed(w) = &self.weight_mode {
            if w.len() != self.model.objectives {
                return Err(Error::config(
                    "training.weight_mode",
                    format!(
                        "fixed weights have {} entries for {} objectives",
                        w.len(),
                        self.model.objectives
                    ),
                ));
            }
            SimplexWeights::new(w.clone())
                .map_err(|e| Error::config("training.weight_mode", e.to_string()))?;
        }
        self.fw.validate()?;
        self.model.validate()
    }
}

// ──────────────────────────────── trajectory ───────────────────────────────

/// One training step's weight decision and outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryEntry<T> {
    /// Global step index, starting at 1.
    pub step: usize,
    pub weights: Vec<T>,
    /// Per-objective batch losses (normalized units) before the update.
    pub losses: Vec<T>,
    /// ‖Σ_k w_k ∇_sh L̂_k‖² on this batch — the Pareto-stationarity
    /// residual actually driven toward zero.
    pub residual: T,
}

/// Sequence of per-step entries for the whole run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct WeightTrajectory<T> {
    pub entries: Vec<TrajectoryEntry<T>>,
}

/// A finished run: the best-validation model, its test metrics, and the
/// per-step weight trajectory.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub report: MetricsReport<T>,
    pub trajectory: WeightTrajectory<T>,
}

// ─────────────────────────────── training loop ─────────────────────────────

/// Per-objective validation MSE in normalized units.
pub fn validation_mse<T: Scalar>(model: &Model<T>, part: &LaggedDataset<T>) -> Result<Vec<T>> {
    if part.is_empty() {
        return Err(Error::Domain("validation partition is empty".into()));
    }
    let k = part.target_dim();
    let mut acc = vec![T::zero(); k];
    for (x, y) in part.x.iter().zip(&part.y) {
        let pred = model.predict(x)?;
        for ((a, &p), &t) in acc.iter_mut().zip(&pred).zip(y) {
            let d = p - t;
            *a += d * d;
        }
    }
    let n = real::<T>(part.len() as f64);
    for a in &mut acc {
        *a = *a / n;
    }
    Ok(acc)
}

/// Trains per the config and returns the checkpoint with the lowest
/// equal-weight mean validation MSE, its test metrics, and the weight
/// trajectory. Aborts with a step-stamped divergence error if any batch
/// loss turns non-finite.
pub fn train<T: Scalar>(cfg: &TrainConfig<T>, data: &PreparedData<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    for (name, part) in [
        ("train", &data.train),
        ("validation", &data.val),
        ("test", &data.test),
    ] {
        if part.is_empty() {
            return Err(Error::Domain(format!("{name} partition is empty")));
        }
    }
    if data.train.target_dim() != cfg.model.objectives {
        return Err(Error::DimensionMismatch {
            op: "train",
            lhs: format!("model with {} objectives", cfg.model.objectives),
            rhs: format!("data with {} targets", data.train.target_dim()),
        });
    }
    if data.train.input_dim() != cfg.model.input_dim {
        return Err(Error::DimensionMismatch {
            op: "train",
            lhs: format!("model input width {}", cfg.model.input_dim),
            rhs: format!("data feature width {}", data.train.input_dim()),
        });
    }

    let mut init_rng = SeededRng::new(cfg.seed);
    let mut model = Model::new(cfg.model.clone(), &mut init_rng)?;
    let mut order_rng = init_rng.fork(1);
    let partition = model.partition_parameters();

    let n = data.train.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut trajectory = WeightTrajectory::default();
    let mut validation_curve: Vec<Vec<T>> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(T, Model<T>)> = None;
    let mut step = 0usize;
    let mut epoch_weights: Option<SimplexWeights<T>> = None;

    for _epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut indices);
        if cfg.weights_per_epoch {
            epoch_weights = None; // re-solve on the first batch below
        }
        for batch in indices.chunks(cfg.batch_size) {
            step += 1;
            let xs: Vec<&[T]> = batch.iter().map(|&i| data.train.x[i].as_slice()).collect();
            let ys: Vec<&[T]> = batch.iter().map(|&i| data.train.y[i].as_slice()).collect();
            let (bundle, losses) = model.objective_gradients(&xs, &ys)?;
            if losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::Divergence { step });
            }
            let gram = GramMatrix::from_bundle(&bundle)?;
            let weights = match &cfg.weight_mode {
                WeightMode::Fixed(w) => SimplexWeights::new(w.clone())?,
                WeightMode::Por => {
                    if cfg.weights_per_epoch {
                        match &epoch_weights {
                            Some(w) => w.clone(),
                            None => {
                                let (w, _) = frank_wolfe(&gram, &cfg.fw)?;
                                epoch_weights = Some(w.clone());
                                w
                            }
                        }
                    } else {
                        frank_wolfe(&gram, &cfg.fw)?.0
                    }
                }
            };
            let residual = pareto_stationarity_residual(&gram, &weights);
            apply_updates(
                model.store_mut(),
                &partition,
                &bundle,
                &weights,
                cfg.learning_rate,
            )?;
            trajectory.entries.push(TrajectoryEntry {
                step,
                weights: weights.as_slice().to_vec(),
                losses,
                residual,
            });
        }

        let val = validation_mse(&model, &data.val)?;
        let score = val.iter().copied().sum::<T>() / real::<T>(val.len() as f64);
        validation_curve.push(val);
        if !score.is_finite() {
            return Err(Error::Divergence { step });
        }
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, model.clone()));
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    let (test, test_normalized) = evaluate(&best_model, &data.test, &data.y_normalizer)?;
    Ok(TrainOutcome {
        model: best_model,
        report: MetricsReport {
            test,
            test_normalized,
            validation_curve,
        },
        trajectory,
    })
}

/// Per-objective test metrics in physical units (first) and normalized
/// units (second). Predictions and targets are de-normalized with the
/// training-partition statistics before the physical-unit computation.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    part: &LaggedDataset<T>,
    y_normalizer: &crate::data::Normalizer<T>,
) -> Result<(Vec<ObjectiveMetrics<T>>, Vec<ObjectiveMetrics<T>>)> {
    if part.is_empty() {
        return Err(Error::Domain("evaluation partition is empty".into()));
    }
    let k = part.target_dim();
    let mut truth_n = vec![Vec::with_capacity(part.len()); k];
    let mut pred_n = vec![Vec::with_capacity(part.len()); k];
    for (x, y) in part.x.iter().zip(&part.y) {
        let pred = model.predict(x)?;
        for obj in 0..k {
            truth_n[obj].push(y[obj]);
            pred_n[obj].push(pred[obj]);
        }
    }
    let mut physical = Vec::with_capacity(k);
    let mut normalized = Vec::with_capacity(k);
    for obj in 0..k {
        normalized.push(regression_metrics(&truth_n[obj], &pred_n[obj])?);
        let truth_p: Vec<T> = truth_n[obj]
            .iter()
            .map(|&v| y_normalizer.inverse_value(obj, v))
            .collect();
        let pred_p: Vec<T> = pred_n[obj]
            .iter()
            .map(|&v| y_normalizer.inverse_value(obj, v))
            .collect();
        physical.push(regression_metrics(&truth_p, &pred_p)?);
    }
    Ok((physical, normalized))
}

// ───────────────────────────── seesaw comparison ───────────────────────────

/// Per-objective R² of three training regimes and the deltas between them.
/// `negative_transfer[k]` below zero means joint fixed-weight training hurt
/// objective k relative to its dedicated model; `por_gain[k]` above zero
/// means the solved weights recovered accuracy over fixed equal weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeesawComparison<T> {
    pub single: Vec<Option<T>>,
    pub fixed: Vec<Option<T>>,
    pub por: Vec<Option<T>>,
    pub negative_transfer: Vec<Option<T>>,
    pub por_gain: Vec<Option<T>>,
}

fn restrict_targets<T: Scalar>(part: &LaggedDataset<T>, obj: usize) -> LaggedDataset<T> {
    LaggedDataset {
        x: part.x.clone(),
        y: part.y.iter().map(|row| vec![row[obj]]).collect(),
        lags: part.lags,
    }
}

fn r2_column<T: Scalar>(metrics: &[ObjectiveMetrics<T>]) -> Vec<Option<T>> {
    metrics.iter().map(|m| m.r2).collect()
}

/// Trains (a) one single-objective model per target, (b) a fixed-equal-
/// weights multi-objective model, and (c) a weight-solving multi-objective
/// model, all from `base`, and reports per-objective test R² plus deltas.
pub fn compare_seesaw<T: Scalar>(
    base: &TrainConfig<T>,
    data: &PreparedData<T>,
) -> Result<SeesawComparison<T>> {
    base.validate()?;
    let k = base.model.objectives;

    let mut single = Vec::with_capacity(k);
    for obj in 0..k {
        let mut cfg = base.clone();
        cfg.model.objectives = 1;
        cfg.weight_mode = WeightMode::Fixed(vec![T::one()]);
        let view = PreparedData {
            train: restrict_targets(&data.train, obj),
            val: restrict_targets(&data.val, obj),
            test: restrict_targets(&data.test, obj),
            x_normalizer: data.x_normalizer.clone(),
            y_normalizer: data.y_normalizer.restrict(&[obj]),
            checksum: data.checksum.clone(),
        };
        let outcome = train(&cfg, &view)?;
        single.push(outcome.report.test[0].r2);
    }

    let uniform = real::<T>(1.0 / k as f64);
    let mut fixed_cfg = base.clone();
    fixed_cfg.weight_mode = WeightMode::Fixed(vec![uniform; k]);
    let fixed = r2_column(&train(&fixed_cfg, data)?.report.test);

    let mut por_cfg = base.clone();
    por_cfg.weight_mode = WeightMode::Por;
    let por = r2_column(&train(&por_cfg, data)?.report.test);

    let delta = |a: &[Option<T>], b: &[Option<T>]| -> Vec<Option<T>> {
        a.iter()
            .zip(b)
            .map(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => Some(*x - *y),
                _ => None,
            })
            .collect()
    };
    Ok(SeesawComparison {
        negative_transfer: delta(&fixed, &single),
        por_gain: delta(&por, &fixed),
        single,
        fixed,
        por,
    })
}

// ─────────────────────────────── ablation grid ─────────────────────────────

/// One grid cell: a labelled patch over the base config. `None` fields keep
/// the base value.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CellSpec<T> {
    pub label: String,
    pub specific_experts: Option<usize>,
    pub shared_experts: Option<usize>,
    pub blocks: Option<usize>,
    pub expert_layers: Option<usize>,
    pub weight_mode: Option<WeightMode<T>>,
}

impl<T: Scalar> CellSpec<T> {
    fn apply(&self, base: &TrainConfig<T>) -> TrainConfig<T> {
        let mut cfg = base.clone();
        if let Some(v) = self.specific_experts {
            cfg.model.specific_experts = v;
        }
        if let Some(v) = self.shared_experts {
            cfg.model.shared_experts = v;
        }
        if let Some(v) = self.blocks {
            cfg.model.blocks = v;
        }
        if let Some(v) = self.expert_layers {
            cfg.model.expert_layers = v;
        }
        if let Some(v) = &self.weight_mode {
            cfg.weight_mode = v.clone();
        }
        cfg
    }
}

/// The grid: every cell trains once per seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationSpec<T> {
    pub cells: Vec<CellSpec<T>>,
    pub seeds: Vec<u64>,
    pub base: TrainConfig<T>,
}

/// Aggregated results for one cell. Failed seed-runs (including runs whose
/// R² is undefined) are recorded and skipped in the statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow<T> {
    pub label: String,
    pub runs: usize,
    /// Per objective: mean test R² over successful seeds.
    pub r2_mean: Vec<Option<T>>,
    /// Per objective: sample standard deviation (0 for a single seed).
    pub r2_std: Vec<Option<T>>,
    /// Mean over objectives of `r2_mean`.
    pub combined_mean: Option<T>,
    pub failures: Vec<String>,
}

fn mean_and_sample_std<T: Scalar>(values: &[T]) -> (T, T) {
    let n = real::<T>(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let ss = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>();
    (mean, (ss / real::<T>((values.len() - 1) as f64)).sqrt())
}

/// Runs the whole grid, never aborting on a cell failure.
pub fn run_ablation<T: Scalar>(
    spec: &AblationSpec<T>,
    data: &PreparedData<T>,
) -> Result<Vec<AblationRow<T>>> {
    if spec.cells.is_empty() {
        return Err(Error::config("ablation.cells", "grid must not be empty"));
    }
    if spec.seeds.is_empty() {
        return Err(Error::config("ablation.seeds", "needs at least one seed"));
    }
    let k = spec.base.model.objectives;
    let mut rows = Vec::with_capacity(spec.cells.len());
    for cell in &spec.cells {
        let mut per_objective: Vec<Vec<T>> = vec![Vec::new(); k];
        let mut failures = Vec::new();
        let mut runs = 0usize;
        for &seed in &spec.seeds {
            let mut cfg = cell.apply(&spec.base);
            cfg.seed = seed;
            match train(&cfg, data) {
                Ok(outcome) => {
                    let r2s: Option<Vec<T>> =
                        outcome.report.test.iter().map(|m| m.r2).collect();
                    match r2s {
                        Some(r2s) => {
                            runs += 1;
                            for (col, v) in per_objective.iter_mut().zip(r2s) {
                                col.push(v);
                            }
                        }
                        None => failures.push(format!("seed {seed}: undefined R²")),
                    }
                }
                Err(e) => failures.push(format!("seed {seed}: {e}")),
            }
        }
        let (r2_mean, r2_std): (Vec<Option<T>>, Vec<Option<T>>) = per_objective
            .iter()
            .map(|col| {
                if col.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_and_sample_std(col);
                    (Some(m), Some(s))
                }
            })
            .unzip();
        let combined_mean = r2_mean
            .iter()
            .copied()
            .collect::<Option<Vec<T>>>()
            .map(|ms| ms.iter().copied().sum::<T>() / real::<T>(ms.len() as f64));
        rows.push(AblationRow {
            label: cell.label.clone(),
            runs,
            r2_mean,
            r2_std,
            combined_mean,
            failures,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, synth_sru, SplitSpec};
    use crate::params::GroupId;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            objectives: 2,
            input_dim: 15, // 5 variables × 3 lags
            specific_experts: 1,
            shared_experts: 1,
            blocks: 2,
            expert_layers: 1,
            expert_width: 4,
            expert_out: 3,
            tower_widths: vec![],
            share_specific_experts: false,
        }
    }

    fn tiny_config(seed: u64) -> TrainConfig<f64> {
        TrainConfig {
            epochs: 2,
            batch_size: 16,
            learning_rate: 1e-2,
            weight_mode: WeightMode::Por,
            seed,
            weights_per_epoch: false,
            fw: FWConfig::default(),
            model: tiny_model(),
        }
    }

    fn tiny_data(seed: u64, rows: usize) -> PreparedData<f64> {
        let raw = synth_sru::<f64>(seed, rows).unwrap();
        prepare(&raw, 3, &SplitSpec::default()).unwrap()
    }

    fn store_bits(model: &Model<f64>) -> Vec<u64> {
        model
            .store()
            .groups()
            .flat_map(|(_, g)| {
                g.tensors
                    .iter()
                    .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn config_validation_names_offending_fields() {
        let mut cfg = tiny_config(0);
        cfg.epochs = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("training.epochs"));

        let mut cfg = tiny_config(0);
        cfg.learning_rate = -1.0;
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("training.learning_rate"));

        let mut cfg = tiny_config(0);
        cfg.weight_mode = WeightMode::Fixed(vec![0.7, 0.7]);
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("training.weight_mode"));

        let mut cfg = tiny_config(0);
        cfg.weight_mode = WeightMode::Fixed(vec![1.0]);
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("training.weight_mode"));
    }

    #[test]
    fn same_seed_and_config_reproduce_bitwise() {
        let data = tiny_data(11, 160);
        let cfg = tiny_config(5);
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(store_bits(&a.model), store_bits(&b.model));
        assert_eq!(
            a.report.test[0].rmse.to_bits(),
            b.report.test[0].rmse.to_bits()
        );
        let c = train(&tiny_config(6), &data).unwrap();
        assert_ne!(store_bits(&a.model), store_bits(&c.model));
    }

    #[test]
    fn trajectory_stays_on_the_simplex_with_finite_losses() {
        let data = tiny_data(3, 160);
        let outcome = train(&tiny_config(1), &data).unwrap();
        let n_train = data.train.len();
        let steps_per_epoch = n_train.div_ceil(16);
        assert_eq!(outcome.trajectory.entries.len(), 2 * steps_per_epoch);
        for entry in &outcome.trajectory.entries {
            SimplexWeights::new(entry.weights.clone()).unwrap();
            assert!(entry.losses.iter().all(|l| l.is_finite()));
            assert!(entry.residual >= 0.0);
        }
    }

    // Reference loop: plain SGD on the single objective, replicating the
    // training loop's seed derivation and batch order. With K = 1 and
    // fixed weight 1 the full harness must produce the same parameters,
    // because the weighted shared update degenerates to the raw gradient.
    #[test]
    fn single_objective_fixed_mode_is_plain_sgd() {
        let data = {
            let full = tiny_data(21, 120);
            PreparedData {
                train: restrict_targets(&full.train, 0),
                val: restrict_targets(&full.val, 0),
                test: restrict_targets(&full.test, 0),
                x_normalizer: full.x_normalizer.clone(),
                y_normalizer: full.y_normalizer.restrict(&[0]),
                checksum: full.checksum.clone(),
            }
        };
        // One epoch so the best-validation snapshot is exactly the final
        // parameter state.
        let mut cfg = tiny_config(9);
        cfg.model.objectives = 1;
        cfg.weight_mode = WeightMode::Fixed(vec![1.0]);
        cfg.epochs = 1;
        let harness = train(&cfg, &data).unwrap();

        let mut init_rng = SeededRng::new(cfg.seed);
        let mut model = Model::<f64>::new(cfg.model.clone(), &mut init_rng).unwrap();
        let mut order_rng = init_rng.fork(1);
        let mut indices: Vec<usize> = (0..data.train.len()).collect();
        let mut manual_losses = Vec::new();
        order_rng.shuffle(&mut indices);
        for batch in indices.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data.train.x[i].as_slice()).collect();
            let ys: Vec<&[f64]> = batch.iter().map(|&i| data.train.y[i].as_slice()).collect();
            let mut tape = crate::tape::Tape::new();
            let bound = model.bind_params(&mut tape);
            let losses = model
                .batch_losses_on_tape(&mut tape, &bound, &xs, &ys)
                .unwrap();
            manual_losses.push(tape.value(losses[0]).item());
            model.store_mut().zero_all_grads();
            tape.backward(losses[0], model.store_mut()).unwrap();
            // θ ← θ − η ∇θ, elementwise over every group.
            let ids: Vec<GroupId> = model.store().groups().map(|(gid, _)| gid).collect();
            for gid in ids {
                let grads: Vec<Vec<f64>> = model
                    .store()
                    .group(gid)
                    .grads
                    .iter()
                    .map(|g| g.data().to_vec())
                    .collect();
                for (slot, grad) in grads.iter().enumerate() {
                    for (idx, &g) in grad.iter().enumerate() {
                        let v = model.store().group(gid).tensors[slot].data()[idx];
                        model.store_mut().group_mut(gid).tensors[slot].data_mut()[idx] =
                            v - cfg.learning_rate * g;
                    }
                }
            }
        }
        assert_eq!(store_bits(&harness.model), store_bits(&model));
        assert_eq!(harness.trajectory.entries.len(), manual_losses.len());
        for (entry, manual) in harness.trajectory.entries.iter().zip(&manual_losses) {
            assert_eq!(entry.losses[0].to_bits(), manual.to_bits());
        }
    }

    #[test]
    fn exclusive_first_objective_weights_touch_shared_like_its_gradient() {
        let data = tiny_data(31, 120);
        let mut cfg = tiny_config(13);
        cfg.weight_mode = WeightMode::Fixed(vec![1.0, 0.0]);
        cfg.epochs = 1;
        cfg.batch_size = data.train.len(); // exactly one batch
        let outcome = train(&cfg, &data).unwrap();

        // Reference: same init, same (single) batch in shuffled order.
        let mut init_rng = SeededRng::new(cfg.seed);
        let mut model = Model::<f64>::new(cfg.model.clone(), &mut init_rng).unwrap();
        let mut order_rng = init_rng.fork(1);
        let mut indices: Vec<usize> = (0..data.train.len()).collect();
        order_rng.shuffle(&mut indices);
        let xs: Vec<&[f64]> = indices.iter().map(|&i| data.train.x[i].as_slice()).collect();
        let ys: Vec<&[f64]> = indices.iter().map(|&i| data.train.y[i].as_slice()).collect();
        let partition = model.partition_parameters();
        let (bundle, _) = model.objective_gradients(&xs, &ys).unwrap();

        // Expected shared parameters: θ_sh − η·∇_sh L̂_0 — objective 1
        // contributes nothing.
        let before: Vec<f64> = partition
            .shared
            .iter()
            .flat_map(|&gid| {
                model.store().group(gid).tensors
                    .iter()
                    .flat_map(|t| t.data().to_vec())
                    .collect::<Vec<_>>()
            })
            .collect();
        let expected: Vec<f64> = before
            .iter()
            .zip(&bundle.shared[0])
            .map(|(&v, &g)| v - cfg.learning_rate * g)
            .collect();

        // The one-epoch outcome model is the post-step snapshot.
        let after: Vec<f64> = partition
            .shared
            .iter()
            .flat_map(|&gid| {
                outcome.model.store().group(gid).tensors
                    .iter()
                    .flat_map(|t| t.data().to_vec())
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(expected.len(), after.len());
        for (e, a) in expected.iter().zip(&after) {
            assert_eq!(e.to_bits(), a.to_bits());
        }
    }

    #[test]
    fn exploding_learning_rate_reports_the_step() {
        let data = tiny_data(7, 160);
        let mut cfg = tiny_config(2);
        cfg.learning_rate = 1e8;
        cfg.epochs = 4;
        match train(&cfg, &data) {
            Err(Error::Divergence { step }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn returned_model_is_no_worse_than_final_epoch_on_validation() {
        let data = tiny_data(17, 200);
        let mut cfg = tiny_config(3);
        cfg.epochs = 5;
        cfg.learning_rate = 0.08; // noisy enough for validation to wobble
        let outcome = train(&cfg, &data).unwrap();
        let best_val = validation_mse(&outcome.model, &data.val).unwrap();
        let best_score: f64 = best_val.iter().sum::<f64>() / best_val.len() as f64;
        let last = outcome.report.validation_curve.last().unwrap();
        let last_score: f64 = last.iter().sum::<f64>() / last.len() as f64;
        assert!(
            best_score <= last_score + 1e-12,
            "best {best_score} vs final {last_score}"
        );
    }

    #[test]
    fn physical_metrics_are_scaled_normalized_metrics() {
        let data = tiny_data(23, 160);
        let outcome = train(&tiny_config(4), &data).unwrap();
        for obj in 0..2 {
            let phys = &outcome.report.test[obj];
            let norm = &outcome.report.test_normalized[obj];
            // De-normalization is affine, so RMSE and MAE scale by the
            // target's fitted deviation and R² is invariant.
            let probe = data.y_normalizer.inverse_value(obj, 1.0)
                - data.y_normalizer.inverse_value(obj, 0.0);
            let scale = probe.abs();
            assert!((phys.rmse - norm.rmse * scale).abs() <= 1e-9 * (1.0 + phys.rmse));
            assert!((phys.mae - norm.mae * scale).abs() <= 1e-9 * (1.0 + phys.mae));
            let (a, b) = (phys.r2.unwrap(), norm.r2.unwrap());
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn per_epoch_weight_refresh_holds_weights_constant_within_an_epoch() {
        let data = tiny_data(29, 160);
        let mut cfg = tiny_config(8);
        cfg.weights_per_epoch = true;
        let outcome = train(&cfg, &data).unwrap();
        let steps_per_epoch = data.train.len().div_ceil(cfg.batch_size);
        for epoch_entries in outcome.trajectory.entries.chunks(steps_per_epoch) {
            let first = &epoch_entries[0].weights;
            for e in epoch_entries {
                assert_eq!(&e.weights, first);
            }
        }
    }

    #[test]
    fn seesaw_comparison_has_full_shape() {
        let data = tiny_data(41, 140);
        let mut cfg = tiny_config(10);
        cfg.epochs = 1;
        let cmp = compare_seesaw(&cfg, &data).unwrap();
        for column in [
            &cmp.single,
            &cmp.fixed,
            &cmp.por,
            &cmp.negative_transfer,
            &cmp.por_gain,
        ] {
            assert_eq!(column.len(), 2);
        }
        for obj in 0..2 {
            let nt = cmp.negative_transfer[obj].unwrap();
            assert!(
                (nt - (cmp.fixed[obj].unwrap() - cmp.single[obj].unwrap())).abs() <= 1e-15
            );
            let pg = cmp.por_gain[obj].unwrap();
            assert!((pg - (cmp.por[obj].unwrap() - cmp.fixed[obj].unwrap())).abs() <= 1e-15);
        }
    }

    #[test]
    fn ablation_single_cell_single_seed_has_zero_std() {
        let data = tiny_data(43, 140);
        let mut base = tiny_config(0);
        base.epochs = 1;
        let spec = AblationSpec {
            cells: vec![CellSpec {
                label: "1/1".into(),
                ..CellSpec::default()
            }],
            seeds: vec![7],
            base,
        };
        let rows = run_ablation(&spec, &data).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].runs, 1);
        assert!(rows[0].failures.is_empty());
        assert_eq!(rows[0].r2_std, vec![Some(0.0), Some(0.0)]);
        assert!(rows[0].combined_mean.is_some());
    }

    #[test]
    fn ablation_std_matches_external_computation() {
        let data = tiny_data(47, 140);
        let mut base = tiny_config(0);
        base.epochs = 1;
        let spec = AblationSpec {
            cells: vec![CellSpec {
                label: "base".into(),
                ..CellSpec::default()
            }],
            seeds: vec![1, 2, 3],
            base: base.clone(),
        };
        let rows = run_ablation(&spec, &data).unwrap();
        // Recompute externally: three independent runs.
        let mut r2s = Vec::new();
        for seed in [1u64, 2, 3] {
            let mut cfg = base.clone();
            cfg.seed = seed;
            r2s.push(train(&cfg, &data).unwrap().report.test[0].r2.unwrap());
        }
        let mean: f64 = r2s.iter().sum::<f64>() / 3.0;
        let std = (r2s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((rows[0].r2_mean[0].unwrap() - mean).abs() <= 1e-15);
        assert!((rows[0].r2_std[0].unwrap() - std).abs() <= 1e-15);
    }

    #[test]
    fn failing_cells_are_recorded_and_the_grid_continues() {
        let data = tiny_data(53, 140);
        let mut base = tiny_config(0);
        base.epochs = 1;
        let spec = AblationSpec {
            cells: vec![
                CellSpec {
                    label: "broken".into(),
                    blocks: Some(0),
                    ..CellSpec::default()
                },
                CellSpec {
                    label: "no-shared".into(),
                    specific_experts: Some(1),
                    shared_experts: Some(0),
                    ..CellSpec::default()
                },
                CellSpec {
                    label: "no-specific".into(),
                    specific_experts: Some(0),
                    shared_experts: Some(1),
                    ..CellSpec::default()
                },
            ],
            seeds: vec![5],
            base,
        };
        let rows = run_ablation(&spec, &data).unwrap();
        assert_eq!(rows[0].runs, 0);
        assert_eq!(rows[0].failures.len(), 1);
        assert!(rows[0].failures[0].contains("model.blocks"));
        assert_eq!(rows[0].r2_mean, vec![None, None]);
        for row in &rows[1..] {
            assert_eq!(row.runs, 1, "{:?}", row.failures);
            assert!(row.combined_mean.is_some());
        }
    }

    #[test]
    fn empty_grid_is_rejected() {
        let data = tiny_data(59, 140);
        let spec: AblationSpec<f64> = AblationSpec {
            cells: vec![],
            seeds: vec![1],
            base: tiny_config(0),
        };
        let err = run_ablation(&spec, &data).unwrap_err();
        assert!(err.to_string().contains("ablation.cells"));
    }

    #[test]
    fn partition_and_dimension_mismatches_are_rejected_before_work() {
        let data = tiny_data(61, 140);
        let mut cfg = tiny_config(0);
        cfg.model.input_dim = 10;
        assert!(train(&cfg, &data).is_err());
        let mut cfg = tiny_config(0);
        cfg.model.objectives = 3;
        assert!(train(&cfg, &data).is_err());
    }
}
