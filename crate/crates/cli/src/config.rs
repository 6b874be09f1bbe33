//! Declarative run configuration.
//!
//! One TOML file is the single source of truth for a run: data source,
//! model, training, solver, and output directory. Commands only choose what
//! to do with it. Unknown keys are rejected, every field is validated before
//! any work starts, and omitted fields fall back to the library defaults, so
//! a minimal config is just a data source and an output directory.
//!
//! ```toml
//! [data.source.synth]
//! seed = 7
//! rows = 4000
//!
//! [training]
//! epochs = 12
//! weight_mode = "por"
//!
//! [output]
//! dir = "runs/demo"
//! ```

use std::path::{Path, PathBuf};

use pmoe_core::data::{
    load_csv, prepare, synth_sru, ColumnSchema, PreparedData, RawSeries, SplitSpec, DEFAULT_LAGS,
};
use pmoe_core::model::ModelConfig;
use pmoe_core::solver::{FWConfig, StepMode};
use pmoe_core::train::{TrainConfig, WeightMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

// ──────────────────────────────── sections ─────────────────────────────────

/// Where the raw series comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Header-bearing delimited file with the default column layout
    /// (`x1..x5` process inputs, `y1`/`y2` quality targets).
    Csv { path: PathBuf },
    /// Bundled synthetic generator: anti-correlated targets over five
    /// autoregressive channels.
    Synth { seed: u64, rows: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Lag-window length; the model input is `lags × process columns` wide.
    #[serde(default = "default_lags")]
    pub lags: usize,
    #[serde(default)]
    pub split: SplitSpec,
}

fn default_lags() -> usize {
    DEFAULT_LAGS
}

/// Architecture overrides; anything omitted keeps the library default.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub objectives: Option<usize>,
    /// Defaults to `lags × process columns`; when given it must match.
    pub input_dim: Option<usize>,
    pub specific_experts: Option<usize>,
    pub shared_experts: Option<usize>,
    pub blocks: Option<usize>,
    pub expert_layers: Option<usize>,
    pub expert_width: Option<usize>,
    pub expert_out: Option<usize>,
    pub tower_widths: Option<Vec<usize>>,
    pub share_specific_experts: Option<bool>,
}

/// Training-loop overrides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    /// `"por"` for per-batch reconciled weights, `{ fixed = [w…] }` for a
    /// constant simplex weighting.
    pub weight_mode: Option<WeightMode<f64>>,
    pub seed: Option<u64>,
    pub weights_per_epoch: Option<bool>,
}

/// Min-norm solver overrides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iters: Option<usize>,
    pub v_tol: Option<f64>,
    pub step_mode: Option<StepMode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

// ─────────────────────────────── whole config ──────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads and parses a config file. Parse failures are config errors; the
    /// TOML error message names the offending key and line.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The input width implied by the data section. The column layout is
    /// fixed (five process variables), so this is known before loading.
    pub fn derived_input_dim(&self) -> usize {
        self.data.lags * ColumnSchema::default().process_dims()
    }

    /// Assembles the full training configuration from the sections.
    pub fn train_config(&self) -> TrainConfig<f64> {
        let mut model = ModelConfig {
            input_dim: self.derived_input_dim(),
            ..ModelConfig::default()
        };
        let m = &self.model;
        if let Some(v) = m.objectives {
            model.objectives = v;
        }
        if let Some(v) = m.input_dim {
            model.input_dim = v;
        }
        if let Some(v) = m.specific_experts {
            model.specific_experts = v;
        }
        if let Some(v) = m.shared_experts {
            model.shared_experts = v;
        }
        if let Some(v) = m.blocks {
            model.blocks = v;
        }
        if let Some(v) = m.expert_layers {
            model.expert_layers = v;
        }
        if let Some(v) = m.expert_width {
            model.expert_width = v;
        }
        if let Some(v) = m.expert_out {
            model.expert_out = v;
        }
        if let Some(v) = m.tower_widths.clone() {
            model.tower_widths = v;
        }
        if let Some(v) = m.share_specific_experts {
            model.share_specific_experts = v;
        }

        let mut fw = FWConfig::default();
        if let Some(v) = self.solver.max_iters {
            fw.max_iters = v;
        }
        if let Some(v) = self.solver.v_tol {
            fw.v_tol = v;
        }
        if let Some(v) = self.solver.step_mode {
            fw.step_mode = v;
        }

        let mut cfg = TrainConfig {
            model,
            fw,
            ..TrainConfig::default()
        };
        let t = &self.training;
        if let Some(v) = t.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = t.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = t.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = t.weight_mode.clone() {
            cfg.weight_mode = v;
        }
        if let Some(v) = t.seed {
            cfg.seed = v;
        }
        if let Some(v) = t.weights_per_epoch {
            cfg.weights_per_epoch = v;
        }
        cfg
    }

    /// Validates the whole tree before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        if self.data.lags < 1 {
            return Err(CliError::config_field("data.lags", "must be at least 1"));
        }
        self.data.split.validate()?;
        if let DataSource::Synth { rows, .. } = &self.data.source {
            if *rows < 20 {
                return Err(CliError::config_field(
                    "data.source.synth.rows",
                    "must be at least 20",
                ));
            }
        }
        if let Some(given) = self.model.input_dim {
            let derived = self.derived_input_dim();
            if given != derived {
                return Err(CliError::config_field(
                    "model.input_dim",
                    format!("must equal lags × process columns = {derived}"),
                ));
            }
        }
        self.train_config().validate()?;
        Ok(())
    }

    /// Loads the raw series and the lag-embedded, normalized splits.
    pub fn load_data(&self) -> CliResult<(RawSeries<f64>, PreparedData<f64>)> {
        let raw = match &self.data.source {
            DataSource::Csv { path } => load_csv(path, &ColumnSchema::default())?.0,
            DataSource::Synth { seed, rows } => synth_sru(*seed, *rows)?,
        };
        let prepared = prepare(&raw, self.data.lags, &self.data.split)?;
        Ok((raw, prepared))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::EXIT_CONFIG;

    fn minimal() -> &'static str {
        "[data.source.synth]\nseed = 7\nrows = 400\n\n[output]\ndir = \"out\"\n"
    }

    fn parse(text: &str) -> RunConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn minimal_config_resolves_to_library_defaults() {
        let cfg = parse(minimal());
        let train = cfg.train_config();
        assert_eq!(train.epochs, TrainConfig::<f64>::default().epochs);
        assert_eq!(train.model.expert_width, ModelConfig::default().expert_width);
        assert_eq!(train.model.input_dim, 50);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}\n[training]\nlearning_rte = 0.1\n", minimal());
        let err = toml::from_str::<RunConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("learning_rte"));
    }

    #[test]
    fn weight_mode_accepts_both_forms() {
        let por = format!("{}\n[training]\nweight_mode = \"por\"\n", minimal());
        assert_eq!(
            parse(&por).train_config().weight_mode,
            WeightMode::<f64>::Por
        );
        let fixed = format!(
            "{}\n[training]\nweight_mode = {{ fixed = [0.8, 0.2] }}\n",
            minimal()
        );
        assert_eq!(
            parse(&fixed).train_config().weight_mode,
            WeightMode::Fixed(vec![0.8, 0.2])
        );
    }

    #[test]
    fn input_dim_follows_lags() {
        let text = format!("{}\n[data]\nlags = 4\n", minimal());
        let cfg = parse(&text);
        assert_eq!(cfg.data.lags, 4);
        assert_eq!(cfg.train_config().model.input_dim, 20);
    }

    #[test]
    fn mismatched_input_dim_is_named() {
        let mut cfg = parse(minimal());
        cfg.model.input_dim = Some(49);
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("model.input_dim"));
    }

    #[test]
    fn core_validation_paths_pass_through() {
        let mut cfg = parse(minimal());
        cfg.model.blocks = Some(0);
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("model.blocks"));
    }

    #[test]
    fn tiny_synth_source_is_rejected_before_loading() {
        let mut cfg = parse(minimal());
        cfg.data.source = DataSource::Synth { seed: 1, rows: 5 };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("data.source.synth.rows"));
    }

    #[test]
    fn config_round_trips_through_json_for_the_manifest() {
        let cfg = parse(minimal());
        let echoed: RunConfig =
            serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(echoed.data.lags, cfg.data.lags);
        assert_eq!(echoed.output.dir, cfg.output.dir);
    }
}
