//! TOML pipeline configuration, validated in full before any stage runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{MAX_LUT_SIZE, MIN_LUT_SIZE};
use crate::pruning::FcpConfig;
use crate::qnn::{Activation, Architecture, LayerSpec, TrainConfig};
use crate::truthtable::{DEFAULT_MAX_TABLE_INPUTS, HARD_MAX_TABLE_INPUTS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("layer {layer}: {message}")]
    Layer { layer: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// CSV file; relative paths resolve against the config file's directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub features: Option<usize>,
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_valid_fraction")]
    pub valid_fraction: f64,
}

fn default_label_column() -> String {
    "label".into()
}
fn default_separation() -> f64 {
    2.0
}
fn default_spread() -> f64 {
    1.0
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_valid_fraction() -> f64 {
    0.15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub input: Activation,
    pub layers: Vec<LayerSpec>,
    /// Bits of the classifier scores when the last layer is `identity`.
    #[serde(default = "default_output_bits")]
    pub output_bits: u32,
}

fn default_output_bits() -> u32 {
    8
}

/// Optimizer settings; the seed comes from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    64
}
fn default_momentum() -> f64 {
    0.9
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            weight_decay: 0.0,
            momentum: default_momentum(),
        }
    }
}

impl TrainingConfig {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            momentum: self.momentum,
            seed,
        }
    }
}

/// Settings of the logic stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileConfig {
    #[serde(default = "default_max_table_inputs")]
    pub max_table_inputs: usize,
    #[serde(default = "default_lut_size")]
    pub lut_size: usize,
    #[serde(default = "default_pipeline")]
    pub pipeline: bool,
    #[serde(default = "default_samples")]
    pub verify_samples: usize,
}

fn default_max_table_inputs() -> usize {
    DEFAULT_MAX_TABLE_INPUTS
}
fn default_lut_size() -> usize {
    6
}
fn default_pipeline() -> bool {
    true
}
fn default_samples() -> usize {
    10_000
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig {
            max_table_inputs: default_max_table_inputs(),
            lut_size: default_lut_size(),
            pipeline: default_pipeline(),
            verify_samples: default_samples(),
        }
    }
}

impl CompileConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=HARD_MAX_TABLE_INPUTS).contains(&self.max_table_inputs) {
            return Err(ConfigError::Invalid(format!(
                "max_table_inputs must be in 1..={HARD_MAX_TABLE_INPUTS}, got {}",
                self.max_table_inputs
            )));
        }
        if !(MIN_LUT_SIZE..=MAX_LUT_SIZE).contains(&self.lut_size) {
            return Err(ConfigError::Invalid(format!(
                "lut_size must be in {MIN_LUT_SIZE}..={MAX_LUT_SIZE}, got {}",
                self.lut_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub fcp: Option<FcpConfig>,
    #[serde(default)]
    pub compile: CompileConfig,
    /// Directory relative paths resolve against; set by [`PipelineConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Offsets that derive every stage's seed from the top-level one.
pub mod seeds {
    pub const DATA: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const FCP: u64 = 4;
    pub const VERIFY: u64 = 5;
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads a config file without validating it, so overrides can be applied
    /// first.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(cfg)
    }

    pub fn stage_seed(&self, offset: u64) -> u64 {
        self.seed.wrapping_add(offset)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_owned()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn architecture(&self, inputs: usize) -> Architecture {
        Architecture {
            inputs,
            input_quant: self.architecture.input.clone(),
            layers: self.architecture.layers.clone(),
        }
    }

    /// Input feature count when it is known without reading data.
    pub fn known_inputs(&self) -> Option<usize> {
        match self.dataset.kind {
            DatasetKind::Blobs => self.dataset.features,
            DatasetKind::Csv => None,
        }
    }

    /// Checks everything that can be checked without data. Fanin budgets use
    /// `inputs` for the first layer when given.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.compile.validate()?;

        let d = &self.dataset;
        match d.kind {
            DatasetKind::Blobs => {
                for (name, v) in [
                    ("samples", d.samples),
                    ("features", d.features),
                    ("classes", d.classes),
                ] {
                    match v {
                        None => return invalid(format!("blobs dataset needs `{name}`")),
                        Some(0) => return invalid(format!("dataset `{name}` must be positive")),
                        _ => {}
                    }
                }
                if d.classes < Some(2) {
                    return invalid("blobs dataset needs at least 2 classes".into());
                }
                if !(d.separation.is_finite() && d.spread.is_finite() && d.spread >= 0.0) {
                    return invalid(
                        "blob separation and spread must be finite, spread >= 0".into(),
                    );
                }
            }
            DatasetKind::Csv => {
                if d.path.is_none() {
                    return invalid("csv dataset needs `path`".into());
                }
            }
        }
        let (tf, vf) = (d.train_fraction, d.valid_fraction);
        if !(tf > 0.0 && tf < 1.0 && (0.0..1.0).contains(&vf) && tf + vf < 1.0) {
            return invalid(format!(
                "split fractions need 0 < train < 1, 0 <= valid and train + valid < 1; got {tf} and {vf}"
            ));
        }

        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return invalid(format!(
                "learning_rate must be positive, got {}",
                t.learning_rate
            ));
        }
        if t.batch_size == 0 {
            return invalid("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&t.momentum) || !(t.weight_decay >= 0.0) {
            return invalid("momentum must be in [0, 1) and weight_decay >= 0".into());
        }

        let a = &self.architecture;
        if !a.input.is_quantized() || matches!(a.input, Activation::SignedFixed { .. }) {
            return invalid(
                "the input quantizer must be bipolar_sign, pact or symmetric_pact".into(),
            );
        }
        a.input.validate().map_err(ConfigError::Invalid)?;
        if a.layers.is_empty() {
            return invalid("architecture needs at least one layer".into());
        }
        if !(2..=16).contains(&a.output_bits) {
            return invalid(format!(
                "output_bits must be in 2..=16, got {}",
                a.output_bits
            ));
        }
        let last = a.layers.len() - 1;
        for (l, spec) in a.layers.iter().enumerate() {
            let layer_err = |message: String| ConfigError::Layer { layer: l, message };
            if spec.width == 0 {
                return Err(layer_err("width must be positive".into()));
            }
            spec.activation.validate().map_err(layer_err)?;
            let ok = match spec.activation {
                Activation::Identity => l == last,
                Activation::SignedFixed { .. } => false,
                _ => true,
            };
            if !ok {
                return Err(layer_err(format!(
                    "activation {:?} is not allowed here; hidden layers need a quantizer and only the last layer may be identity",
                    spec.activation
                )));
            }
        }
        if let (DatasetKind::Blobs, Some(classes)) = (d.kind, d.classes) {
            if a.layers[last].width != classes {
                return Err(ConfigError::Layer {
                    layer: last,
                    message: format!(
                        "last layer width {} does not match {classes} classes",
                        a.layers[last].width
                    ),
                });
            }
        }
        if let Some(fcp) = &self.fcp {
            fcp.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.check_budget(self.known_inputs())
    }

    /// Table width of every layer against `max_table_inputs`; the first layer
    /// is only checked when `inputs` is known.
    pub fn check_budget(&self, inputs: Option<usize>) -> Result<(), ConfigError> {
        let a = &self.architecture;
        let max = self.compile.max_table_inputs;
        let fanin = self.fcp.as_ref().map(|f| f.fanin);
        let mut width = inputs;
        let mut in_act = &a.input;
        for (l, spec) in a.layers.iter().enumerate() {
            let bits = in_act.bits().unwrap_or(0) as usize;
            if let Some(n_in) = width {
                let eff = fanin.map_or(n_in, |f| f.min(n_in));
                if eff * bits > max {
                    return Err(ConfigError::Layer {
                        layer: l,
                        message: format!(
                            "fanin {eff} x {bits} input bits = {} table inputs exceeds max_table_inputs {max}",
                            eff * bits
                        ),
                    });
                }
            }
            width = Some(spec.width);
            in_act = &spec.activation;
        }
        Ok(())
    }
}
