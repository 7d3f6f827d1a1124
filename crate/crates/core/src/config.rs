//! Declarative run configuration, read from TOML.
//!
//! Every key is optional and unknown keys are rejected. Flat dotted keys
//! (`model.n_layer = 2`) and `[model]` tables are equivalent in TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{PredictorMode, TrainConfig};
use crate::nnet::{AdamConfig, EncoderConfig, Pooling};
use crate::spectral::{SignConvention, SpectralConfig, SpectralOperator};
use crate::tokenizer::TokenizerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Train split size. When absent, `train_fraction` of the records.
    pub n_train: Option<usize>,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Re-split the data for every trial (using the trial seed) instead of
    /// reusing one split and only re-initialising the model.
    pub resplit_per_trial: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { n_train: None, train_fraction: 0.5, split_seed: 0, resplit_per_trial: false }
    }
}

impl DataSection {
    pub fn n_train(&self, available: usize) -> usize {
        self.n_train.unwrap_or_else(|| (available as f64 * self.train_fraction).round() as usize)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignName {
    #[default]
    FirstNonzeroPositive,
    RandomFlip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub operator: SpectralOperator,
    pub sign: SignName,
    /// Seed for `sign = "random-flip"`.
    pub sign_seed: u64,
    pub keep_trivial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub d_p: usize,
    pub raw_codes: bool,
    pub id_divisor: f64,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        let t = TokenizerConfig::default();
        Self { d_p: t.d_p, raw_codes: t.raw_codes, id_divisor: t.id_divisor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layer: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub pooling: Pooling,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = EncoderConfig::default();
        Self { n_layer: m.n_layer, d_model: m.d_model, n_heads: m.n_heads, d_ff: m.d_ff, dropout: m.dropout, pooling: m.pooling }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: PredictorMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub n_trials: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: t.mode,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            n_trials: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub spectral: SpectralSection,
    pub tokenizer: TokenizerSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    /// Training config for one trial seeded with `seed`.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let tokenizer = TokenizerConfig {
            d_p: self.tokenizer.d_p,
            raw_codes: self.tokenizer.raw_codes,
            id_divisor: self.tokenizer.id_divisor,
        };
        let sign = match self.spectral.sign {
            SignName::FirstNonzeroPositive => SignConvention::FirstNonzeroPositive,
            SignName::RandomFlip => SignConvention::RandomFlip(self.spectral.sign_seed),
        };
        let m = &self.model;
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed,
            mode: t.mode,
            model: EncoderConfig {
                n_layer: m.n_layer,
                d_model: m.d_model,
                n_heads: m.n_heads,
                d_ff: m.d_ff,
                dropout: m.dropout,
                pooling: m.pooling,
                input_width: tokenizer.width(),
                n_targets: 4,
            },
            adam: AdamConfig { lr: t.lr, beta1: t.beta1, beta2: t.beta2, eps: t.eps },
            spectral: SpectralConfig {
                operator: self.spectral.operator,
                d_p: tokenizer.d_p,
                sign,
                keep_trivial: self.spectral.keep_trivial,
            },
            tokenizer,
        }
    }
}

/// Reference document listing every key with its default value.
pub const DEFAULT_CONFIG_TOML: &str = r#"# tart run configuration. Every key is optional; the values below are the
# defaults. Unknown keys are rejected. Command-line flags override the file.

# Train split size; when unset, round(train_fraction * record count).
# data.n_train = 200
data.train_fraction = 0.5
data.split_seed = 0
# true: each trial re-splits with its own seed; false: one fixed split,
# trials differ only in model initialisation, batch order and dropout.
data.resplit_per_trial = false

# "laplacian" (normalized Laplacian of the undirected graph) or "adjacency".
spectral.operator = "laplacian"
# "first-nonzero-positive" or "random-flip" (seeded by spectral.sign_seed).
spectral.sign = "first-nonzero-positive"
spectral.sign_seed = 0
# Keep zero-eigenvalue eigenvectors (one per connected component).
spectral.keep_trivial = false

# Eigenvector columns per node; token width is 1 + 2 * d_p + 4.
tokenizer.d_p = 3
# Node feature is the raw primitive code instead of code / 15.
tokenizer.raw_codes = false
# Edge endpoint ids in the identifier columns are divided by this value.
tokenizer.id_divisor = 1.0

model.n_layer = 6
model.d_model = 64
model.n_heads = 4
model.d_ff = 256
model.dropout = 0.1
# "mean" (masked mean over real rows) or "cls".
model.pooling = "mean"

# "tart" (node and edge tokens) or "pure-transformer" (node tokens only).
train.mode = "tart"
train.epochs = 30
train.batch_size = 32
train.lr = 1e-4
train.beta1 = 0.9
train.beta2 = 0.999
train.eps = 1e-8
train.n_trials = 5
"#;
