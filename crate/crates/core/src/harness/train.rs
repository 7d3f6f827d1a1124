use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{labels, target_taus};
use super::HarnessError;
use crate::graph::{DatasetSplit, LabeledGraph, TARGET_NAMES};
use crate::nnet::{
    adam_step, backward, AdamConfig, AdamState, EncoderConfig, ForwardMode, PredictorModel, TargetStats, Tensor,
};
use crate::spectral::SpectralConfig;
use crate::tokenizer::{pad_to_longest, tokenize_all, TokenMatrix, TokenMode, TokenizerConfig};

/// Which predictor is trained: the node-only baseline or the full
/// node-and-edge token encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorMode {
    PureTransformer,
    #[default]
    Tart,
}

impl PredictorMode {
    pub fn token_mode(self) -> TokenMode {
        match self {
            PredictorMode::PureTransformer => TokenMode::NodeOnly,
            PredictorMode::Tart => TokenMode::Lap,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PredictorMode::PureTransformer => "pure-transformer",
            PredictorMode::Tart => "tart",
        }
    }
}

impl std::fmt::Display for PredictorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PredictorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pure-transformer" | "pure" => Ok(PredictorMode::PureTransformer),
            "tart" => Ok(PredictorMode::Tart),
            other => Err(format!("unknown mode {other:?} (expected tart or pure-transformer)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: PredictorMode,
    /// `input_width` and `n_targets` are overwritten from the tokenizer
    /// config and the label count.
    pub model: EncoderConfig,
    pub adam: AdamConfig,
    pub spectral: SpectralConfig,
    pub tokenizer: TokenizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            seed: 0,
            mode: PredictorMode::Tart,
            model: EncoderConfig::default(),
            adam: AdamConfig::default(),
            spectral: SpectralConfig::default(),
            tokenizer: TokenizerConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Encoder config with the input width and target count filled in.
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig { input_width: self.tokenizer.width(), n_targets: TARGET_NAMES.len(), ..self.model }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 {
            return Err(HarnessError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig("batch_size must be at least 1".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("learning rate must be positive, got {}", a.lr)));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(HarnessError::InvalidConfig("adam betas must be in [0, 1) and eps positive".into()));
        }
        self.encoder().validate()?;
        Ok(())
    }

    pub fn tokenize(&self, records: &[LabeledGraph]) -> Result<Vec<TokenMatrix>, HarnessError> {
        let graphs: Vec<_> = records.iter().map(|r| &r.graph).collect();
        Ok(tokenize_all(&graphs, self.mode.token_mode(), &self.spectral, &self.tokenizer)?)
    }
}

/// One row of the training history. `test_tau` is `None` for a target
/// whose rank correlation is undefined (unlabelled or constant column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub test_tau: [Option<f64>; 4],
}

/// A fitted model together with what is needed to use it on new graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPredictor {
    pub model: PredictorModel,
    pub stats: TargetStats,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

/// Trains a fresh model on `split.train` for `cfg.epochs` epochs of shuffled
/// minibatch Adam steps and keeps the last-epoch weights.
///
/// Target statistics come from the training labels only and the test split
/// is read only to fill the per-epoch diagnostic in the history, so test
/// labels never influence the weights.
pub fn train_predictor(split: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainedPredictor, HarnessError> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(HarnessError::EmptySplit("train"));
    }
    let train_labels = labels(&split.train)?;
    let stats = TargetStats::fit(&train_labels.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
    let train_tokens = cfg.tokenize(&split.train)?;
    let test_tokens = cfg.tokenize(&split.test)?;

    let mut model = PredictorModel::new(cfg.encoder(), cfg.seed)?;
    let mut adam = AdamState::new(&model);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let tokens: Vec<&TokenMatrix> = chunk.iter().map(|&i| &train_tokens[i]).collect();
            let batch = pad_to_longest(&tokens)?;
            let targets = Tensor::from_vec(
                &[chunk.len(), TARGET_NAMES.len()],
                chunk.iter().flat_map(|&i| train_labels[i]).collect(),
            )
            .expect("one label row per sample");
            let mode = ForwardMode::Train { seed: dropout_rng.random() };
            let (loss, grads) = backward(&model, &batch, &targets, &stats, mode)?;
            adam_step(&mut model, &grads, &mut adam, &cfg.adam)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let test_tau = epoch_taus(&model, &stats, &split.test, &test_tokens)?;
        history.push(EpochRecord { epoch, loss: loss_sum / split.train.len() as f64, test_tau });
    }
    Ok(TrainedPredictor { model, stats, config: *cfg, history })
}

fn epoch_taus(
    model: &PredictorModel,
    stats: &TargetStats,
    test: &[LabeledGraph],
    tokens: &[TokenMatrix],
) -> Result<[Option<f64>; 4], HarnessError> {
    let Ok(truth) = labels(test) else {
        return Ok([None; 4]);
    };
    if test.len() < 2 {
        return Ok([None; 4]);
    }
    let predicted = super::eval::predict_tokens(model, stats, tokens)?;
    Ok(target_taus(&predicted, &truth).map(Result::ok))
}
