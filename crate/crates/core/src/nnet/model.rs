use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NnetError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Mean over real token rows.
    #[default]
    Mean,
    /// A learned token prepended to every sequence; its final state is pooled.
    Cls,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layer: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub input_width: usize,
    pub n_targets: usize,
    pub pooling: Pooling,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_layer: 6,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            dropout: 0.1,
            input_width: 11,
            n_targets: 4,
            pooling: Pooling::Mean,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        let bad = |msg: String| Err(NnetError::InvalidConfig(msg));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.input_width == 0 || self.n_targets == 0 {
            return bad("d_model, n_heads, d_ff, input_width and n_targets must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let (c, d, f, t) = (self.input_width, self.d_model, self.d_ff, self.n_targets);
        let per_layer = 4 * d + 4 * (d * d + d) + (d * f + f) + (f * d + d);
        let cls = if self.pooling == Pooling::Cls { d } else { 0 };
        (c * d + d) + cls + self.n_layer * per_layer + (d * t + t)
    }
}

/// Position of each parameter tensor in [`PredictorModel::params`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub cls: Option<usize>,
    pub first_layer: usize,
    pub head_weight: usize,
    pub head_bias: usize,
}

pub(crate) const INPUT_WEIGHT: usize = 0;
pub(crate) const INPUT_BIAS: usize = 1;
pub(crate) const PER_LAYER: usize = 16;

// Offsets within one encoder layer.
pub(crate) const LN1_GAIN: usize = 0;
pub(crate) const LN1_BIAS: usize = 1;
pub(crate) const WQ: usize = 2;
pub(crate) const BQ: usize = 3;
pub(crate) const WK: usize = 4;
pub(crate) const BK: usize = 5;
pub(crate) const WV: usize = 6;
pub(crate) const BV: usize = 7;
pub(crate) const WO: usize = 8;
pub(crate) const BO: usize = 9;
pub(crate) const LN2_GAIN: usize = 10;
pub(crate) const LN2_BIAS: usize = 11;
pub(crate) const W1: usize = 12;
pub(crate) const B1: usize = 13;
pub(crate) const W2: usize = 14;
pub(crate) const B2: usize = 15;

const LAYER_NAMES: [&str; PER_LAYER] = [
    "ln1.gain", "ln1.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
    "attn.wo", "attn.bo", "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

impl Layout {
    pub fn new(cfg: &EncoderConfig) -> Self {
        let cls = (cfg.pooling == Pooling::Cls).then_some(2);
        let first_layer = 2 + usize::from(cls.is_some());
        let head_weight = first_layer + cfg.n_layer * PER_LAYER;
        Self { cls, first_layer, head_weight, head_bias: head_weight + 1 }
    }

    pub fn layer(&self, l: usize) -> usize {
        self.first_layer + l * PER_LAYER
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.head_bias + 1
    }
}

/// Names and shapes of every parameter tensor, in storage order.
pub fn parameter_specs(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let (c, d, f, t) = (cfg.input_width, cfg.d_model, cfg.d_ff, cfg.n_targets);
    let mut specs = vec![("input.weight".to_string(), vec![c, d]), ("input.bias".to_string(), vec![d])];
    if cfg.pooling == Pooling::Cls {
        specs.push(("cls".to_string(), vec![d]));
    }
    for l in 0..cfg.n_layer {
        let shapes: [Vec<usize>; PER_LAYER] = [
            vec![d], vec![d], vec![d, d], vec![d], vec![d, d], vec![d], vec![d, d], vec![d],
            vec![d, d], vec![d], vec![d], vec![d], vec![d, f], vec![f], vec![f, d], vec![d],
        ];
        for (name, shape) in LAYER_NAMES.iter().zip(shapes) {
            specs.push((format!("layers.{l}.{name}"), shape));
        }
    }
    specs.push(("head.weight".to_string(), vec![d, t]));
    specs.push(("head.bias".to_string(), vec![t]));
    specs
}

/// Transformer encoder with a pooled linear regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub config: EncoderConfig,
    pub params: Vec<Tensor>,
}

impl PredictorModel {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, NnetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = parameter_specs(&config)
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".gain") {
                    Tensor::filled(&shape, 1.0)
                } else if shape.len() == 2 {
                    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let data = (0..shape[0] * shape[1]).map(|_| rng.random_range(-bound..bound)).collect();
                    Tensor::from_vec(&shape, data).expect("shape matches")
                } else if name == "cls" {
                    let data = (0..shape[0]).map(|_| rng.random_range(-0.02..0.02)).collect();
                    Tensor::from_vec(&shape, data).expect("shape matches")
                } else {
                    Tensor::zeros(&shape)
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Builds a model from explicit tensors, checking names' shapes.
    pub fn from_params(config: EncoderConfig, params: Vec<Tensor>) -> Result<Self, NnetError> {
        config.validate()?;
        let specs = parameter_specs(&config);
        if specs.len() != params.len() {
            return Err(NnetError::ShapeMismatch(format!("expected {} tensors, got {}", specs.len(), params.len())));
        }
        for ((name, shape), t) in specs.iter().zip(&params) {
            if t.shape() != shape.as_slice() {
                return Err(NnetError::ShapeMismatch(format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
        }
        Ok(Self { config, params })
    }

    pub fn parameter_names(&self) -> Vec<String> {
        parameter_specs(&self.config).into_iter().map(|(n, _)| n).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn head_weight_mut(&mut self) -> &mut Tensor {
        let i = self.layout().head_weight;
        &mut self.params[i]
    }
}

/// One gradient tensor per parameter tensor, same order and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(model: &PredictorModel) -> Self {
        Self(model.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.0 {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}
