use rayon::prelude::*;

use super::kendall::{kendall_tau_b, TauError};
use super::train::TrainedPredictor;
use super::HarnessError;
use crate::graph::{LabeledGraph, TARGET_NAMES};
use crate::nnet::{encoder_forward, ForwardMode, PredictorModel, TargetStats};
use crate::tokenizer::{pad_to_longest, TokenMatrix};

const EVAL_CHUNK: usize = 64;

/// Anything that maps graphs to the four performance targets.
pub trait Predictor {
    fn predict(&self, graphs: &[LabeledGraph]) -> Result<Vec<[f64; 4]>, HarnessError>;
}

impl Predictor for TrainedPredictor {
    fn predict(&self, graphs: &[LabeledGraph]) -> Result<Vec<[f64; 4]>, HarnessError> {
        let tokens = self.config.tokenize(graphs)?;
        predict_tokens(&self.model, &self.stats, &tokens)
    }
}

/// Eval-mode predictions in target units. Chunks run in parallel; each
/// sample only sees its own rows, so chunking does not affect the values.
pub(super) fn predict_tokens(
    model: &PredictorModel,
    stats: &TargetStats,
    tokens: &[TokenMatrix],
) -> Result<Vec<[f64; 4]>, HarnessError> {
    let chunks: Vec<Vec<[f64; 4]>> = tokens
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let refs: Vec<&TokenMatrix> = chunk.iter().collect();
            let batch = pad_to_longest(&refs)?;
            let z = encoder_forward(model, &batch, ForwardMode::Eval)?;
            Ok((0..chunk.len())
                .map(|b| {
                    let row = stats.denormalize(z.row(b));
                    [row[0], row[1], row[2], row[3]]
                })
                .collect())
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(chunks.concat())
}

pub(super) fn labels(records: &[LabeledGraph]) -> Result<Vec<[f64; 4]>, HarnessError> {
    records
        .iter()
        .map(|r| r.targets.map(|t| t.to_array()).ok_or_else(|| HarnessError::Unlabeled { id: r.id.clone() }))
        .collect()
}

pub(super) fn target_taus(predicted: &[[f64; 4]], truth: &[[f64; 4]]) -> [Result<f64, TauError>; 4] {
    std::array::from_fn(|j| {
        let p: Vec<f64> = predicted.iter().map(|r| r[j]).collect();
        let t: Vec<f64> = truth.iter().map(|r| r[j]).collect();
        kendall_tau_b(&p, &t)
    })
}

/// Per-target tau-b between predictions and the true labels of `test`.
/// The predictor is only queried, never updated.
pub fn evaluate_predictor(predictor: &dyn Predictor, test: &[LabeledGraph]) -> Result<[f64; 4], HarnessError> {
    if test.is_empty() {
        return Err(HarnessError::EmptySplit("test"));
    }
    let truth = labels(test)?;
    let predicted = predictor.predict(test)?;
    if predicted.len() != test.len() {
        return Err(HarnessError::PredictionCount { found: predicted.len(), expected: test.len() });
    }
    let taus = target_taus(&predicted, &truth);
    let mut out = [0.0; 4];
    for (j, tau) in taus.into_iter().enumerate() {
        out[j] = tau.map_err(|source| HarnessError::Tau { target: TARGET_NAMES[j], source })?;
    }
    Ok(out)
}
