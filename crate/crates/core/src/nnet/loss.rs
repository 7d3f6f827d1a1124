use serde::{Deserialize, Serialize};

use super::encoder::{backward_from_output, forward_cached, ForwardMode};
use super::model::{Gradients, PredictorModel};
use super::tensor::Tensor;
use super::NnetError;
use crate::tokenizer::PaddedBatch;

/// Per-target mean and (population) standard deviation, fitted on the
/// training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TargetStats {
    pub fn identity(n_targets: usize) -> Self {
        Self { mean: vec![0.0; n_targets], std: vec![1.0; n_targets] }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, NnetError> {
        let n_targets = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.iter().any(|r| r.len() != n_targets) {
            return Err(NnetError::ShapeMismatch("target rows must be non-empty and equally wide".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..n_targets).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..n_targets)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let stats = Self { mean, std };
        stats.check()?;
        Ok(stats)
    }

    pub fn check(&self) -> Result<(), NnetError> {
        match self.std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            Some(target) => Err(NnetError::StatsDegenerate { target }),
            None => Ok(()),
        }
    }

    pub fn normalize(&self, targets: &Tensor) -> Result<Tensor, NnetError> {
        self.check()?;
        let t = self.mean.len();
        if targets.shape().len() != 2 || targets.shape()[1] != t {
            return Err(NnetError::ShapeMismatch(format!("targets {:?} vs {t} statistics", targets.shape())));
        }
        let mut out = targets.clone();
        for row in out.data_mut().chunks_exact_mut(t) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(j, v)| v * self.std[j] + self.mean[j]).collect()
    }
}

/// Mean squared error between predictions (in z-space) and targets
/// normalized with `stats`.
pub fn loss_mse(predictions: &Tensor, targets: &Tensor, stats: &TargetStats) -> Result<f64, NnetError> {
    let z = stats.normalize(targets)?;
    mse(predictions, &z)
}

fn mse(predictions: &Tensor, z: &Tensor) -> Result<f64, NnetError> {
    if predictions.shape() != z.shape() {
        return Err(NnetError::ShapeMismatch(format!(
            "predictions {:?} vs targets {:?}",
            predictions.shape(),
            z.shape()
        )));
    }
    if z.is_empty() {
        return Err(NnetError::ShapeMismatch("empty batch".into()));
    }
    let sum: f64 = predictions.data().iter().zip(z.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / z.len() as f64)
}

/// Loss and parameter gradients for one batch.
pub fn backward(
    model: &PredictorModel,
    batch: &PaddedBatch,
    targets: &Tensor,
    stats: &TargetStats,
    mode: ForwardMode,
) -> Result<(f64, Gradients), NnetError> {
    let z = stats.normalize(targets)?;
    let cache = forward_cached(model, batch, mode)?;
    let loss = mse(&cache.predictions, &z)?;
    let scale = 2.0 / z.len() as f64;
    let d_pred = Tensor::from_vec(
        z.shape(),
        cache.predictions.data().iter().zip(z.data()).map(|(p, t)| scale * (p - t)).collect(),
    )
    .expect("same shape as targets");
    Ok((loss, backward_from_output(model, &cache, &d_pred)))
}
