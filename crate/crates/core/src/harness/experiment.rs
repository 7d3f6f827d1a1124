use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::evaluate_predictor;
use super::train::{train_predictor, TrainConfig};
use super::HarnessError;
use crate::graph::{split_dataset, DatasetSplit, LabeledGraph, TARGET_NAMES};

/// How each trial gets its train/test split.
#[derive(Debug, Clone, Copy)]
pub enum TrialData<'a> {
    /// Every trial reuses one split; only the model seed changes.
    Fixed(&'a DatasetSplit),
    /// Each trial re-splits `records` with its own seed as the split seed.
    Resplit { records: &'a [LabeledGraph], n_train: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Experiment<'a> {
    pub data: TrialData<'a>,
    pub cfg: TrainConfig,
    pub n_trials: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub tau: [f64; 4],
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub targets: [String; 4],
    pub per_seed: Vec<TrialRecord>,
    pub mean_tau: [f64; 4],
    /// Sample standard deviation across trials (0 for a single trial).
    pub std_tau: [f64; 4],
    pub n_trials: usize,
    pub base_seed: u64,
    pub resplit_per_trial: bool,
    /// The training config, with `seed` set to the base seed.
    pub config_echo: TrainConfig,
}

impl EvalReport {
    pub fn from_trials(per_seed: Vec<TrialRecord>, cfg: &TrainConfig, base_seed: u64, resplit: bool) -> Self {
        let n = per_seed.len() as f64;
        let mean_tau: [f64; 4] = std::array::from_fn(|j| per_seed.iter().map(|t| t.tau[j]).sum::<f64>() / n);
        let std_tau = std::array::from_fn(|j| {
            if per_seed.len() < 2 {
                return 0.0;
            }
            let ss: f64 = per_seed.iter().map(|t| (t.tau[j] - mean_tau[j]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Self {
            targets: TARGET_NAMES.map(String::from),
            n_trials: per_seed.len(),
            per_seed,
            mean_tau,
            std_tau,
            base_seed,
            resplit_per_trial: resplit,
            config_echo: TrainConfig { seed: base_seed, ..*cfg },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Trains and evaluates `n_trials` models with seeds
/// `base_seed..base_seed + n_trials`. Trials run in parallel and are
/// collected in seed order, so the report does not depend on scheduling.
pub fn run_experiment(exp: &Experiment<'_>) -> Result<EvalReport, HarnessError> {
    if exp.n_trials == 0 {
        return Err(HarnessError::InvalidConfig("n_trials must be at least 1".into()));
    }
    exp.cfg.validate()?;
    let per_seed = (0..exp.n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(exp, exp.base_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_trials(per_seed, &exp.cfg, exp.base_seed, matches!(exp.data, TrialData::Resplit { .. })))
}

fn run_trial(exp: &Experiment<'_>, seed: u64) -> Result<TrialRecord, HarnessError> {
    let owned;
    let split = match exp.data {
        TrialData::Fixed(split) => split,
        TrialData::Resplit { records, n_train } => {
            owned = split_dataset(records, n_train, seed)?;
            &owned
        }
    };
    if split.test.is_empty() {
        return Err(HarnessError::EmptySplit("test"));
    }
    let trained = train_predictor(split, &TrainConfig { seed, ..exp.cfg })?;
    let tau = evaluate_predictor(&trained, &split.test)?;
    let final_loss = trained.history.last().map_or(f64::NAN, |h| h.loss);
    Ok(TrialRecord { seed, tau, final_loss })
}
