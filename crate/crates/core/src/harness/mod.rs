//! Training loop, rank-correlation evaluation and multi-seed experiments.

mod compare;
mod eval;
mod experiment;
pub mod kendall;
mod train;

use thiserror::Error;

use crate::graph::DatasetError;
use crate::nnet::NnetError;
use crate::tokenizer::TokenizerError;

pub use compare::{compare_modes, Comparison, REPORTED_TAU};
pub use eval::{evaluate_predictor, Predictor};
pub use experiment::{run_experiment, EvalReport, Experiment, TrialData, TrialRecord};
pub use kendall::{kendall_tau_b, pair_counts, PairCounts, Side, TauError};
pub use train::{train_predictor, EpochRecord, PredictorMode, TrainConfig, TrainedPredictor};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{target}: {source}")]
    Tau { target: &'static str, source: TauError },
    #[error("record {id} has no performance labels")]
    Unlabeled { id: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("configs are not comparable: {0}")]
    ConfigMismatch(String),
    #[error("predictor returned {found} rows for {expected} graphs")]
    PredictionCount { found: usize, expected: usize },
}

impl HarnessError {
    /// True when the failure is a statistics problem (constant columns)
    /// rather than bad input or a runtime fault.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            HarnessError::Tau { source: TauError::DegenerateInput(_), .. }
                | HarnessError::Nnet(NnetError::StatsDegenerate { .. })
        )
    }
}
