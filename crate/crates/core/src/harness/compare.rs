use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, EvalReport, Experiment, TrialData};
use super::train::TrainConfig;
use super::HarnessError;
use crate::graph::TARGET_NAMES;

/// Published 30-epoch test tau for the node-only baseline and the token
/// encoder, in target order. Printed next to local results for orientation.
pub const REPORTED_TAU: [[f64; 4]; 2] = [[0.210, 0.137, 0.893, 0.210], [0.266, 0.307, 0.885, 0.266]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pure: EvalReport,
    pub tart: EvalReport,
}

/// Runs the same experiment under two configs. Both must agree on epochs,
/// batch size and encoder size so that only the encoding differs.
pub fn compare_modes(
    data: TrialData<'_>,
    cfg_pure: &TrainConfig,
    cfg_tart: &TrainConfig,
    n_trials: usize,
    base_seed: u64,
) -> Result<Comparison, HarnessError> {
    if cfg_pure.epochs != cfg_tart.epochs {
        return Err(HarnessError::ConfigMismatch(format!("epochs {} vs {}", cfg_pure.epochs, cfg_tart.epochs)));
    }
    if cfg_pure.batch_size != cfg_tart.batch_size {
        return Err(HarnessError::ConfigMismatch(format!(
            "batch size {} vs {}",
            cfg_pure.batch_size, cfg_tart.batch_size
        )));
    }
    if cfg_pure.encoder() != cfg_tart.encoder() {
        return Err(HarnessError::ConfigMismatch("encoder configs differ".into()));
    }
    let run = |cfg: &TrainConfig| run_experiment(&Experiment { data, cfg: *cfg, n_trials, base_seed });
    let (pure, tart) = rayon::join(|| run(cfg_pure), || run(cfg_tart));
    Ok(Comparison { pure: pure?, tart: tart? })
}

impl Comparison {
    /// Long-format CSV `target,mode,seed,tau`, one row per target, mode and
    /// seed (the baseline slot first).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,mode,seed,tau\n");
        for (j, target) in TARGET_NAMES.iter().enumerate() {
            for report in [&self.pure, &self.tart] {
                let mode = report.config_echo.mode;
                for trial in &report.per_seed {
                    writeln!(out, "{target},{mode},{},{}", trial.seed, trial.tau[j]).unwrap();
                }
            }
        }
        out
    }

    /// Mean tau of the second slot minus the first, per target.
    pub fn difference(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.tart.mean_tau[j] - self.pure.mean_tau[j])
    }

    /// Aligned text table: mean and spread per slot, the difference, the
    /// per-seed values and the published reference figures.
    pub fn to_table(&self) -> String {
        let diff = self.difference();
        let a = self.pure.config_echo.mode.name();
        let b = self.tart.config_echo.mode.name();
        let mut out = String::new();
        writeln!(
            out,
            "{:<18} {:>18} {:>18} {:>9}   {:>13}",
            "target",
            a,
            b,
            "diff",
            "reported (pure/tart, 30 ep, not reproduced)"
        )
        .unwrap();
        for (j, target) in TARGET_NAMES.iter().enumerate() {
            writeln!(
                out,
                "{:<18} {:>18} {:>18} {:>+9.4}   {:.3} / {:.3}",
                target,
                format!("{:.4} ± {:.4}", self.pure.mean_tau[j], self.pure.std_tau[j]),
                format!("{:.4} ± {:.4}", self.tart.mean_tau[j], self.tart.std_tau[j]),
                diff[j],
                REPORTED_TAU[0][j],
                REPORTED_TAU[1][j],
            )
            .unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "per-seed tau ({a} | {b})").unwrap();
        for (pa, pb) in self.pure.per_seed.iter().zip(&self.tart.per_seed) {
            let fmt = |t: &[f64; 4]| t.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" ");
            writeln!(out, "seed {:<6} {} | {}", pa.seed, fmt(&pa.tau), fmt(&pb.tau)).unwrap();
        }
        out
    }
}
