//! Node-only baseline versus the full token encoder on a synthetic corpus.
//!
//! `cargo run --release --example compare_modes -- [count] [epochs] [trials]`

use std::time::Instant;

use tart::graph::{generate_synthetic, split_dataset, SyntheticSpec};
use tart::harness::{compare_modes, PredictorMode, TrainConfig, TrialData};
use tart::nnet::{AdamConfig, EncoderConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let count = args.first().copied().unwrap_or(400);
    let epochs = args.get(1).copied().unwrap_or(30);
    let trials = args.get(2).copied().unwrap_or(5);

    let spec = SyntheticSpec { count, max_nodes: 16, edge_density: 0.5, noise_sigma: 0.02 };
    let records = generate_synthetic(&spec, 7)?;
    let split = split_dataset(&records, count / 2, 0)?;

    let tart = TrainConfig {
        epochs,
        batch_size: 16,
        mode: PredictorMode::Tart,
        model: EncoderConfig { n_layer: 2, d_model: 32, n_heads: 4, d_ff: 64, dropout: 0.0, ..Default::default() },
        adam: AdamConfig { lr: 1e-3, ..Default::default() },
        ..Default::default()
    };
    let pure = TrainConfig { mode: PredictorMode::PureTransformer, ..tart };

    let start = Instant::now();
    let cmp = compare_modes(TrialData::Fixed(&split), &pure, &tart, trials, 0)?;
    print!("{}", cmp.to_table());
    println!("\n{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
