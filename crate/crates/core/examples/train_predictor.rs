//! Trains one predictor, prints its history, and round-trips the weights.
//!
//! `cargo run --release --example train_predictor -- [pure-transformer|tart] [epochs]`

use tart::graph::{generate_synthetic, split_dataset, SyntheticSpec, TARGET_NAMES};
use tart::harness::{evaluate_predictor, train_predictor, PredictorMode, TrainConfig};
use tart::nnet::{load_model, save_model, AdamConfig, EncoderConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mode: PredictorMode = args.next().as_deref().unwrap_or("tart").parse()?;
    let epochs = args.next().map(|a| a.parse()).transpose()?.unwrap_or(10);

    let spec = SyntheticSpec { count: 200, max_nodes: 12, edge_density: 0.5, noise_sigma: 0.02 };
    let split = split_dataset(&generate_synthetic(&spec, 1)?, 100, 0)?;
    let cfg = TrainConfig {
        epochs,
        batch_size: 16,
        mode,
        model: EncoderConfig { n_layer: 2, d_model: 16, n_heads: 2, d_ff: 32, dropout: 0.0, ..Default::default() },
        adam: AdamConfig { lr: 1e-3, ..Default::default() },
        ..Default::default()
    };
    let trained = train_predictor(&split, &cfg)?;

    println!("{mode}: epoch  loss      {}", TARGET_NAMES.join("  "));
    for h in &trained.history {
        let taus: Vec<String> = h.test_tau.iter().map(|t| t.map_or("   n/a".into(), |t| format!("{t:+.3}"))).collect();
        println!("{:>13}  {:.5}  {}", h.epoch, h.loss, taus.join("  "));
    }

    let path = std::env::temp_dir().join("tart_example_model.bin");
    save_model(&trained.model, &path)?;
    assert_eq!(load_model(&path)?, trained.model);
    println!("test tau {:?}", evaluate_predictor(&trained, &split.test)?);
    Ok(())
}
