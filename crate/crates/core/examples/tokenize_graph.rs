//! Token matrices for one graph in both modes, plus a padded batch.
//!
//! `cargo run --example tokenize_graph`

use tart::graph::{validate_graph, RawGraph};
use tart::spectral::SpectralConfig;
use tart::tokenizer::{one_hot_size, pad_to_longest, tokenize, TokenMatrix, TokenMode, TokenizerConfig};

fn show(m: &TokenMatrix) {
    for (i, kind) in m.row_kinds.iter().enumerate() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:+.3}")).collect();
        println!("  {:<12} {}", format!("{kind:?}"), row.join(" "));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = validate_graph(RawGraph::new(4, vec![1, 5, 5, 12], vec![(0, 1), (0, 2), (1, 3), (2, 3)]))?;
    let spectral = SpectralConfig::default();
    let cfg = TokenizerConfig::default();

    let lap = tokenize(&g, TokenMode::Lap, &spectral, &cfg)?;
    println!("lap tokens {} x {} ({} cells, one-hot would need {}):", lap.rows, lap.cols, lap.data.len(), one_hot_size(g.num_nodes()));
    show(&lap);

    let node = tokenize(&g, TokenMode::NodeOnly, &spectral, &cfg)?;
    println!("\nnode-only tokens {} x {}:", node.rows, node.cols);
    show(&node);

    let batch = pad_to_longest(&[&lap, &node])?;
    println!("\npadded batch: real rows {} and {}", batch.real_rows(0), batch.real_rows(1));
    println!("mask of the node-only sample: {:?}", batch.sample_mask(1));
    Ok(())
}
