//! Eigenvector positional features of a small diamond-shaped graph.
//!
//! `cargo run --example laplacian_features`

use tart::graph::{validate_graph, RawGraph};
use tart::spectral::{build_normalized_laplacian, graph_features, orf_features, SpectralConfig, SpectralOperator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 0 -> {1, 2} -> 3 -> 4
    let g = validate_graph(RawGraph::new(5, vec![1, 4, 7, 2, 9], vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]))?;
    let l = build_normalized_laplacian(&g);
    println!("normalized Laplacian:");
    for r in 0..l.rows() {
        println!("  {}", l.row(r).iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>().join(" "));
    }

    for operator in [SpectralOperator::Laplacian, SpectralOperator::Adjacency] {
        let f = graph_features(&g, &SpectralConfig { operator, ..Default::default() })?;
        println!("\n{operator:?} eigenvalues {:?}", f.eigenvalues);
        for n in 0..f.num_nodes() {
            println!("  node {n}: {}", f.node(n).iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" "));
        }
    }

    let orf = orf_features(g.num_nodes(), 3, 11);
    println!("\nrandom orthogonal features (seed 11):");
    for n in 0..orf.num_nodes() {
        println!("  node {n}: {}", orf.node(n).iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
