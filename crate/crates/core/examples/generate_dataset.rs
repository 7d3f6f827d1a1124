//! Writes a small synthetic corpus to JSONL and reads it back.
//!
//! `cargo run --example generate_dataset -- [out.jsonl]`

use tart::graph::{generate_synthetic, read_dataset, write_dataset, SyntheticSpec, TARGET_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("tart_synthetic.jsonl").display().to_string());
    let spec = SyntheticSpec { count: 50, max_nodes: 12, edge_density: 0.5, noise_sigma: 0.02 };
    let records = generate_synthetic(&spec, 7)?;
    write_dataset(&records, &out)?;
    let back = read_dataset(&out)?;
    assert_eq!(back, records);

    println!("wrote {} graphs to {out}", back.len());
    for r in back.iter().take(5) {
        let t = r.targets.expect("synthetic records are labelled").to_array();
        let labels: Vec<String> = TARGET_NAMES.iter().zip(t).map(|(n, v)| format!("{n}={v:.3}")).collect();
        println!("{:>6}  N={:<2} E={:<3} depth={:<2} {}", r.id, r.graph.num_nodes(), r.graph.num_edges(), r.graph.longest_path_length(), labels.join(" "));
    }
    Ok(())
}
