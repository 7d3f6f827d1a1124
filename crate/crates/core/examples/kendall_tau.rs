//! Tie-corrected rank correlation on a few hand-made rankings.
//!
//! `cargo run --example kendall_tau`

use tart::harness::{kendall_tau_b, pair_counts};

fn main() {
    let truth = [0.91, 0.85, 0.85, 0.70, 0.62, 0.55];
    let cases: [(&str, [f64; 6]); 4] = [
        ("strict order", [6.0, 5.0, 4.0, 3.0, 2.0, 1.0]),
        ("one swap", [6.0, 5.0, 4.0, 2.0, 3.0, 1.0]),
        ("tied guesses", [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        ("reversed", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
    ];
    for (name, pred) in cases {
        let c = pair_counts(&truth, &pred).unwrap();
        println!("{name:<13} tau_b {:+.4}  (C-D {}, untied {} / {})", c.tau_b(), c.score, c.untied_x, c.untied_y);
    }
    match kendall_tau_b(&truth, &[0.5; 6]) {
        Ok(t) => println!("constant      tau_b {t}"),
        Err(e) => println!("constant      {e}"),
    }
}
