mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use tart::graph::ComputationalGraph;
use tart::linalg::{jacobi_eigen, Matrix};
use tart::spectral::{build_normalized_laplacian, graph_features, SpectralConfig};

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn oracle_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut v: Vec<f64> = to_nalgebra(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Normalized Laplacian built directly from its definition, entry by entry,
/// as a check on the production builder.
fn laplacian_by_definition(g: &ComputationalGraph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let adjacent = |i: usize, j: usize| g.edges().iter().any(|&(u, v)| (u, v) == (i, j) || (u, v) == (j, i));
    let deg: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| adjacent(i, j)).count() as f64).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if deg[i] > 0.0 { 1.0 } else { 0.0 }
        } else if adjacent(i, j) {
            -1.0 / (deg[i] * deg[j]).sqrt()
        } else {
            0.0
        }
    })
}

#[test]
fn small_graphs_agree_with_independent_eigensolver() {
    let mut rng = seeded(5);
    for _ in 0..500 {
        let g = random_graph(&mut rng, 1, 4, 0.6);
        let l = build_normalized_laplacian(&g);
        assert!((to_nalgebra(&l) - laplacian_by_definition(&g)).amax() <= 1e-15);
        let ours = jacobi_eigen(&l).unwrap().values;
        let theirs = oracle_eigenvalues(&l);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-8, "{ours:?} vs {theirs:?}");
        }
    }
}

#[test]
fn jacobi_matches_oracle_on_dense_random_symmetric_matrices() {
    let mut rng = seeded(6);
    for n in 1..=4 {
        for _ in 0..50 {
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = rand::Rng::random_range(&mut rng, -3.0..3.0);
                    data[i * n + j] = v;
                    data[j * n + i] = v;
                }
            }
            let m = Matrix::from_row_major(n, n, data);
            let ours = jacobi_eigen(&m).unwrap().values;
            for (a, b) in ours.iter().zip(oracle_eigenvalues(&m)) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn features_are_orthonormal_eigenvectors() {
    let mut rng = seeded(7);
    for _ in 0..100 {
        let g = random_graph(&mut rng, 1, 24, 0.3);
        let cfg = SpectralConfig { d_p: 4, ..Default::default() };
        let f = graph_features(&g, &cfg).unwrap();
        let l = build_normalized_laplacian(&g);
        let k = f.active_columns;
        let mut pk = Matrix::zeros(g.num_nodes(), k);
        for r in 0..g.num_nodes() {
            for c in 0..k {
                pk[(r, c)] = f.p[(r, c)];
            }
        }
        assert!(max_abs_diff(&pk.transpose().matmul(&pk), &Matrix::identity(k)) <= 1e-8);
        for c in 0..k {
            let lambda = f.eigenvalues[c].unwrap();
            let p = pk.column(c);
            let lp = l.matvec(&p);
            let res: f64 = lp.iter().zip(&p).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            assert!(res <= 1e-8);
        }
        for c in k..4 {
            assert!(f.eigenvalues[c].is_none());
            assert!((0..g.num_nodes()).all(|r| f.p[(r, c)] == 0.0));
        }
    }
}

fn has_simple_spectrum(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] - w[0] > 1e-5)
}

fn is_connected(g: &ComputationalGraph) -> bool {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &(a, b) in g.edges() {
            let other = if a == u { b } else if b == u { a } else { continue };
            if !seen[other] {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    seen.iter().all(|&s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_survive_relabeling(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let g = random_graph(&mut rng, 1, 14, 0.35);
        let perm = random_permutation(&mut rng, g.num_nodes());
        let h = relabel(&g, &perm);
        let a = jacobi_eigen(&build_normalized_laplacian(&g)).unwrap().values;
        let b = jacobi_eigen(&build_normalized_laplacian(&h)).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn relabeling_permutes_rows_up_to_column_sign(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let g = random_graph(&mut rng, 3, 12, 0.5);
        let values = jacobi_eigen(&build_normalized_laplacian(&g)).unwrap().values;
        prop_assume!(is_connected(&g) && has_simple_spectrum(&values));
        let perm = random_permutation(&mut rng, g.num_nodes());
        let h = relabel(&g, &perm);
        let cfg = SpectralConfig { d_p: 3, ..Default::default() };
        let p = graph_features(&g, &cfg).unwrap();
        let q = graph_features(&h, &cfg).unwrap();
        for c in 0..p.active_columns {
            let same = (0..g.num_nodes()).all(|i| (q.p[(perm[i], c)] - p.p[(i, c)]).abs() <= 1e-8);
            let flipped = (0..g.num_nodes()).all(|i| (q.p[(perm[i], c)] + p.p[(i, c)]).abs() <= 1e-8);
            prop_assert!(same || flipped, "column {} differs beyond sign", c);
        }
    }
}

#[test]
fn path_of_three_spectrum() {
    let g = tart::graph::validate_graph(tart::graph::RawGraph::new(3, vec![1, 1, 1], vec![(0, 1), (1, 2)])).unwrap();
    let values = jacobi_eigen(&build_normalized_laplacian(&g)).unwrap().values;
    for (v, want) in values.iter().zip([0.0, 1.0, 2.0]) {
        assert!((v - want).abs() <= 1e-8);
    }
}
