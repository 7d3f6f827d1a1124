//! Laplacian eigenvector (LAP) and orthogonal random feature (ORF) node
//! identifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ComputationalGraph;
use crate::linalg::{jacobi_eigen, qr_q_columns, Matrix};

/// Eigenvalues below this magnitude count as trivial (one per component).
pub const TRIVIAL_EIGENVALUE: f64 = 1e-9;

/// Entries below this magnitude are skipped when choosing a sign pivot.
pub const SIGN_PIVOT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("eigensolver did not converge after {0} rotations")]
    EigensolverDidNotConverge(usize),
    #[error("operator must be square and symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
}

/// Which matrix of the symmetrized graph is eigendecomposed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralOperator {
    #[default]
    Laplacian,
    Adjacency,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// Flip each column so its first entry with `|x| > 1e-9` is positive.
    #[default]
    FirstNonzeroPositive,
    /// Apply `FirstNonzeroPositive`, then flip each column with probability
    /// one half using a generator seeded with the given value.
    RandomFlip(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub operator: SpectralOperator,
    pub d_p: usize,
    pub sign: SignConvention,
    pub keep_trivial: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            operator: SpectralOperator::Laplacian,
            d_p: 3,
            sign: SignConvention::FirstNonzeroPositive,
            keep_trivial: false,
        }
    }
}

/// Per-node positional features: an `N x d_p` matrix whose first
/// `active_columns` columns are orthonormal and whose remaining columns are
/// zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    pub p: Matrix,
    /// One entry per column; `None` marks padding (and every ORF column).
    pub eigenvalues: Vec<Option<f64>>,
    pub d_p: usize,
    pub active_columns: usize,
    pub sign_convention: SignConvention,
}

impl SpectralFeatures {
    pub fn num_nodes(&self) -> usize {
        self.p.rows()
    }

    /// Row `n` of `P`.
    pub fn node(&self, n: usize) -> &[f64] {
        self.p.row(n)
    }
}

fn symmetrized_adjacency(g: &ComputationalGraph) -> Matrix {
    let n = g.num_nodes();
    let mut a = Matrix::zeros(n, n);
    for &(u, v) in g.edges() {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    a
}

/// `L = I - D^{-1/2} A D^{-1/2}` over the symmetrized adjacency `A`.
/// Isolated nodes get an all-zero row and column.
pub fn build_normalized_laplacian(g: &ComputationalGraph) -> Matrix {
    let n = g.num_nodes();
    let a = symmetrized_adjacency(g);
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        if inv_sqrt_deg[i] == 0.0 {
            continue;
        }
        l[(i, i)] = 1.0;
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                l[(i, j)] -= inv_sqrt_deg[i] * a[(i, j)] * inv_sqrt_deg[j];
            }
        }
    }
    l
}

/// The matrix selected by `operator` for graph `g`.
pub fn build_operator(g: &ComputationalGraph, operator: SpectralOperator) -> Matrix {
    match operator {
        SpectralOperator::Laplacian => build_normalized_laplacian(g),
        SpectralOperator::Adjacency => symmetrized_adjacency(g),
    }
}

/// Eigenvector features of a symmetric operator.
///
/// With `drop_trivial`, eigenpairs with `|lambda| < 1e-9` are discarded first.
/// The eigenvectors of the `d_p` smallest remaining eigenvalues become the
/// columns of `P` in ascending order; missing columns are zero-padded.
pub fn lap_features(
    operator: &Matrix,
    d_p: usize,
    convention: SignConvention,
    drop_trivial: bool,
) -> Result<SpectralFeatures, SpectralError> {
    if !operator.is_square() || operator.asymmetry() > 1e-12 {
        return Err(SpectralError::NotSymmetric { asymmetry: operator.asymmetry() });
    }
    let n = operator.rows();
    let eig = jacobi_eigen(operator).map_err(SpectralError::EigensolverDidNotConverge)?;
    let selected: Vec<usize> = (0..n)
        .filter(|&j| !drop_trivial || eig.values[j].abs() >= TRIVIAL_EIGENVALUE)
        .take(d_p)
        .collect();

    let mut p = Matrix::zeros(n, d_p);
    let mut eigenvalues = vec![None; d_p];
    for (col, &j) in selected.iter().enumerate() {
        eigenvalues[col] = Some(eig.values[j]);
        for row in 0..n {
            p[(row, col)] = eig.vectors[(row, j)];
        }
    }
    apply_sign_convention(&mut p, selected.len(), convention);
    Ok(SpectralFeatures {
        p,
        eigenvalues,
        d_p,
        active_columns: selected.len(),
        sign_convention: convention,
    })
}

/// Builds the configured operator for `g` and extracts its eigenvector
/// features. Trivial eigenpairs are only a Laplacian notion, so
/// `keep_trivial` is ignored for the adjacency operator.
pub fn graph_features(g: &ComputationalGraph, cfg: &SpectralConfig) -> Result<SpectralFeatures, SpectralError> {
    let op = build_operator(g, cfg.operator);
    let drop_trivial = cfg.operator == SpectralOperator::Laplacian && !cfg.keep_trivial;
    lap_features(&op, cfg.d_p, cfg.sign, drop_trivial)
}

fn apply_sign_convention(p: &mut Matrix, active: usize, convention: SignConvention) {
    let n = p.rows();
    for col in 0..active {
        let pivot = (0..n).map(|r| p[(r, col)]).find(|x| x.abs() > SIGN_PIVOT_EPS);
        if pivot.is_some_and(|x| x < 0.0) {
            for r in 0..n {
                p[(r, col)] = -p[(r, col)];
            }
        }
    }
    if let SignConvention::RandomFlip(seed) = convention {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for col in 0..active {
            if rng.random::<bool>() {
                for r in 0..n {
                    p[(r, col)] = -p[(r, col)];
                }
            }
        }
    }
}

/// Orthogonal random features: the first `min(d_p, n)` columns of `Q` from
/// the QR factorization (positive `R` diagonal) of an `n x n` standard
/// normal matrix, zero-padded to `d_p` columns.
pub fn orf_features(n: usize, d_p: usize, seed: u64) -> SpectralFeatures {
    assert!(n >= 1, "orf_features needs at least one node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let g = Matrix::from_row_major(n, n, gaussian);
    let k = d_p.min(n);
    let q = qr_q_columns(&g, k);
    let mut p = Matrix::zeros(n, d_p);
    for r in 0..n {
        for c in 0..k {
            p[(r, c)] = q[(r, c)];
        }
    }
    SpectralFeatures {
        p,
        eigenvalues: vec![None; d_p],
        d_p,
        active_columns: k,
        sign_convention: SignConvention::FirstNonzeroPositive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate_graph, RawGraph};

    const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn graph(n: usize, edges: &[(usize, usize)]) -> ComputationalGraph {
        validate_graph(RawGraph::new(n, vec![1; n], edges.to_vec())).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_node_laplacian_is_zero() {
        let l = build_normalized_laplacian(&graph(1, &[]));
        assert_eq!(l.as_slice(), &[0.0]);
        let f = lap_features(&l, 3, SignConvention::FirstNonzeroPositive, true).unwrap();
        assert_eq!(f.active_columns, 0);
        assert_eq!(f.p.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(f.eigenvalues, vec![None, None, None]);
    }

    #[test]
    fn path_of_three() {
        let l = build_normalized_laplacian(&graph(3, &[(0, 1), (1, 2)]));
        let f = lap_features(&l, 3, SignConvention::FirstNonzeroPositive, true).unwrap();
        assert_eq!(f.active_columns, 2);
        assert!(close(f.eigenvalues[0].unwrap(), 1.0, 1e-12));
        assert!(close(f.eigenvalues[1].unwrap(), 2.0, 1e-12));
        assert_eq!(f.eigenvalues[2], None);
        let expect = [INV_SQRT2, 0.0, -INV_SQRT2];
        for (r, e) in expect.iter().enumerate() {
            assert!(close(f.p[(r, 0)], *e, 1e-12));
            assert_eq!(f.p[(r, 2)], 0.0);
        }
        // lambda = 2 eigenvector of the path is (1/2, -1/sqrt2, 1/2).
        let expect = [0.5, -INV_SQRT2, 0.5];
        for (r, e) in expect.iter().enumerate() {
            assert!(close(f.p[(r, 1)], *e, 1e-12));
        }
    }

    #[test]
    fn two_node_path_rows() {
        let l = build_normalized_laplacian(&graph(2, &[(0, 1)]));
        let f = lap_features(&l, 3, SignConvention::FirstNonzeroPositive, true).unwrap();
        assert!(close(f.p[(0, 0)], INV_SQRT2, 1e-14));
        assert!(close(f.p[(1, 0)], -INV_SQRT2, 1e-14));
        assert_eq!(&f.p.row(0)[1..], &[0.0, 0.0]);
        assert_eq!(&f.p.row(1)[1..], &[0.0, 0.0]);
    }

    #[test]
    fn isolated_nodes_have_zero_rows() {
        let l = build_normalized_laplacian(&graph(3, &[(0, 2)]));
        for j in 0..3 {
            assert_eq!(l[(1, j)], 0.0);
            assert_eq!(l[(j, 1)], 0.0);
        }
        assert_eq!(l[(0, 0)], 1.0);
        assert_eq!(l[(0, 2)], -1.0);
    }

    #[test]
    fn keep_trivial_retains_constant_vector() {
        let l = build_normalized_laplacian(&graph(3, &[(0, 1), (1, 2)]));
        let f = lap_features(&l, 3, SignConvention::FirstNonzeroPositive, false).unwrap();
        assert_eq!(f.active_columns, 3);
        assert!(f.eigenvalues[0].unwrap().abs() < 1e-12);
        // D^{1/2} 1 normalised: degrees (1, 2, 1).
        let norm = 2.0f64.sqrt() * 2.0f64.sqrt();
        let expect = [1.0 / norm, 2.0f64.sqrt() / norm, 1.0 / norm];
        for (r, e) in expect.iter().enumerate() {
            assert!(close(f.p[(r, 0)], *e, 1e-12));
        }
    }

    #[test]
    fn adjacency_operator_switch() {
        let cfg = SpectralConfig { operator: SpectralOperator::Adjacency, ..SpectralConfig::default() };
        let f = graph_features(&graph(2, &[(0, 1)]), &cfg).unwrap();
        // Symmetrized adjacency of one edge has eigenvalues -1 and 1.
        assert_eq!(f.active_columns, 2);
        assert!(close(f.eigenvalues[0].unwrap(), -1.0, 1e-14));
        assert!(close(f.eigenvalues[1].unwrap(), 1.0, 1e-14));
    }

    #[test]
    fn random_flip_is_seeded() {
        let l = build_normalized_laplacian(&graph(4, &[(0, 1), (1, 2), (2, 3)]));
        let a = lap_features(&l, 3, SignConvention::RandomFlip(5), true).unwrap();
        let b = lap_features(&l, 3, SignConvention::RandomFlip(5), true).unwrap();
        let base = lap_features(&l, 3, SignConvention::FirstNonzeroPositive, true).unwrap();
        assert_eq!(a, b);
        for c in 0..3 {
            let same = (0..4).all(|r| a.p[(r, c)] == base.p[(r, c)]);
            let flipped = (0..4).all(|r| a.p[(r, c)] == -base.p[(r, c)]);
            assert!(same || flipped);
        }
    }

    #[test]
    fn asymmetric_operator_is_rejected() {
        let m = Matrix::from_row_major(2, 2, vec![0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            lap_features(&m, 1, SignConvention::FirstNonzeroPositive, true),
            Err(SpectralError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn orf_single_node_and_determinism() {
        // With R's diagonal positive, the 1 x 1 factor Q is the sign of the draw.
        for seed in 0..8 {
            let f = orf_features(1, 3, seed);
            let draw: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(f.p.as_slice(), &[draw.signum(), 0.0, 0.0]);
        }
        assert_eq!(orf_features(6, 3, 2), orf_features(6, 3, 2));
        assert_ne!(orf_features(6, 3, 2), orf_features(6, 3, 3));
    }

    #[test]
    fn orf_columns_are_orthonormal() {
        let f = orf_features(4, 3, 99);
        let qtq = f.p.transpose().matmul(&f.p);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!(close(qtq[(i, j)], e, 1e-12));
            }
        }
    }
}
