#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tart::graph::{validate_graph, ComputationalGraph, RawGraph};
use tart::nnet::{
    backward, encoder_forward, loss_mse, EncoderConfig, ForwardMode, Gradients, Pooling, PredictorModel, TargetStats,
    Tensor,
};
use tart::tokenizer::PaddedBatch;

/// Random padded batch with `rows[b]` real rows per sample followed by padding.
pub fn random_batch(rng: &mut ChaCha8Rng, rows: &[usize], r_max: usize, cols: usize) -> PaddedBatch {
    let b = rows.len();
    let mut tokens = vec![0.0; b * r_max * cols];
    let mut mask = vec![false; b * r_max];
    for (s, &r) in rows.iter().enumerate() {
        for i in 0..r {
            mask[s * r_max + i] = true;
            for c in 0..cols {
                tokens[(s * r_max + i) * cols + c] = rng.random_range(-1.0..1.0);
            }
        }
    }
    PaddedBatch { batch: b, r_max, cols, tokens, mask }
}

pub fn random_targets(rng: &mut ChaCha8Rng, b: usize, t: usize) -> Tensor {
    Tensor::from_vec(&[b, t], (0..b * t).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// Gives every parameter (including biases and norm gains) a random value so
/// that no gradient path is trivially zero.
pub fn perturb(model: &mut PredictorModel, rng: &mut ChaCha8Rng, scale: f64) {
    for t in &mut model.params {
        for v in t.data_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// Loss evaluated in eval mode or with a fixed dropout seed.
pub fn loss_at(model: &PredictorModel, batch: &PaddedBatch, targets: &Tensor, mode: ForwardMode) -> f64 {
    let pred = encoder_forward(model, batch, mode).unwrap();
    loss_mse(&pred, targets, &TargetStats::identity(targets.shape()[1])).unwrap()
}

/// Central finite difference of the loss with respect to one coordinate.
/// Richardson-extrapolated central difference, accurate to `O(eps^4)`.
pub fn richardson_difference(
    model: &PredictorModel,
    batch: &PaddedBatch,
    targets: &Tensor,
    mode: ForwardMode,
    tensor: usize,
    index: usize,
    eps: f64,
) -> f64 {
    let coarse = central_difference(model, batch, targets, mode, tensor, index, eps);
    let fine = central_difference(model, batch, targets, mode, tensor, index, eps / 2.0);
    (4.0 * fine - coarse) / 3.0
}

pub fn central_difference(
    model: &PredictorModel,
    batch: &PaddedBatch,
    targets: &Tensor,
    mode: ForwardMode,
    tensor: usize,
    index: usize,
    eps: f64,
) -> f64 {
    let mut plus = model.clone();
    plus.params[tensor].data_mut()[index] += eps;
    let mut minus = model.clone();
    minus.params[tensor].data_mut()[index] -= eps;
    (loss_at(&plus, batch, targets, mode) - loss_at(&minus, batch, targets, mode)) / (2.0 * eps)
}

pub fn analytic(model: &PredictorModel, batch: &PaddedBatch, targets: &Tensor, mode: ForwardMode) -> Gradients {
    backward(model, batch, targets, &TargetStats::identity(targets.shape()[1]), mode).unwrap().1
}

/// Relative error with a floor on the denominator, so coordinates whose
/// true gradient is ~0 are judged on absolute error.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random DAG with `2..=max_nodes` nodes (or exactly `min_nodes` when
/// `min_nodes == max_nodes`) and edge probability `p` between pairs ordered
/// by a random permutation.
pub fn random_graph(rng: &mut ChaCha8Rng, min_nodes: usize, max_nodes: usize, p: f64) -> ComputationalGraph {
    let n = rng.random_range(min_nodes..=max_nodes);
    let ops = (0..n).map(|_| rng.random_range(1..=15)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                edges.push((order[a], order[b]));
            }
        }
    }
    edges.shuffle(rng);
    validate_graph(RawGraph::new(n, ops, edges)).unwrap()
}

/// Relabels node `i` as `perm[i]`.
pub fn relabel(g: &ComputationalGraph, perm: &[usize]) -> ComputationalGraph {
    let n = g.num_nodes();
    let mut ops = vec![0; n];
    for i in 0..n {
        ops[perm[i]] = g.node_ops()[i];
    }
    let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    validate_graph(RawGraph::new(n, ops, edges)).unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn tiny_config(rng: &mut impl Rng, width: usize, pooling: Pooling) -> EncoderConfig {
    let n_heads = [1, 2][rng.random_range(0..2)];
    // LayerNorm over two features is close to a sign function; its curvature
    // swamps eps = 1e-5 central differences, so tiny models start at width 4.
    let d_model = (n_heads * rng.random_range(2..=8)).max(4);
    EncoderConfig {
        n_layer: rng.random_range(1..=2),
        d_model,
        n_heads,
        d_ff: rng.random_range(2..=12),
        dropout: 0.0,
        input_width: width,
        n_targets: rng.random_range(1..=4),
        pooling,
    }
}

pub struct GradCheck {
    pub coordinates: usize,
    pub max_rel: f64,
}

/// Compares analytic gradients with central differences (eps 1e-5) on ten
/// random tiny models, sampling `coords_per_model` coordinates from each.
pub fn grad_check(seed: u64, mode: ForwardMode, dropout: f64, coords_per_model: usize) -> GradCheck {
    let mut rng = seeded(seed);
    let mut out = GradCheck { coordinates: 0, max_rel: 0.0 };
    for trial in 0..10 {
        let pooling = if trial % 3 == 2 { Pooling::Cls } else { Pooling::Mean };
        let width = rng.random_range(2..=6);
        let mut cfg = tiny_config(&mut rng, width, pooling);
        cfg.dropout = dropout;
        let mut model = PredictorModel::new(cfg, rng.random()).unwrap();
        perturb(&mut model, &mut rng, 0.3);
        let b = rng.random_range(1..=4);
        let rows: Vec<usize> = (0..b).map(|_| rng.random_range(1..=6)).collect();
        let batch = random_batch(&mut rng, &rows, 6, width);
        let targets = random_targets(&mut rng, b, cfg.n_targets);
        let grads = analytic(&model, &batch, &targets, mode);
        for _ in 0..coords_per_model {
            let tensor = rng.random_range(0..model.params.len());
            let index = rng.random_range(0..model.params[tensor].len());
            let fd = central_difference(&model, &batch, &targets, mode, tensor, index, 1e-5);
            let an = grads.0[tensor].data()[index];
            out.max_rel = out.max_rel.max(relative_error(an, fd, 1e-3));
            out.coordinates += 1;
        }
    }
    out
}
