mod common;

use common::*;
use tart::nnet::{
    backward, decode_checkpoint, encode_checkpoint, encoder_forward, load_model, save_model, EncoderConfig,
    ForwardMode, NnetError, Pooling, PredictorModel, TargetStats, Tensor,
};
use tart::tokenizer::PaddedBatch;

#[test]
fn gradients_match_finite_differences_in_eval_mode() {
    let check = grad_check(7, ForwardMode::Eval, 0.0, 25);
    assert!(check.coordinates >= 200);
    assert!(check.max_rel <= 1e-6, "max relative error {:e}", check.max_rel);
}

#[test]
fn gradients_match_finite_differences_with_fixed_dropout_masks() {
    let check = grad_check(8, ForwardMode::Train { seed: 3 }, 0.2, 10);
    assert!(check.max_rel <= 1e-6, "max relative error {:e}", check.max_rel);
}

fn small_model(pooling: Pooling) -> (PredictorModel, PaddedBatch) {
    let mut rng = seeded(21);
    let cfg = EncoderConfig { n_layer: 2, d_model: 8, n_heads: 2, d_ff: 10, dropout: 0.1, input_width: 5, n_targets: 3, pooling };
    let mut model = PredictorModel::new(cfg, 5).unwrap();
    perturb(&mut model, &mut rng, 0.1);
    let batch = random_batch(&mut rng, &[4, 1, 6], 6, 5);
    (model, batch)
}

fn repad(batch: &PaddedBatch, r_max: usize) -> PaddedBatch {
    let mut out = PaddedBatch {
        batch: batch.batch,
        r_max,
        cols: batch.cols,
        tokens: vec![0.0; batch.batch * r_max * batch.cols],
        mask: vec![false; batch.batch * r_max],
    };
    for b in 0..batch.batch {
        for r in 0..batch.r_max {
            out.mask[b * r_max + r] = batch.sample_mask(b)[r];
            let start = (b * r_max + r) * batch.cols;
            out.tokens[start..start + batch.cols].copy_from_slice(batch.token(b, r));
        }
    }
    out
}

#[test]
fn padding_rows_do_not_change_predictions() {
    for pooling in [Pooling::Mean, Pooling::Cls] {
        let (model, batch) = small_model(pooling);
        let base = encoder_forward(&model, &batch, ForwardMode::Eval).unwrap();
        let padded = encoder_forward(&model, &repad(&batch, 15), ForwardMode::Eval).unwrap();
        for (a, b) in base.data().iter().zip(padded.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn row_permutation_leaves_mean_pooled_prediction() {
    let (model, batch) = small_model(Pooling::Mean);
    let base = encoder_forward(&model, &batch, ForwardMode::Eval).unwrap();
    let mut shuffled = batch.clone();
    // Reverse the 6 rows of sample 2 (all real) and move sample 0's real rows to the end.
    for r in 0..6 {
        let src = batch.token(2, 5 - r).to_vec();
        let start = (2 * 6 + r) * 5;
        shuffled.tokens[start..start + 5].copy_from_slice(&src);
    }
    for r in 0..6 {
        let src_r = (r + 4) % 6;
        let start = r * 5;
        shuffled.tokens[start..start + 5].copy_from_slice(batch.token(0, src_r));
        shuffled.mask[r] = batch.sample_mask(0)[src_r];
    }
    let permuted = encoder_forward(&model, &shuffled, ForwardMode::Eval).unwrap();
    for (a, b) in base.data().iter().zip(permuted.data()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn single_token_sample_pools_its_own_state() {
    let cfg = EncoderConfig { n_layer: 1, d_model: 4, n_heads: 2, d_ff: 4, dropout: 0.0, input_width: 3, n_targets: 1, pooling: Pooling::Mean };
    let model = PredictorModel::new(cfg, 1).unwrap();
    let mut rng = seeded(3);
    let one = random_batch(&mut rng, &[1], 1, 3);
    // The same token at a different padded slot must give the same output.
    let mut moved = repad(&one, 4);
    moved.tokens.rotate_right(2 * 3);
    moved.mask.rotate_right(2);
    let a = encoder_forward(&model, &one, ForwardMode::Eval).unwrap();
    let b = encoder_forward(&model, &moved, ForwardMode::Eval).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_mask_is_an_error() {
    let (model, mut batch) = small_model(Pooling::Mean);
    batch.mask[6..12].fill(false);
    assert!(matches!(encoder_forward(&model, &batch, ForwardMode::Eval), Err(NnetError::MaskEmpty(1))));
}

#[test]
fn width_mismatch_is_an_error() {
    let (model, batch) = small_model(Pooling::Mean);
    let mut rng = seeded(1);
    let wrong = random_batch(&mut rng, &[2], 3, batch.cols + 1);
    assert!(matches!(encoder_forward(&model, &wrong, ForwardMode::Eval), Err(NnetError::ShapeMismatch(_))));
}

#[test]
fn duplicated_samples_give_identical_rows_and_same_gradient() {
    let (model, batch) = small_model(Pooling::Mean);
    let mut rng = seeded(4);
    let single = PaddedBatch {
        batch: 1,
        r_max: 6,
        cols: 5,
        tokens: batch.tokens[..30].to_vec(),
        mask: batch.mask[..6].to_vec(),
    };
    let double = PaddedBatch {
        batch: 2,
        r_max: 6,
        cols: 5,
        tokens: [single.tokens.clone(), single.tokens.clone()].concat(),
        mask: [single.mask.clone(), single.mask.clone()].concat(),
    };
    let pred = encoder_forward(&model, &double, ForwardMode::Eval).unwrap();
    assert_eq!(pred.row(0), pred.row(1));

    let t1 = random_targets(&mut rng, 1, 3);
    let t2 = Tensor::from_vec(&[2, 3], [t1.data(), t1.data()].concat()).unwrap();
    let stats = TargetStats::identity(3);
    let (l1, g1) = backward(&model, &single, &t1, &stats, ForwardMode::Eval).unwrap();
    let (l2, g2) = backward(&model, &double, &t2, &stats, ForwardMode::Eval).unwrap();
    assert!((l1 - l2).abs() <= 1e-12);
    for (a, b) in g1.0.iter().zip(&g2.0) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn zero_head_blocks_encoder_gradients() {
    let (mut model, batch) = small_model(Pooling::Mean);
    model.head_weight_mut().fill(0.0);
    let last = model.params.len() - 1;
    model.params[last].fill(0.0);
    let mut rng = seeded(9);
    let targets = random_targets(&mut rng, 3, 3);
    let (_, grads) = backward(&model, &batch, &targets, &TargetStats::identity(3), ForwardMode::Eval).unwrap();
    let n = grads.0.len();
    for g in &grads.0[..n - 2] {
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
    // Predictions equal the head bias (zero), so d loss / d bias = mean residual derivative.
    let bias_grad = grads.0[n - 1].data();
    for (j, &g) in bias_grad.iter().enumerate() {
        let expect: f64 = (0..3).map(|b| 2.0 * (0.0 - targets.data()[b * 3 + j])).sum::<f64>() / 9.0;
        assert!((g - expect).abs() <= 1e-14);
    }
}

#[test]
fn eval_is_deterministic_and_train_depends_on_seed() {
    let (model, batch) = small_model(Pooling::Mean);
    let a = encoder_forward(&model, &batch, ForwardMode::Eval).unwrap();
    let b = encoder_forward(&model, &batch, ForwardMode::Eval).unwrap();
    assert_eq!(a, b);
    let t1 = encoder_forward(&model, &batch, ForwardMode::Train { seed: 1 }).unwrap();
    let t1_again = encoder_forward(&model, &batch, ForwardMode::Train { seed: 1 }).unwrap();
    let t2 = encoder_forward(&model, &batch, ForwardMode::Train { seed: 2 }).unwrap();
    assert_eq!(t1, t1_again);
    assert_ne!(t1, t2);
    assert_ne!(t1, a);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let (model, batch) = small_model(Pooling::Cls);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tart");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    let a = encoder_forward(&model, &batch, ForwardMode::Eval).unwrap();
    let b = encoder_forward(&back, &batch, ForwardMode::Eval).unwrap();
    assert_eq!(a.data(), b.data());

    let bytes = encode_checkpoint(&model, &serde_json::Value::Null);
    assert_eq!(&bytes[..7], b"TARTMDL");
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert!(matches!(load_model(&path), Err(NnetError::CorruptFile(_))));
    assert!(decode_checkpoint(&bytes).is_ok());
}

#[test]
fn two_feature_layer_norm_gradients_match_extrapolated_differences() {
    // Width-2 models have third derivatives large enough that plain central
    // differences at eps = 1e-5 are off by ~1e-5 relative; the analytic
    // gradient still agrees with an O(eps^4) estimate. A step of 1e-4 keeps
    // both the truncation and the round-off on zero-gradient biases small.
    let mut rng = seeded(17);
    let mut worst = 0.0f64;
    for trial in 0..6 {
        let pooling = if trial % 2 == 0 { Pooling::Cls } else { Pooling::Mean };
        let cfg = EncoderConfig { n_layer: 2, d_model: 2, n_heads: 1, d_ff: 6, dropout: 0.0, input_width: 3, n_targets: 1, pooling };
        let mut model = PredictorModel::new(cfg, trial).unwrap();
        perturb(&mut model, &mut rng, 0.3);
        let batch = random_batch(&mut rng, &[6, 4, 2, 5], 6, 3);
        let targets = random_targets(&mut rng, 4, 1);
        let grads = analytic(&model, &batch, &targets, ForwardMode::Eval);
        for tensor in 0..model.params.len() {
            for index in 0..model.params[tensor].len() {
                let fd = richardson_difference(&model, &batch, &targets, ForwardMode::Eval, tensor, index, 1e-4);
                worst = worst.max(relative_error(grads.0[tensor].data()[index], fd, 1e-3));
            }
        }
    }
    assert!(worst <= 1e-6, "max relative error {worst:e}");
}
