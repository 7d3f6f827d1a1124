//! Forward pass and reverse-mode gradients of the pre-LayerNorm transformer
//! encoder.
//!
//! Each sample is processed over its real (unmasked) rows only. Padded key
//! positions receive an additive `-inf` score, so their softmax weight is
//! exactly zero and dropping them is the same computation; padded query
//! rows are never pooled, so their states are never needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::*;
use super::tensor::{add_at_b, add_column_sums, add_row_bias, dot, matmul, matmul_bt, Tensor};
use super::NnetError;
use crate::tokenizer::PaddedBatch;

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout off; a deterministic pure function of model and batch.
    Eval,
    /// Dropout on, with masks drawn from `seed` (one stream per sample).
    Train { seed: u64 },
}

struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    attn_drop: Option<Vec<f64>>,
    ln2: LnCache,
    h2: Vec<f64>,
    a1: Vec<f64>,
    g1: Vec<f64>,
    ffn_drop: Option<Vec<f64>>,
}

struct SampleCache {
    /// Real token rows, `tokens x input_width`.
    inputs: Vec<f64>,
    tokens: usize,
    /// Sequence length seen by the layers (tokens plus an optional CLS row).
    seq: usize,
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
}

/// Activations retained by [`forward_cached`] for [`backward_from_output`].
pub struct ForwardCache {
    samples: Vec<SampleCache>,
    pub predictions: Tensor,
}

/// Runs the encoder and returns the `B x n_targets` predictions.
pub fn encoder_forward(model: &PredictorModel, batch: &PaddedBatch, mode: ForwardMode) -> Result<Tensor, NnetError> {
    forward_cached(model, batch, mode).map(|c| c.predictions)
}

pub fn forward_cached(
    model: &PredictorModel,
    batch: &PaddedBatch,
    mode: ForwardMode,
) -> Result<ForwardCache, NnetError> {
    let cfg = &model.config;
    if batch.cols != cfg.input_width && batch.batch > 0 {
        return Err(NnetError::ShapeMismatch(format!(
            "batch token width {} does not match model input width {}",
            batch.cols, cfg.input_width
        )));
    }
    let t = cfg.n_targets;
    let mut predictions = Tensor::zeros(&[batch.batch, t]);
    let mut samples = Vec::with_capacity(batch.batch);
    for b in 0..batch.batch {
        let mut rng = match mode {
            ForwardMode::Eval => None,
            ForwardMode::Train { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                Some(rng)
            }
        };
        let sample = forward_sample(model, batch, b, rng.as_mut())?;
        let layout = model.layout();
        let out = &mut predictions.data_mut()[b * t..(b + 1) * t];
        matmul(&sample.pooled, model.params[layout.head_weight].data(), 1, cfg.d_model, t, out);
        add_row_bias(out, model.params[layout.head_bias].data());
        samples.push(sample);
    }
    Ok(ForwardCache { samples, predictions })
}

fn forward_sample(
    model: &PredictorModel,
    batch: &PaddedBatch,
    b: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<SampleCache, NnetError> {
    let cfg = &model.config;
    let layout = model.layout();
    let (c, d) = (cfg.input_width, cfg.d_model);
    let p = &model.params;

    let mask = batch.sample_mask(b);
    let mut inputs = Vec::new();
    for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        inputs.extend_from_slice(batch.token(b, r));
    }
    let tokens = inputs.len() / c.max(1);
    if tokens == 0 {
        return Err(NnetError::MaskEmpty(b));
    }

    let offset = usize::from(layout.cls.is_some());
    let seq = tokens + offset;
    let mut x = vec![0.0; seq * d];
    if let Some(cls) = layout.cls {
        x[..d].copy_from_slice(p[cls].data());
    }
    matmul(&inputs, p[INPUT_WEIGHT].data(), tokens, c, d, &mut x[offset * d..]);
    add_row_bias(&mut x[offset * d..], p[INPUT_BIAS].data());

    let mut layers = Vec::with_capacity(cfg.n_layer);
    for l in 0..cfg.n_layer {
        let (cache, out) = layer_forward(model, layout.layer(l), &x, seq, rng.as_deref_mut());
        if !out.iter().all(|v| v.is_finite()) {
            return Err(NnetError::NonFiniteActivation(l));
        }
        layers.push(cache);
        x = out;
    }

    let pooled = match layout.cls {
        Some(_) => x[..d].to_vec(),
        None => {
            let mut pooled = vec![0.0; d];
            add_column_sums(&x, &mut pooled);
            pooled.iter_mut().for_each(|v| *v /= seq as f64);
            pooled
        }
    };
    Ok(SampleCache { inputs, tokens, seq, layers, pooled })
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> (Vec<f64>, LnCache) {
    let d = gain.len();
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = inv;
        for j in 0..d {
            let h = (row[j] - mean) * inv;
            xhat[r * d + j] = h;
            y[r * d + j] = gain[j] * h + bias[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &[f64], gain: &[f64], cache: &LnCache, dgain: &mut [f64], dbias: &mut [f64]) -> Vec<f64> {
    let d = gain.len();
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let xhat = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        for j in 0..d {
            dgain[j] += dyr[j] * xhat[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dot(&dxhat, xhat) / d as f64;
        for j in 0..d {
            dx[r * d + j] = cache.inv_std[r] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// Inverted-dropout scale factors (`0` or `1 / (1 - p)`) for `n` elements.
fn dropout_mask(rng: Option<&mut ChaCha8Rng>, p: f64, n: usize) -> Option<Vec<f64>> {
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
}

fn layer_forward(
    model: &PredictorModel,
    base: usize,
    x: &[f64],
    seq: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (LayerCache, Vec<f64>) {
    let cfg = &model.config;
    let p = &model.params;
    let (d, f, heads, hd) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
    let scale = 1.0 / (hd as f64).sqrt();

    let (h1, ln1) = layer_norm(x, p[base + LN1_GAIN].data(), p[base + LN1_BIAS].data());
    let project = |w: usize, bias: usize| {
        let mut out = vec![0.0; seq * d];
        matmul(&h1, p[base + w].data(), seq, d, d, &mut out);
        add_row_bias(&mut out, p[base + bias].data());
        out
    };
    let (q, k, v) = (project(WQ, BQ), project(WK, BK), project(WV, BV));

    let mut probs = vec![0.0; heads * seq * seq];
    let mut ctx = vec![0.0; seq * d];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..seq {
            let qi = &q[i * d + cols.start..i * d + cols.end];
            let row = &mut probs[(h * seq + i) * seq..(h * seq + i + 1) * seq];
            let mut max = f64::NEG_INFINITY;
            for j in 0..seq {
                let s = dot(qi, &k[j * d + cols.start..j * d + cols.end]) * scale;
                row[j] = s;
                max = max.max(s);
            }
            let mut sum = 0.0;
            for s in row.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            for s in row.iter_mut() {
                *s /= sum;
            }
            let out = &mut ctx[i * d + cols.start..i * d + cols.end];
            for (j, &a) in row.iter().enumerate() {
                for (o, &vv) in out.iter_mut().zip(&v[j * d + cols.start..j * d + cols.end]) {
                    *o += a * vv;
                }
            }
        }
    }

    let mut attn_out = vec![0.0; seq * d];
    matmul(&ctx, p[base + WO].data(), seq, d, d, &mut attn_out);
    add_row_bias(&mut attn_out, p[base + BO].data());
    let attn_drop = dropout_mask(rng.as_deref_mut(), cfg.dropout, seq * d);
    let mut x_mid = x.to_vec();
    for i in 0..seq * d {
        let m = attn_drop.as_ref().map_or(1.0, |m| m[i]);
        x_mid[i] += m * attn_out[i];
    }

    let (h2, ln2) = layer_norm(&x_mid, p[base + LN2_GAIN].data(), p[base + LN2_BIAS].data());
    let mut a1 = vec![0.0; seq * f];
    matmul(&h2, p[base + W1].data(), seq, d, f, &mut a1);
    add_row_bias(&mut a1, p[base + B1].data());
    let g1: Vec<f64> = a1.iter().map(|&z| gelu(z)).collect();
    let mut ffn_out = vec![0.0; seq * d];
    matmul(&g1, p[base + W2].data(), seq, f, d, &mut ffn_out);
    add_row_bias(&mut ffn_out, p[base + B2].data());
    let ffn_drop = dropout_mask(rng, cfg.dropout, seq * d);
    let mut out = x_mid;
    for i in 0..seq * d {
        let m = ffn_drop.as_ref().map_or(1.0, |m| m[i]);
        out[i] += m * ffn_out[i];
    }

    let cache = LayerCache { ln1, h1, q, k, v, probs, ctx, attn_drop, ln2, h2, a1, g1, ffn_drop };
    (cache, out)
}

/// Back-propagates `d_pred` (gradient of a scalar objective with respect to
/// the `B x n_targets` predictions) through the cached forward pass.
pub fn backward_from_output(model: &PredictorModel, cache: &ForwardCache, d_pred: &Tensor) -> Gradients {
    let cfg = &model.config;
    let layout = model.layout();
    let (c, d, t) = (cfg.input_width, cfg.d_model, cfg.n_targets);
    let mut grads = Gradients::zeros_like(model);
    let p = &model.params;

    for (b, sample) in cache.samples.iter().enumerate() {
        let dy = &d_pred.data()[b * t..(b + 1) * t];
        add_at_b(&sample.pooled, dy, 1, d, t, grads.0[layout.head_weight].data_mut());
        add_column_sums(dy, grads.0[layout.head_bias].data_mut());
        let mut d_pooled = vec![0.0; d];
        matmul_bt(dy, p[layout.head_weight].data(), 1, t, d, &mut d_pooled);

        let seq = sample.seq;
        let mut dx = vec![0.0; seq * d];
        match layout.cls {
            Some(_) => dx[..d].copy_from_slice(&d_pooled),
            None => {
                for row in dx.chunks_exact_mut(d) {
                    for (o, g) in row.iter_mut().zip(&d_pooled) {
                        *o = g / seq as f64;
                    }
                }
            }
        }

        for l in (0..cfg.n_layer).rev() {
            dx = layer_backward(model, layout.layer(l), &sample.layers[l], &dx, seq, &mut grads);
        }

        let offset = usize::from(layout.cls.is_some());
        if let Some(cls) = layout.cls {
            for (g, v) in grads.0[cls].data_mut().iter_mut().zip(&dx[..d]) {
                *g += v;
            }
        }
        let dx_tokens = &dx[offset * d..];
        add_at_b(&sample.inputs, dx_tokens, sample.tokens, c, d, grads.0[INPUT_WEIGHT].data_mut());
        add_column_sums(dx_tokens, grads.0[INPUT_BIAS].data_mut());
    }
    grads
}

fn layer_backward(
    model: &PredictorModel,
    base: usize,
    cache: &LayerCache,
    d_out: &[f64],
    seq: usize,
    grads: &mut Gradients,
) -> Vec<f64> {
    let cfg = &model.config;
    let p = &model.params;
    let (d, f, heads, hd) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
    let scale = 1.0 / (hd as f64).sqrt();
    let g = &mut grads.0;

    // Feed-forward block: out = x_mid + drop(gelu(h2 W1 + b1) W2 + b2).
    let d_ffn: Vec<f64> = match &cache.ffn_drop {
        Some(m) => d_out.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => d_out.to_vec(),
    };
    add_at_b(&cache.g1, &d_ffn, seq, f, d, g[base + W2].data_mut());
    add_column_sums(&d_ffn, g[base + B2].data_mut());
    let mut d_g1 = vec![0.0; seq * f];
    matmul_bt(&d_ffn, p[base + W2].data(), seq, d, f, &mut d_g1);
    let d_a1: Vec<f64> = d_g1.iter().zip(&cache.a1).map(|(dg, &z)| dg * gelu_grad(z)).collect();
    add_at_b(&cache.h2, &d_a1, seq, d, f, g[base + W1].data_mut());
    add_column_sums(&d_a1, g[base + B1].data_mut());
    let mut d_h2 = vec![0.0; seq * d];
    matmul_bt(&d_a1, p[base + W1].data(), seq, f, d, &mut d_h2);
    let (gain_grad, rest) = g[base + LN2_GAIN..].split_at_mut(1);
    let d_ln2 = layer_norm_backward(&d_h2, p[base + LN2_GAIN].data(), &cache.ln2, gain_grad[0].data_mut(), rest[0].data_mut());
    let d_mid: Vec<f64> = d_out.iter().zip(&d_ln2).map(|(a, b)| a + b).collect();

    // Attention block: x_mid = x + drop(ctx Wo + bo).
    let d_attn: Vec<f64> = match &cache.attn_drop {
        Some(m) => d_mid.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => d_mid.clone(),
    };
    add_at_b(&cache.ctx, &d_attn, seq, d, d, g[base + WO].data_mut());
    add_column_sums(&d_attn, g[base + BO].data_mut());
    let mut d_ctx = vec![0.0; seq * d];
    matmul_bt(&d_attn, p[base + WO].data(), seq, d, d, &mut d_ctx);

    let mut dq = vec![0.0; seq * d];
    let mut dk = vec![0.0; seq * d];
    let mut dv = vec![0.0; seq * d];
    let mut d_probs = vec![0.0; seq];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..seq {
            let probs = &cache.probs[(h * seq + i) * seq..(h * seq + i + 1) * seq];
            let dci = &d_ctx[i * d + cols.start..i * d + cols.end];
            for j in 0..seq {
                d_probs[j] = dot(dci, &cache.v[j * d + cols.start..j * d + cols.end]);
                for (o, &gv) in dv[j * d + cols.start..j * d + cols.end].iter_mut().zip(dci) {
                    *o += probs[j] * gv;
                }
            }
            let weighted = dot(&d_probs, probs);
            for j in 0..seq {
                let ds = probs[j] * (d_probs[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for z in cols.clone() {
                    dq[i * d + z] += ds * cache.k[j * d + z];
                    dk[j * d + z] += ds * cache.q[i * d + z];
                }
            }
        }
    }

    let mut d_h1 = vec![0.0; seq * d];
    let mut tmp = vec![0.0; seq * d];
    for (w, bias, grad_src) in [(WQ, BQ, &dq), (WK, BK, &dk), (WV, BV, &dv)] {
        add_at_b(&cache.h1, grad_src, seq, d, d, g[base + w].data_mut());
        add_column_sums(grad_src, g[base + bias].data_mut());
        matmul_bt(grad_src, p[base + w].data(), seq, d, d, &mut tmp);
        for (a, b) in d_h1.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    let (gain_grad, rest) = g[base + LN1_GAIN..].split_at_mut(1);
    let d_ln1 = layer_norm_backward(&d_h1, p[base + LN1_GAIN].data(), &cache.ln1, gain_grad[0].data_mut(), rest[0].data_mut());
    d_mid.iter().zip(&d_ln1).map(|(a, b)| a + b).collect()
}
