use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::config::{ModelConfig, TaskHeadKind};
use super::forward::{
    cross_entropy_grad_scale, flatten_token_labels, DropMask, EncodedBatch, ForwardOutput,
    LnCache, LossWeights,
};
use super::linalg::matmul;
use super::params::ParamSet;
use super::scalar::Scalar;
use super::ModelError;

/// Exact gradients of the weighted total loss for every parameter. Requires
/// a [`ForwardOutput`] produced in training mode (activations cached).
pub fn backward<F: Scalar>(
    params: &ParamSet<F>,
    cfg: &ModelConfig,
    batch: &EncodedBatch,
    out: &ForwardOutput<F>,
    weights: &LossWeights,
) -> Result<ParamSet<F>, ModelError> {
    let cache = out
        .cache
        .as_ref()
        .ok_or_else(|| ModelError::ShapeMismatch("backward needs a training-mode forward".into()))?;
    let mut g = params.zeros_like();

    let bsz = out.batch_size;
    let eff = out.eff_len;
    let h = cfg.hidden;
    let n = bsz * eff;
    let hidden = &out.hidden;

    let mut d_hidden: Array2<F> = Array2::zeros((n, h));
    let mut d_pooled: Array2<F> = Array2::zeros((bsz, h));

    // ----- MLM head -----
    let mlm_w = weights.get(TaskHeadKind::Mlm);
    if mlm_w != 0.0 {
        let labels = flatten_token_labels(&batch.mlm_labels, eff);
        let d_logits = cross_entropy_grad_scale(&out.logits.mlm, &labels, mlm_w);
        let d_ln_out = linear_backward(&mut g, params, "mlm.out", &cache.mlm_ln_out, &d_logits);
        let d_act = ln_backward(
            &mut g,
            "mlm.ln",
            params.view1("mlm.ln.scale"),
            &cache.mlm_ln,
            &d_ln_out,
        );
        let d_pre = &d_act * &cache.mlm_dense_pre.mapv(Scalar::gelu_prime);
        d_hidden += &linear_backward(&mut g, params, "mlm.dense", hidden, &d_pre);
    }

    // ----- token-level heads -----
    if let (Some(logits), Some(labels)) = (&out.logits.conn_token, &batch.conn_token) {
        let w = weights.get(TaskHeadKind::ConnToken);
        if w != 0.0 {
            let flat = flatten_token_labels(labels, eff);
            let d_logits = cross_entropy_grad_scale(logits, &flat, w);
            d_hidden += &linear_backward(&mut g, params, "head.conntoken", hidden, &d_logits);
        }
    }
    if let (Some(logits), Some(labels)) = (&out.logits.head_tail, &batch.head_tail) {
        let w = weights.get(TaskHeadKind::HeadTail);
        if w != 0.0 {
            let flat = flatten_token_labels(labels, eff);
            let d_logits = cross_entropy_grad_scale(logits, &flat, w);
            d_hidden += &linear_backward(&mut g, params, "head.headtail", hidden, &d_logits);
        }
    }

    // ----- sequence heads over pooled [CLS] -----
    let pooled = &out.pooled;
    if let (Some(logits), Some(labels)) = (&out.logits.num_tails, &batch.num_tails) {
        let w = weights.get(TaskHeadKind::NumTails);
        if w != 0.0 {
            let d_logits = cross_entropy_grad_scale(logits, labels, w);
            d_pooled += &linear_backward(&mut g, params, "head.ntails", pooled, &d_logits);
        }
    }
    if let (Some(logits), Some(labels)) = (&out.logits.conn_seq, &batch.conn_seq) {
        let w = weights.get(TaskHeadKind::ConnSeq);
        if w != 0.0 {
            let d_logits = cross_entropy_grad_scale(logits, labels, w);
            d_pooled += &linear_backward(&mut g, params, "head.connseq", pooled, &d_logits);
        }
    }
    if let (Some(logits), Some(labels)) = (&out.logits.pair, &batch.pair) {
        let w = weights.get(TaskHeadKind::PairCls);
        if w != 0.0 {
            let d_logits = cross_entropy_grad_scale(logits, labels, w);
            d_pooled += &linear_backward(&mut g, params, "head.pair", pooled, &d_logits);
        }
    }

    // ----- regression head -----
    if let (Some(preds), Some(targets)) = (&out.logits.regression, &batch.regression) {
        let w = weights.get(TaskHeadKind::Regression);
        let n_valid = targets.iter().filter(|t| !t.is_nan()).count();
        if w != 0.0 && n_valid > 0 {
            let scale = 2.0 * w / n_valid as f64;
            let mut d_out: Array2<F> = Array2::zeros((bsz, 1));
            for b in 0..bsz {
                if !targets[b].is_nan() {
                    d_out[[b, 0]] = F::from_f64(scale * (preds[b].as_f64() - targets[b]));
                }
            }
            let last_act = cache
                .reg_act
                .last()
                .expect("regression cache present in training mode");
            let mut d_r = linear_backward(&mut g, params, "reg.out", last_act, &d_out);
            for i in (0..cfg.regression_dims.len()).rev() {
                let d_pre = &d_r * &cache.reg_pre[i].mapv(Scalar::gelu_prime);
                let input = if i == 0 { pooled } else { &cache.reg_act[i - 1] };
                d_r = linear_backward(&mut g, params, &format!("reg.l{i}"), input, &d_pre);
            }
            d_pooled += &d_r;
        }
    }

    // ----- pooler -----
    let d_pooled_pre = {
        let one = F::one();
        let mut d = d_pooled;
        for (dv, &p) in d.iter_mut().zip(pooled.iter()) {
            *dv = *dv * (one - p * p);
        }
        d
    };
    let mut cls: Array2<F> = Array2::zeros((bsz, h));
    for b in 0..bsz {
        cls.row_mut(b).assign(&hidden.row(b * eff));
    }
    let d_cls = linear_backward(&mut g, params, "pooler", &cls, &d_pooled_pre);
    for b in 0..bsz {
        let mut row = d_hidden.row_mut(b * eff);
        row += &d_cls.row(b);
    }

    // ----- encoder layers, reversed -----
    let n_heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let inv_sqrt_dh = F::from_f64(1.0 / (dh as f64).sqrt());
    let mut dx = d_hidden;

    for li in (0..cfg.n_layers).rev() {
        let p = format!("layer{li}");
        let lc = &cache.layers[li];

        // ln2(res2) → x_next
        let d_res2 = ln_backward(
            &mut g,
            &format!("{p}.ffn.ln"),
            params.view1(&format!("{p}.ffn.ln.scale")),
            &lc.ln2,
            &dx,
        );
        let mut d_h1 = d_res2.clone();
        let d_ffn_out = dropout_backward(&d_res2, &lc.ffn_drop);
        let d_act = linear_backward(&mut g, params, &format!("{p}.ffn.out"), &lc.ffn_act, &d_ffn_out);
        let d_ffn_pre = &d_act * &lc.ffn_pre.mapv(Scalar::gelu_prime);
        d_h1 += &linear_backward(&mut g, params, &format!("{p}.ffn.in"), &lc.h1, &d_ffn_pre);

        // ln1(res1) → h1
        let d_res1 = ln_backward(
            &mut g,
            &format!("{p}.attn.ln"),
            params.view1(&format!("{p}.attn.ln.scale")),
            &lc.ln1,
            &d_h1,
        );
        let mut d_input = d_res1.clone();
        let d_attn_out = dropout_backward(&d_res1, &lc.attn_drop);
        let d_ctx = linear_backward(&mut g, params, &format!("{p}.attn.out"), &lc.ctx, &d_attn_out);

        // attention backward per (batch, head)
        let units: Vec<(Array2<F>, Array2<F>, Array2<F>)> = (0..bsz * n_heads)
            .into_par_iter()
            .map(|u| {
                let (b, hd) = (u / n_heads, u % n_heads);
                let rows = s![b * eff..(b + 1) * eff, hd * dh..(hd + 1) * dh];
                let probs = &lc.probs[u];
                let d_ctx_s = d_ctx.slice(rows);
                let qs = lc.q.slice(rows);
                let ks = lc.k.slice(rows);
                let vs = lc.v.slice(rows);

                let d_v = probs.t().dot(&d_ctx_s);
                let d_probs = d_ctx_s.dot(&vs.t());
                // softmax backward per row; zero rows (pad queries) stay zero
                let mut d_scores: Array2<F> = Array2::zeros((eff, eff));
                for i in 0..eff {
                    let p_row = probs.row(i);
                    let dp_row = d_probs.row(i);
                    let dot: F = p_row
                        .iter()
                        .zip(dp_row.iter())
                        .map(|(&a, &b)| a * b)
                        .sum();
                    for j in 0..eff {
                        d_scores[[i, j]] = p_row[j] * (dp_row[j] - dot) * inv_sqrt_dh;
                    }
                }
                let d_q = d_scores.dot(&ks);
                let d_k = d_scores.t().dot(&qs);
                (d_q, d_k, d_v)
            })
            .collect();

        let mut d_q: Array2<F> = Array2::zeros((n, h));
        let mut d_k: Array2<F> = Array2::zeros((n, h));
        let mut d_v: Array2<F> = Array2::zeros((n, h));
        for (u, (dq, dk, dv)) in units.into_iter().enumerate() {
            let (b, hd) = (u / n_heads, u % n_heads);
            let rows = s![b * eff..(b + 1) * eff, hd * dh..(hd + 1) * dh];
            d_q.slice_mut(rows).assign(&dq);
            d_k.slice_mut(rows).assign(&dk);
            d_v.slice_mut(rows).assign(&dv);
        }

        d_input += &linear_backward(&mut g, params, &format!("{p}.attn.q"), &lc.input, &d_q);
        d_input += &linear_backward(&mut g, params, &format!("{p}.attn.k"), &lc.input, &d_k);
        d_input += &linear_backward(&mut g, params, &format!("{p}.attn.v"), &lc.input, &d_v);

        dx = d_input;
    }

    // ----- embeddings -----
    let d_x0 = dropout_backward(&dx, &cache.emb_drop);
    let d_emb = ln_backward(
        &mut g,
        "embed.ln",
        params.view1("embed.ln.scale"),
        &cache.emb_ln,
        &d_x0,
    );
    let ids = batch.ids.slice(s![.., ..eff]);
    let segs = batch.segments.slice(s![.., ..eff]);
    {
        let mut tok_g = g.view2_mut("embed.token");
        for b in 0..bsz {
            for t in 0..eff {
                let mut row = tok_g.row_mut(ids[[b, t]] as usize);
                row += &d_emb.row(b * eff + t);
            }
        }
    }
    {
        let mut pos_g = g.view2_mut("embed.position");
        for b in 0..bsz {
            for t in 0..eff {
                let mut row = pos_g.row_mut(t);
                row += &d_emb.row(b * eff + t);
            }
        }
    }
    {
        let mut seg_g = g.view2_mut("embed.segment");
        for b in 0..bsz {
            for t in 0..eff {
                let mut row = seg_g.row_mut(segs[[b, t]] as usize);
                row += &d_emb.row(b * eff + t);
            }
        }
    }

    Ok(g)
}

/// dW += xᵀ·dy, db += Σdy, returns dx = dy·Wᵀ.
fn linear_backward<F: Scalar>(
    g: &mut ParamSet<F>,
    params: &ParamSet<F>,
    prefix: &str,
    input: &Array2<F>,
    d_out: &Array2<F>,
) -> Array2<F> {
    let dw = matmul(input.t(), d_out.view());
    {
        let mut wg = g.view2_mut(&format!("{prefix}.w"));
        wg += &dw;
    }
    {
        let mut bg = g.view1_mut(&format!("{prefix}.b"));
        bg += &d_out.sum_axis(Axis(0));
    }
    matmul(d_out.view(), params.view2(&format!("{prefix}.w")).t())
}

/// LayerNorm backward over the last dimension; also accumulates scale/shift
/// gradients.
fn ln_backward<F: Scalar>(
    g: &mut ParamSet<F>,
    prefix: &str,
    scale: ArrayView1<F>,
    cache: &LnCache<F>,
    d_out: &Array2<F>,
) -> Array2<F> {
    let (n, h) = d_out.dim();
    let hf = F::from_f64(h as f64);
    let mut dx = Array2::zeros((n, h));
    let mut d_scale: Array1<F> = Array1::zeros(h);
    let mut d_shift: Array1<F> = Array1::zeros(h);
    for i in 0..n {
        let dy = d_out.row(i);
        let xhat = cache.xhat.row(i);
        let inv = cache.inv[i];
        let mut mean_sg = F::zero();
        let mut mean_sg_xhat = F::zero();
        for j in 0..h {
            let sg = dy[j] * scale[j];
            mean_sg = mean_sg + sg;
            mean_sg_xhat = mean_sg_xhat + sg * xhat[j];
            d_scale[j] = d_scale[j] + dy[j] * xhat[j];
            d_shift[j] = d_shift[j] + dy[j];
        }
        mean_sg = mean_sg / hf;
        mean_sg_xhat = mean_sg_xhat / hf;
        for j in 0..h {
            let sg = dy[j] * scale[j];
            dx[[i, j]] = inv * (sg - mean_sg - xhat[j] * mean_sg_xhat);
        }
    }
    {
        let mut sg = g.view1_mut(&format!("{prefix}.scale"));
        sg += &d_scale;
    }
    {
        let mut sh = g.view1_mut(&format!("{prefix}.shift"));
        sh += &d_shift;
    }
    dx
}

fn dropout_backward<F: Scalar>(d_out: &Array2<F>, mask: &DropMask) -> Array2<F> {
    if !mask.is_on() {
        return d_out.clone();
    }
    let scale = F::from_f64(mask.scale);
    let mut dx = d_out.clone();
    for (v, &k) in dx.iter_mut().zip(&mask.keep) {
        *v = if k == 1 { *v * scale } else { F::zero() };
    }
    dx
}
