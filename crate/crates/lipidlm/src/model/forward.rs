use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ModelConfig, TaskHeadKind};
use super::linalg::matmul;
use super::params::ParamSet;
use super::scalar::Scalar;
use super::ModelError;
use crate::tokenizer::EncodedInput;

/// Label value excluded from every loss and accuracy.
pub const IGNORE_LABEL: i64 = -1;

/// A batch of encoded sequences plus whatever task labels are active.
/// All label tensors use [`IGNORE_LABEL`] for positions that do not count.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub ids: Array2<u32>,
    pub attention: Array2<u8>,
    pub segments: Array2<u8>,
    /// Original token ids at MLM-selected positions, ignore elsewhere.
    pub mlm_labels: Array2<i64>,
    pub num_tails: Option<Vec<i64>>,
    pub conn_seq: Option<Vec<i64>>,
    pub conn_token: Option<Array2<i64>>,
    pub head_tail: Option<Array2<i64>>,
    pub pair: Option<Vec<i64>>,
    /// Regression targets (standardized by the trainer); NaN = absent.
    pub regression: Option<Vec<f64>>,
}

impl EncodedBatch {
    /// Stacks encoded inputs into a batch with no labels set.
    pub fn from_inputs(inputs: &[EncodedInput]) -> EncodedBatch {
        assert!(!inputs.is_empty(), "empty batch");
        let l = inputs[0].ids.len();
        assert!(
            inputs.iter().all(|e| e.ids.len() == l),
            "inconsistent sequence lengths in batch"
        );
        let b = inputs.len();
        let mut ids = Array2::zeros((b, l));
        let mut attention = Array2::zeros((b, l));
        let mut segments = Array2::zeros((b, l));
        for (i, e) in inputs.iter().enumerate() {
            for (j, &id) in e.ids.iter().enumerate() {
                ids[[i, j]] = id;
            }
            for (j, &m) in e.attention_mask.iter().enumerate() {
                attention[[i, j]] = m;
            }
            for (j, &sg) in e.segment_ids.iter().enumerate() {
                segments[[i, j]] = sg;
            }
        }
        let mlm_labels = Array2::from_elem((b, l), IGNORE_LABEL);
        EncodedBatch {
            ids,
            attention,
            segments,
            mlm_labels,
            num_tails: None,
            conn_seq: None,
            conn_token: None,
            head_tail: None,
            pair: None,
            regression: None,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.ids.dim().0
    }

    /// Length of the longest non-pad prefix; masks are always left-packed,
    /// so everything beyond is padding for the whole batch.
    pub fn effective_len(&self) -> usize {
        self.attention
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&m| usize::from(m)).sum())
            .max()
            .unwrap_or(0)
            .max(1)
    }
}

/// Evaluation vs training (activation caching + dropout) mode.
#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

pub(crate) struct LnCache<F> {
    /// Normalized input (before scale/shift), one row per position.
    pub xhat: Array2<F>,
    /// 1/√(var+eps) per row.
    pub inv: Array1<F>,
}

pub(crate) struct DropMask {
    /// 1 = keep; empty when dropout is off.
    pub keep: Vec<u8>,
    pub scale: f64,
}

impl DropMask {
    fn off() -> DropMask {
        DropMask {
            keep: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn is_on(&self) -> bool {
        !self.keep.is_empty()
    }
}

pub(crate) struct LayerCache<F> {
    pub input: Array2<F>,
    pub q: Array2<F>,
    pub k: Array2<F>,
    pub v: Array2<F>,
    /// Post-softmax attention per (batch, head), indexed `b * n_heads + h`.
    pub probs: Vec<Array2<F>>,
    pub ctx: Array2<F>,
    pub attn_drop: DropMask,
    pub ln1: LnCache<F>,
    pub h1: Array2<F>,
    pub ffn_pre: Array2<F>,
    pub ffn_act: Array2<F>,
    pub ffn_drop: DropMask,
    pub ln2: LnCache<F>,
}

pub(crate) struct Cache<F> {
    pub emb_ln: LnCache<F>,
    pub emb_drop: DropMask,
    pub layers: Vec<LayerCache<F>>,
    pub mlm_dense_pre: Array2<F>,
    pub mlm_ln: LnCache<F>,
    pub mlm_ln_out: Array2<F>,
    pub reg_pre: Vec<Array2<F>>,
    pub reg_act: Vec<Array2<F>>,
}

/// Per-head logits. Token-level tensors are flattened `[B·L, K]`; the
/// owning [`ForwardOutput`] carries the `(B, L)` factorization.
pub struct HeadLogits<F> {
    pub mlm: Array2<F>,
    pub num_tails: Option<Array2<F>>,
    pub conn_seq: Option<Array2<F>>,
    pub conn_token: Option<Array2<F>>,
    pub head_tail: Option<Array2<F>>,
    pub pair: Option<Array2<F>>,
    pub regression: Option<Array1<F>>,
}

pub struct ForwardOutput<F> {
    /// Final encoder states, flattened `[B·L, H]`.
    pub hidden: Array2<F>,
    /// `tanh(linear(hidden[CLS]))`, `[B, H]`.
    pub pooled: Array2<F>,
    pub logits: HeadLogits<F>,
    pub batch_size: usize,
    /// Trimmed sequence length the batch actually ran at.
    pub eff_len: usize,
    pub(crate) cache: Option<Box<Cache<F>>>,
}

impl<F: Scalar> ForwardOutput<F> {
    /// Final-layer hidden state at position 0 per sequence (pre-pooler).
    pub fn cls_embeddings(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.batch_size, self.hidden.dim().1));
        for b in 0..self.batch_size {
            out.row_mut(b).assign(&self.hidden.row(b * self.eff_len));
        }
        out
    }
}

/// Runs the encoder and every active head.
///
/// Trailing all-pad columns are trimmed before compute; padding invariance
/// (masked attention contributes exactly zero) makes this a pure
/// optimization.
pub fn forward<F: Scalar>(
    params: &ParamSet<F>,
    cfg: &ModelConfig,
    batch: &EncodedBatch,
    mode: Mode,
) -> Result<ForwardOutput<F>, ModelError> {
    let (bsz, l_full) = batch.ids.dim();
    let eff = batch.effective_len().min(l_full);
    if eff > cfg.pos_len() {
        return Err(ModelError::ShapeMismatch(format!(
            "sequence length {eff} exceeds position budget {}",
            cfg.pos_len()
        )));
    }
    let ids = batch.ids.slice(s![.., ..eff]);
    let mask = batch.attention.slice(s![.., ..eff]);
    let segs = batch.segments.slice(s![.., ..eff]);

    let h = cfg.hidden;
    let n = bsz * eff;
    let train = matches!(mode, Mode::Train { .. });
    let mut dropout_rng = match mode {
        Mode::Train { dropout_seed } if cfg.dropout > 0.0 => {
            Some(ChaCha8Rng::seed_from_u64(dropout_seed))
        }
        _ => None,
    };

    // Embeddings: token + position + segment.
    let tok_e = params.view2("embed.token");
    let pos_e = params.view2("embed.position");
    let seg_e = params.view2("embed.segment");
    let mut emb_sum: Array2<F> = Array2::zeros((n, h));
    for b in 0..bsz {
        for t in 0..eff {
            let row = b * eff + t;
            let id = ids[[b, t]] as usize;
            if id >= cfg.vocab_size {
                return Err(ModelError::ShapeMismatch(format!(
                    "token id {id} outside vocab of {}",
                    cfg.vocab_size
                )));
            }
            let mut dst = emb_sum.row_mut(row);
            dst.assign(&tok_e.row(id));
            dst += &pos_e.row(t);
            dst += &seg_e.row(segs[[b, t]] as usize);
        }
    }

    let eps = F::from_f64(cfg.layernorm_eps);
    let (x_ln, emb_ln) = ln_forward(
        &emb_sum,
        params.view1("embed.ln.scale"),
        params.view1("embed.ln.shift"),
        eps,
    );
    let (x0, emb_drop) = apply_dropout(x_ln, cfg.dropout, &mut dropout_rng);

    let n_heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let inv_sqrt_dh = F::from_f64(1.0 / (dh as f64).sqrt());

    let mut x = x0.clone();
    let mut layer_caches: Vec<LayerCache<F>> = Vec::with_capacity(cfg.n_layers);

    for li in 0..cfg.n_layers {
        let p = format!("layer{li}");
        let input = x;
        let q = linear(params, &input, &format!("{p}.attn.q"));
        let k = linear(params, &input, &format!("{p}.attn.k"));
        let v = linear(params, &input, &format!("{p}.attn.v"));

        // Scaled dot-product attention per (batch row, head); each unit is
        // fully sequential, so the parallel map is bit-deterministic.
        let units: Vec<(Array2<F>, Array2<F>)> = (0..bsz * n_heads)
            .into_par_iter()
            .map(|u| {
                let (b, hd) = (u / n_heads, u % n_heads);
                let rows = s![b * eff..(b + 1) * eff, hd * dh..(hd + 1) * dh];
                let qs = q.slice(rows);
                let ks = k.slice(rows);
                let vs = v.slice(rows);
                let mask_row = mask.row(b);
                let mut scores: Array2<F> = qs.dot(&ks.t());
                scores.mapv_inplace(|s| s * inv_sqrt_dh);
                for j in 0..eff {
                    if mask_row[j] == 0 {
                        scores.column_mut(j).fill(F::neg_infinity());
                    }
                }
                let mut probs = Array2::zeros((eff, eff));
                for i in 0..eff {
                    if mask_row[i] == 0 {
                        continue; // pad query: context stays exactly zero
                    }
                    softmax_row_inplace(scores.row(i), probs.row_mut(i));
                }
                let ctx = probs.dot(&vs);
                (probs, ctx)
            })
            .collect();

        let mut ctx: Array2<F> = Array2::zeros((n, h));
        let mut probs_store = Vec::with_capacity(bsz * n_heads);
        for (u, (probs, c)) in units.into_iter().enumerate() {
            let (b, hd) = (u / n_heads, u % n_heads);
            ctx.slice_mut(s![b * eff..(b + 1) * eff, hd * dh..(hd + 1) * dh])
                .assign(&c);
            probs_store.push(probs);
        }

        let attn_proj = linear(params, &ctx, &format!("{p}.attn.out"));
        let (attn_out, attn_drop) = apply_dropout(attn_proj, cfg.dropout, &mut dropout_rng);
        let res1 = &input + &attn_out;
        drop(attn_out);
        let (h1, ln1) = ln_forward(
            &res1,
            params.view1(&format!("{p}.attn.ln.scale")),
            params.view1(&format!("{p}.attn.ln.shift")),
            eps,
        );

        let ffn_pre = linear(params, &h1, &format!("{p}.ffn.in"));
        let ffn_act = ffn_pre.mapv(Scalar::gelu);
        let ffn_proj = linear(params, &ffn_act, &format!("{p}.ffn.out"));
        let (ffn_out, ffn_drop) = apply_dropout(ffn_proj, cfg.dropout, &mut dropout_rng);
        let res2 = &h1 + &ffn_out;
        let (x_next, ln2) = ln_forward(
            &res2,
            params.view1(&format!("{p}.ffn.ln.scale")),
            params.view1(&format!("{p}.ffn.ln.shift")),
            eps,
        );

        x = x_next;
        if train {
            layer_caches.push(LayerCache {
                input,
                q,
                k,
                v,
                probs: probs_store,
                ctx,
                attn_drop,
                ln1,
                h1,
                ffn_pre,
                ffn_act,
                ffn_drop,
                ln2,
            });
        }
    }

    // Pooler over the [CLS] rows.
    let mut cls: Array2<F> = Array2::zeros((bsz, h));
    for b in 0..bsz {
        cls.row_mut(b).assign(&x.row(b * eff));
    }
    let pooled_pre = matmul(cls.view(), params.view2("pooler.w"))
        + &params
            .view1("pooler.b")
            .insert_axis(Axis(0));
    let pooled = pooled_pre.mapv(|v| v.tanh());

    // MLM head over every position.
    let mlm_dense_pre = linear(params, &x, "mlm.dense");
    let mlm_act = mlm_dense_pre.mapv(Scalar::gelu);
    let (mlm_ln_out, mlm_ln) = ln_forward(
        &mlm_act,
        params.view1("mlm.ln.scale"),
        params.view1("mlm.ln.shift"),
        eps,
    );
    let mlm_logits = linear(params, &mlm_ln_out, "mlm.out");

    let seq_head = |name: &str| -> Array2<F> { linear(params, &pooled, name) };
    let tok_head = |name: &str| -> Array2<F> { linear(params, &x, name) };

    let num_tails = cfg
        .has_task(TaskHeadKind::NumTails)
        .then(|| seq_head("head.ntails"));
    let conn_seq = cfg
        .has_task(TaskHeadKind::ConnSeq)
        .then(|| seq_head("head.connseq"));
    let conn_token = cfg
        .has_task(TaskHeadKind::ConnToken)
        .then(|| tok_head("head.conntoken"));
    let head_tail = cfg
        .has_task(TaskHeadKind::HeadTail)
        .then(|| tok_head("head.headtail"));
    let pair = cfg
        .has_task(TaskHeadKind::PairCls)
        .then(|| seq_head("head.pair"));

    let mut reg_pre = Vec::new();
    let mut reg_act = Vec::new();
    let regression = cfg.has_task(TaskHeadKind::Regression).then(|| {
        let mut r = pooled.clone();
        for i in 0..cfg.regression_dims.len() {
            let pre = linear(params, &r, &format!("reg.l{i}"));
            let act = pre.mapv(Scalar::gelu);
            if train {
                reg_pre.push(pre);
                reg_act.push(act.clone());
            }
            r = act;
        }
        let out = linear(params, &r, "reg.out");
        out.column(0).to_owned()
    });

    let cache = train.then(|| {
        Box::new(Cache {
            emb_ln,
            emb_drop,
            layers: layer_caches,
            mlm_dense_pre,
            mlm_ln,
            mlm_ln_out: mlm_ln_out.clone(),
            reg_pre,
            reg_act,
        })
    });

    Ok(ForwardOutput {
        hidden: x,
        pooled,
        logits: HeadLogits {
            mlm: mlm_logits,
            num_tails,
            conn_seq,
            conn_token,
            head_tail,
            pair,
            regression,
        },
        batch_size: bsz,
        eff_len: eff,
        cache,
    })
}

/// `x·W + b` for a named linear layer.
pub(crate) fn linear<F: Scalar>(params: &ParamSet<F>, x: &Array2<F>, prefix: &str) -> Array2<F> {
    matmul(x.view(), params.view2(&format!("{prefix}.w")))
        + &params
            .view1(&format!("{prefix}.b"))
            .insert_axis(Axis(0))
}

pub(crate) fn ln_forward<F: Scalar>(
    x: &Array2<F>,
    scale: ArrayView1<F>,
    shift: ArrayView1<F>,
    eps: F,
) -> (Array2<F>, LnCache<F>) {
    let (n, h) = x.dim();
    let hf = F::from_f64(h as f64);
    let mut xhat = Array2::zeros((n, h));
    let mut inv = Array1::zeros(n);
    let mut y = Array2::zeros((n, h));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / hf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / hf;
        let inv_sd = (var + eps).sqrt().recip();
        inv[i] = inv_sd;
        for j in 0..h {
            let xh = (row[j] - mean) * inv_sd;
            xhat[[i, j]] = xh;
            y[[i, j]] = xh * scale[j] + shift[j];
        }
    }
    (y, LnCache { xhat, inv })
}

fn softmax_row_inplace<F: Scalar>(scores: ArrayView1<F>, mut out: ndarray::ArrayViewMut1<F>) {
    let mut max = F::neg_infinity();
    for &v in scores {
        if v > max {
            max = v;
        }
    }
    let mut sum = F::zero();
    for (o, &v) in out.iter_mut().zip(scores) {
        let e = (v - max).exp();
        *o = e;
        sum = sum + e;
    }
    let inv = sum.recip();
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

fn apply_dropout<F: Scalar>(
    mut x: Array2<F>,
    p: f64,
    rng: &mut Option<ChaCha8Rng>,
) -> (Array2<F>, DropMask) {
    let Some(rng) = rng.as_mut() else {
        return (x, DropMask::off());
    };
    let scale = 1.0 / (1.0 - p);
    let scale_f = F::from_f64(scale);
    let mut keep = vec![0u8; x.len()];
    for k in keep.iter_mut() {
        *k = u8::from(rng.gen::<f64>() >= p);
    }
    for (v, &k) in x.iter_mut().zip(&keep) {
        *v = if k == 1 { *v * scale_f } else { F::zero() };
    }
    (x, DropMask { keep, scale })
}

/// Loss weights per task; missing entries default to 1, and a weight of 0
/// removes the task from the loss entirely.
#[derive(Debug, Clone, Default)]
pub struct LossWeights(pub BTreeMap<TaskHeadKind, f64>);

impl LossWeights {
    pub fn get(&self, task: TaskHeadKind) -> f64 {
        self.0.get(&task).copied().unwrap_or(1.0)
    }
}

/// Scalar loss with a per-task breakdown and valid-label counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_task: BTreeMap<TaskHeadKind, f64>,
    pub counts: BTreeMap<TaskHeadKind, usize>,
}

/// Total loss: cross-entropy per classification head (MLM averaged over
/// selected positions only) plus mean-squared error on the regression head,
/// each scaled by its task weight.
pub fn loss<F: Scalar>(
    out: &ForwardOutput<F>,
    batch: &EncodedBatch,
    weights: &LossWeights,
) -> Result<LossBreakdown, ModelError> {
    let mut breakdown = LossBreakdown::default();
    let eff = out.eff_len;

    let mlm_w = weights.get(TaskHeadKind::Mlm);
    if mlm_w != 0.0 {
        let labels = flatten_token_labels(&batch.mlm_labels, eff);
        let (ce, count) = cross_entropy(&out.logits.mlm, &labels);
        if count == 0 {
            return Err(ModelError::NoSelectedTokens);
        }
        breakdown.add(TaskHeadKind::Mlm, mlm_w * ce, count);
    }

    let mut seq_task = |task: TaskHeadKind, logits: &Option<Array2<F>>, labels: &Option<Vec<i64>>| {
        let w = weights.get(task);
        if w == 0.0 {
            return;
        }
        if let (Some(logits), Some(labels)) = (logits, labels) {
            let (ce, count) = cross_entropy(logits, labels);
            if count > 0 {
                breakdown.add(task, w * ce, count);
            }
        }
    };
    seq_task(TaskHeadKind::NumTails, &out.logits.num_tails, &batch.num_tails);
    seq_task(TaskHeadKind::ConnSeq, &out.logits.conn_seq, &batch.conn_seq);
    seq_task(TaskHeadKind::PairCls, &out.logits.pair, &batch.pair);

    let mut tok_task =
        |task: TaskHeadKind, logits: &Option<Array2<F>>, labels: &Option<Array2<i64>>| {
            let w = weights.get(task);
            if w == 0.0 {
                return;
            }
            if let (Some(logits), Some(labels)) = (logits, labels) {
                let flat = flatten_token_labels(labels, eff);
                let (ce, count) = cross_entropy(logits, &flat);
                if count > 0 {
                    breakdown.add(task, w * ce, count);
                }
            }
        };
    tok_task(
        TaskHeadKind::ConnToken,
        &out.logits.conn_token,
        &batch.conn_token,
    );
    tok_task(
        TaskHeadKind::HeadTail,
        &out.logits.head_tail,
        &batch.head_tail,
    );

    let reg_w = weights.get(TaskHeadKind::Regression);
    if reg_w != 0.0 {
        if let (Some(preds), Some(targets)) = (&out.logits.regression, &batch.regression) {
            let mut se = 0.0;
            let mut count = 0usize;
            for (p, t) in preds.iter().zip(targets) {
                if t.is_nan() {
                    continue;
                }
                let d = p.as_f64() - t;
                se += d * d;
                count += 1;
            }
            if count > 0 {
                breakdown.add(TaskHeadKind::Regression, reg_w * se / count as f64, count);
            }
        }
    }

    Ok(breakdown)
}

impl LossBreakdown {
    fn add(&mut self, task: TaskHeadKind, value: f64, count: usize) {
        self.per_task.insert(task, value);
        self.counts.insert(task, count);
        self.total += value;
    }
}

/// Trims `[B, L_full]` labels to the effective length and flattens row-major.
pub(crate) fn flatten_token_labels(labels: &Array2<i64>, eff: usize) -> Vec<i64> {
    labels
        .slice(s![.., ..eff])
        .iter()
        .copied()
        .collect()
}

/// Mean cross-entropy over rows with a valid label; compares logits row `i`
/// against `labels[i]`.
pub(crate) fn cross_entropy<F: Scalar>(logits: &Array2<F>, labels: &[i64]) -> (f64, usize) {
    assert_eq!(logits.dim().0, labels.len(), "label count mismatch");
    let mut sum = 0.0;
    let mut count = 0usize;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        if y == IGNORE_LABEL {
            continue;
        }
        sum += log_sum_exp(row) - row[y as usize].as_f64();
        count += 1;
    }
    (if count > 0 { sum / count as f64 } else { 0.0 }, count)
}

pub(crate) fn log_sum_exp<F: Scalar>(row: ArrayView1<F>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in &row {
        max = max.max(v.as_f64());
    }
    let mut sum = 0.0;
    for &v in &row {
        sum += (v.as_f64() - max).exp();
    }
    max + sum.ln()
}

/// Softmax gradient for one head: `(softmax − onehot) · w / n_valid` on valid
/// rows, zeros elsewhere.
pub fn cross_entropy_grad_scale<F: Scalar>(
    logits: &Array2<F>,
    labels: &[i64],
    weight: f64,
) -> Array2<F> {
    let (n, k) = logits.dim();
    let mut grad = Array2::zeros((n, k));
    let n_valid = labels.iter().filter(|&&y| y != IGNORE_LABEL).count();
    if n_valid == 0 || weight == 0.0 {
        return grad;
    }
    let scale = F::from_f64(weight / n_valid as f64);
    for (i, &y) in labels.iter().enumerate() {
        if y == IGNORE_LABEL {
            continue;
        }
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        for j in 0..k {
            let p = F::from_f64((row[j].as_f64() - lse).exp());
            let onehot = if j == y as usize { F::one() } else { F::zero() };
            grad[[i, j]] = (p - onehot) * scale;
        }
    }
    grad
}
