//! Forward and backward passes of the table encoder and token classifier.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;

use super::input::PreparedTable;
use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, log_softmax, softmax_rows, softmax_rows_backward, LayerNormCache};
use super::params::{LayerParams, ModelConfig, ModelParameters};
use crate::table::LabelClass;

/// Encoder output and decoder distributions for one table.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Final token representations, `tokens x d`.
    pub reps: Array2<f64>,
    pub logits: Array2<f64>,
    /// Softmax of `logits`, `tokens x labels`.
    pub probs: Array2<f64>,
}

struct LayerCache {
    ln1: LayerNormCache,
    normed1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn_probs: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    ln2: LayerNormCache,
    normed2: Array2<f64>,
    hidden: Array2<f64>,
    activated: Array2<f64>,
    drop_ffn: Option<Array2<f64>>,
}

pub(crate) struct Cache {
    layers: Vec<LayerCache>,
    final_ln: LayerNormCache,
}

fn dropout_mask<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn((rows, cols), |_| if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn layer_forward<R: Rng>(
    x: &Array2<f64>,
    p: &LayerParams,
    config: &ModelConfig,
    bias: &Array2<f64>,
    dropout: &mut Option<&mut R>,
) -> (Array2<f64>, LayerCache) {
    let n = x.nrows();
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let (normed1, ln1) = layer_norm(x, &p.ln1_gamma, &p.ln1_beta);
    let q = normed1.dot(&p.wq) + &p.bq;
    let k = normed1.dot(&p.wk) + &p.bk;
    let v = normed1.dot(&p.wv) + &p.bv;
    let mut heads_out = Array2::zeros((n, config.embed_dim));
    let mut attn_probs = Vec::with_capacity(config.heads);
    for h in 0..config.heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale + bias;
        softmax_rows(&mut scores);
        heads_out.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        attn_probs.push(scores);
    }
    let mut attn = heads_out.dot(&p.wo) + &p.bo;
    let drop_attn = dropout.as_mut().filter(|_| config.dropout > 0.0).map(|rng| {
        let m = dropout_mask(n, config.embed_dim, config.dropout, *rng);
        attn *= &m;
        m
    });
    let x2 = x + &attn;

    let (normed2, ln2) = layer_norm(&x2, &p.ln2_gamma, &p.ln2_beta);
    let hidden = normed2.dot(&p.w1) + &p.b1;
    let activated = hidden.mapv(gelu);
    let mut ffn = activated.dot(&p.w2) + &p.b2;
    let drop_ffn = dropout.as_mut().filter(|_| config.dropout > 0.0).map(|rng| {
        let m = dropout_mask(n, config.embed_dim, config.dropout, *rng);
        ffn *= &m;
        m
    });
    let out = x2 + ffn;
    (
        out,
        LayerCache {
            ln1,
            normed1,
            q,
            k,
            v,
            attn_probs,
            heads_out,
            drop_attn,
            ln2,
            normed2,
            hidden,
            activated,
            drop_ffn,
        },
    )
}

/// Returns the gradient w.r.t. the layer input and accumulates parameter
/// gradients into `g`.
fn layer_backward(
    dout: Array2<f64>,
    p: &LayerParams,
    c: &LayerCache,
    config: &ModelConfig,
    g: &mut LayerParams,
) -> Array2<f64> {
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch
    let mut dffn = dout.clone();
    if let Some(m) = &c.drop_ffn {
        dffn *= m;
    }
    g.w2 += &c.activated.t().dot(&dffn);
    g.b2 += &dffn.sum_axis(Axis(0));
    let mut dhidden = dffn.dot(&p.w2.t());
    Zip::from(&mut dhidden).and(&c.hidden).for_each(|d, &h| *d *= gelu_grad(h));
    g.w1 += &c.normed2.t().dot(&dhidden);
    g.b1 += &dhidden.sum_axis(Axis(0));
    let dnormed2 = dhidden.dot(&p.w1.t());
    let mut dx2 = dout;
    dx2 += &layer_norm_backward(&dnormed2, &c.ln2, &p.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);

    // attention branch
    let mut dattn = dx2.clone();
    if let Some(m) = &c.drop_attn {
        dattn *= m;
    }
    g.wo += &c.heads_out.t().dot(&dattn);
    g.bo += &dattn.sum_axis(Axis(0));
    let dheads = dattn.dot(&p.wo.t());
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for (h, probs) in c.attn_probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dho = dheads.slice(cols);
        let dprobs = dho.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&dho));
        let dscores = softmax_rows_backward(probs.view(), &dprobs) * scale;
        dq.slice_mut(cols).assign(&dscores.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&c.q.slice(cols)));
    }
    let nt = c.normed1.t();
    g.wq += &nt.dot(&dq);
    g.wk += &nt.dot(&dk);
    g.wv += &nt.dot(&dv);
    g.bq += &dq.sum_axis(Axis(0));
    g.bk += &dk.sum_axis(Axis(0));
    g.bv += &dv.sum_axis(Axis(0));
    let dnormed1 = dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
    dx2 + layer_norm_backward(&dnormed1, &c.ln1, &p.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta)
}

pub(crate) fn forward_cached<R: Rng>(
    params: &ModelParameters,
    config: &ModelConfig,
    table: &PreparedTable,
    mut dropout: Option<&mut R>,
) -> (Forward, Cache) {
    let n = table.len();
    let d = params.embed_dim();
    let mut x = Array2::zeros((n, d));
    for (t, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&params.token_embedding.row(table.token_ids[t]));
        row += &params.position_embedding.row(table.positions[t]);
    }
    let bias = table.attention_bias();
    let mut layers = Vec::with_capacity(params.layers.len());
    for p in &params.layers {
        let (out, cache) = layer_forward(&x, p, config, &bias, &mut dropout);
        layers.push(cache);
        x = out;
    }
    let (reps, final_ln) = layer_norm(&x, &params.final_gamma, &params.final_beta);
    let logits = reps.dot(&params.out_weight.t()) + &params.out_bias;
    let mut probs = logits.clone();
    softmax_rows(&mut probs);
    (Forward { reps, logits, probs }, Cache { layers, final_ln })
}

/// Inference pass (no dropout).
pub fn forward(params: &ModelParameters, config: &ModelConfig, table: &PreparedTable) -> Forward {
    forward_cached::<rand_chacha::ChaCha8Rng>(params, config, table, None).0
}

/// Mean cross-entropy over the tokens that have a target.
pub fn masked_loss(fwd: &Forward, targets: &[Option<LabelClass>]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, target) in targets.iter().enumerate() {
        if let Some(y) = target {
            total -= log_softmax(fwd.logits.row(t))[y.index()];
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Loss and full gradient for one table. Tokens without a target contribute
/// context only. Returns `None` when no token has a target.
pub(crate) fn loss_and_gradients_with<R: Rng>(
    params: &ModelParameters,
    config: &ModelConfig,
    table: &PreparedTable,
    targets: &[Option<LabelClass>],
    dropout: Option<&mut R>,
) -> Option<(f64, ModelParameters)> {
    assert_eq!(targets.len(), table.len(), "one target slot per token");
    let count = targets.iter().filter(|t| t.is_some()).count();
    if count == 0 {
        return None;
    }
    let (fwd, cache) = forward_cached(params, config, table, dropout);
    let loss = masked_loss(&fwd, targets)?;

    let mut dlogits = Array2::zeros(fwd.probs.raw_dim());
    for (t, target) in targets.iter().enumerate() {
        if let Some(y) = target {
            let mut row = dlogits.row_mut(t);
            row.assign(&fwd.probs.row(t));
            row[y.index()] -= 1.0;
            row /= count as f64;
        }
    }
    let mut g = params.zeros_like();
    g.out_weight = dlogits.t().dot(&fwd.reps);
    g.out_bias = dlogits.sum_axis(Axis(0));
    let dreps = dlogits.dot(&params.out_weight);
    let mut dx = layer_norm_backward(&dreps, &cache.final_ln, &params.final_gamma, &mut g.final_gamma, &mut g.final_beta);
    for ((p, c), gl) in params.layers.iter().zip(&cache.layers).zip(g.layers.iter_mut()).rev() {
        dx = layer_backward(dx, p, c, config, gl);
    }
    for (t, row) in dx.axis_iter(Axis(0)).enumerate() {
        let mut e = g.token_embedding.row_mut(table.token_ids[t]);
        e += &row;
        let mut pe = g.position_embedding.row_mut(table.positions[t]);
        pe += &row;
    }
    Some((loss, g))
}

/// Gradient of the cross-entropy against the model's own argmax label,
/// w.r.t. the output weights: `(p - onehot(argmax p)) ⊗ w`, flattened
/// row-major as `labels x d`.
pub fn pseudo_label_gradient(probs: ndarray::ArrayView1<f64>, rep: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let y = argmax(probs);
    let d = rep.len();
    let mut g = Array1::zeros(probs.len() * d);
    for (c, &p) in probs.iter().enumerate() {
        let r = p - if c == y { 1.0 } else { 0.0 };
        if r != 0.0 {
            Zip::from(g.slice_mut(s![c * d..(c + 1) * d])).and(&rep).for_each(|o, &w| *o = r * w);
        }
    }
    g
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
