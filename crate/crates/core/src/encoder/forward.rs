//! Forward passes of the rescorer: positional encoding, multi-head
//! self-attention, encoder blocks, and the classifier head.

use crate::error::{Error, Result};
use crate::numerics::{relu_in_place, sigmoid, softmax_in_place, Matrix};

use super::config::{EncoderConfig, RegionToken, TOKEN_DIM};
use super::weights::{EncoderLayerWeights, TedmWeights};

/// Epsilon inside the layer-norm square root.
pub const LN_EPS: f64 = 1e-5;

/// Sinusoidal positional encoding table: row `pos`, column `2i` holds
/// `sin(pos / 10000^(2i/d))` and column `2i+1` the matching cosine.
pub fn positional_encoding(n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |pos, j| {
        let pair = (j / 2) as f64;
        let angle = pos as f64 / 10000_f64.powf(2.0 * pair / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn add_row_bias(m: &mut Matrix, bias: &Matrix) {
    debug_assert_eq!((1, m.cols()), bias.shape());
    for r in 0..m.rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias.row(0)) {
            *v += b;
        }
    }
}

/// Everything attention computes, kept for the backward pass.
pub(crate) struct AttnDetail {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Row-stochastic attention weights, one `n × n` matrix per head.
    pub heads: Vec<Matrix>,
    /// Head outputs concatenated back to `n × d_model`.
    pub concat: Matrix,
    /// Concatenation passed through the output projection.
    pub out: Matrix,
}

pub(crate) fn head_cols(m: &Matrix, head: usize, d_k: usize) -> Matrix {
    Matrix::from_fn(m.rows(), d_k, |r, c| m.get(r, head * d_k + c))
}

pub(crate) fn attention_detail(
    x: &Matrix,
    layer: &EncoderLayerWeights,
    config: &EncoderConfig,
) -> Result<AttnDetail> {
    if x.cols() != config.d_model {
        return Err(Error::Shape(format!(
            "attention input has width {}, embedding width is {}",
            x.cols(),
            config.d_model
        )));
    }
    let d_k = config.d_k();
    let q = x.matmul_transb(&layer.wq)?;
    let k = x.matmul_transb(&layer.wk)?;
    let v = x.matmul_transb(&layer.wv)?;
    let n = x.rows();
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut heads = Vec::with_capacity(config.heads);
    let mut concat = Matrix::zeros(n, config.d_model);
    for h in 0..config.heads {
        let qh = head_cols(&q, h, d_k);
        let kh = head_cols(&k, h, d_k);
        let vh = head_cols(&v, h, d_k);
        let mut weights = qh.matmul_transb(&kh)?;
        weights.scale(scale);
        for r in 0..n {
            softmax_in_place(weights.row_mut(r));
        }
        let head_out = weights.matmul(&vh)?;
        for r in 0..n {
            for c in 0..d_k {
                concat.set(r, h * d_k + c, head_out.get(r, c));
            }
        }
        heads.push(weights);
    }
    let out = concat.matmul_transb(&layer.wo)?;
    Ok(AttnDetail { q, k, v, heads, concat, out })
}

/// Multi-head scaled dot-product self-attention over a sequence of embedded
/// rows. Every row attends to every other row — no masking.
pub fn self_attention(
    x: &Matrix,
    layer: &EncoderLayerWeights,
    config: &EncoderConfig,
) -> Result<Matrix> {
    Ok(attention_detail(x, layer, config)?.out)
}

/// The per-head attention weight matrices for one layer input; each row is a
/// probability distribution over the sequence. Diagnostic view into what a
/// trained rescorer attends to.
pub fn attention_maps(
    x: &Matrix,
    layer: &EncoderLayerWeights,
    config: &EncoderConfig,
) -> Result<Vec<Matrix>> {
    Ok(attention_detail(x, layer, config)?.heads)
}

/// Per-row normalization state needed to run the layer backward.
pub(crate) struct LnDetail {
    /// Normalized rows before gain and bias.
    pub xhat: Matrix,
    /// `1 / √(var + eps)` per row.
    pub inv_std: Vec<f64>,
}

fn layer_norm_rows(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, LnDetail) {
    let (n, d) = x.shape();
    let mut xhat = Matrix::zeros(n, d);
    let mut out = Matrix::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(s);
        for c in 0..d {
            let norm = (x.get(r, c) - mean) * s;
            xhat.set(r, c, norm);
            out.set(r, c, gain.get(0, c) * norm + bias.get(0, c));
        }
    }
    (out, LnDetail { xhat, inv_std })
}

/// One encoder block's intermediate values.
pub(crate) struct LayerDetail {
    pub attn: AttnDetail,
    pub ln1: LnDetail,
    /// Output of the first residual + norm; input to the feed-forward.
    pub x1: Matrix,
    /// Feed-forward hidden activations (post-ReLU).
    pub h1: Matrix,
    pub ln2: LnDetail,
    /// Block output.
    pub x2: Matrix,
}

/// One post-norm residual block: `x1 = LN(x + Attn(x))`,
/// `x2 = LN(x1 + FF(x1))` with a ReLU feed-forward.
pub(crate) fn encoder_layer_forward(
    x: &Matrix,
    layer: &EncoderLayerWeights,
    config: &EncoderConfig,
) -> Result<LayerDetail> {
    let attn = attention_detail(x, layer, config)?;
    let mut y1 = x.clone();
    y1.add_assign(&attn.out)?;
    let (x1, ln1) = layer_norm_rows(&y1, &layer.ln1_g, &layer.ln1_b);

    let mut h1 = x1.matmul_transb(&layer.ff1_w)?;
    add_row_bias(&mut h1, &layer.ff1_b);
    relu_in_place(h1.as_mut_slice());
    let mut ff = h1.matmul_transb(&layer.ff2_w)?;
    add_row_bias(&mut ff, &layer.ff2_b);
    let mut y2 = x1.clone();
    y2.add_assign(&ff)?;
    let (x2, ln2) = layer_norm_rows(&y2, &layer.ln2_g, &layer.ln2_b);
    Ok(LayerDetail { attn, ln1, x1, h1, ln2, x2 })
}

/// Full forward state for one scene's token sequence.
pub(crate) struct TedmCache {
    /// Raw token rows (pooled features ⊕ normalized box).
    pub t: Matrix,
    /// Embedded input after projection and positional encoding.
    pub x0: Matrix,
    pub layers: Vec<LayerDetail>,
    /// Encoder output rows (`n × d_out`).
    pub enc: Matrix,
    /// Classifier hidden sigmoid activations.
    pub h: Matrix,
    /// Per-token class probabilities.
    pub probs: Matrix,
}

fn classify_detail(encoded: &Matrix, w: &TedmWeights) -> Result<(Matrix, Matrix)> {
    if encoded.cols() != w.config.d_out {
        return Err(Error::Shape(format!(
            "classifier expects {} encoded features per row, got {}",
            w.config.d_out,
            encoded.cols()
        )));
    }
    let mut h = encoded.matmul_transb(&w.cls1_w)?;
    add_row_bias(&mut h, &w.cls1_b);
    for v in h.as_mut_slice() {
        *v = sigmoid(*v);
    }
    let mut probs = h.matmul_transb(&w.cls2_w)?;
    add_row_bias(&mut probs, &w.cls2_b);
    if !probs.is_finite() {
        return Err(Error::Numeric("classifier logits are not finite".into()));
    }
    for r in 0..probs.rows() {
        softmax_in_place(probs.row_mut(r));
    }
    Ok((h, probs))
}

/// Classifier head: sigmoid hidden layer, then softmax over categories.
/// Each output row sums to one.
pub fn classify(encoded: &Matrix, w: &TedmWeights) -> Result<Matrix> {
    classify_detail(encoded, w).map(|(_, probs)| probs)
}

pub(crate) fn tedm_forward(
    tokens: &[RegionToken],
    w: &TedmWeights,
    use_pe: bool,
) -> Result<TedmCache> {
    let config = &w.config;
    if tokens.is_empty() {
        return Err(Error::Argument("encoder got an empty token sequence".into()));
    }
    if tokens.len() > config.max_seq {
        return Err(Error::Capacity {
            what: "scene token count",
            got: tokens.len(),
            max: config.max_seq,
        });
    }
    for tok in tokens {
        tok.validate(config)?;
    }
    let n = tokens.len();
    let mut data = Vec::with_capacity(n * TOKEN_DIM);
    for tok in tokens {
        data.extend(tok.input_row());
    }
    let t = Matrix::from_vec(n, TOKEN_DIM, data)?;

    let mut x0 = t.matmul_transb(&w.input_w)?;
    add_row_bias(&mut x0, &w.input_b);
    if use_pe {
        let pe = positional_encoding(config.max_seq, config.d_model);
        for (r, tok) in tokens.iter().enumerate() {
            for (v, p) in x0.row_mut(r).iter_mut().zip(pe.row(tok.position)) {
                *v += p;
            }
        }
    }

    let mut layers = Vec::with_capacity(config.layers);
    let mut x = x0.clone();
    for lw in &w.layers {
        let detail = encoder_layer_forward(&x, lw, config)?;
        x = detail.x2.clone();
        layers.push(detail);
    }

    let mut enc = x.matmul_transb(&w.out_w)?;
    add_row_bias(&mut enc, &w.out_b);
    let (h, probs) = classify_detail(&enc, w)?;
    Ok(TedmCache { t, x0, layers, enc, h, probs })
}

/// Runs a token sequence through the embedding, the encoder blocks, and the
/// output projection, returning one `d_out`-wide row per token.
///
/// Without positional encoding the result is permutation-equivariant; with it,
/// token order matters. Sequences longer than the configured capacity are
/// rejected.
pub fn encoder_forward(tokens: &[RegionToken], w: &TedmWeights, use_pe: bool) -> Result<Matrix> {
    tedm_forward(tokens, w, use_pe).map(|cache| cache.enc)
}
