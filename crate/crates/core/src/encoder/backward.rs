//! Hand-derived backward pass through the rescorer, validated against finite
//! differences in this module's tests.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::config::RegionToken;
use super::forward::{head_cols, tedm_forward, LnDetail, TedmCache};
use super::weights::TedmWeights;

fn column_sum(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for (acc, v) in out.row_mut(0).iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    out
}

fn scatter_head(dst: &mut Matrix, src: &Matrix, head: usize, d_k: usize) {
    for r in 0..src.rows() {
        for c in 0..d_k {
            dst.set(r, head * d_k + c, src.get(r, c));
        }
    }
}

/// Backward through one row-wise layer norm. Returns the gradient at the
/// pre-norm input plus the gain and bias gradients.
fn layer_norm_backward(dout: &Matrix, ln: &LnDetail, gain: &Matrix) -> (Matrix, Matrix, Matrix) {
    let (n, d) = dout.shape();
    let mut dy = Matrix::zeros(n, d);
    let mut dgain = Matrix::zeros(1, d);
    let mut dbias = Matrix::zeros(1, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..n {
        let s = ln.inv_std[r];
        let xhat = ln.xhat.row(r);
        let dout_r = dout.row(r);
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..d {
            dgain.set(0, c, dgain.get(0, c) + dout_r[c] * xhat[c]);
            dbias.set(0, c, dbias.get(0, c) + dout_r[c]);
            let v = dout_r[c] * gain.get(0, c);
            dxhat[c] = v;
            mean_dxhat += v;
            mean_dxhat_xhat += v * xhat[c];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for c in 0..d {
            dy.set(r, c, s * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat));
        }
    }
    (dy, dgain, dbias)
}

/// Gradient of a scene loss with respect to every weight, given the forward
/// cache and the loss gradient at the classifier logits (`n × classes`).
/// The result reuses [`TedmWeights`] as a same-shaped gradient container.
pub(crate) fn tedm_backward(
    w: &TedmWeights,
    cache: &TedmCache,
    dlogits: &Matrix,
) -> Result<TedmWeights> {
    let config = &w.config;
    let n = dlogits.rows();
    if dlogits.shape() != (cache.probs.rows(), config.classes) {
        return Err(Error::Shape(format!(
            "logit gradient has shape {:?}, forward produced {:?}",
            dlogits.shape(),
            cache.probs.shape()
        )));
    }
    let mut g = TedmWeights::zeros(config)?;

    // Classifier head: softmax logits ← sigmoid hidden ← encoder output.
    g.cls2_w = dlogits.matmul_transa(&cache.h)?;
    g.cls2_b = column_sum(dlogits);
    let mut dzh = dlogits.matmul(&w.cls2_w)?;
    for (v, &hv) in dzh.as_mut_slice().iter_mut().zip(cache.h.as_slice()) {
        *v *= hv * (1.0 - hv);
    }
    g.cls1_w = dzh.matmul_transa(&cache.enc)?;
    g.cls1_b = column_sum(&dzh);
    let denc = dzh.matmul(&w.cls1_w)?;

    let x_last = cache.layers.last().map(|l| &l.x2).unwrap_or(&cache.x0);
    g.out_w = denc.matmul_transa(x_last)?;
    g.out_b = column_sum(&denc);
    let mut dx = denc.matmul(&w.out_w)?;

    let d_k = config.d_k();
    let scale = 1.0 / (d_k as f64).sqrt();
    for l in (0..cache.layers.len()).rev() {
        let lw = &w.layers[l];
        let lc = &cache.layers[l];
        let x_in = if l == 0 { &cache.x0 } else { &cache.layers[l - 1].x2 };

        // Second norm, feed-forward branch, and its residual.
        let (dy2, dg2, db2) = layer_norm_backward(&dx, &lc.ln2, &lw.ln2_g);
        g.layers[l].ln2_g = dg2;
        g.layers[l].ln2_b = db2;
        g.layers[l].ff2_w = dy2.matmul_transa(&lc.h1)?;
        g.layers[l].ff2_b = column_sum(&dy2);
        let mut dz1 = dy2.matmul(&lw.ff2_w)?;
        for (v, &hv) in dz1.as_mut_slice().iter_mut().zip(lc.h1.as_slice()) {
            if hv <= 0.0 {
                *v = 0.0;
            }
        }
        g.layers[l].ff1_w = dz1.matmul_transa(&lc.x1)?;
        g.layers[l].ff1_b = column_sum(&dz1);
        let mut dx1 = dz1.matmul(&lw.ff1_w)?;
        dx1.add_assign(&dy2)?;

        // First norm, attention branch, and its residual.
        let (dy1, dg1, db1) = layer_norm_backward(&dx1, &lc.ln1, &lw.ln1_g);
        g.layers[l].ln1_g = dg1;
        g.layers[l].ln1_b = db1;
        g.layers[l].wo = dy1.matmul_transa(&lc.attn.concat)?;
        let dconcat = dy1.matmul(&lw.wo)?;

        let mut dq = Matrix::zeros(n, config.d_model);
        let mut dk = Matrix::zeros(n, config.d_model);
        let mut dv = Matrix::zeros(n, config.d_model);
        for h in 0..config.heads {
            let qh = head_cols(&lc.attn.q, h, d_k);
            let kh = head_cols(&lc.attn.k, h, d_k);
            let vh = head_cols(&lc.attn.v, h, d_k);
            let ah = &lc.attn.heads[h];
            let doh = head_cols(&dconcat, h, d_k);

            let dah = doh.matmul_transb(&vh)?;
            let dvh = ah.matmul_transa(&doh)?;
            // Softmax rows: dS = A ⊙ (dA − ⟨dA, A⟩ per row), then the 1/√d_k.
            let mut dsh = Matrix::zeros(n, n);
            for r in 0..n {
                let arow = ah.row(r);
                let darow = dah.row(r);
                let dot: f64 = arow.iter().zip(darow).map(|(a, da)| a * da).sum();
                for c in 0..n {
                    dsh.set(r, c, arow[c] * (darow[c] - dot));
                }
            }
            dsh.scale(scale);
            let dqh = dsh.matmul(&kh)?;
            let dkh = dsh.matmul_transa(&qh)?;
            scatter_head(&mut dq, &dqh, h, d_k);
            scatter_head(&mut dk, &dkh, h, d_k);
            scatter_head(&mut dv, &dvh, h, d_k);
        }
        g.layers[l].wq = dq.matmul_transa(x_in)?;
        g.layers[l].wk = dk.matmul_transa(x_in)?;
        g.layers[l].wv = dv.matmul_transa(x_in)?;

        let mut dx_in = dy1;
        dx_in.add_assign(&dq.matmul(&lw.wq)?)?;
        dx_in.add_assign(&dk.matmul(&lw.wk)?)?;
        dx_in.add_assign(&dv.matmul(&lw.wv)?)?;
        dx = dx_in;
    }

    // Input projection; the positional encoding is additive, so it
    // contributes nothing to the weight gradients.
    g.input_w = dx.matmul_transa(&cache.t)?;
    g.input_b = column_sum(&dx);
    Ok(g)
}

/// Summed cross-entropy of one scene's tokens against their labels, plus the
/// gradient of that sum in every weight. Used per-scene by training; the
/// caller averages over the dataset's token count.
pub(crate) fn scene_ce_and_grad(
    w: &TedmWeights,
    tokens: &[RegionToken],
    labels: &[usize],
    use_pe: bool,
) -> Result<(f64, TedmWeights)> {
    if labels.len() != tokens.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} tokens",
            labels.len(),
            tokens.len()
        )));
    }
    let classes = w.config.classes;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let cache = tedm_forward(tokens, w, use_pe)?;
    let mut loss = 0.0;
    let mut dlogits = cache.probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        loss -= cache.probs.get(r, label).ln();
        dlogits.set(r, label, dlogits.get(r, label) - 1.0);
    }
    let grad = tedm_backward(w, &cache, &dlogits)?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::POOLED_DIM;
    use crate::encoder::EncoderConfig;
    use crate::numerics::{grad_check, grad_check_indices, RngState};

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            layers: 1,
            heads: 2,
            d_ff: 8,
            d_out: 4,
            hidden_units: 5,
            classes: 4,
            max_seq: 6,
        }
    }

    fn random_tokens(rng: &mut RngState, n: usize) -> Vec<RegionToken> {
        (0..n)
            .map(|i| RegionToken {
                pooled: (0..POOLED_DIM).map(|_| rng.normal()).collect(),
                nbox: [
                    rng.uniform(0.0, 0.5),
                    rng.uniform(0.0, 0.5),
                    rng.uniform(0.1, 0.5),
                    rng.uniform(0.1, 0.5),
                ],
                position: i,
            })
            .collect()
    }

    /// Mean token cross-entropy as a closure over the flat weight vector,
    /// in the exact form `grad_check` wants.
    fn ce_objective<'a>(
        config: &'a EncoderConfig,
        tokens: &'a [RegionToken],
        labels: &'a [usize],
        use_pe: bool,
    ) -> impl FnMut(&[f64]) -> crate::error::Result<(f64, Vec<f64>)> + 'a {
        move |flat: &[f64]| {
            let w = TedmWeights::from_flat(config, flat)?;
            let (loss, grad) = scene_ce_and_grad(&w, tokens, labels, use_pe)?;
            let n = tokens.len() as f64;
            let mut flat_grad = grad.to_flat();
            for v in &mut flat_grad {
                *v /= n;
            }
            Ok((loss / n, flat_grad))
        }
    }

    #[test]
    fn every_weight_gradient_survives_finite_differences_on_a_small_model() {
        let config = tiny_config();
        for seed in [31_u64, 32, 33] {
            let mut rng = RngState::new(seed);
            let w = TedmWeights::init(&config, &mut rng).unwrap();
            let tokens = random_tokens(&mut rng, 4);
            let labels: Vec<usize> =
                (0..4).map(|_| rng.below(config.classes)).collect();
            let flat = w.to_flat();
            let use_pe = seed % 2 == 0;
            let err = grad_check(
                ce_objective(&config, &tokens, &labels, use_pe),
                &flat,
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: worst relative error {err}");
        }
    }

    #[test]
    fn full_size_model_gradient_spot_check() {
        let config = EncoderConfig::default();
        let mut rng = RngState::new(40);
        let w = TedmWeights::init(&config, &mut rng).unwrap();
        let tokens = random_tokens(&mut rng, 6);
        let labels: Vec<usize> = (0..6).map(|_| rng.below(config.classes)).collect();
        let flat = w.to_flat();

        // A few coordinates from every parameter tensor.
        let schema = TedmWeights::schema(&config);
        let mut indices = Vec::new();
        for (i, (_, r, c)) in schema.entries().iter().enumerate() {
            let base = schema.offset_of(i);
            for _ in 0..3 {
                indices.push(base + rng.below(r * c));
            }
        }
        let err = grad_check_indices(
            ce_objective(&config, &tokens, &labels, true),
            &flat,
            1e-5,
            &indices,
        )
        .unwrap();
        assert!(err <= 1e-4, "worst relative error {err}");
    }

    #[test]
    fn gradient_matches_loss_shape_requirements() {
        let config = tiny_config();
        let mut rng = RngState::new(50);
        let w = TedmWeights::init(&config, &mut rng).unwrap();
        let tokens = random_tokens(&mut rng, 3);

        // Label/token count mismatch.
        assert!(scene_ce_and_grad(&w, &tokens, &[0, 1], true).is_err());
        // Label out of range.
        assert!(scene_ce_and_grad(&w, &tokens, &[0, 1, 9], true).is_err());

        let (loss, grad) = scene_ce_and_grad(&w, &tokens, &[0, 1, 2], true).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert_eq!(grad.to_flat().len(), w.to_flat().len());
    }
}
