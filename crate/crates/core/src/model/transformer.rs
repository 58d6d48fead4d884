//! Pre-norm decoder-only transformer over pixel tokens.
//!
//! Input position 0 holds the start token and position `t > 0` holds pixel
//! `t - 1`, so output row `t` scores pixel `t` from strictly earlier pixels.

use rayon::prelude::*;

use super::params::Parameters;
use super::scalar::{gemm, Scalar, View};
use crate::error::{Error, Result};
use crate::stimuli::PalettedImage;

pub const LN_EPS: f64 = 1e-5;

/// Unnormalized log-probabilities, `rows x cols` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsGrid<T = f32> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> LogitsGrid<T> {
    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// Log-softmax of row `t`, evaluated in f64 with max subtraction.
    pub fn log_softmax_row(&self, t: usize) -> Vec<f64> {
        log_softmax(self.row(t))
    }
}

pub fn log_softmax<T: Scalar>(row: &[T]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|&x| x.as_f64() - lse).collect()
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
    let s: f64 = row.iter().map(|&x| (x.as_f64() - m).exp()).sum();
    m + s.ln()
}

/// Image negative log-likelihood in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll {
    pub total: f64,
    pub per_pixel: f64,
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

fn layer_norm<T: Scalar>(x: &[T], d: usize, gain: &[T], bias: &[T], out: &mut [T]) -> LnCache<T> {
    let n = x.len() / d;
    let mut xhat = vec![T::zero(); n * d];
    let mut rstd = vec![T::zero(); n];
    let eps = T::lit(LN_EPS);
    let inv_d = T::lit(1.0 / d as f64);
    for t in 0..n {
        let row = &x[t * d..(t + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[t] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[t * d + j] = h;
            out[t * d + j] = h * gain[j] + bias[j];
        }
    }
    LnCache { xhat, rstd }
}

/// Accumulates into `dx`, `dgain`, `dbias`.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    d: usize,
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    let n = dy.len() / d;
    let inv_d = T::lit(1.0 / d as f64);
    let mut dxhat = vec![T::zero(); d];
    for t in 0..n {
        let dyr = &dy[t * d..(t + 1) * d];
        let xh = &cache.xhat[t * d..(t + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let r = cache.rstd[t];
        for j in 0..d {
            dx[t * d + j] += r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

pub fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let th = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + th) + half * u * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * a * u * u)
}

fn add_bias_rows<T: Scalar>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn col_sum_into<T: Scalar>(x: &[T], acc: &mut [T]) {
    for row in x.chunks_exact(acc.len()) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Vec<T>,
    qkv: Vec<T>,
    /// `n_heads` stacked `n x n` attention matrices.
    probs: Vec<T>,
    attn: Vec<T>,
    ln2: LnCache<T>,
    b: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache<T> {
    inputs: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    f: Vec<T>,
}

fn check_tokens<T: Scalar>(p: &Parameters<T>, tokens: &[u16]) -> Result<()> {
    let cfg = &p.config;
    if tokens.len() > cfg.seq_len {
        return Err(Error::Shape(format!(
            "sequence of {} tokens exceeds seq_len {}",
            tokens.len(),
            cfg.seq_len
        )));
    }
    if let Some(position) = tokens.iter().position(|&t| usize::from(t) >= cfg.vocab_k) {
        return Err(Error::TokenOutOfRange {
            token: usize::from(tokens[position]),
            position,
            vocab: cfg.vocab_k,
        });
    }
    Ok(())
}

fn forward_impl<T: Scalar>(p: &Parameters<T>, tokens: &[u16], keep: bool) -> (Vec<T>, Option<ForwardCache<T>>) {
    let cfg = &p.config;
    let (n, d, k, nh, dh) = (tokens.len(), cfg.d_embed, cfg.vocab_k, cfg.n_heads, cfg.head_dim());
    let scale = T::lit(1.0 / (dh as f64).sqrt());

    let inputs: Vec<usize> = std::iter::once(cfg.start_token())
        .chain(tokens.iter().take(n.saturating_sub(1)).map(|&t| usize::from(t)))
        .take(n)
        .collect();

    let mut x = vec![T::zero(); n * d];
    for (t, &id) in inputs.iter().enumerate() {
        let e = &p.tok_emb[id * d..(id + 1) * d];
        let pe = &p.pos_emb[t * d..(t + 1) * d];
        for j in 0..d {
            x[t * d + j] = e[j] + pe[j];
        }
    }

    let mut layer_caches = Vec::with_capacity(if keep { cfg.n_layers } else { 0 });
    for lp in &p.layers {
        let mut a = vec![T::zero(); n * d];
        let ln1 = layer_norm(&x, d, &lp.ln1_gain, &lp.ln1_bias, &mut a);

        let mut qkv = vec![T::zero(); n * 3 * d];
        gemm(T::one(), &a, View::dense(n, d), &lp.qkv_weight, View::dense(d, 3 * d), T::zero(), &mut qkv, View::dense(n, 3 * d));
        add_bias_rows(&mut qkv, &lp.qkv_bias);

        let mut probs = vec![T::zero(); if keep { nh * n * n } else { n * n }];
        let mut attn = vec![T::zero(); n * d];
        for h in 0..nh {
            let off = if keep { h * n * n } else { 0 };
            let pv = View::block(off, n, n, n);
            let q = View::block(h * dh, n, dh, 3 * d);
            let kk = View::block(d + h * dh, n, dh, 3 * d);
            let v = View::block(2 * d + h * dh, n, dh, 3 * d);
            gemm(scale, &qkv, q, &qkv, kk.t(), T::zero(), &mut probs, pv);
            for i in 0..n {
                let row = &mut probs[off + i * n..off + (i + 1) * n];
                let m = row[..=i].iter().copied().fold(T::neg_infinity(), T::max);
                let mut s = T::zero();
                for e in &mut row[..=i] {
                    *e = (*e - m).exp();
                    s += *e;
                }
                let inv = T::one() / s;
                for e in &mut row[..=i] {
                    *e *= inv;
                }
                for e in &mut row[i + 1..] {
                    *e = T::zero();
                }
            }
            gemm(T::one(), &probs, pv, &qkv, v, T::zero(), &mut attn, View::block(h * dh, n, dh, d));
        }

        gemm(T::one(), &attn, View::dense(n, d), &lp.attn_out_weight, View::dense(d, d), T::one(), &mut x, View::dense(n, d));
        add_bias_rows(&mut x, &lp.attn_out_bias);

        let mut b = vec![T::zero(); n * d];
        let ln2 = layer_norm(&x, d, &lp.ln2_gain, &lp.ln2_bias, &mut b);
        let mut u = vec![T::zero(); n * 4 * d];
        gemm(T::one(), &b, View::dense(n, d), &lp.fc_weight, View::dense(d, 4 * d), T::zero(), &mut u, View::dense(n, 4 * d));
        add_bias_rows(&mut u, &lp.fc_bias);
        let g: Vec<T> = u.iter().map(|&v| gelu(v)).collect();
        gemm(T::one(), &g, View::dense(n, 4 * d), &lp.proj_weight, View::dense(4 * d, d), T::one(), &mut x, View::dense(n, d));
        add_bias_rows(&mut x, &lp.proj_bias);

        if keep {
            layer_caches.push(LayerCache {
                ln1,
                a,
                qkv,
                probs,
                attn,
                ln2,
                b,
                u,
                g,
            });
        }
    }

    let mut f = vec![T::zero(); n * d];
    let lnf = layer_norm(&x, d, &p.lnf_gain, &p.lnf_bias, &mut f);
    let mut logits = vec![T::zero(); n * k];
    gemm(T::one(), &f, View::dense(n, d), &p.head_weight, View::dense(d, k), T::zero(), &mut logits, View::dense(n, k));
    add_bias_rows(&mut logits, &p.head_bias);

    let cache = keep.then_some(ForwardCache {
        inputs,
        layers: layer_caches,
        lnf,
        f,
    });
    (logits, cache)
}

/// Reverse-mode pass; gradients are accumulated into `grads`.
fn backward_impl<T: Scalar>(p: &Parameters<T>, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut Parameters<T>) {
    let cfg = &p.config;
    let (d, k, nh, dh) = (cfg.d_embed, cfg.vocab_k, cfg.n_heads, cfg.head_dim());
    let n = cache.inputs.len();
    let scale = T::lit(1.0 / (dh as f64).sqrt());

    gemm(T::one(), &cache.f, View::dense(n, d).t(), dlogits, View::dense(n, k), T::one(), &mut grads.head_weight, View::dense(d, k));
    col_sum_into(dlogits, &mut grads.head_bias);
    let mut df = vec![T::zero(); n * d];
    gemm(T::one(), dlogits, View::dense(n, k), &p.head_weight, View::dense(d, k).t(), T::zero(), &mut df, View::dense(n, d));

    let mut dx = vec![T::zero(); n * d];
    layer_norm_backward(&df, &cache.lnf, d, &p.lnf_gain, &mut grads.lnf_gain, &mut grads.lnf_bias, &mut dx);

    let mut dp = vec![T::zero(); n * n];
    for (li, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &p.layers[li];
        let lg = &mut grads.layers[li];

        // feed-forward block
        gemm(T::one(), &lc.g, View::dense(n, 4 * d).t(), &dx, View::dense(n, d), T::one(), &mut lg.proj_weight, View::dense(4 * d, d));
        col_sum_into(&dx, &mut lg.proj_bias);
        let mut du = vec![T::zero(); n * 4 * d];
        gemm(T::one(), &dx, View::dense(n, d), &lp.proj_weight, View::dense(4 * d, d).t(), T::zero(), &mut du, View::dense(n, 4 * d));
        for (g, &u) in du.iter_mut().zip(&lc.u) {
            *g *= gelu_grad(u);
        }
        gemm(T::one(), &lc.b, View::dense(n, d).t(), &du, View::dense(n, 4 * d), T::one(), &mut lg.fc_weight, View::dense(d, 4 * d));
        col_sum_into(&du, &mut lg.fc_bias);
        let mut db = vec![T::zero(); n * d];
        gemm(T::one(), &du, View::dense(n, 4 * d), &lp.fc_weight, View::dense(d, 4 * d).t(), T::zero(), &mut db, View::dense(n, d));
        layer_norm_backward(&db, &lc.ln2, d, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias, &mut dx);

        // attention block
        gemm(T::one(), &lc.attn, View::dense(n, d).t(), &dx, View::dense(n, d), T::one(), &mut lg.attn_out_weight, View::dense(d, d));
        col_sum_into(&dx, &mut lg.attn_out_bias);
        let mut dattn = vec![T::zero(); n * d];
        gemm(T::one(), &dx, View::dense(n, d), &lp.attn_out_weight, View::dense(d, d).t(), T::zero(), &mut dattn, View::dense(n, d));

        let mut dqkv = vec![T::zero(); n * 3 * d];
        for h in 0..nh {
            let pv = View::block(h * n * n, n, n, n);
            let dy = View::block(h * dh, n, dh, d);
            let q = View::block(h * dh, n, dh, 3 * d);
            let kk = View::block(d + h * dh, n, dh, 3 * d);
            let v = View::block(2 * d + h * dh, n, dh, 3 * d);

            gemm(T::one(), &dattn, dy, &lc.qkv, v.t(), T::zero(), &mut dp, View::dense(n, n));
            gemm(T::one(), &lc.probs, pv.t(), &dattn, dy, T::zero(), &mut dqkv, v);
            for i in 0..n {
                let prow = &lc.probs[h * n * n + i * n..h * n * n + (i + 1) * n];
                let drow = &mut dp[i * n..(i + 1) * n];
                let dot: T = prow[..=i].iter().zip(&drow[..=i]).map(|(&a, &b)| a * b).sum();
                for j in 0..=i {
                    drow[j] = prow[j] * (drow[j] - dot);
                }
                for e in &mut drow[i + 1..] {
                    *e = T::zero();
                }
            }
            gemm(scale, &dp, View::dense(n, n), &lc.qkv, kk, T::zero(), &mut dqkv, q);
            gemm(scale, &dp, View::dense(n, n).t(), &lc.qkv, q, T::zero(), &mut dqkv, kk);
        }
        gemm(T::one(), &lc.a, View::dense(n, d).t(), &dqkv, View::dense(n, 3 * d), T::one(), &mut lg.qkv_weight, View::dense(d, 3 * d));
        col_sum_into(&dqkv, &mut lg.qkv_bias);
        let mut da = vec![T::zero(); n * d];
        gemm(T::one(), &dqkv, View::dense(n, 3 * d), &lp.qkv_weight, View::dense(d, 3 * d).t(), T::zero(), &mut da, View::dense(n, d));
        layer_norm_backward(&da, &lc.ln1, d, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias, &mut dx);
    }

    for (t, &id) in cache.inputs.iter().enumerate() {
        for j in 0..d {
            grads.tok_emb[id * d + j] += dx[t * d + j];
            grads.pos_emb[t * d + j] += dx[t * d + j];
        }
    }
}

/// Logits for every pixel of a (possibly partial) token sequence.
pub fn forward_logits<T: Scalar>(params: &Parameters<T>, tokens: &[u16]) -> Result<LogitsGrid<T>> {
    check_tokens(params, tokens)?;
    let (data, _) = forward_impl(params, tokens, false);
    Ok(LogitsGrid {
        rows: tokens.len(),
        cols: params.config.vocab_k,
        data,
    })
}

/// `-sum_t log p(token_t | tokens_<t)` from a logits grid.
pub fn sequence_nll<T: Scalar>(logits: &[T], tokens: &[u16], k: usize) -> f64 {
    tokens
        .iter()
        .enumerate()
        .map(|(t, &tok)| {
            let row = &logits[t * k..(t + 1) * k];
            log_sum_exp(row) - row[usize::from(tok)].as_f64()
        })
        .sum()
}

fn check_image<T: Scalar>(params: &Parameters<T>, image: &PalettedImage) -> Result<()> {
    if image.len() != params.config.seq_len {
        return Err(Error::Shape(format!(
            "image has {} pixels, model expects {}",
            image.len(),
            params.config.seq_len
        )));
    }
    check_tokens(params, &image.tokens)
}

/// Total NLL of a full image in nats, plus nats per pixel.
pub fn nll<T: Scalar>(params: &Parameters<T>, image: &PalettedImage) -> Result<Nll> {
    check_image(params, image)?;
    let (logits, _) = forward_impl(params, &image.tokens, false);
    let total = sequence_nll(&logits, &image.tokens, params.config.vocab_k);
    Ok(Nll {
        total,
        per_pixel: total / image.len() as f64,
    })
}

/// NLL of many images, evaluated in parallel; results keep input order.
pub fn nll_many<T: Scalar>(params: &Parameters<T>, images: &[&PalettedImage]) -> Result<Vec<Nll>> {
    images.par_iter().map(|img| nll(params, img)).collect()
}

/// Mean per-token NLL over every (image, pixel) pair and its exact gradient.
///
/// Per-image gradients are computed independently and summed in batch order,
/// so the result does not depend on the thread count.
pub fn loss_and_gradients<T: Scalar>(params: &Parameters<T>, batch: &[&PalettedImage]) -> Result<(f64, Parameters<T>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for img in batch {
        check_image(params, img)?;
    }
    let k = params.config.vocab_k;
    let n = params.config.seq_len;
    let scale = 1.0 / (batch.len() * n) as f64;

    let parts: Vec<(f64, Parameters<T>)> = batch
        .par_iter()
        .map(|img| {
            let (logits, cache) = forward_impl(params, &img.tokens, true);
            let cache = cache.expect("cache requested");
            let mut dlogits = vec![T::zero(); n * k];
            let mut total = 0.0;
            for (t, &tok) in img.tokens.iter().enumerate() {
                let row = &logits[t * k..(t + 1) * k];
                let lse = log_sum_exp(row);
                let target = usize::from(tok);
                total += lse - row[target].as_f64();
                for j in 0..k {
                    let prob = (row[j].as_f64() - lse).exp();
                    let ind = if j == target { 1.0 } else { 0.0 };
                    dlogits[t * k + j] = T::lit((prob - ind) * scale);
                }
            }
            let mut grads = params.zeros_like();
            backward_impl(params, &cache, &dlogits, &mut grads);
            (total, grads)
        })
        .collect();

    let mut iter = parts.into_iter();
    let (mut total, mut grads) = iter.next().expect("non-empty batch");
    for (t, g) in iter {
        total += t;
        grads.add_assign(&g);
    }
    Ok((total * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use crate::rng;
    use rand::Rng as _;

    fn cfg(n_layers: usize, n_heads: usize, d: usize, k: usize, seq: usize) -> ModelConfig {
        ModelConfig {
            n_layers,
            n_heads,
            d_embed: d,
            vocab_k: k,
            seq_len: seq,
            init_seed: 11,
        }
    }

    fn random_image(side: usize, k: usize, seed: u64) -> PalettedImage {
        let mut r = rng::seeded(seed);
        let tokens = (0..side * side).map(|_| r.random_range(0..k) as u16).collect();
        PalettedImage::new(side, side, tokens, "t").unwrap()
    }

    #[test]
    fn gelu_matches_formula_and_derivative() {
        for &u in &[-3.0f64, -0.5, 0.0, 0.3, 2.0] {
            let want = 0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh());
            assert!((gelu(u) - want).abs() < 1e-12);
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((gelu_grad(u) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_contract_and_normalization() {
        let p = init_model(cfg(2, 2, 16, 8, 16)).unwrap();
        let img = random_image(4, 8, 1);
        for len in [1usize, 5, 16] {
            let lg = forward_logits(&p, &img.tokens[..len]).unwrap();
            assert_eq!((lg.rows, lg.cols), (len, 8));
            assert!(lg.data.iter().all(|x| x.is_finite()));
            for t in 0..len {
                let s: f64 = lg.log_softmax_row(t).iter().map(|v| v.exp()).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = init_model(cfg(1, 1, 8, 4, 4)).unwrap();
        assert!(matches!(forward_logits(&p, &[0, 9]), Err(Error::TokenOutOfRange { position: 1, .. })));
        assert!(forward_logits(&p, &[0; 5]).is_err());
        let img = PalettedImage::new(1, 3, vec![0, 1, 2], "t").unwrap();
        assert!(matches!(nll(&p, &img), Err(Error::Shape(_))));
        assert!(matches!(loss_and_gradients(&p, &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn uniform_model_nll() {
        let mut p = init_model(cfg(1, 1, 8, 16, 64)).unwrap();
        p.head_weight.iter_mut().for_each(|w| *w = 0.0);
        let img = random_image(8, 16, 4);
        let got = nll(&p, &img).unwrap();
        assert!((got.total - 64.0 * 16f64.ln()).abs() < 1e-9);
        assert!((got.per_pixel - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn causal_rows_unchanged_by_later_tokens() {
        let p = init_model(cfg(2, 2, 16, 8, 16)).unwrap();
        let base = random_image(4, 8, 2).tokens;
        let ref_logits = forward_logits(&p, &base).unwrap();
        for t in 0..16 {
            let mut pert = base.clone();
            pert[t] = (pert[t] + 3) % 8;
            let lg = forward_logits(&p, &pert).unwrap();
            // rows 0..=t never see token t
            assert_eq!(&lg.data[..(t + 1) * 8], &ref_logits.data[..(t + 1) * 8]);
            if t + 1 < 16 {
                assert_ne!(lg.row(t + 1), ref_logits.row(t + 1));
            }
        }
    }

    #[test]
    fn loss_is_mean_of_nll() {
        let p = init_model(cfg(2, 2, 16, 8, 16)).unwrap();
        let a = random_image(4, 8, 5);
        let b = random_image(4, 8, 6);
        let (loss, _) = loss_and_gradients(&p, &[&a, &b]).unwrap();
        let want = (nll(&p, &a).unwrap().total + nll(&p, &b).unwrap().total) / 2.0 / 16.0;
        assert!((loss - want).abs() < 1e-6);
    }

    #[test]
    fn duplicate_batch_has_single_image_gradient() {
        let p = init_model(cfg(2, 2, 16, 8, 16)).unwrap();
        let a = random_image(4, 8, 7);
        let (_, g1) = loss_and_gradients(&p, &[&a]).unwrap();
        let (_, g2) = loss_and_gradients(&p, &[&a, &a]).unwrap();
        for (x, y) in g1.tensors().into_iter().zip(g2.tensors()) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences_f64() {
        let p = init_model(cfg(2, 2, 8, 6, 9)).unwrap().cast::<f64>();
        let imgs = [random_image(3, 6, 8), random_image(3, 6, 9)];
        let batch: Vec<&PalettedImage> = imgs.iter().collect();
        let (_, g) = loss_and_gradients(&p, &batch).unwrap();
        let total = p.num_params();
        let mut r = rng::seeded(1);
        let h = 1e-5;
        for _ in 0..300 {
            let i = r.random_range(0..total);
            let mut q = p.clone();
            let x = q.get_flat(i);
            q.set_flat(i, x + h);
            let up = loss_and_gradients(&q, &batch).unwrap().0;
            q.set_flat(i, x - h);
            let down = loss_and_gradients(&q, &batch).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let an = g.get_flat(i);
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(an.abs()) + 1e-9, "{}: fd {fd} vs {an}", p.flat_name(i));
        }
    }
}
