//! Forward pass, loss and hand-written backward pass of the toy transformer.
//!
//! Pre-norm blocks: `x += attn(ln1(x)); x += mlp(ln2(x))`, followed by a final
//! layer norm and an untied unembedding. Every sequence in a batch has the
//! same length; rows of the activation matrices are `(sequence, position)`
//! pairs in row-major order.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut1, Axis, Zip};

use super::params::ToyParams;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct BlockCache {
    ln1: LnCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    /// Attention probabilities, one `T x T` matrix per (sequence, head).
    probs: Vec<Array2<f64>>,
    att: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

struct Cache {
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    hf: Array2<f64>,
}

/// Gradient of the mean natural-log loss over a batch.
#[derive(Debug, Clone)]
pub struct GradOutput {
    /// Mean loss in nats over all predicted positions.
    pub loss: f64,
    /// Flat gradient, same layout as [`ToyParams::data`].
    pub grad: Vec<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Array1::zeros(n);
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let xh = (row[j] - mean) * r;
            xhat[[i, j]] = xh;
            out[[i, j]] = xh * g[j] + b[j];
        }
    }
    (out, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dout: &Array2<f64>,
    cache: &LnCache,
    g: ArrayView1<f64>,
    mut dg: ArrayViewMut1<f64>,
    mut db: ArrayViewMut1<f64>,
) -> Array2<f64> {
    let (n, d) = dout.dim();
    let mut dx = Array2::zeros((n, d));
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let dy = dout.row(i);
        let xh = cache.xhat.row(i);
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dg[j] += dy[j] * xh[j];
            db[j] += dy[j];
            dxhat[j] = dy[j] * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            dx[[i, j]] = r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn add_bias(x: &mut Array2<f64>, b: ArrayView1<f64>) {
    x.rows_mut().into_iter().for_each(|mut r| r += &b);
}

fn validate_ids(params: &ToyParams, ids: &[u32], seq_len: usize) -> Result<()> {
    let cfg = params.config();
    if seq_len == 0 {
        return Err(Error::Toy("empty sequence".into()));
    }
    if seq_len > cfg.context_len {
        return Err(Error::Toy(format!(
            "sequence length {seq_len} exceeds context length {}",
            cfg.context_len
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Toy(format!(
            "token id {bad} out of range for vocab {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

/// Runs the network over `batch` sequences of `seq_len` tokens stored back to
/// back in `ids`. Returns row-wise log-probabilities and, if asked, the cache
/// needed by the backward pass.
fn run(
    params: &ToyParams,
    ids: &[u32],
    batch: usize,
    seq_len: usize,
    keep_cache: bool,
) -> (Array2<f64>, Option<Cache>) {
    let cfg = params.config();
    let lay = params.layout();
    let w = params.data();
    let (d, nh, hd) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let n = batch * seq_len;
    let scale = 1.0 / (hd as f64).sqrt();

    let wte = lay.mat(w, lay.wte);
    let wpe = lay.mat(w, lay.wpe);
    let mut x = Array2::zeros((n, d));
    for (row, &id) in ids.iter().enumerate() {
        let pos = row % seq_len;
        let mut xr = x.row_mut(row);
        xr.assign(&wte.row(id as usize));
        xr += &wpe.row(pos);
    }

    let mut blocks = Vec::with_capacity(lay.blocks.len());
    for blk in &lay.blocks {
        let (h1, ln1) = layer_norm(&x, lay.vec(w, blk.ln1_g), lay.vec(w, blk.ln1_b));
        let mut qkv = h1.dot(&lay.mat(w, blk.w_qkv));
        add_bias(&mut qkv, lay.vec(w, blk.b_qkv));

        let mut att = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(if keep_cache { batch * nh } else { 0 });
        for b in 0..batch {
            let rows = b * seq_len..(b + 1) * seq_len;
            for h in 0..nh {
                let q = qkv.slice(s![rows.clone(), h * hd..(h + 1) * hd]);
                let k = qkv.slice(s![rows.clone(), d + h * hd..d + (h + 1) * hd]);
                let v = qkv.slice(s![rows.clone(), 2 * d + h * hd..2 * d + (h + 1) * hd]);
                let mut p = q.dot(&k.t());
                causal_softmax(&mut p, scale);
                att.slice_mut(s![rows.clone(), h * hd..(h + 1) * hd])
                    .assign(&p.dot(&v));
                if keep_cache {
                    probs.push(p);
                }
            }
        }
        let mut proj = att.dot(&lay.mat(w, blk.w_o));
        add_bias(&mut proj, lay.vec(w, blk.b_o));
        x += &proj;

        let (h2, ln2) = layer_norm(&x, lay.vec(w, blk.ln2_g), lay.vec(w, blk.ln2_b));
        let mut pre_act = h2.dot(&lay.mat(w, blk.w_fc));
        add_bias(&mut pre_act, lay.vec(w, blk.b_fc));
        let act = pre_act.mapv(gelu);
        let mut mlp = act.dot(&lay.mat(w, blk.w_proj));
        add_bias(&mut mlp, lay.vec(w, blk.b_proj));
        x += &mlp;

        if keep_cache {
            blocks.push(BlockCache {
                ln1,
                h1,
                qkv,
                probs,
                att,
                ln2,
                h2,
                pre_act,
                act,
            });
        }
    }

    let (hf, lnf) = layer_norm(&x, lay.vec(w, lay.lnf_g), lay.vec(w, lay.lnf_b));
    let mut logp = hf.dot(&lay.mat(w, lay.unembed));
    log_softmax_rows(&mut logp);
    let cache = keep_cache.then_some(Cache { blocks, lnf, hf });
    (logp, cache)
}

/// Scales raw scores, masks `j > i` and normalizes each row in place.
fn causal_softmax(p: &mut Array2<f64>, scale: f64) {
    for (i, mut row) in p.rows_mut().into_iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for j in 0..=i {
            row[j] *= scale;
            max = max.max(row[j]);
        }
        let mut sum = 0.0;
        for j in 0..=i {
            row[j] = (row[j] - max).exp();
            sum += row[j];
        }
        for j in 0..=i {
            row[j] /= sum;
        }
        for j in i + 1..row.len() {
            row[j] = 0.0;
        }
    }
}

fn log_softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row -= lse;
    }
}

/// Per-position next-token log-probabilities (natural log), shape
/// `len(token_ids) x vocab_size`. Row `t` conditions on tokens `0..=t`.
pub fn forward(params: &ToyParams, token_ids: &[u32]) -> Result<Array2<f64>> {
    validate_ids(params, token_ids, token_ids.len())?;
    Ok(run(params, token_ids, 1, token_ids.len(), false).0)
}

/// Mean and per-token loss in bits for tokens `1..n`.
pub fn loss_bits(params: &ToyParams, token_ids: &[u32]) -> Result<(f64, Vec<f64>)> {
    if token_ids.len() < 2 {
        return Err(Error::Toy("loss needs at least two tokens".into()));
    }
    let logp = forward(params, token_ids)?;
    let per_token: Vec<f64> = token_ids[1..]
        .iter()
        .enumerate()
        .map(|(t, &next)| -logp[[t, next as usize]] / std::f64::consts::LN_2)
        .collect();
    let mean = per_token.iter().sum::<f64>() / per_token.len() as f64;
    Ok((mean, per_token))
}

/// Mean natural-log loss over a batch of equal-length sequences.
pub fn batch_loss(params: &ToyParams, batch: &[Vec<u32>]) -> Result<f64> {
    let (ids, seq_len) = flatten_batch(params, batch)?;
    let (logp, _) = run(params, &ids, batch.len(), seq_len, false);
    Ok(mean_nll(&logp, &ids, seq_len))
}

fn flatten_batch(params: &ToyParams, batch: &[Vec<u32>]) -> Result<(Vec<u32>, usize)> {
    let seq_len = batch
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Toy("empty batch".into()))?;
    if seq_len < 2 {
        return Err(Error::Toy("sequences need at least two tokens".into()));
    }
    if batch.iter().any(|s| s.len() != seq_len) {
        return Err(Error::Toy("batch sequences differ in length".into()));
    }
    let ids: Vec<u32> = batch.concat();
    validate_ids(params, &ids, seq_len)?;
    Ok((ids, seq_len))
}

fn mean_nll(logp: &Array2<f64>, ids: &[u32], seq_len: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for row in 0..ids.len() {
        if row % seq_len == seq_len - 1 {
            continue;
        }
        total -= logp[[row, ids[row + 1] as usize]];
        count += 1;
    }
    total / count as f64
}

/// Loss and full-parameter gradient of the mean natural-log loss.
pub fn grad(params: &ToyParams, batch: &[Vec<u32>]) -> Result<GradOutput> {
    let (ids, seq_len) = flatten_batch(params, batch)?;
    let nb = batch.len();
    let (logp, cache) = run(params, &ids, nb, seq_len, true);
    let cache = cache.expect("cache requested");
    let loss = mean_nll(&logp, &ids, seq_len);

    let cfg = params.config();
    let lay = params.layout();
    let w = params.data();
    let (d, nh, hd) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let scale = 1.0 / (hd as f64).sqrt();
    let count = (nb * (seq_len - 1)) as f64;
    let mut g = vec![0.0; lay.total()];

    // d loss / d logits = softmax - onehot, on predicted rows only.
    let mut dlogits = logp.mapv(f64::exp);
    for row in 0..ids.len() {
        let mut r = dlogits.row_mut(row);
        if row % seq_len == seq_len - 1 {
            r.fill(0.0);
        } else {
            r[ids[row + 1] as usize] -= 1.0;
            r /= count;
        }
    }

    general_mat_mul(
        1.0,
        &cache.hf.t(),
        &dlogits,
        1.0,
        &mut lay.mat_mut(&mut g, lay.unembed),
    );
    let dhf = dlogits.dot(&lay.mat(w, lay.unembed).t());
    drop(dlogits);
    let mut dx = {
        let (dg, db) = two_vecs_mut(&mut g, lay, lay.lnf_g, lay.lnf_b);
        layer_norm_backward(&dhf, &cache.lnf, lay.vec(w, lay.lnf_g), dg, db)
    };

    for (blk, bc) in lay.blocks.iter().zip(&cache.blocks).rev() {
        // MLP branch.
        general_mat_mul(1.0, &bc.act.t(), &dx, 1.0, &mut lay.mat_mut(&mut g, blk.w_proj));
        lay.vec_mut(&mut g, blk.b_proj).scaled_add(1.0, &dx.sum_axis(Axis(0)));
        let mut dpre = dx.dot(&lay.mat(w, blk.w_proj).t());
        Zip::from(&mut dpre)
            .and(&bc.pre_act)
            .for_each(|dv, &x| *dv *= gelu_grad(x));
        general_mat_mul(1.0, &bc.h2.t(), &dpre, 1.0, &mut lay.mat_mut(&mut g, blk.w_fc));
        lay.vec_mut(&mut g, blk.b_fc).scaled_add(1.0, &dpre.sum_axis(Axis(0)));
        let dh2 = dpre.dot(&lay.mat(w, blk.w_fc).t());
        {
            let (dg, db) = two_vecs_mut(&mut g, lay, blk.ln2_g, blk.ln2_b);
            dx += &layer_norm_backward(&dh2, &bc.ln2, lay.vec(w, blk.ln2_g), dg, db);
        }

        // Attention branch.
        general_mat_mul(1.0, &bc.att.t(), &dx, 1.0, &mut lay.mat_mut(&mut g, blk.w_o));
        lay.vec_mut(&mut g, blk.b_o).scaled_add(1.0, &dx.sum_axis(Axis(0)));
        let datt = dx.dot(&lay.mat(w, blk.w_o).t());
        let mut dqkv = Array2::zeros(bc.qkv.dim());
        for b in 0..nb {
            let rows = b * seq_len..(b + 1) * seq_len;
            for h in 0..nh {
                let p = &bc.probs[b * nh + h];
                let qc = h * hd..(h + 1) * hd;
                let kc = d + h * hd..d + (h + 1) * hd;
                let vc = 2 * d + h * hd..2 * d + (h + 1) * hd;
                let q = bc.qkv.slice(s![rows.clone(), qc.clone()]);
                let k = bc.qkv.slice(s![rows.clone(), kc.clone()]);
                let v = bc.qkv.slice(s![rows.clone(), vc.clone()]);
                let dout = datt.slice(s![rows.clone(), qc.clone()]);

                let mut ds = dout.dot(&v.t());
                for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                    let dot: f64 = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
                    Zip::from(&mut drow)
                        .and(&prow)
                        .for_each(|dv, &pv| *dv = pv * (*dv - dot) * scale);
                }
                dqkv.slice_mut(s![rows.clone(), vc]).assign(&p.t().dot(&dout));
                dqkv.slice_mut(s![rows.clone(), qc]).assign(&ds.dot(&k));
                dqkv.slice_mut(s![rows.clone(), kc]).assign(&ds.t().dot(&q));
            }
        }
        general_mat_mul(1.0, &bc.h1.t(), &dqkv, 1.0, &mut lay.mat_mut(&mut g, blk.w_qkv));
        lay.vec_mut(&mut g, blk.b_qkv).scaled_add(1.0, &dqkv.sum_axis(Axis(0)));
        let dh1 = dqkv.dot(&lay.mat(w, blk.w_qkv).t());
        {
            let (dg, db) = two_vecs_mut(&mut g, lay, blk.ln1_g, blk.ln1_b);
            dx += &layer_norm_backward(&dh1, &bc.ln1, lay.vec(w, blk.ln1_g), dg, db);
        }
    }

    let wte_off = lay.spec(lay.wte).offset;
    let wpe_off = lay.spec(lay.wpe).offset;
    for (row, &id) in ids.iter().enumerate() {
        let pos = row % seq_len;
        let dr = dx.row(row);
        let te = wte_off + id as usize * d;
        let pe = wpe_off + pos * d;
        for j in 0..d {
            g[te + j] += dr[j];
            g[pe + j] += dr[j];
        }
    }

    Ok(GradOutput { loss, grad: g })
}

/// Mutable views of two distinct 1-d tensors. `a` must precede `b` in the layout.
fn two_vecs_mut<'a>(
    g: &'a mut [f64],
    lay: &super::params::Layout,
    a: usize,
    b: usize,
) -> (ArrayViewMut1<'a, f64>, ArrayViewMut1<'a, f64>) {
    let ra = lay.spec(a).range();
    let rb = lay.spec(b).range();
    assert!(ra.end <= rb.start);
    let (head, tail) = g.split_at_mut(rb.start);
    (
        ArrayViewMut1::from(&mut head[ra]),
        ArrayViewMut1::from(&mut tail[..rb.end - rb.start]),
    )
}
