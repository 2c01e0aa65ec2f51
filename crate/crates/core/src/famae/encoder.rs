use rand::Rng;

use super::mask::MaskSample;
use super::params::{lit, EncoderParameters, Real};
use super::FamaeError;

const LN_EPS: f64 = 1e-5;

/// Activations of one layer kept for the backward pass.
struct LayerCache<T> {
    a: Vec<T>,
    xhat1: Vec<T>,
    istd1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads x n x n` attention weights.
    probs: Vec<T>,
    ctx: Vec<T>,
    drop1: Option<Vec<T>>,
    c: Vec<T>,
    xhat2: Vec<T>,
    istd2: Vec<T>,
    u: Vec<T>,
    r: Vec<T>,
    drop2: Option<Vec<T>>,
}

/// Result of a forward pass over one window.
pub(crate) struct Forward<T> {
    rows: Vec<Vec<usize>>,
    mask: MaskSample,
    first_position: usize,
    drop_in: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    xhat_f: Vec<T>,
    istd_f: T,
    /// Final hidden state at the target position.
    pub h: Vec<T>,
}

fn check_row<T: Real>(params: &EncoderParameters<T>, row: &[usize]) -> Result<(), FamaeError> {
    if row.len() != params.num_fields() {
        return Err(FamaeError::Config(format!(
            "item has {} fields, model expects {}",
            row.len(),
            params.num_fields()
        )));
    }
    for (field, (&value, &size)) in row.iter().zip(&params.vocab_sizes).enumerate() {
        if value >= size {
            return Err(FamaeError::OutOfVocabulary { field, value, size });
        }
    }
    Ok(())
}

/// Input vector of one position: its positional encoding plus, per field, either the
/// field's mask token (masked fields) or the embedding of the item's value.
pub fn input_token<T: Real>(
    params: &EncoderParameters<T>,
    fields: &[usize],
    mask: &MaskSample,
    position: usize,
) -> Result<Vec<T>, FamaeError> {
    check_row(params, fields)?;
    if position >= params.max_len {
        return Err(FamaeError::Config(format!(
            "position {position} beyond max_len {}",
            params.max_len
        )));
    }
    let mut x = params.position(position).to_vec();
    for (j, &value) in fields.iter().enumerate() {
        let e = if mask.contains(j) {
            params.mask_token(j)
        } else {
            params.embedding(j, value)
        };
        x.iter_mut().zip(e).for_each(|(a, &b)| *a = *a + b);
    }
    Ok(x)
}

/// Eval-mode hidden state at the target position for `history` followed by `target`.
pub fn encode<T: Real>(
    params: &EncoderParameters<T>,
    history: &[&[usize]],
    target: &[usize],
    mask: &MaskSample,
) -> Result<Vec<T>, FamaeError> {
    let mut rows: Vec<&[usize]> = history.to_vec();
    rows.push(target);
    Ok(forward(params, &rows, mask, None::<&mut rand_chacha::ChaCha8Rng>)?.h)
}

fn dropout_mask<T: Real>(n: usize, p: f64, rng: &mut Option<&mut impl Rng>) -> Option<Vec<T>> {
    let rng = rng.as_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep: T = lit(1.0 / (1.0 - p));
    Some(
        (0..n)
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect(),
    )
}

fn apply_mask<T: Real>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(a, &b)| *a = *a * b);
    }
}

/// Row-wise layer norm. Returns the normalized rows (before gain and bias) and inverse stds.
fn layer_norm<T: Real>(x: &[T], d: usize, g: &[T], b: &[T], out: &mut [T]) -> (Vec<T>, Vec<T>) {
    let n = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut istd = Vec::with_capacity(n);
    let inv_d: T = lit(1.0 / d as f64);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let s = T::one() / (var + lit(LN_EPS)).sqrt();
        istd.push(s);
        for i in 0..d {
            let xh = (row[i] - mean) * s;
            xhat[r * d + i] = xh;
            out[r * d + i] = g[i] * xh + b[i];
        }
    }
    (xhat, istd)
}

/// Accumulates layer-norm gradients for rows whose output gradient is `dy`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    istd: &[T],
    d: usize,
    g: &[T],
    dx: &mut [T],
    dg: &mut [T],
    db: &mut [T],
) {
    let inv_d: T = lit(1.0 / d as f64);
    for (r, &s) in istd.iter().enumerate() {
        let dyr = &dy[r * d..(r + 1) * d];
        let xr = &xhat[r * d..(r + 1) * d];
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for i in 0..d {
            dg[i] = dg[i] + dyr[i] * xr[i];
            db[i] = db[i] + dyr[i];
            let dxh = dyr[i] * g[i];
            mean_dxh = mean_dxh + dxh;
            mean_dxh_xh = mean_dxh_xh + dxh * xr[i];
        }
        mean_dxh = mean_dxh * inv_d;
        mean_dxh_xh = mean_dxh_xh * inv_d;
        for i in 0..d {
            let dxh = dyr[i] * g[i];
            dx[r * d + i] = dx[r * d + i] + s * (dxh - mean_dxh - xr[i] * mean_dxh_xh);
        }
    }
}

/// `y = x W + b` for `n` rows; `W` is `inp x out`.
fn linear<T: Real>(x: &[T], inp: usize, w: &[T], b: &[T], out: usize) -> Vec<T> {
    let n = x.len() / inp;
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    for r in 0..n {
        let yr = &mut y[r * out..(r + 1) * out];
        for (i, &xv) in x[r * inp..(r + 1) * inp].iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let wr = &w[i * out..(i + 1) * out];
            yr.iter_mut().zip(wr).for_each(|(a, &wv)| *a = *a + xv * wv);
        }
    }
    y
}

/// Backward of [`linear`]: accumulates `dW`, `db` and `dx`.
#[allow(clippy::too_many_arguments)]
fn linear_backward<T: Real>(
    x: &[T],
    dy: &[T],
    inp: usize,
    out: usize,
    w: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: &mut [T],
) {
    let n = x.len() / inp;
    for r in 0..n {
        let dyr = &dy[r * out..(r + 1) * out];
        if dyr.iter().all(|&v| v == T::zero()) {
            continue;
        }
        db.iter_mut().zip(dyr).for_each(|(a, &b)| *a = *a + b);
        for i in 0..inp {
            let xv = x[r * inp + i];
            let wr = &w[i * out..(i + 1) * out];
            let dwr = &mut dw[i * out..(i + 1) * out];
            let mut acc = T::zero();
            for o in 0..out {
                dwr[o] = dwr[o] + xv * dyr[o];
                acc = acc + wr[o] * dyr[o];
            }
            dx[r * inp + i] = dx[r * inp + i] + acc;
        }
    }
}

fn slice<T>(v: &[T], at: usize, len: usize) -> &[T] {
    &v[at..at + len]
}

/// Runs the encoder over `rows` (history items then the target, at most `max_len`) with the
/// target's `mask` fields hidden. Dropout is active only when `rng` is given.
pub(crate) fn forward<T: Real>(
    params: &EncoderParameters<T>,
    rows: &[&[usize]],
    mask: &MaskSample,
    mut rng: Option<&mut impl Rng>,
) -> Result<Forward<T>, FamaeError> {
    let n = rows.len();
    if n < 2 {
        return Err(FamaeError::EmptyHistory);
    }
    if n > params.max_len {
        return Err(FamaeError::Config(format!(
            "window of {n} positions exceeds max_len {}",
            params.max_len
        )));
    }
    let d = params.dim();
    let heads = params.config.heads;
    let dh = d / heads;
    let f = params.config.ffn_dim;
    let p = params.config.dropout;
    let w = &params.values;
    let first_position = params.max_len - n;
    let none = MaskSample { fields: Vec::new() };

    let mut x = Vec::with_capacity(n * d);
    for (t, row) in rows.iter().enumerate() {
        let m = if t == n - 1 { mask } else { &none };
        x.extend(input_token(params, row, m, first_position + t)?);
    }
    let drop_in = dropout_mask(n * d, p, &mut rng);
    apply_mask(&mut x, &drop_in);

    let scale: T = lit(1.0 / (dh as f64).sqrt());
    let mut layers = Vec::with_capacity(params.layout.layers.len());
    for lo in &params.layout.layers {
        let mut a = vec![T::zero(); n * d];
        let (xhat1, istd1) = layer_norm(&x, d, slice(w, lo.ln1_g, d), slice(w, lo.ln1_b, d), &mut a);
        let q = linear(&a, d, slice(w, lo.wq, d * d), slice(w, lo.bq, d), d);
        let k = linear(&a, d, slice(w, lo.wk, d * d), slice(w, lo.bk, d), d);
        let v = linear(&a, d, slice(w, lo.wv, d * d), slice(w, lo.bv, d), d);
        let mut probs = vec![T::zero(); heads * n * n];
        let mut ctx = vec![T::zero(); n * d];
        for hd in 0..heads {
            let off = hd * dh;
            for t in 0..n {
                let pr = &mut probs[(hd * n + t) * n..(hd * n + t + 1) * n];
                let qt = &q[t * d + off..t * d + off + dh];
                let mut max = T::neg_infinity();
                for s in 0..n {
                    let ks = &k[s * d + off..s * d + off + dh];
                    let sc = qt.iter().zip(ks).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    pr[s] = sc;
                    max = max.max(sc);
                }
                let mut z = T::zero();
                for s in 0..n {
                    pr[s] = (pr[s] - max).exp();
                    z = z + pr[s];
                }
                for s in 0..n {
                    pr[s] = pr[s] / z;
                    let vs = &v[s * d + off..s * d + off + dh];
                    let ct = &mut ctx[t * d + off..t * d + off + dh];
                    ct.iter_mut().zip(vs).for_each(|(c, &vv)| *c = *c + pr[s] * vv);
                }
            }
        }
        let mut o = linear(&ctx, d, slice(w, lo.wo, d * d), slice(w, lo.bo, d), d);
        let drop1 = dropout_mask(n * d, p, &mut rng);
        apply_mask(&mut o, &drop1);
        x.iter_mut().zip(&o).for_each(|(a, &b)| *a = *a + b);

        let mut c = vec![T::zero(); n * d];
        let (xhat2, istd2) = layer_norm(&x, d, slice(w, lo.ln2_g, d), slice(w, lo.ln2_b, d), &mut c);
        let u = linear(&c, d, slice(w, lo.w1, d * f), slice(w, lo.b1, f), f);
        let r: Vec<T> = u.iter().map(|&v| v.max(T::zero())).collect();
        let mut ff = linear(&r, f, slice(w, lo.w2, f * d), slice(w, lo.b2, d), d);
        let drop2 = dropout_mask(n * d, p, &mut rng);
        apply_mask(&mut ff, &drop2);
        x.iter_mut().zip(&ff).for_each(|(a, &b)| *a = *a + b);

        layers.push(LayerCache {
            a,
            xhat1,
            istd1,
            q,
            k,
            v,
            probs,
            ctx,
            drop1,
            c,
            xhat2,
            istd2,
            u,
            r,
            drop2,
        });
    }

    let last = &x[(n - 1) * d..];
    let mut h = vec![T::zero(); d];
    let (xhat_f, istd_f) = layer_norm(
        last,
        d,
        slice(w, params.layout.lnf_g, d),
        slice(w, params.layout.lnf_b, d),
        &mut h,
    );
    Ok(Forward {
        rows: rows.iter().map(|r| r.to_vec()).collect(),
        mask: mask.clone(),
        first_position,
        drop_in,
        layers,
        xhat_f,
        istd_f: istd_f[0],
        h,
    })
}

/// Accumulates into `grad` the gradient of a loss whose derivative with respect to the
/// target hidden state is `dh`.
pub(crate) fn backward<T: Real>(params: &EncoderParameters<T>, fwd: &Forward<T>, dh: &[T], grad: &mut [T]) {
    let n = fwd.rows.len();
    let d = params.dim();
    let heads = params.config.heads;
    let dhd = d / heads;
    let f = params.config.ffn_dim;
    let w = &params.values;
    let layout = &params.layout;

    let mut dx = vec![T::zero(); n * d];
    {
        let (dg, db) = split_pair(grad, layout.lnf_g, layout.lnf_b, d);
        let mut dlast = vec![T::zero(); d];
        layer_norm_backward(
            dh,
            &fwd.xhat_f,
            &[fwd.istd_f],
            d,
            slice(w, layout.lnf_g, d),
            &mut dlast,
            dg,
            db,
        );
        dx[(n - 1) * d..].copy_from_slice(&dlast);
    }

    let scale: T = lit(1.0 / (dhd as f64).sqrt());
    for (lo, cache) in layout.layers.iter().zip(&fwd.layers).rev() {
        // Feed-forward branch.
        let mut dff = dx.clone();
        apply_mask(&mut dff, &cache.drop2);
        let mut dr = vec![T::zero(); n * f];
        {
            let (dw2, db2) = split_pair_len(grad, lo.w2, f * d, lo.b2, d);
            linear_backward(&cache.r, &dff, f, d, slice(w, lo.w2, f * d), dw2, db2, &mut dr);
        }
        let du: Vec<T> = dr
            .iter()
            .zip(&cache.u)
            .map(|(&g, &u)| if u > T::zero() { g } else { T::zero() })
            .collect();
        let mut dc = vec![T::zero(); n * d];
        {
            let (dw1, db1) = split_pair_len(grad, lo.w1, d * f, lo.b1, f);
            linear_backward(&cache.c, &du, d, f, slice(w, lo.w1, d * f), dw1, db1, &mut dc);
        }
        {
            let (dg, db) = split_pair(grad, lo.ln2_g, lo.ln2_b, d);
            layer_norm_backward(
                &dc,
                &cache.xhat2,
                &cache.istd2,
                d,
                slice(w, lo.ln2_g, d),
                &mut dx,
                dg,
                db,
            );
        }

        // Attention branch.
        let mut do_ = dx.clone();
        apply_mask(&mut do_, &cache.drop1);
        let mut dctx = vec![T::zero(); n * d];
        {
            let (dwo, dbo) = split_pair_len(grad, lo.wo, d * d, lo.bo, d);
            linear_backward(&cache.ctx, &do_, d, d, slice(w, lo.wo, d * d), dwo, dbo, &mut dctx);
        }
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut dp = vec![T::zero(); n];
        for hd in 0..heads {
            let off = hd * dhd;
            for t in 0..n {
                let pr = &cache.probs[(hd * n + t) * n..(hd * n + t + 1) * n];
                let dct = &dctx[t * d + off..t * d + off + dhd];
                let mut dot = T::zero();
                for s in 0..n {
                    let vs = &cache.v[s * d + off..s * d + off + dhd];
                    dp[s] = dct.iter().zip(vs).map(|(&a, &b)| a * b).sum::<T>();
                    dot = dot + pr[s] * dp[s];
                    let dvs = &mut dv[s * d + off..s * d + off + dhd];
                    dvs.iter_mut().zip(dct).for_each(|(a, &g)| *a = *a + pr[s] * g);
                }
                for s in 0..n {
                    let ds = pr[s] * (dp[s] - dot) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    for i in 0..dhd {
                        dq[t * d + off + i] = dq[t * d + off + i] + ds * cache.k[s * d + off + i];
                        dk[s * d + off + i] = dk[s * d + off + i] + ds * cache.q[t * d + off + i];
                    }
                }
            }
        }
        let mut da = vec![T::zero(); n * d];
        for (wm, bm, dm) in [(lo.wq, lo.bq, &dq), (lo.wk, lo.bk, &dk), (lo.wv, lo.bv, &dv)] {
            let (dwm, dbm) = split_pair_len(grad, wm, d * d, bm, d);
            linear_backward(&cache.a, dm, d, d, slice(w, wm, d * d), dwm, dbm, &mut da);
        }
        {
            let (dg, db) = split_pair(grad, lo.ln1_g, lo.ln1_b, d);
            layer_norm_backward(
                &da,
                &cache.xhat1,
                &cache.istd1,
                d,
                slice(w, lo.ln1_g, d),
                &mut dx,
                dg,
                db,
            );
        }
    }

    apply_mask(&mut dx, &fwd.drop_in);
    for (t, row) in fwd.rows.iter().enumerate() {
        let dxt = &dx[t * d..(t + 1) * d];
        let pos = layout.positions + (fwd.first_position + t) * d;
        add_into(&mut grad[pos..pos + d], dxt);
        for (j, &value) in row.iter().enumerate() {
            let at = if t == n - 1 && fwd.mask.contains(j) {
                layout.mask + j * d
            } else {
                layout.embeddings[j] + value * d
            };
            add_into(&mut grad[at..at + d], dxt);
        }
    }
}

fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    acc.iter_mut().zip(x).for_each(|(a, &b)| *a = *a + b);
}

/// Two disjoint `len`-long mutable windows of `grad` (first must precede second).
fn split_pair<T>(grad: &mut [T], first: usize, second: usize, len: usize) -> (&mut [T], &mut [T]) {
    split_pair_len(grad, first, len, second, len)
}

fn split_pair_len<T>(
    grad: &mut [T],
    first: usize,
    first_len: usize,
    second: usize,
    second_len: usize,
) -> (&mut [T], &mut [T]) {
    debug_assert!(first + first_len <= second);
    let (head, tail) = grad.split_at_mut(second);
    (&mut head[first..first + first_len], &mut tail[..second_len])
}
