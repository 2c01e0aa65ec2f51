use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::encoder::{backward, forward};
use super::mask::{sample_mask, MaskSample};
use super::params::{lit, EncoderParameters, Real};
use super::FamaeError;
use crate::data::{ItemTable, Window};
use crate::rng::stream_rng;

/// Windows per gradient buffer. Fixed so the reduction order does not depend on threads.
const CHUNK: usize = 16;

/// Batch-mean loss and its gradient in parameter layout.
#[derive(Debug, Clone)]
pub struct LossAndGrad<T> {
    pub loss: T,
    pub grad: Vec<T>,
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Softmax over `scale * cos(h, row)`.
pub fn cosine_softmax<T: Real>(h: &[T], rows: &[&[T]], scale: T) -> Result<Vec<T>, FamaeError> {
    let hn = norm(h);
    if hn == T::zero() {
        return Err(FamaeError::ZeroNorm("hidden state"));
    }
    let mut logits = Vec::with_capacity(rows.len());
    for r in rows {
        let en = norm(r);
        if en == T::zero() {
            return Err(FamaeError::ZeroNorm("embedding row"));
        }
        let dot = h.iter().zip(r.iter()).map(|(&a, &b)| a * b).sum::<T>();
        logits.push(scale * dot / (hn * en));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z = exps.iter().copied().sum::<T>();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Distribution over field `field`'s vocabulary (or over `candidates`, in that order) given
/// the hidden state `h`, with logits `sqrt(D) * cos(h, E_field[v])`.
pub fn predictive_distribution<T: Real>(
    params: &EncoderParameters<T>,
    h: &[T],
    field: usize,
    candidates: Option<&[usize]>,
) -> Result<Vec<T>, FamaeError> {
    let size = params.vocab_sizes[field];
    let all: Vec<usize>;
    let cands = match candidates {
        Some(c) => c,
        None => {
            all = (0..size).collect();
            &all
        }
    };
    if let Some(&value) = cands.iter().find(|&&v| v >= size) {
        return Err(FamaeError::OutOfVocabulary { field, value, size });
    }
    let rows: Vec<&[T]> = cands.iter().map(|&v| params.embedding(field, v)).collect();
    cosine_softmax(h, &rows, lit::<T>(params.dim() as f64).sqrt())
}

/// Target first, then sampled negatives; `None` means the whole vocabulary.
fn candidates<T: Real>(
    params: &EncoderParameters<T>,
    field: usize,
    target: usize,
    rng: &mut impl Rng,
) -> Option<Vec<usize>> {
    let size = params.vocab_sizes[field];
    let neg = params.config.negatives;
    if neg == 0 || size <= params.config.full_softmax_limit || neg >= size - 1 {
        return None;
    }
    let mut c = Vec::with_capacity(neg + 1);
    c.push(target);
    c.extend(
        index::sample(rng, size - 1, neg)
            .into_iter()
            .map(|i| if i >= target { i + 1 } else { i }),
    );
    Some(c)
}

/// `weight * -log q(target)`, accumulating `dL/dh` into `dh` and table gradients into `grad`.
#[allow(clippy::too_many_arguments)]
fn field_term<T: Real>(
    params: &EncoderParameters<T>,
    h: &[T],
    field: usize,
    target: usize,
    cands: Option<&[usize]>,
    weight: T,
    dh: &mut [T],
    grad: Option<&mut [T]>,
) -> Result<T, FamaeError> {
    let d = params.dim();
    let scale = lit::<T>(d as f64).sqrt();
    let size = params.vocab_sizes[field];
    let count = cands.map_or(size, <[usize]>::len);
    let value = |i: usize| cands.map_or(i, |c| c[i]);
    let target_slot = match cands {
        Some(_) => 0,
        None => target,
    };
    let hn = norm(h);
    if hn == T::zero() {
        return Err(FamaeError::ZeroNorm("hidden state"));
    }
    let mut cos = Vec::with_capacity(count);
    let mut en = Vec::with_capacity(count);
    for i in 0..count {
        let e = params.embedding(field, value(i));
        let n = norm(e);
        if n == T::zero() {
            return Err(FamaeError::ZeroNorm("embedding row"));
        }
        let dot = h.iter().zip(e).map(|(&a, &b)| a * b).sum::<T>();
        cos.push(dot / (hn * n));
        en.push(n);
    }
    let max = cos.iter().map(|&c| scale * c).fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = cos.iter().map(|&c| (scale * c - max).exp()).collect();
    let z = exps.iter().copied().sum::<T>();
    let loss = weight * (max + z.ln() - scale * cos[target_slot]);

    let mut grad = grad;
    for i in 0..count {
        let indicator = if i == target_slot { T::one() } else { T::zero() };
        let g = weight * (exps[i] / z - indicator) * scale;
        if g == T::zero() {
            continue;
        }
        let e = params.embedding(field, value(i));
        let a = T::one() / (hn * en[i]);
        let bh = cos[i] / (hn * hn);
        for t in 0..d {
            dh[t] = dh[t] + g * (e[t] * a - h[t] * bh);
        }
        if let Some(grad) = grad.as_deref_mut() {
            let be = cos[i] / (en[i] * en[i]);
            let at = params.layout.embeddings[field] + value(i) * d;
            for t in 0..d {
                grad[at + t] = grad[at + t] + g * (h[t] * a - e[t] * be);
            }
        }
    }
    Ok(loss)
}

/// Item rows of a window, keeping the most recent `max_len - 1` history items.
pub(crate) fn window_rows<'a>(items: &'a ItemTable, window: &Window, max_len: usize) -> Vec<&'a [usize]> {
    let keep = window.history.len().min(max_len - 1);
    let start = window.history.len() - keep;
    window.history[start..]
        .iter()
        .chain(std::iter::once(&window.target))
        .map(|&i| items.row(i))
        .collect()
}

/// Masked-field loss of one window with a fresh mask drawn from `rng`.
pub(crate) fn window_loss<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    window: &Window,
    rng: &mut impl Rng,
    grad: Option<&mut [T]>,
) -> Result<(T, MaskSample), FamaeError> {
    if window.history.is_empty() {
        return Err(FamaeError::EmptyHistory);
    }
    let mask = sample_mask(params.num_fields(), rng)?;
    let weights: Vec<(usize, T)> = mask
        .fields
        .iter()
        .map(|&k| (k, lit::<T>(params.config.field_weight(k))))
        .filter(|&(_, w)| w > T::zero())
        .collect();
    if weights.is_empty() {
        return Ok((T::zero(), mask));
    }
    let rows = window_rows(items, window, params.max_len);
    let target_row = items.row(window.target);
    let fwd = forward(params, &rows, &mask, Some(&mut *rng))?;
    let mut dh = vec![T::zero(); params.dim()];
    let mut loss = T::zero();
    let mut grad = grad;
    for (k, w) in weights {
        let cands = candidates(params, k, target_row[k], rng);
        loss = loss
            + field_term(
                params,
                &fwd.h,
                k,
                target_row[k],
                cands.as_deref(),
                w,
                &mut dh,
                grad.as_deref_mut(),
            )?;
    }
    if let Some(grad) = grad {
        backward(params, &fwd, &dh, grad);
    }
    Ok((loss, mask))
}

fn batch<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    windows: &[Window],
    seed: u64,
    with_grad: bool,
) -> Result<LossAndGrad<T>, FamaeError> {
    if windows.is_empty() {
        return Err(FamaeError::EmptySplit);
    }
    let chunks: Vec<Result<(T, Vec<T>), FamaeError>> = windows
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = if with_grad {
                vec![T::zero(); params.len()]
            } else {
                Vec::new()
            };
            let mut sum = T::zero();
            for (i, w) in chunk.iter().enumerate() {
                let index = c * CHUNK + i;
                let mut rng = stream_rng(seed, &[index as u64]);
                let g = with_grad.then_some(grad.as_mut_slice());
                let (loss, _) = window_loss(params, items, w, &mut rng, g)?;
                if !loss.is_finite() {
                    return Err(FamaeError::NonFiniteLoss { window: index });
                }
                sum = sum + loss;
            }
            Ok((sum, grad))
        })
        .collect();
    let inv_b: T = lit(1.0 / windows.len() as f64);
    let mut loss = T::zero();
    let mut grad = if with_grad {
        vec![T::zero(); params.len()]
    } else {
        Vec::new()
    };
    for chunk in chunks {
        let (l, g) = chunk?;
        loss = loss + l;
        grad.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b);
    }
    grad.iter_mut().for_each(|g| *g = *g * inv_b);
    Ok(LossAndGrad {
        loss: loss * inv_b,
        grad,
    })
}

/// Batch-mean masked-field loss and gradient. Window `i` draws its mask, dropout and
/// negatives from the stream `(seed, i)`, so the result is independent of thread count.
pub fn famae_loss<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    windows: &[Window],
    seed: u64,
) -> Result<LossAndGrad<T>, FamaeError> {
    batch(params, items, windows, seed, true)
}

/// Loss only; same random draws as [`famae_loss`].
pub fn famae_loss_value<T: Real>(
    params: &EncoderParameters<T>,
    items: &ItemTable,
    windows: &[Window],
    seed: u64,
) -> Result<T, FamaeError> {
    Ok(batch(params, items, windows, seed, false)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::famae::ModelConfig;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn orthonormal_rows_give_e_squared_odds() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let p = cosine_softmax(&rows[0], &refs, 2.0).unwrap();
        let e2 = 2f64.exp();
        approx(p[0], e2 / (e2 + 3.0), 1e-12);
        approx(p[0], 0.711, 1e-3);
        approx(p.iter().sum(), 1.0, 1e-12);
    }

    #[test]
    fn identical_rows_give_uniform() {
        let row = [0.3f32, -0.2, 0.9];
        let p = cosine_softmax(&[1.0f32, 2.0, 3.0], &[&row[..]; 5], 3f32.sqrt()).unwrap();
        p.iter().for_each(|&v| assert!((v - 0.2).abs() < 1e-6));
    }

    #[test]
    fn opposite_rows_in_one_dimension() {
        let p = cosine_softmax(&[2.0f64], &[&[1.0][..], &[-1.0][..]], 1.0).unwrap();
        let e = 1f64.exp();
        approx(p[0], e / (e + 1.0 / e), 1e-12);
        approx(p[1], (1.0 / e) / (e + 1.0 / e), 1e-12);
    }

    #[test]
    fn zero_norm_is_an_error() {
        assert!(matches!(
            cosine_softmax(&[0.0f64, 0.0], &[&[1.0, 0.0][..]], 1.0),
            Err(FamaeError::ZeroNorm(_))
        ));
        assert!(matches!(
            cosine_softmax(&[1.0f64, 0.0], &[&[0.0, 0.0][..]], 1.0),
            Err(FamaeError::ZeroNorm(_))
        ));
    }

    fn uniform_setup(j: usize, vocab: usize) -> (EncoderParameters<f64>, ItemTable) {
        let cfg = ModelConfig {
            dim: 4,
            layers: 1,
            heads: 2,
            ffn_dim: 8,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let sizes: Vec<usize> = (0..j).map(|k| if k == 0 { vocab } else { 3 }).collect();
        let mut p = EncoderParameters::init(&cfg, &sizes, 4).unwrap();
        for k in 0..j {
            for v in 0..sizes[k] {
                p.embedding_mut(k, v).copy_from_slice(&[0.5, -0.25, 1.0, 0.1]);
            }
        }
        let rows: Vec<Vec<usize>> = (0..vocab)
            .map(|i| (0..j).map(|k| if k == 0 { i } else { i % 3 }).collect())
            .collect();
        let names = (0..j).map(|k| format!("f{k}")).collect();
        (p, ItemTable::from_rows(names, &sizes, &rows).unwrap())
    }

    #[test]
    fn uniform_predictions_cost_log_vocab() {
        let (p, items) = uniform_setup(1, 8);
        let w = Window::new(vec![1, 2], 5);
        let (loss, mask) = window_loss(&p, &items, &w, &mut stream_rng(0, &[]), None).unwrap();
        assert_eq!(mask.fields, vec![0]);
        approx(loss, 8f64.ln(), 1e-12);
    }

    #[test]
    fn uniform_loss_sums_weighted_log_vocab() {
        let (mut p, items) = uniform_setup(3, 8);
        p.config.field_weights = vec![1.0, 0.5, 2.0];
        for seed in 0..20 {
            let w = Window::new(vec![0, 3], 7);
            let (loss, mask) = window_loss(&p, &items, &w, &mut stream_rng(seed, &[]), None).unwrap();
            let want: f64 = mask
                .fields
                .iter()
                .map(|&k| p.config.field_weights[k] * (p.vocab_sizes[k] as f64).ln())
                .sum();
            approx(loss, want, 1e-5 * want);
        }
    }

    #[test]
    fn zero_weights_give_zero_loss_and_gradient() {
        let (mut p, items) = uniform_setup(2, 8);
        p.config.field_weights = vec![0.0, 0.0];
        let ws = vec![Window::new(vec![0], 1), Window::new(vec![2, 3], 4)];
        let lg = famae_loss(&p, &items, &ws, 1).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sampled_negatives_exclude_target() {
        let cfg = ModelConfig {
            dim: 2,
            layers: 0,
            heads: 1,
            ffn_dim: 2,
            negatives: 5,
            full_softmax_limit: 4,
            ..ModelConfig::default()
        };
        let p = EncoderParameters::<f32>::init(&cfg, &[50], 3).unwrap();
        let mut rng = stream_rng(3, &[]);
        for target in [0, 17, 49] {
            let c = candidates(&p, 0, target, &mut rng).unwrap();
            assert_eq!(c[0], target);
            assert_eq!(c.len(), 6);
            assert!(c[1..].iter().all(|&v| v != target && v < 50));
            let mut sorted = c.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 6);
        }
        let full = EncoderParameters::<f32>::init(
            &ModelConfig {
                full_softmax_limit: 1024,
                ..cfg
            },
            &[50],
            3,
        )
        .unwrap();
        assert!(candidates(&full, 0, 3, &mut rng).is_none());
    }

    #[test]
    fn distribution_is_permutation_equivariant() {
        let cfg = ModelConfig {
            dim: 4,
            layers: 1,
            heads: 1,
            ffn_dim: 4,
            ..ModelConfig::default()
        };
        let p = EncoderParameters::<f64>::init(&cfg, &[6], 3).unwrap();
        let h = [0.3, -1.0, 0.2, 0.7];
        let q = predictive_distribution(&p, &h, 0, None).unwrap();
        approx(q.iter().sum(), 1.0, 1e-12);
        let perm = [3, 1, 5, 0, 2, 4];
        let qp = predictive_distribution(&p, &h, 0, Some(&perm)).unwrap();
        for (i, &v) in perm.iter().enumerate() {
            approx(qp[i], q[v], 1e-12);
        }
    }
}
