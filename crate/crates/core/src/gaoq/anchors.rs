//! Level-wide reference directions that child residuals are matched against.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kmeans::Points;

/// `g` unit vectors in dimension `D`, plus the largest pairwise `|cos|` among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub vectors: Vec<Vec<f64>>,
    pub max_abs_cos: f64,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Largest `|a_i . a_j|` over distinct pairs of unit vectors.
pub fn max_abs_cos(vectors: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            m = m.max(dot(&vectors[i], &vectors[j]).abs());
        }
    }
    m
}

/// Orthonormal basis for the column space of `columns` (each of length `D`, at most `D` of them)
/// by Householder QR, with signs chosen so that `R` has a non-negative diagonal.
pub fn householder_q(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let g = columns.len();
    let d = columns.first().map_or(0, Vec::len);
    assert!(g <= d, "QR needs at most as many columns as rows");
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(g);
    let mut diag = Vec::with_capacity(g);
    for k in 0..g {
        let x = &a[k][k..];
        let norm = dot(x, x).sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        normalize(&mut v);
        for col in a.iter_mut().skip(k) {
            let s = 2.0 * dot(&v, &col[k..]);
            col[k..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
        }
        diag.push(alpha);
        reflectors.push(v);
    }
    (0..g)
        .map(|j| {
            let mut q = vec![0.0; d];
            q[j] = 1.0;
            for (k, v) in reflectors.iter().enumerate().rev() {
                let s = 2.0 * dot(v, &q[k..]);
                q[k..].iter_mut().zip(v).for_each(|(c, vi)| *c -= s * vi);
            }
            if diag[j] < 0.0 {
                q.iter_mut().for_each(|x| *x = -*x);
            }
            q
        })
        .collect()
}

/// Soft maximum of squared pairwise cosines, `log(sum exp(beta c^2)) / beta`, and its gradient.
fn soft_max_cos2(a: &[Vec<f64>], beta: f64) -> (f64, Vec<Vec<f64>>) {
    let g = a.len();
    let mut c2 = Vec::with_capacity(g * (g - 1) / 2);
    for i in 0..g {
        for j in (i + 1)..g {
            let c = dot(&a[i], &a[j]);
            c2.push((i, j, c));
        }
    }
    let m = c2.iter().map(|t| t.2 * t.2).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = c2.iter().map(|t| (beta * (t.2 * t.2 - m)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let value = m + z.ln() / beta;
    let mut grad = vec![vec![0.0; a[0].len()]; g];
    for ((i, j, c), w) in c2.into_iter().zip(weights) {
        let coef = 2.0 * c * w / z;
        for t in 0..a[0].len() {
            grad[i][t] += coef * a[j][t];
            grad[j][t] += coef * a[i][t];
        }
    }
    (value, grad)
}

/// Spreads `g > D` unit vectors by projected descent on a soft maximum of pairwise squared
/// cosines, sharpening the soft maximum until the hard maximum stops improving by 1e-6.
fn repel(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut best = a.clone();
    let mut best_max = max_abs_cos(&best);
    let mut beta = 8.0;
    loop {
        let mut step = 0.1;
        let (mut value, mut grad) = soft_max_cos2(&a, beta);
        for _ in 0..5000 {
            let trial: Vec<Vec<f64>> = a
                .iter()
                .zip(&grad)
                .map(|(ai, gi)| {
                    // Tangent-space component of the gradient.
                    let radial = dot(ai, gi);
                    let mut next: Vec<f64> = ai.iter().zip(gi).map(|(x, gx)| x - step * (gx - radial * x)).collect();
                    normalize(&mut next);
                    next
                })
                .collect();
            let (tv, tg) = soft_max_cos2(&trial, beta);
            if tv < value {
                let gain = value - tv;
                a = trial;
                value = tv;
                grad = tg;
                step *= 1.2;
                if gain < 1e-12 {
                    break;
                }
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        let m = max_abs_cos(&a);
        let improvement = best_max - m;
        if m < best_max {
            best_max = m;
            best = a.clone();
        }
        if beta > 4096.0 || (beta > 64.0 && improvement < 1e-6) {
            return best;
        }
        beta *= 4.0;
    }
}

/// Generates `g` anchors in dimension `dim`.
///
/// For `g <= dim` the anchors are the Q factor of a `dim x g` standard Gaussian matrix, hence
/// exactly orthonormal up to rounding. Otherwise they are pushed apart to minimize the largest
/// pairwise `|cos|`. Signs are then oriented so that each anchor points away from the earlier
/// ones on average, which for `dim = 1` yields `{+1, -1}`.
pub fn ortho_anchors(g: usize, dim: usize, rng: &mut impl Rng) -> AnchorSet {
    assert!(g >= 1 && dim >= 1, "anchor count and dimension must be positive");
    let gaussian: Vec<Vec<f64>> = (0..g)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut vectors = if g <= dim {
        householder_q(&gaussian)
    } else {
        let mut start = gaussian;
        start.iter_mut().for_each(|v| normalize(v));
        repel(start)
    };
    if g > dim {
        if let Some(first) = vectors[0].iter().position(|&x| x != 0.0) {
            if vectors[0][first] < 0.0 {
                vectors[0].iter_mut().for_each(|x| *x = -*x);
            }
        }
        for i in 1..g {
            let pull: f64 = (0..i).map(|j| dot(&vectors[i], &vectors[j])).sum();
            if pull > 0.0 {
                vectors[i].iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    let max_abs_cos = max_abs_cos(&vectors);
    AnchorSet { vectors, max_abs_cos }
}

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

impl From<&AnchorSet> for Points {
    fn from(a: &AnchorSet) -> Self {
        Points::from_rows(&a.vectors)
    }
}
