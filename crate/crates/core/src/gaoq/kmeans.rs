//! Balanced and standard k-means over dense `f64` points.

use rand::Rng;
use rayon::prelude::*;

use super::QuantizeError;

/// Row-major `f64` point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(
            dim > 0 && data.len().is_multiple_of(dim),
            "point data must be a multiple of dim"
        );
        Self { data, dim }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        Self::new(rows.iter().flatten().copied().collect(), dim)
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self::new(vec![0.0; n * dim], dim)
    }

    /// Copies the rows listed in `indices`.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, self.dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mean of all rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            add_assign(&mut m, r);
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn add_assign(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Result of a clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of each input point.
    pub labels: Vec<usize>,
    /// Member means (or the reseeded point for an empty standard-k-means cluster).
    pub centroids: Points,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        self.labels.iter().for_each(|&l| s[l] += 1);
        s
    }

    /// Point indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    /// Total squared distance of points to their centroids.
    pub fn cost(&self, points: &Points) -> f64 {
        partition_cost(points, &self.labels, self.k())
    }
}

/// Sum of squared distances to member means for an arbitrary labelling.
pub fn partition_cost(points: &Points, labels: &[usize], k: usize) -> f64 {
    let centroids = member_means(points, labels, k, None);
    points
        .rows()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .sum()
}

/// Means of each cluster. Empty clusters keep the corresponding row of `fallback`, or zeros.
fn member_means(points: &Points, labels: &[usize], k: usize, fallback: Option<&Points>) -> Points {
    let mut sums = Points::zeros(k, points.dim());
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().zip(labels) {
        add_assign(sums.row_mut(l), p);
        counts[l] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums.row_mut(c).iter_mut().for_each(|v| *v /= n as f64);
        } else if let Some(f) = fallback {
            sums.row_mut(c).copy_from_slice(f.row(c));
        }
    }
    sums
}

/// `n x k` squared distances, row-major.
fn distance_table(points: &Points, centroids: &Points) -> Vec<f64> {
    let k = centroids.len();
    let mut table = vec![0.0; points.len() * k];
    let fill = |(i, row): (usize, &mut [f64])| {
        let p = points.row(i);
        for (c, d) in row.iter_mut().enumerate() {
            *d = sq_dist(p, centroids.row(c));
        }
    };
    if points.len() * k * points.dim() > 1 << 16 {
        table.par_chunks_mut(k).enumerate().for_each(fill);
    } else {
        table.chunks_mut(k).enumerate().for_each(fill);
    }
    table
}

/// k-means++ seeding: first centre uniform, later centres sampled proportionally to the
/// squared distance to the nearest chosen centre.
pub fn kmeans_plus_plus(points: &Points, k: usize, rng: &mut impl Rng) -> Points {
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = points.rows().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // Rounding can walk past the last positive weight.
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            // Every point coincides with a centre already.
            rng.random_range(0..n)
        };
        chosen.push(next);
        let c = points.row(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), c));
        }
    }
    points.gather(&chosen)
}

/// Capacity bookkeeping: sizes must end at `floor(n/b)` or `ceil(n/b)`, with exactly
/// `n mod b` clusters at the ceiling.
struct Capacity {
    lo: usize,
    n_hi: usize,
}

impl Capacity {
    fn new(n: usize, b: usize) -> Self {
        Self { lo: n / b, n_hi: n % b }
    }

    fn is_full(&self, size: usize, hi_used: usize) -> bool {
        size > self.lo || (size == self.lo && hi_used == self.n_hi)
    }
}

/// Greedy capacity-constrained assignment: points with the largest regret (second-best minus
/// best distance) pick first, each taking its nearest non-full cluster.
fn assign_balanced(dist: &[f64], n: usize, b: usize) -> Vec<usize> {
    let cap = Capacity::new(n, b);
    let mut prefs: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut regret = Vec::with_capacity(n);
    for i in 0..n {
        let row = &dist[i * b..(i + 1) * b];
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| row[x].total_cmp(&row[y]).then(x.cmp(&y)));
        let r = if b > 1 { row[order[1]] - row[order[0]] } else { 0.0 };
        regret.push(r);
        prefs.push(order);
    }
    let mut queue: Vec<usize> = (0..n).collect();
    queue.sort_by(|&x, &y| regret[y].total_cmp(&regret[x]).then(x.cmp(&y)));

    let mut sizes = vec![0usize; b];
    let mut hi_used = 0usize;
    let mut labels = vec![0usize; n];
    for i in queue {
        let c = *prefs[i]
            .iter()
            .find(|&&c| !cap.is_full(sizes[c], hi_used))
            .expect("total capacity equals n");
        if sizes[c] == cap.lo {
            hi_used += 1;
        }
        sizes[c] += 1;
        labels[i] = c;
    }
    labels
}

/// Swaps pairs of points between clusters (and, where sizes permit, moves single points from a
/// ceiling-size cluster to a floor-size one) while that lowers the total squared distance to
/// the fixed `centroids`. Returns whether anything changed.
fn improve_by_swaps(dist: &[f64], labels: &mut [usize], b: usize) -> bool {
    let n = labels.len();
    let cap = Capacity::new(n, b);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); b];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let d = |i: usize, c: usize| dist[i * b + c];
    let mut changed_any = false;
    loop {
        let mut changed = false;
        for a in 0..b {
            for c in (a + 1)..b {
                loop {
                    // Cheapest member of `a` to move into `c`, and vice versa.
                    let best = |from: usize, to: usize, ms: &[usize]| {
                        ms.iter()
                            .enumerate()
                            .map(|(pos, &i)| (d(i, to) - d(i, from), pos))
                            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
                    };
                    let (Some((da, pa)), Some((dc, pc))) = (best(a, c, &members[a]), best(c, a, &members[c])) else {
                        break;
                    };
                    let i = members[a][pa];
                    let j = members[c][pc];
                    let scale = 1.0 + d(i, a) + d(j, c) + d(i, c) + d(j, a);
                    let tol = 1e-12 * scale;
                    if da + dc < -tol {
                        members[a][pa] = j;
                        members[c][pc] = i;
                        labels[i] = c;
                        labels[j] = a;
                        changed = true;
                        continue;
                    }
                    if cap.n_hi > 0 {
                        let (sa, sc) = (members[a].len(), members[c].len());
                        if sa > cap.lo && sc == cap.lo && da < -tol {
                            members[a].swap_remove(pa);
                            members[c].push(i);
                            labels[i] = c;
                            changed = true;
                            continue;
                        }
                        if sc > cap.lo && sa == cap.lo && dc < -tol {
                            members[c].swap_remove(pc);
                            members[a].push(j);
                            labels[j] = a;
                            changed = true;
                            continue;
                        }
                    }
                    break;
                }
            }
        }
        if !changed {
            return changed_any;
        }
        changed_any = true;
    }
}

/// Partitions `points` into `b` clusters whose sizes differ by at most one.
///
/// Lloyd iterations alternate a greedy capacity-constrained assignment plus swap refinement
/// with centroid updates. On return the centroids are member means and no single swap (or
/// balance-preserving move) lowers the total squared distance to them.
pub fn balanced_kmeans(
    points: &Points,
    b: usize,
    iters: usize,
    rng: &mut impl Rng,
) -> Result<Clustering, QuantizeError> {
    let n = points.len();
    if b == 0 || n < b {
        return Err(QuantizeError::TooFewPoints { points: n, clusters: b });
    }
    if b == n {
        return Ok(Clustering {
            labels: (0..n).collect(),
            centroids: points.clone(),
        });
    }
    let mut centroids = kmeans_plus_plus(points, b, rng);
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..iters.max(1) {
        let dist = distance_table(points, &centroids);
        let mut next = assign_balanced(&dist, n, b);
        improve_by_swaps(&dist, &mut next, b);
        let stable = next == labels;
        labels = next;
        centroids = member_means(points, &labels, b, None);
        if stable {
            break;
        }
    }
    // Settle into a joint fixed point of the swap rule and the mean update. Each round strictly
    // lowers the cost, so this terminates.
    loop {
        let dist = distance_table(points, &centroids);
        if !improve_by_swaps(&dist, &mut labels, b) {
            break;
        }
        centroids = member_means(points, &labels, b, None);
    }
    Ok(Clustering { labels, centroids })
}

/// Standard (unbalanced) Lloyd k-means with k-means++ seeding. An empty cluster is reseeded to
/// the point farthest from its current centroid.
pub fn kmeans(points: &Points, k: usize, iters: usize, rng: &mut impl Rng) -> Result<Clustering, QuantizeError> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(QuantizeError::TooFewPoints { points: n, clusters: k });
    }
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..iters.max(1) {
        let dist = distance_table(points, &centroids);
        let mut next: Vec<usize> = dist
            .chunks_exact(k)
            .map(|row| {
                (0..k)
                    .min_by(|&x, &y| row[x].total_cmp(&row[y]).then(x.cmp(&y)))
                    .expect("k > 0")
            })
            .collect();
        let mut counts = vec![0usize; k];
        next.iter().for_each(|&l| counts[l] += 1);
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| !taken[i] && counts[next[i]] > 1)
                .max_by(|&x, &y| dist[x * k + next[x]].total_cmp(&dist[y * k + next[y]]).then(y.cmp(&x)));
            // Points coinciding with their centroid cannot seed a distinct cluster.
            if let Some(i) = far.filter(|&i| dist[i * k + next[i]] > 0.0) {
                log::debug!("reseeding empty cluster {c} at point {i}");
                counts[next[i]] -= 1;
                counts[c] += 1;
                next[i] = c;
                taken[i] = true;
            }
        }
        let stable = next == labels;
        labels = next;
        centroids = member_means(points, &labels, k, Some(&centroids));
        if stable {
            break;
        }
    }
    Ok(Clustering { labels, centroids })
}
